#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mirc {

/// Quadrant corner. Declaration order is the canonical ordering used for
/// tie-breaking: UL < BL < UR < BR.
enum class Corner : std::uint8_t { UL = 0, BL = 1, UR = 2, BR = 3 };

inline constexpr std::array<Corner, 4> kCorners{Corner::UL, Corner::BL, Corner::UR, Corner::BR};

std::string_view corner_name(Corner c);
std::optional<Corner> parse_corner(std::string_view s);

/// Rectangle in Level-0 pixel coordinates. Covers columns [x, x+w) and rows [y, y+h).
struct CropRect {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;

  std::int64_t area() const { return w * h; }
  std::int64_t right() const { return x + w; }
  std::int64_t bottom() const { return y + h; }
  bool valid() const { return w >= 1 && h >= 1; }
  bool contains(const CropRect& other) const {
    return other.x >= x && other.y >= y && other.right() <= right() && other.bottom() <= bottom();
  }

  friend bool operator==(const CropRect&, const CropRect&) = default;
};

/// Round half away from zero; used for every pixel dimension.
std::int64_t round_half_away(double v);

/// Child crop of `parent` anchored at `corner`, with dimensions round(s*w) x round(s*h).
/// Throws Error(DegenerateCrop) if either dimension would be 0.
CropRect child_rect(const CropRect& parent, Corner corner, double scale);

struct OverlapReport {
  std::int64_t intersection_area = 0;
  double iou = 0.0;
  /// intersection / area(first)
  double share_of_first = 0.0;
};

std::int64_t intersection_area(const CropRect& a, const CropRect& b);
OverlapReport overlap(const CropRect& a, const CropRect& b);

using CornerPath = std::vector<Corner>;

/// "root" for the empty path, otherwise corners joined by '-'.
std::string corner_path_string(const CornerPath& path);
CornerPath parse_corner_path(std::string_view s);

/// Lexicographic comparison under the canonical corner order.
bool corner_path_less(const CornerPath& a, const CornerPath& b);

}  // namespace mirc
