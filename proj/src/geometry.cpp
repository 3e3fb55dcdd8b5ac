#include "mirc/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "mirc/error.hpp"

namespace mirc {

std::string_view corner_name(Corner c) {
  switch (c) {
    case Corner::UL: return "UL";
    case Corner::BL: return "BL";
    case Corner::UR: return "UR";
    case Corner::BR: return "BR";
  }
  return "??";
}

std::optional<Corner> parse_corner(std::string_view s) {
  for (Corner c : kCorners)
    if (corner_name(c) == s) return c;
  return std::nullopt;
}

std::int64_t round_half_away(double v) {
  return static_cast<std::int64_t>(std::round(v));
}

CropRect child_rect(const CropRect& parent, Corner corner, double scale) {
  const std::int64_t cw = round_half_away(scale * static_cast<double>(parent.w));
  const std::int64_t ch = round_half_away(scale * static_cast<double>(parent.h));
  if (cw < 1 || ch < 1) {
    throw Error(ErrorKind::DegenerateCrop,
                "child crop of " + std::to_string(parent.w) + "x" + std::to_string(parent.h) +
                    " at scale " + std::to_string(scale) + " has zero extent");
  }
  const bool right = corner == Corner::UR || corner == Corner::BR;
  const bool bottom = corner == Corner::BL || corner == Corner::BR;
  return CropRect{right ? parent.x + parent.w - cw : parent.x,
                  bottom ? parent.y + parent.h - ch : parent.y, cw, ch};
}

std::int64_t intersection_area(const CropRect& a, const CropRect& b) {
  const std::int64_t w = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const std::int64_t h = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  return (w > 0 && h > 0) ? w * h : 0;
}

OverlapReport overlap(const CropRect& a, const CropRect& b) {
  OverlapReport r;
  r.intersection_area = intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - r.intersection_area;
  r.iou = uni > 0 ? static_cast<double>(r.intersection_area) / static_cast<double>(uni) : 0.0;
  r.share_of_first =
      a.area() > 0 ? static_cast<double>(r.intersection_area) / static_cast<double>(a.area()) : 0.0;
  return r;
}

std::string corner_path_string(const CornerPath& path) {
  if (path.empty()) return "root";
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) out += '-';
    out += corner_name(path[i]);
  }
  return out;
}

CornerPath parse_corner_path(std::string_view s) {
  CornerPath path;
  if (s == "root" || s.empty()) return path;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t dash = s.find('-', start);
    const std::string_view tok = s.substr(start, dash == std::string_view::npos ? s.npos : dash - start);
    auto c = parse_corner(tok);
    if (!c) throw Error(ErrorKind::Parse, "bad corner token '" + std::string(tok) + "'");
    path.push_back(*c);
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  return path;
}

bool corner_path_less(const CornerPath& a, const CornerPath& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace mirc
