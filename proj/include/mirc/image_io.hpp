#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mirc::io {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Binary PGM (P5, maxval 255).
GrayImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const GrayImage& image);

/// Raw little-endian float32 plane, row-major.
std::vector<float> read_f32(const std::string& path, std::size_t expected_count);
void write_f32(const std::string& path, const std::vector<float>& values);

std::string read_text(const std::string& path);
/// Writes to `path.tmp` then renames over `path`.
void write_text_atomic(const std::string& path, const std::string& text);

/// Zero-padded frame file name, e.g. frame_name(7, ".pgm") == "000007.pgm".
std::string frame_name(std::size_t index, const std::string& ext);

}  // namespace mirc::io
