#include "mirc/image_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mirc/error.hpp"

namespace mirc::io {
namespace {

void skip_ws_and_comments(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw Error(ErrorKind::Parse, path + ": not a binary PGM (P5)");
  GrayImage img;
  int maxval = 0;
  skip_ws_and_comments(in);
  in >> img.width;
  skip_ws_and_comments(in);
  in >> img.height;
  skip_ws_and_comments(in);
  in >> maxval;
  in.get();
  if (!in || img.width <= 0 || img.height <= 0 || maxval != 255)
    throw Error(ErrorKind::Parse, path + ": bad PGM header");
  img.pixels.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error(ErrorKind::Parse, path + ": truncated PGM data");
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

std::vector<float> read_f32(const std::string& path, std::size_t expected_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<float> values(expected_count);
  std::vector<unsigned char> raw(expected_count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()) || in.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::Parse, path + ": expected " + std::to_string(expected_count) + " float32 values");
  for (std::size_t i = 0; i < expected_count; ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) | static_cast<std::uint32_t>(raw[4 * i + 1]) << 8 |
                         static_cast<std::uint32_t>(raw[4 * i + 2]) << 16 |
                         static_cast<std::uint32_t>(raw[4 * i + 3]) << 24;
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

void write_f32(const std::string& path, const std::vector<float>& values) {
  std::vector<unsigned char> raw(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    raw[4 * i] = static_cast<unsigned char>(bits);
    raw[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
    raw[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
    raw[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "rename " + tmp + " -> " + path + ": " + ec.message());
}

std::string frame_name(std::size_t index, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf + ext;
}

}  // namespace mirc::io
