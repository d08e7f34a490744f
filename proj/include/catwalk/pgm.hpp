#pragma once

// Binary PGM (P5, maxval 255) reader and writer.

#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>

#include "catwalk/error.hpp"
#include "catwalk/image.hpp"
#include "catwalk/text_io.hpp"

namespace catwalk {

namespace detail {

// Reads one header token, skipping whitespace and '#' comments.
inline std::string pgm_token(std::string_view buf, std::size_t& pos) {
  while (pos < buf.size()) {
    const auto ch = static_cast<unsigned char>(buf[pos]);
    if (ch == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(ch)) {
      ++pos;
    } else {
      break;
    }
  }
  const auto begin = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos])) && buf[pos] != '#')
    ++pos;
  if (pos == begin) throw ParseError("truncated PGM header");
  return std::string(buf.substr(begin, pos - begin));
}

}  // namespace detail

inline Frame decode_pgm(std::string_view buf, const std::string& origin = "<memory>") {
  std::size_t pos = 0;
  const auto magic = detail::pgm_token(buf, pos);
  if (magic != "P5") throw ParseError(origin + ": not a binary PGM (magic '" + magic + "')");
  long long width = 0, height = 0, maxval = 0;
  try {
    width = text::parse_int(detail::pgm_token(buf, pos), "width");
    height = text::parse_int(detail::pgm_token(buf, pos), "height");
    maxval = text::parse_int(detail::pgm_token(buf, pos), "maxval");
  } catch (const ParseError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  if (width <= 0 || height <= 0) throw ParseError(origin + ": non-positive dimensions");
  if (maxval != 255) throw UnsupportedFormat(origin + ": maxval " + std::to_string(maxval) + " (only 255 supported)");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    throw ParseError(origin + ": missing raster separator");
  ++pos;
  const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (buf.size() - pos < count) throw ParseError(origin + ": truncated raster");
  std::vector<double> pixels(count);
  for (std::size_t i = 0; i < count; ++i) pixels[i] = static_cast<unsigned char>(buf[pos + i]);
  return Frame(static_cast<std::size_t>(height), static_cast<std::size_t>(width), std::move(pixels));
}

inline Frame load_pgm(const std::filesystem::path& path) {
  return decode_pgm(text::read_file(path), path.string());
}

// Intensities are rounded to the nearest integer; integer-valued frames
// round-trip exactly through load_pgm.
inline std::string encode_pgm(const Frame& frame) {
  std::string out = "P5\n" + std::to_string(frame.cols()) + " " + std::to_string(frame.rows()) + "\n255\n";
  out.reserve(out.size() + frame.pixels().size());
  for (double p : frame.pixels()) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p))));
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Frame& frame) {
  text::write_file(path, encode_pgm(frame));
}

}  // namespace catwalk
