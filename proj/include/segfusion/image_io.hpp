#pragma once

// 16-bit grayscale and 8-bit RGB PNG files through libpng. Callers must link
// against libpng (PNG::PNG in CMake).

#include <png.h>

#include <bit>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "segfusion/core.hpp"

namespace segfusion {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("png", "cannot open " + path.string());
  return f;
}

struct PngRaw {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;  // 16-bit samples in host byte order
};

// libpng reports through these instead of printing to stderr.
inline void png_on_error(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}
inline void png_on_warning(png_structp, png_const_charp) {}

// Reads a gray or RGB PNG, expanding palettes and dropping alpha.
inline bool read_png_raw(std::FILE* fp, PngRaw& out, std::string& error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error,
                                           png_on_error, png_on_warning);
  if (!png) {
    error = "out of memory";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (error.empty()) error = "corrupt PNG data";
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16 &&
      std::endian::native == std::endian::little) {
    png_set_swap(png);
  }
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    rows[static_cast<std::size_t>(y)] = out.bytes.data() + stride * static_cast<std::size_t>(y);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool write_png_raw(std::FILE* fp, int width, int height, int bit_depth,
                          int color_type, const std::uint8_t* data,
                          std::size_t stride, std::string& error) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error,
                                            png_on_error, png_on_warning);
  if (!png) {
    error = "out of memory";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    if (error.empty()) error = "PNG encoding failed";
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) {
    png_set_swap(png);
  }
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        const_cast<std::uint8_t*>(data) + stride * static_cast<std::size_t>(y);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

inline Grid<std::uint16_t> read_png16(const std::filesystem::path& path) {
  auto fp = detail::open_file(path, "rb");
  detail::PngRaw raw;
  std::string error;
  if (!detail::read_png_raw(fp.get(), raw, error)) {
    throw FormatError("png", path.string() + ": " + error);
  }
  if (raw.channels != 1 || raw.bit_depth != 16) {
    throw FormatError("png", path.string() + ": expected 16-bit single-channel image");
  }
  Grid<std::uint16_t> out(raw.width, raw.height, 0);
  std::memcpy(out.data().data(), raw.bytes.data(), out.size() * sizeof(std::uint16_t));
  return out;
}

inline void write_png16(const std::filesystem::path& path,
                        const Grid<std::uint16_t>& image) {
  auto fp = detail::open_file(path, "wb");
  std::string error;
  if (!detail::write_png_raw(fp.get(), image.width(), image.height(), 16,
                             PNG_COLOR_TYPE_GRAY,
                             reinterpret_cast<const std::uint8_t*>(image.data().data()),
                             static_cast<std::size_t>(image.width()) * 2, error)) {
    throw IoError("png", path.string() + ": " + error);
  }
}

inline Grid<Rgb> read_png_rgb(const std::filesystem::path& path) {
  auto fp = detail::open_file(path, "rb");
  detail::PngRaw raw;
  std::string error;
  if (!detail::read_png_raw(fp.get(), raw, error)) {
    throw FormatError("png", path.string() + ": " + error);
  }
  if (raw.channels != 3 || raw.bit_depth != 8) {
    throw FormatError("png", path.string() + ": expected 8-bit RGB image");
  }
  Grid<Rgb> out(raw.width, raw.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {raw.bytes[3 * i], raw.bytes[3 * i + 1], raw.bytes[3 * i + 2]};
  }
  return out;
}

inline void write_png_rgb(const std::filesystem::path& path, const Grid<Rgb>& image) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.size() * 3);
  for (const Rgb& p : image.data()) {
    bytes.push_back(p.r);
    bytes.push_back(p.g);
    bytes.push_back(p.b);
  }
  auto fp = detail::open_file(path, "wb");
  std::string error;
  if (!detail::write_png_raw(fp.get(), image.width(), image.height(), 8,
                             PNG_COLOR_TYPE_RGB, bytes.data(),
                             static_cast<std::size_t>(image.width()) * 3, error)) {
    throw IoError("png", path.string() + ": " + error);
  }
}

// Raw 16-bit depth to meters; `scale` is meters per raw unit.
inline DepthFrame depth_from_raw(const Grid<std::uint16_t>& raw, double scale,
                                 double max_depth = kDefaultMaxDepth) {
  Grid<double> meters(raw.width(), raw.height(), 0.0);
  for (std::size_t i = 0; i < raw.size(); ++i) meters[i] = raw[i] * scale;
  return DepthFrame::from_meters(std::move(meters), max_depth);
}

// Meters to raw units, rounding to nearest; values that do not fit become 0.
inline Grid<std::uint16_t> depth_to_raw(const DepthFrame& depth, double scale) {
  Grid<std::uint16_t> raw(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double units = std::round(depth.grid()[i] / scale);
    raw[i] = (units > 0.0 && units <= 65535.0) ? static_cast<std::uint16_t>(units) : 0;
  }
  return raw;
}

}  // namespace segfusion
