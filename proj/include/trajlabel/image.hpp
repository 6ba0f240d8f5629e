#pragma once

#include "trajlabel/geometry.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace trajlabel {

// Row-major H x W array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {
    if (height < 0 || width < 0) throw std::invalid_argument("Grid: negative dimension");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  ImageSize size() const { return {width_, height_}; }
  std::size_t count() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  bool contains(int row, int col) const {
    return row >= 0 && col >= 0 && row < height_ && col < width_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * width_ + col;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Rgb = std::array<std::uint8_t, 3>;
using RgbImage = Grid<Rgb>;
using Mask = Grid<std::uint8_t>;  // 0 = background, 1 = road / true

struct LabelImage {
  Grid<double> values;
  Mask coverage;

  LabelImage() = default;
  LabelImage(int height, int width) : values(height, width, 0.0), coverage(height, width, 0) {}

  int height() const { return values.height(); }
  int width() const { return values.width(); }
  ImageSize size() const { return values.size(); }
  std::size_t covered_count() const {
    return static_cast<std::size_t>(std::count(coverage.data().begin(), coverage.data().end(), 1));
  }
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Bilinear resample with pixel-centre alignment.
inline RgbImage resize_bilinear(const RgbImage& img, ImageSize target) {
  if (img.size() == target) return img;
  RgbImage out(target.height, target.width);
  const double sx = static_cast<double>(img.width()) / target.width;
  const double sy = static_cast<double>(img.height()) / target.height;
  for (int r = 0; r < target.height; ++r) {
    const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = y - y0;
    for (int c = 0; c < target.width; ++c) {
      const double x = std::clamp((c + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = x - x0;
      for (int k = 0; k < 3; ++k) {
        const double top = img(y0, x0)[k] * (1 - fx) + img(y0, x1)[k] * fx;
        const double bot = img(y1, x0)[k] * (1 - fx) + img(y1, x1)[k] * fx;
        out(r, c)[k] = static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bot * fy));
      }
    }
  }
  return out;
}

namespace png_detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write(const std::filesystem::path& path, int width, int height, int color_type,
                  int channels, const std::vector<std::uint8_t>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng init failed: " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(r) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Decodes any PNG to 8-bit RGB.
inline RgbImage read_rgb(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open image: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng init failed: " + path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("malformed PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  RgbImage img(height, width);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 3);
  for (int r = 0; r < height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < width; ++c) img(r, c) = {row[3 * c], row[3 * c + 1], row[3 * c + 2]};
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace png_detail

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(img.count() * 3);
  for (const auto& px : img.data()) bytes.insert(bytes.end(), px.begin(), px.end());
  png_detail::write(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, 3, bytes);
}

inline void write_png(const std::filesystem::path& path, const Grid<std::uint8_t>& gray) {
  png_detail::write(path, gray.width(), gray.height(), PNG_COLOR_TYPE_GRAY, 1, gray.data());
}

// 0/1 mask -> 0/255 PNG.
inline void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  Grid<std::uint8_t> g(mask.height(), mask.width());
  std::transform(mask.data().begin(), mask.data().end(), g.data().begin(),
                 [](std::uint8_t m) { return m ? std::uint8_t{255} : std::uint8_t{0}; });
  write_png(path, g);
}

// Continuous [0,1] values -> 8-bit grayscale.
inline void write_label_png(const std::filesystem::path& path, const Grid<double>& values) {
  Grid<std::uint8_t> g(values.height(), values.width());
  std::transform(values.data().begin(), values.data().end(), g.data().begin(), to_byte);
  write_png(path, g);
}

inline RgbImage read_png(const std::filesystem::path& path) { return png_detail::read_rgb(path); }

// Any channel >= 128 counts as set.
inline Mask read_mask_png(const std::filesystem::path& path) {
  const RgbImage img = read_png(path);
  Mask m(img.height(), img.width());
  for (std::size_t i = 0; i < img.count(); ++i) m.data()[i] = img.data()[i][0] >= 128 ? 1 : 0;
  return m;
}

}  // namespace trajlabel
