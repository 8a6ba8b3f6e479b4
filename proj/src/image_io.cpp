/* Copyright 2026 The ct2ctpa Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "ct2ctpa/image_io.hpp"

#include <png.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace ct2ctpa::io {
namespace {

static_assert(std::endian::native == std::endian::little,
              "raw array files are written in native little-endian order");

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void write_raw(const std::filesystem::path& path, std::span<const T> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing", path.string());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw IoError("write failed", path.string());
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open for reading", path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(T) != 0) throw IoError("file size is not a whole number of elements", path.string());
  std::vector<T> values(bytes / sizeof(T));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("read failed", path.string());
  return values;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Gray8& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.rows) * image.cols) {
    throw ShapeError("write_png: pixel buffer does not match dimensions");
  }
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing", path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed", path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed", path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.cols, image.rows, 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < image.rows; ++r) {
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() +
                                             static_cast<std::size_t>(r) * image.cols));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Gray8 read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading", path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed", path.string());
  }
  Gray8 image;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("PNG decoding failed", path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  image.cols = static_cast<int>(png_get_image_width(png, info));
  image.rows = static_cast<int>(png_get_image_height(png, info));
  image.pixels.resize(static_cast<std::size_t>(image.rows) * image.cols);
  for (int r = 0; r < image.rows; ++r) {
    png_read_row(png, image.pixels.data() + static_cast<std::size_t>(r) * image.cols, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
  write_raw(path, values);
}
std::vector<float> read_f32(const std::filesystem::path& path) { return read_raw<float>(path); }

void write_i16(const std::filesystem::path& path, std::span<const std::int16_t> values) {
  write_raw(path, values);
}
std::vector<std::int16_t> read_i16(const std::filesystem::path& path) {
  return read_raw<std::int16_t>(path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing", path.string());
  out << text;
  if (!out) throw IoError("write failed", path.string());
}

Gray8 hconcat(std::span<const Gray8> panels, std::uint8_t separator) {
  Gray8 out;
  if (panels.empty()) return out;
  constexpr int kGap = 2;
  out.rows = panels[0].rows;
  for (const Gray8& p : panels) {
    if (p.rows != out.rows) throw ShapeError("hconcat: panels differ in height");
    out.cols += p.cols;
  }
  out.cols += kGap * static_cast<int>(panels.size() - 1);
  out.pixels.assign(static_cast<std::size_t>(out.rows) * out.cols, separator);
  int x0 = 0;
  for (const Gray8& p : panels) {
    for (int r = 0; r < p.rows; ++r) {
      std::copy_n(p.pixels.data() + static_cast<std::size_t>(r) * p.cols, p.cols,
                  out.pixels.data() + static_cast<std::size_t>(r) * out.cols + x0);
    }
    x0 += p.cols + kGap;
  }
  return out;
}

}  // namespace ct2ctpa::io
