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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ct2ctpa/tensor.hpp"

namespace ct2ctpa::io {

// 8-bit grayscale raster, row-major.
struct Gray8 {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
};

void write_png(const std::filesystem::path& path, const Gray8& image);
Gray8 read_png(const std::filesystem::path& path);

// Little-endian float32 array without header; the caller tracks the shape.
void write_f32(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32(const std::filesystem::path& path);

void write_i16(const std::filesystem::path& path, std::span<const std::int16_t> values);
std::vector<std::int16_t> read_i16(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Side-by-side concatenation of equally tall panels with a 2 px separator.
Gray8 hconcat(std::span<const Gray8> panels, std::uint8_t separator = 0);

}  // namespace ct2ctpa::io
