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
#include <span>
#include <string>
#include <vector>

#include "ct2ctpa/error.hpp"

namespace ct2ctpa {

enum class Modality { ct, ctpa };

std::string to_string(Modality m);
Modality parse_modality(const std::string& s);

struct Spacing {
  double row_mm = 1.0;
  double col_mm = 1.0;
  double slice_mm = 1.0;
  bool operator==(const Spacing&) const = default;
};

inline constexpr int kMinHu = -2048;
inline constexpr int kMaxHu = 4096;

// Stack of signed Hounsfield-unit slices, (slice, row, col) order.
struct HuVolume {
  int slices = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::int16_t> voxels;
  Spacing spacing;
  std::string series_id;
  Modality modality = Modality::ct;

  std::size_t slice_size() const { return static_cast<std::size_t>(rows) * cols; }
  std::span<const std::int16_t> slice(int s) const {
    return {voxels.data() + s * slice_size(), slice_size()};
  }
  std::span<std::int16_t> slice(int s) {
    return {voxels.data() + s * slice_size(), slice_size()};
  }
  std::int16_t at(int s, int r, int c) const {
    return voxels[s * slice_size() + static_cast<std::size_t>(r) * cols + c];
  }
  bool same_shape(const HuVolume& o) const {
    return slices == o.slices && rows == o.rows && cols == o.cols;
  }
  // Throws if the value range or buffer size is inconsistent.
  void validate() const;
};

// Per-slice boolean masks with the layout of HuVolume.
struct MaskVolume {
  int slices = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> bits;

  std::size_t slice_size() const { return static_cast<std::size_t>(rows) * cols; }
  bool at(int s, int r, int c) const {
    return bits[s * slice_size() + static_cast<std::size_t>(r) * cols + c] != 0;
  }
  std::span<const std::uint8_t> slice(int s) const {
    return {bits.data() + s * slice_size(), slice_size()};
  }
  bool slice_any(int s) const;
  bool any() const;
  std::size_t count() const;
};

}  // namespace ct2ctpa
