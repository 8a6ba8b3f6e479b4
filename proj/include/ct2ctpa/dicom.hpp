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

// Reader for uncompressed DICOM Part 10 files (implicit or explicit VR,
// little endian). Only the attributes needed to rebuild an HU series are
// extracted; everything else is skipped.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ct2ctpa::dicom {

struct Slice {
  int rows = 0;
  int cols = 0;
  int bits_allocated = 0;
  int pixel_representation = 0;  // 1 = signed
  std::optional<double> rescale_slope;
  std::optional<double> rescale_intercept;
  std::optional<std::array<double, 3>> image_position;
  std::optional<double> slice_location;
  std::optional<int> instance_number;
  std::optional<std::array<double, 2>> pixel_spacing;
  std::optional<double> slice_thickness;
  std::string modality;
  std::string series_uid;
  std::vector<std::uint8_t> pixel_data;
};

// True if the file carries the "DICM" magic after the 128-byte preamble.
bool looks_like_dicom(const std::filesystem::path& path);

Slice read_slice(const std::filesystem::path& path);

}  // namespace ct2ctpa::dicom
