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

#include "ct2ctpa/volume.hpp"

#include <algorithm>

namespace ct2ctpa {

std::string to_string(Modality m) { return m == Modality::ct ? "CT" : "CTPA"; }

Modality parse_modality(const std::string& s) {
  if (s == "CT" || s == "ct") return Modality::ct;
  if (s == "CTPA" || s == "ctpa") return Modality::ctpa;
  throw ConfigError("unknown modality '" + s + "'");
}

void HuVolume::validate() const {
  if (voxels.size() != static_cast<std::size_t>(slices) * slice_size()) {
    throw ShapeError("HuVolume '" + series_id + "': voxel buffer does not match shape");
  }
  for (std::int16_t v : voxels) {
    if (v < kMinHu || v > kMaxHu) {
      throw NumericError("HuVolume '" + series_id + "': value " + std::to_string(v) +
                         " outside [-2048, 4096]");
    }
  }
}

bool MaskVolume::slice_any(int s) const {
  const auto sl = slice(s);
  return std::any_of(sl.begin(), sl.end(), [](std::uint8_t b) { return b != 0; });
}

bool MaskVolume::any() const {
  return std::any_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
}

std::size_t MaskVolume::count() const {
  return static_cast<std::size_t>(
      std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

}  // namespace ct2ctpa
