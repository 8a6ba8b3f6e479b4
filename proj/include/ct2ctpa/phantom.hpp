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

// Synthetic paired CT/CTPA studies: body ellipse with a bone rim, two lung
// fields, a branching vessel tree per lung and an optional embolism segment.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ct2ctpa/volume.hpp"

namespace ct2ctpa::phantom {

struct PhantomSpec {
  int image_size = 256;
  int n_slices = 24;
  int vessel_tree_depth = 4;
  double vessel_brightening_delta = 300.0;
  double pe_lesion_probability = 0.5;
  double pe_lesion_darkening = 250.0;
  // HU added to lesion pixels in the plain CT rendering (a mildly
  // hyperdense clot); 0 makes the embolism invisible without contrast.
  double pe_lesion_ct_delta = 200.0;
  double noise_sigma = 10.0;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Tissue levels in HU.
inline constexpr double kAirHu = -1000.0;
inline constexpr double kTissueHu = 40.0;
inline constexpr double kBoneHu = 700.0;
inline constexpr double kLungHu = -850.0;
inline constexpr double kVesselHu = 60.0;

struct PhantomStudy {
  HuVolume ct;
  HuVolume ctpa;
  MaskVolume vessel_mask;
  MaskVolume pe_mask;  // subset of vessel_mask
  bool has_pe = false;
  std::uint64_t seed = 0;
  std::vector<int> pe_slices;  // slices with a nonempty pe_mask
};

PhantomStudy generate_study(const PhantomSpec& spec, std::uint64_t study_seed);

struct StudyEntry {
  std::string id;
  std::uint64_t seed = 0;
  bool has_pe = false;
  std::vector<int> pe_slices;
  std::string ct_dir;    // relative to the dataset root
  std::string ctpa_dir;
  std::vector<std::string> vessel_masks;
  std::vector<std::string> pe_masks;
};

struct DatasetManifest {
  PhantomSpec spec;
  std::vector<StudyEntry> studies;

  nlohmann::json to_json() const;
};

// Writes study_<k>/{ct,ctpa,masks} and manifest.json below out_dir.
// Study k uses study seed k; studies are generated in parallel.
DatasetManifest generate_dataset(const PhantomSpec& spec, int n_studies,
                                 const std::filesystem::path& out_dir);

nlohmann::json spec_to_json(const PhantomSpec& spec);
PhantomSpec spec_from_json(const nlohmann::json& j);

}  // namespace ct2ctpa::phantom
