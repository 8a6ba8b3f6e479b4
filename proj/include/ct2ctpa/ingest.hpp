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

// Series loading (phantom sidecar layout and uncompressed DICOM), HU
// windowing, area downsampling, slice-interval selection and pairing.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ct2ctpa/image_io.hpp"
#include "ct2ctpa/tensor.hpp"
#include "ct2ctpa/volume.hpp"

namespace ct2ctpa::ingest {

struct HuWindow {
  double low = -1000.0;
  double high = 400.0;

  void validate() const;
  // Full representable range: windowing is then only a linear rescale.
  static HuWindow full_range() { return {double(kMinHu), double(kMaxHu)}; }
  bool operator==(const HuWindow&) const = default;
};

// 2D float image in [-1, 1].
struct NormalizedImage {
  int rows = 0;
  int cols = 0;
  std::vector<float> pixels;
  std::string source_series;
  int slice_index = 0;

  float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
  Tensor to_tensor() const;  // (1, 1, rows, cols)
  static NormalizedImage from_tensor(const Tensor& t, std::string source = {},
                                     int slice_index = 0);
};

struct FloatImage {
  int rows = 0;
  int cols = 0;
  std::vector<float> pixels;

  float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
};

// Windowed volume in [-1, 1], same layout as the source HuVolume.
struct NormalizedVolume {
  int slices = 0;
  int rows = 0;
  int cols = 0;
  std::vector<float> values;

  FloatImage slice(int s) const;
};

// ---------------------------------------------------------------------------
// Series IO

// Reads a series directory. Phantom layout (`slice_*.raw` + JSON sidecar) and
// uncompressed little-endian DICOM files are recognised; slices are sorted by
// position and raw values mapped to HU via rescale slope/intercept.
HuVolume load_series(const std::filesystem::path& dir);

// Writes the phantom sidecar layout: slice_<i>.raw (int16 LE stored values,
// HU = stored * slope + intercept) and slice_<i>.json.
void write_series(const HuVolume& volume, const std::filesystem::path& dir,
                  double rescale_intercept = -1024.0);

MaskVolume load_masks(const std::vector<std::filesystem::path>& files);
void write_mask_png(const std::filesystem::path& path, std::span<const std::uint8_t> bits,
                    int rows, int cols);

// ---------------------------------------------------------------------------
// Preprocessing

float hu_window_value(double hu, const HuWindow& window);
NormalizedVolume hu_window(const HuVolume& volume, const HuWindow& window);

// Area-averaging downsample of a square image to target x target.
FloatImage resize(const FloatImage& image, int target);
// Mask downsample: a target pixel is set when at least half its footprint is.
std::vector<std::uint8_t> resize_mask(std::span<const std::uint8_t> bits, int side, int target);

struct SliceInterval {
  int start = 0;
  int end = 0;  // exclusive
};

struct HuSlice {
  int index = 0;
  int rows = 0;
  int cols = 0;
  std::vector<std::int16_t> pixels;
};

// Slices with index in [start, end), in volume order.
std::vector<HuSlice> select_pe_interval(const HuVolume& volume, SliceInterval interval);

// 8-bit export: round-half-up of 255 * (v + 1) / 2.
std::uint8_t to_u8(float v);
float from_u8(std::uint8_t v);
io::Gray8 to_gray8(const NormalizedImage& image);
NormalizedImage from_gray8(const io::Gray8& image);
void export_png(const NormalizedImage& image, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Datasets

enum class PairingMode { paired, unpaired };
std::string to_string(PairingMode m);
PairingMode parse_pairing(const std::string& s);

enum class IntervalKind { all, fixed, ground_truth };

// How slices are chosen per study.
struct IntervalPolicy {
  IntervalKind kind = IntervalKind::all;
  SliceInterval fixed;  // used when kind == fixed
};

struct SliceRecord {
  NormalizedImage image;
  std::string study_id;
  std::string name;  // "<study>_s<slice>", unique across the dataset
  std::string split = "train";
  std::optional<bool> has_pe;
  std::vector<std::uint8_t> vessel_mask;  // empty when unknown
  std::vector<std::uint8_t> pe_mask;
};

struct PairedSlices {
  const NormalizedImage* ct = nullptr;
  const NormalizedImage* ctpa = nullptr;  // null in unpaired mode
  std::string study_id;
};

struct DatasetOptions {
  PairingMode mode = PairingMode::unpaired;
  HuWindow window;
  bool hu_filter = true;  // false: full-range rescale, no tissue window
  int image_size = 256;
  IntervalPolicy interval;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

// One study as found on disk.
struct StudySource {
  std::string id;
  std::filesystem::path ct_dir;
  std::optional<std::filesystem::path> ctpa_dir;
  std::vector<std::filesystem::path> vessel_masks;  // optional ground truth
  std::vector<std::filesystem::path> pe_masks;
  std::optional<bool> has_pe;  // study label when masks are absent
};

// Normalized CT and CTPA slice streams. In paired mode ct_slices[i] and
// ctpa_slices[i] come from the same study and slice.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetOptions options, std::vector<SliceRecord> ct,
          std::vector<SliceRecord> ctpa);

  const DatasetOptions& options() const { return options_; }
  PairingMode mode() const { return options_.mode; }
  const std::vector<SliceRecord>& ct_slices() const { return ct_; }
  const std::vector<SliceRecord>& ctpa_slices() const { return ctpa_; }

  // Subset restricted to one split ("train" / "test"); keeps pairing.
  Dataset split(const std::string& name) const;

  PairedSlices pair(std::size_t i) const;
  std::size_t size() const { return ct_.size(); }

  // Seeded per-epoch permutations. Paired mode shuffles pairs jointly;
  // unpaired mode shuffles the two streams independently.
  std::vector<std::size_t> ct_order(int epoch) const;
  std::vector<std::size_t> ctpa_order(int epoch) const;

 private:
  DatasetOptions options_;
  std::vector<SliceRecord> ct_;
  std::vector<SliceRecord> ctpa_;
};

// Studies below `root`: a phantom dataset (manifest.json) or one
// sub-directory per study holding `ct/` and optionally `ctpa/`.
std::vector<StudySource> discover_studies(const std::filesystem::path& root);
// Studies from separate CT and CTPA roots matched by sub-directory name.
std::vector<StudySource> discover_studies(const std::filesystem::path& ct_root,
                                          const std::filesystem::path& ctpa_root);

Dataset build_dataset(const std::vector<StudySource>& studies, const DatasetOptions& options);
Dataset build_dataset(const std::filesystem::path& ct_root,
                      const std::filesystem::path& ctpa_root,
                      const DatasetOptions& options);

// Preprocessed layout (see docs/formats.md).
void write_dataset(const Dataset& dataset, const std::filesystem::path& out_dir);
Dataset read_dataset(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const HuWindow& w);
void from_json(const nlohmann::json& j, HuWindow& w);

}  // namespace ct2ctpa::ingest
