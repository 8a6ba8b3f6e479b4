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

#include "ct2ctpa/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "ct2ctpa/dicom.hpp"
#include "ct2ctpa/rng.hpp"

namespace ct2ctpa::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const HuWindow& w) { j = json{{"low", w.low}, {"high", w.high}}; }
void from_json(const json& j, HuWindow& w) {
  w.low = j.at("low").get<double>();
  w.high = j.at("high").get<double>();
}

void HuWindow::validate() const {
  if (!(low < high)) {
    throw ConfigError("HU window requires low < high (got " + std::to_string(low) + ":" +
                      std::to_string(high) + ")");
  }
}

Tensor NormalizedImage::to_tensor() const {
  return Tensor(Shape{1, 1, rows, cols}, pixels);
}

NormalizedImage NormalizedImage::from_tensor(const Tensor& t, std::string source,
                                             int slice_index) {
  if (t.shape().n != 1 || t.shape().c != 1) {
    throw ShapeError("expected a single-channel image tensor, got " + t.shape().str());
  }
  NormalizedImage img;
  img.rows = t.shape().h;
  img.cols = t.shape().w;
  img.pixels = t.to_vector();
  img.source_series = std::move(source);
  img.slice_index = slice_index;
  return img;
}

FloatImage NormalizedVolume::slice(int s) const {
  FloatImage img;
  img.rows = rows;
  img.cols = cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  img.pixels.assign(values.begin() + static_cast<std::ptrdiff_t>(s * n),
                    values.begin() + static_cast<std::ptrdiff_t>((s + 1) * n));
  return img;
}

// ---------------------------------------------------------------------------
// Series IO

namespace {

struct RawSlice {
  fs::path file;
  int rows = 0;
  int cols = 0;
  double position = 0.0;
  std::vector<std::int16_t> hu;
  Spacing spacing;
  std::string series_id;
  std::string modality;
};

std::int16_t to_hu(double stored, double slope, double intercept) {
  const double hu = std::round(stored * slope + intercept);
  return static_cast<std::int16_t>(std::clamp(hu, double(kMinHu), double(kMaxHu)));
}

template <typename T>
T required(const json& j, const char* key, const fs::path& file) {
  if (!j.contains(key)) {
    throw IoError(std::string("missing tag '") + key + "'", file.string());
  }
  return j.at(key).get<T>();
}

RawSlice read_sidecar_slice(const fs::path& sidecar) {
  json h;
  try {
    h = json::parse(io::read_text(sidecar));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed slice header (") + e.what() + ")", sidecar.string());
  }
  RawSlice s;
  s.file = sidecar;
  s.rows = required<int>(h, "rows", sidecar);
  s.cols = required<int>(h, "cols", sidecar);
  const double slope = required<double>(h, "rescale_slope", sidecar);
  const double intercept = required<double>(h, "rescale_intercept", sidecar);
  s.position = required<double>(h, "slice_position", sidecar);
  const auto spacing = h.value("pixel_spacing", std::vector<double>{1.0, 1.0});
  s.spacing = Spacing{spacing.at(0), spacing.at(1), h.value("slice_thickness", 1.0)};
  s.series_id = h.value("series_id", sidecar.parent_path().string());
  s.modality = h.value("modality", "CT");
  fs::path raw = sidecar;
  raw.replace_extension(".raw");
  const std::vector<std::int16_t> stored = io::read_i16(raw);
  if (stored.size() != static_cast<std::size_t>(s.rows) * s.cols) {
    throw IoError("pixel payload size does not match rows x cols", raw.string());
  }
  s.hu.resize(stored.size());
  for (std::size_t i = 0; i < stored.size(); ++i) s.hu[i] = to_hu(stored[i], slope, intercept);
  return s;
}

RawSlice read_dicom_slice(const fs::path& file) {
  const dicom::Slice d = dicom::read_slice(file);
  if (!d.rescale_slope) throw IoError("missing tag 'RescaleSlope (0028,1053)'", file.string());
  if (!d.rescale_intercept) {
    throw IoError("missing tag 'RescaleIntercept (0028,1052)'", file.string());
  }
  if (d.bits_allocated != 16) {
    throw IoError("only 16-bit pixel data is supported (BitsAllocated=" +
                      std::to_string(d.bits_allocated) + ")",
                  file.string());
  }
  RawSlice s;
  s.file = file;
  s.rows = d.rows;
  s.cols = d.cols;
  if (d.image_position) {
    s.position = (*d.image_position)[2];
  } else if (d.slice_location) {
    s.position = *d.slice_location;
  } else if (d.instance_number) {
    s.position = *d.instance_number;
  } else {
    throw IoError("missing tag 'ImagePositionPatient (0020,0032)'", file.string());
  }
  if (d.pixel_spacing) s.spacing.row_mm = (*d.pixel_spacing)[0], s.spacing.col_mm = (*d.pixel_spacing)[1];
  if (d.slice_thickness) s.spacing.slice_mm = *d.slice_thickness;
  s.series_id = d.series_uid.empty() ? file.parent_path().string() : d.series_uid;
  s.modality = d.modality;
  const std::size_t n = static_cast<std::size_t>(s.rows) * s.cols;
  if (d.pixel_data.size() < n * 2) throw IoError("pixel data shorter than rows x cols", file.string());
  s.hu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint16_t raw = static_cast<std::uint16_t>(d.pixel_data[2 * i] |
                                                         (d.pixel_data[2 * i + 1] << 8));
    const double stored = d.pixel_representation == 1 ? static_cast<std::int16_t>(raw) : raw;
    s.hu[i] = to_hu(stored, *d.rescale_slope, *d.rescale_intercept);
  }
  return s;
}

}  // namespace

HuVolume load_series(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("series directory not found", dir.string());
  std::vector<fs::path> sidecars;
  std::vector<fs::path> dicoms;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() == ".json" && p.stem().string().rfind("slice_", 0) == 0) {
      sidecars.push_back(p);
    } else if (p.extension() == ".dcm" || dicom::looks_like_dicom(p)) {
      dicoms.push_back(p);
    }
  }
  std::sort(sidecars.begin(), sidecars.end());
  std::sort(dicoms.begin(), dicoms.end());
  std::vector<RawSlice> slices;
  if (!sidecars.empty()) {
    for (const auto& p : sidecars) slices.push_back(read_sidecar_slice(p));
  } else {
    for (const auto& p : dicoms) slices.push_back(read_dicom_slice(p));
  }
  if (slices.empty()) throw IoError("no slices found", dir.string());

  // Uniform shape: report every file that disagrees with the first slice.
  std::string offenders;
  for (const RawSlice& s : slices) {
    if (s.rows != slices[0].rows || s.cols != slices[0].cols) {
      offenders += " " + s.file.filename().string() + "(" + std::to_string(s.rows) + "x" +
                   std::to_string(s.cols) + ")";
    }
  }
  if (!offenders.empty()) {
    throw ShapeError("inconsistent slice shapes in " + dir.string() + ": expected " +
                     std::to_string(slices[0].rows) + "x" + std::to_string(slices[0].cols) +
                     " (" + slices[0].file.filename().string() + "), got" + offenders);
  }
  std::stable_sort(slices.begin(), slices.end(),
                   [](const RawSlice& a, const RawSlice& b) { return a.position < b.position; });
  for (std::size_t i = 1; i < slices.size(); ++i) {
    if (slices[i].position == slices[i - 1].position) {
      throw IoError("duplicate slice position " + std::to_string(slices[i].position) + " (" +
                        slices[i - 1].file.filename().string() + ", " +
                        slices[i].file.filename().string() + ")",
                    dir.string());
    }
  }

  HuVolume v;
  v.slices = static_cast<int>(slices.size());
  v.rows = slices[0].rows;
  v.cols = slices[0].cols;
  v.spacing = slices[0].spacing;
  if (slices.size() > 1) v.spacing.slice_mm = slices[1].position - slices[0].position;
  v.series_id = slices[0].series_id;
  v.modality = slices[0].modality == "CTPA" ? Modality::ctpa : Modality::ct;
  v.voxels.reserve(v.slices * v.slice_size());
  for (const RawSlice& s : slices) v.voxels.insert(v.voxels.end(), s.hu.begin(), s.hu.end());
  return v;
}

void write_series(const HuVolume& volume, const fs::path& dir, double rescale_intercept) {
  volume.validate();
  fs::create_directories(dir);
  std::vector<std::int16_t> stored(volume.slice_size());
  for (int s = 0; s < volume.slices; ++s) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "slice_%04d", s);
    const auto hu = volume.slice(s);
    for (std::size_t i = 0; i < hu.size(); ++i) {
      stored[i] = static_cast<std::int16_t>(hu[i] - rescale_intercept);
    }
    io::write_i16(dir / (std::string(stem) + ".raw"), stored);
    const json header = {{"format", "ct2ctpa-slice"},
                         {"version", 1},
                         {"rows", volume.rows},
                         {"cols", volume.cols},
                         {"bits_allocated", 16},
                         {"pixel_representation", "signed"},
                         {"byte_order", "little"},
                         {"pixel_spacing", {volume.spacing.row_mm, volume.spacing.col_mm}},
                         {"slice_thickness", volume.spacing.slice_mm},
                         {"slice_position", s * volume.spacing.slice_mm},
                         {"instance_number", s + 1},
                         {"rescale_slope", 1.0},
                         {"rescale_intercept", rescale_intercept},
                         {"modality", to_string(volume.modality)},
                         {"series_id", volume.series_id}};
    io::write_text(dir / (std::string(stem) + ".json"), header.dump(2) + "\n");
  }
}

MaskVolume load_masks(const std::vector<fs::path>& files) {
  MaskVolume m;
  for (const auto& f : files) {
    const io::Gray8 img = io::read_png(f);
    if (m.slices == 0) {
      m.rows = img.rows;
      m.cols = img.cols;
    } else if (img.rows != m.rows || img.cols != m.cols) {
      throw ShapeError("mask " + f.string() + " differs in shape from the first mask");
    }
    for (std::uint8_t p : img.pixels) m.bits.push_back(p >= 128 ? 1 : 0);
    ++m.slices;
  }
  return m;
}

void write_mask_png(const fs::path& path, std::span<const std::uint8_t> bits, int rows, int cols) {
  io::Gray8 img;
  img.rows = rows;
  img.cols = cols;
  img.pixels.resize(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) img.pixels[i] = bits[i] ? 255 : 0;
  io::write_png(path, img);
}

// ---------------------------------------------------------------------------
// Preprocessing

float hu_window_value(double hu, const HuWindow& window) {
  const double v = std::clamp(hu, window.low, window.high);
  return static_cast<float>(2.0 * (v - window.low) / (window.high - window.low) - 1.0);
}

NormalizedVolume hu_window(const HuVolume& volume, const HuWindow& window) {
  window.validate();
  NormalizedVolume out;
  out.slices = volume.slices;
  out.rows = volume.rows;
  out.cols = volume.cols;
  out.values.resize(volume.voxels.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(volume.voxels.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out.values[i] = hu_window_value(volume.voxels[i], window);
  return out;
}

namespace {

// Row-stochastic weights of the exact box filter mapping `side` samples onto
// `target` bins of width side / target.
std::vector<std::vector<std::pair<int, double>>> area_weights(int side, int target) {
  std::vector<std::vector<std::pair<int, double>>> w(target);
  const double ratio = static_cast<double>(side) / target;
  for (int o = 0; o < target; ++o) {
    const double a = o * ratio;
    const double b = (o + 1) * ratio;
    for (int i = static_cast<int>(std::floor(a)); i < std::min(side, static_cast<int>(std::ceil(b))); ++i) {
      const double overlap = std::min(b, i + 1.0) - std::max(a, static_cast<double>(i));
      if (overlap > 0.0) w[o].emplace_back(i, overlap / ratio);
    }
  }
  return w;
}

}  // namespace

FloatImage resize(const FloatImage& image, int target) {
  if (image.rows != image.cols) {
    throw ShapeError("resize expects a square image, got " + std::to_string(image.rows) + "x" +
                     std::to_string(image.cols));
  }
  const int side = image.rows;
  if (target <= 0 || target > side) {
    throw ConfigError("resize target " + std::to_string(target) + " must be in [1, " +
                      std::to_string(side) + "]");
  }
  if (target == side) return image;
  const auto w = area_weights(side, target);
  // Separable: rows first, then columns, accumulated in double.
  std::vector<double> tmp(static_cast<std::size_t>(side) * target, 0.0);
  for (int r = 0; r < side; ++r) {
    for (int o = 0; o < target; ++o) {
      double acc = 0.0;
      for (const auto& [i, wt] : w[o]) acc += wt * image.pixels[static_cast<std::size_t>(r) * side + i];
      tmp[static_cast<std::size_t>(r) * target + o] = acc;
    }
  }
  FloatImage out;
  out.rows = out.cols = target;
  out.pixels.resize(static_cast<std::size_t>(target) * target);
  for (int o = 0; o < target; ++o) {
    for (int c = 0; c < target; ++c) {
      double acc = 0.0;
      for (const auto& [i, wt] : w[o]) acc += wt * tmp[static_cast<std::size_t>(i) * target + c];
      out.pixels[static_cast<std::size_t>(o) * target + c] = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<std::uint8_t> resize_mask(std::span<const std::uint8_t> bits, int side, int target) {
  FloatImage f;
  f.rows = f.cols = side;
  f.pixels.resize(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) f.pixels[i] = bits[i] ? 1.0f : 0.0f;
  const FloatImage r = resize(f, target);
  std::vector<std::uint8_t> out(r.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = r.pixels[i] >= 0.5f ? 1 : 0;
  return out;
}

std::vector<HuSlice> select_pe_interval(const HuVolume& volume, SliceInterval interval) {
  if (interval.start < 0 || interval.end > volume.slices || interval.start > interval.end) {
    throw ConfigError("slice interval [" + std::to_string(interval.start) + ", " +
                      std::to_string(interval.end) + ") outside volume bounds [0, " +
                      std::to_string(volume.slices) + ")");
  }
  std::vector<HuSlice> out;
  for (int s = interval.start; s < interval.end; ++s) {
    const auto px = volume.slice(s);
    out.push_back(HuSlice{s, volume.rows, volume.cols, {px.begin(), px.end()}});
  }
  return out;
}

std::uint8_t to_u8(float v) {
  const double x = 255.0 * (std::clamp(static_cast<double>(v), -1.0, 1.0) + 1.0) / 2.0;
  return static_cast<std::uint8_t>(std::floor(x + 0.5));
}

float from_u8(std::uint8_t v) { return static_cast<float>(v / 127.5 - 1.0); }

io::Gray8 to_gray8(const NormalizedImage& image) {
  io::Gray8 g;
  g.rows = image.rows;
  g.cols = image.cols;
  g.pixels.resize(image.pixels.size());
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = to_u8(image.pixels[i]);
  return g;
}

NormalizedImage from_gray8(const io::Gray8& image) {
  NormalizedImage n;
  n.rows = image.rows;
  n.cols = image.cols;
  n.pixels.resize(image.pixels.size());
  for (std::size_t i = 0; i < n.pixels.size(); ++i) n.pixels[i] = from_u8(image.pixels[i]);
  return n;
}

void export_png(const NormalizedImage& image, const fs::path& path) {
  io::write_png(path, to_gray8(image));
}

// ---------------------------------------------------------------------------
// Datasets

std::string to_string(PairingMode m) { return m == PairingMode::paired ? "paired" : "unpaired"; }

PairingMode parse_pairing(const std::string& s) {
  if (s == "paired") return PairingMode::paired;
  if (s == "unpaired") return PairingMode::unpaired;
  throw ConfigError("pairing.mode must be 'paired' or 'unpaired' (got '" + s + "')");
}

Dataset::Dataset(DatasetOptions options, std::vector<SliceRecord> ct, std::vector<SliceRecord> ctpa)
    : options_(std::move(options)), ct_(std::move(ct)), ctpa_(std::move(ctpa)) {
  if (options_.mode == PairingMode::paired) {
    if (ct_.size() != ctpa_.size()) {
      throw ConfigError("paired dataset needs equal CT and CTPA slice counts");
    }
    for (std::size_t i = 0; i < ct_.size(); ++i) {
      if (ct_[i].study_id != ctpa_[i].study_id) {
        throw ConfigError("paired item " + std::to_string(i) + " mixes studies " +
                          ct_[i].study_id + " and " + ctpa_[i].study_id);
      }
    }
  }
}

Dataset Dataset::split(const std::string& name) const {
  std::vector<SliceRecord> ct, ctpa;
  for (const auto& r : ct_) {
    if (r.split == name) ct.push_back(r);
  }
  for (const auto& r : ctpa_) {
    if (r.split == name) ctpa.push_back(r);
  }
  return Dataset(options_, std::move(ct), std::move(ctpa));
}

PairedSlices Dataset::pair(std::size_t i) const {
  PairedSlices p;
  p.ct = &ct_.at(i).image;
  p.study_id = ct_[i].study_id;
  if (options_.mode == PairingMode::paired) p.ctpa = &ctpa_.at(i).image;
  return p;
}

namespace {
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  return idx;
}
}  // namespace

std::vector<std::size_t> Dataset::ct_order(int epoch) const {
  return seeded_permutation(ct_.size(), mix_seed(options_.seed, 2 * static_cast<std::uint64_t>(epoch)));
}

std::vector<std::size_t> Dataset::ctpa_order(int epoch) const {
  if (options_.mode == PairingMode::paired) return ct_order(epoch);
  return seeded_permutation(ctpa_.size(),
                            mix_seed(options_.seed, 2 * static_cast<std::uint64_t>(epoch) + 1));
}

std::vector<StudySource> discover_studies(const fs::path& root) {
  std::vector<StudySource> out;
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path)) {
    const json m = json::parse(io::read_text(manifest_path));
    if (m.value("format", "") == "ct2ctpa-phantom-dataset") {
      for (const auto& s : m.at("studies")) {
        StudySource src;
        src.id = s.at("id");
        src.ct_dir = root / s.at("ct").get<std::string>();
        src.ctpa_dir = root / s.at("ctpa").get<std::string>();
        for (const auto& f : s.at("vessel_masks")) src.vessel_masks.push_back(root / f.get<std::string>());
        for (const auto& f : s.at("pe_masks")) src.pe_masks.push_back(root / f.get<std::string>());
        src.has_pe = s.at("has_pe").get<bool>();
        out.push_back(std::move(src));
      }
      return out;
    }
  }
  std::map<std::string, bool> labels;
  if (fs::exists(root / "labels.json")) {
    labels = json::parse(io::read_text(root / "labels.json")).get<std::map<std::string, bool>>();
  }
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::is_directory(e.path() / "ct")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    StudySource src;
    src.id = d.filename().string();
    src.ct_dir = d / "ct";
    if (fs::is_directory(d / "ctpa")) src.ctpa_dir = d / "ctpa";
    if (auto it = labels.find(src.id); it != labels.end()) src.has_pe = it->second;
    out.push_back(std::move(src));
  }
  if (out.empty()) throw IoError("no studies found (expected manifest.json or <study>/ct/)", root.string());
  return out;
}

std::vector<StudySource> discover_studies(const fs::path& ct_root, const fs::path& ctpa_root) {
  if (ct_root == ctpa_root) return discover_studies(ct_root);
  std::vector<StudySource> out;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(ct_root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    StudySource src;
    src.id = d.filename().string();
    src.ct_dir = d;
    if (fs::is_directory(ctpa_root / src.id)) src.ctpa_dir = ctpa_root / src.id;
    out.push_back(std::move(src));
  }
  return out;
}

namespace {

std::string slice_name(const std::string& study, int slice) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_s%03d", slice);
  return study + buf;
}

SliceInterval resolve_interval(const IntervalPolicy& policy, const HuVolume& vol,
                               const MaskVolume* pe, const std::string& study) {
  switch (policy.kind) {
    case IntervalKind::all:
      return {0, vol.slices};
    case IntervalKind::fixed:
      if (policy.fixed.start < 0 || policy.fixed.end > vol.slices ||
          policy.fixed.start > policy.fixed.end) {
        throw ConfigError("study " + study + ": interval [" + std::to_string(policy.fixed.start) +
                          ", " + std::to_string(policy.fixed.end) + ") outside [0, " +
                          std::to_string(vol.slices) + ")");
      }
      return policy.fixed;
    case IntervalKind::ground_truth: {
      if (!pe) throw ConfigError("study " + study + ": ground-truth interval needs PE masks");
      int lo = vol.slices, hi = 0;
      for (int s = 0; s < pe->slices; ++s) {
        if (pe->slice_any(s)) {
          lo = std::min(lo, s);
          hi = std::max(hi, s + 1);
        }
      }
      return lo < hi ? SliceInterval{lo, hi} : SliceInterval{0, 0};
    }
  }
  return {0, vol.slices};
}

SliceRecord make_record(const HuVolume& vol, int s, const DatasetOptions& opt,
                        const StudySource& src, const MaskVolume* vessel, const MaskVolume* pe) {
  const HuWindow window = opt.hu_filter ? opt.window : HuWindow::full_range();
  FloatImage img;
  img.rows = vol.rows;
  img.cols = vol.cols;
  const auto hu = vol.slice(s);
  img.pixels.resize(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i) img.pixels[i] = hu_window_value(hu[i], window);
  if (img.rows != img.cols) {
    throw ShapeError("study " + src.id + ": slices must be square, got " +
                     std::to_string(img.rows) + "x" + std::to_string(img.cols));
  }
  const FloatImage small = resize(img, opt.image_size);
  SliceRecord r;
  r.image.rows = small.rows;
  r.image.cols = small.cols;
  r.image.pixels = small.pixels;
  r.image.source_series = vol.series_id;
  r.image.slice_index = s;
  r.study_id = src.id;
  r.name = slice_name(src.id, s);
  if (vessel && s < vessel->slices) {
    r.vessel_mask = resize_mask(vessel->slice(s), vessel->rows, opt.image_size);
  }
  if (pe && s < pe->slices) {
    const auto sl = pe->slice(s);
    r.has_pe = std::any_of(sl.begin(), sl.end(), [](std::uint8_t b) { return b != 0; });
    r.pe_mask = resize_mask(sl, pe->rows, opt.image_size);
  } else {
    r.has_pe = src.has_pe;
  }
  return r;
}

}  // namespace

Dataset build_dataset(const std::vector<StudySource>& studies, const DatasetOptions& options) {
  if (options.hu_filter) options.window.validate();
  if (options.image_size < 8) throw ConfigError("image_size must be at least 8");
  if (options.test_fraction < 0.0 || options.test_fraction >= 1.0) {
    throw ConfigError("split.test_fraction must be in [0, 1)");
  }
  // Study-level split; slices of one study never straddle train and test.
  std::vector<std::string> ids;
  for (const auto& s : studies) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  Rng split_rng(mix_seed(options.seed, 0x5117));
  split_rng.shuffle(std::span<std::string>(ids));
  std::size_t n_test = static_cast<std::size_t>(std::lround(options.test_fraction * ids.size()));
  if (options.test_fraction > 0.0 && ids.size() >= 2) n_test = std::max<std::size_t>(n_test, 1);
  n_test = std::min(n_test, ids.empty() ? 0 : ids.size() - 1);
  const std::set<std::string> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));

  std::vector<SliceRecord> ct_records, ctpa_records;
  for (const StudySource& src : studies) {
    const HuVolume ct = load_series(src.ct_dir);
    std::optional<HuVolume> ctpa;
    if (src.ctpa_dir) ctpa = load_series(*src.ctpa_dir);
    if (options.mode == PairingMode::paired) {
      if (!ctpa) throw ConfigError("paired mode: study " + src.id + " has no CTPA series");
      if (ctpa->slices != ct.slices) {
        throw ConfigError("paired mode: study " + src.id + " has " + std::to_string(ct.slices) +
                          " CT slices but " + std::to_string(ctpa->slices) + " CTPA slices");
      }
    }
    std::optional<MaskVolume> vessel, pe;
    if (!src.vessel_masks.empty()) vessel = load_masks(src.vessel_masks);
    if (!src.pe_masks.empty()) pe = load_masks(src.pe_masks);
    const std::string split = test_ids.count(src.id) ? "test" : "train";

    const SliceInterval ct_iv = resolve_interval(options.interval, ct, pe ? &*pe : nullptr, src.id);
    for (const HuSlice& hs : select_pe_interval(ct, ct_iv)) {
      SliceRecord r = make_record(ct, hs.index, options, src, vessel ? &*vessel : nullptr,
                                  pe ? &*pe : nullptr);
      r.split = split;
      ct_records.push_back(std::move(r));
    }
    if (ctpa) {
      const SliceInterval iv = options.mode == PairingMode::paired
                                   ? ct_iv
                                   : resolve_interval(options.interval, *ctpa,
                                                      pe ? &*pe : nullptr, src.id);
      for (const HuSlice& hs : select_pe_interval(*ctpa, iv)) {
        SliceRecord r = make_record(*ctpa, hs.index, options, src, vessel ? &*vessel : nullptr,
                                    pe ? &*pe : nullptr);
        r.split = split;
        ctpa_records.push_back(std::move(r));
      }
    }
  }
  return Dataset(options, std::move(ct_records), std::move(ctpa_records));
}

Dataset build_dataset(const fs::path& ct_root, const fs::path& ctpa_root,
                      const DatasetOptions& options) {
  return build_dataset(discover_studies(ct_root, ctpa_root), options);
}

// ---------------------------------------------------------------------------
// Preprocessed layout

namespace {

json records_json(const std::vector<SliceRecord>& records, const std::string& modality) {
  json arr = json::array();
  for (const auto& r : records) {
    json e = {{"name", r.name},
              {"study", r.study_id},
              {"slice", r.image.slice_index},
              {"series", r.image.source_series},
              {"split", r.split},
              {"array", "arrays/" + r.name + "_" + modality + ".f32"},
              {"png", "png/" + modality + "/" + r.split + "/" + r.name + ".png"}};
    e["has_pe"] = r.has_pe ? json(*r.has_pe) : json(nullptr);
    if (!r.vessel_mask.empty()) e["vessel_mask"] = "masks/" + r.name + "_vessel.png";
    if (!r.pe_mask.empty()) e["pe_mask"] = "masks/" + r.name + "_pe.png";
    arr.push_back(std::move(e));
  }
  return arr;
}

void write_records(const std::vector<SliceRecord>& records, const std::string& modality,
                   const fs::path& out) {
  for (const auto& r : records) {
    io::write_f32(out / "arrays" / (r.name + "_" + modality + ".f32"), r.image.pixels);
    const fs::path png_dir = out / "png" / modality / r.split;
    fs::create_directories(png_dir);
    export_png(r.image, png_dir / (r.name + ".png"));
    if (!r.vessel_mask.empty()) {
      write_mask_png(out / "masks" / (r.name + "_vessel.png"), r.vessel_mask, r.image.rows, r.image.cols);
    }
    if (!r.pe_mask.empty()) {
      write_mask_png(out / "masks" / (r.name + "_pe.png"), r.pe_mask, r.image.rows, r.image.cols);
    }
  }
}

std::vector<SliceRecord> read_records(const json& arr, const fs::path& dir, int size) {
  std::vector<SliceRecord> out;
  for (const auto& e : arr) {
    SliceRecord r;
    r.name = e.at("name");
    r.study_id = e.at("study");
    r.split = e.at("split");
    r.image.rows = r.image.cols = size;
    r.image.slice_index = e.at("slice");
    r.image.source_series = e.value("series", "");
    r.image.pixels = io::read_f32(dir / e.at("array").get<std::string>());
    if (r.image.pixels.size() != static_cast<std::size_t>(size) * size) {
      throw IoError("array size does not match image_size", (dir / e.at("array").get<std::string>()).string());
    }
    if (!e.at("has_pe").is_null()) r.has_pe = e.at("has_pe").get<bool>();
    auto load_mask = [&](const char* key, std::vector<std::uint8_t>& dst) {
      if (!e.contains(key)) return;
      const io::Gray8 g = io::read_png(dir / e.at(key).get<std::string>());
      dst.resize(g.pixels.size());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = g.pixels[i] >= 128 ? 1 : 0;
    };
    load_mask("vessel_mask", r.vessel_mask);
    load_mask("pe_mask", r.pe_mask);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

void write_dataset(const Dataset& dataset, const fs::path& out_dir) {
  fs::create_directories(out_dir / "arrays");
  fs::create_directories(out_dir / "masks");
  write_records(dataset.ct_slices(), "ct", out_dir);
  write_records(dataset.ctpa_slices(), "ctpa", out_dir);
  const DatasetOptions& o = dataset.options();
  json interval = {{"kind", o.interval.kind == IntervalKind::all      ? "all"
                            : o.interval.kind == IntervalKind::fixed  ? "fixed"
                                                                      : "ground_truth"}};
  if (o.interval.kind == IntervalKind::fixed) {
    interval["start"] = o.interval.fixed.start;
    interval["end"] = o.interval.fixed.end;
  }
  const json manifest = {{"format", "ct2ctpa-preprocessed"},
                         {"version", 1},
                         {"image_size", o.image_size},
                         {"window", o.window},
                         {"hu_filter", o.hu_filter},
                         {"pairing", to_string(o.mode)},
                         {"interval", interval},
                         {"seed", o.seed},
                         {"test_fraction", o.test_fraction},
                         {"ct_slices", records_json(dataset.ct_slices(), "ct")},
                         {"ctpa_slices", records_json(dataset.ctpa_slices(), "ctpa")}};
  io::write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw IoError("preprocessed dataset manifest not found", path.string());
  const json m = json::parse(io::read_text(path));
  if (m.value("format", "") != "ct2ctpa-preprocessed") {
    throw IoError("not a preprocessed dataset (run `ct2ctpa preprocess` first)", path.string());
  }
  DatasetOptions o;
  o.image_size = m.at("image_size");
  o.window = m.at("window").get<HuWindow>();
  o.hu_filter = m.at("hu_filter");
  o.mode = parse_pairing(m.at("pairing"));
  o.seed = m.at("seed");
  o.test_fraction = m.at("test_fraction");
  const json& iv = m.at("interval");
  const std::string kind = iv.at("kind");
  o.interval.kind = kind == "all" ? IntervalKind::all
                    : kind == "fixed" ? IntervalKind::fixed
                                      : IntervalKind::ground_truth;
  if (o.interval.kind == IntervalKind::fixed) o.interval.fixed = {iv.at("start"), iv.at("end")};
  return Dataset(o, read_records(m.at("ct_slices"), dir, o.image_size),
                 read_records(m.at("ctpa_slices"), dir, o.image_size));
}

}  // namespace ct2ctpa::ingest
