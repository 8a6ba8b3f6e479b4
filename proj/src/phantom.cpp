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

#include "ct2ctpa/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>

#include "ct2ctpa/error.hpp"
#include "ct2ctpa/image_io.hpp"
#include "ct2ctpa/ingest.hpp"
#include "ct2ctpa/rng.hpp"

namespace ct2ctpa::phantom {

namespace fs = std::filesystem;
using nlohmann::json;

void PhantomSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("phantom spec: " + field + " " + why);
  };
  if (image_size < 32 || (image_size & (image_size - 1)) != 0) {
    fail("image_size", "must be a power of two >= 32 (got " + std::to_string(image_size) + ")");
  }
  if (n_slices < 1) fail("n_slices", "must be >= 1");
  if (vessel_tree_depth < 1 || vessel_tree_depth > 8) fail("vessel_tree_depth", "must be in [1, 8]");
  if (!(vessel_brightening_delta > 0.0)) fail("vessel_brightening_delta", "must be > 0");
  if (!(pe_lesion_probability >= 0.0 && pe_lesion_probability <= 1.0)) {
    fail("pe_lesion_probability", "must be in [0, 1]");
  }
  if (!(pe_lesion_darkening >= 0.0)) fail("pe_lesion_darkening", "must be >= 0");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma", "must be >= 0");
  if (!std::isfinite(pe_lesion_ct_delta)) fail("pe_lesion_ct_delta", "must be finite");
}

namespace {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// One branch: a random-walk polyline with constant radius.
struct Branch {
  int level = 0;
  double radius = 0.0;
  std::vector<Vec2> points;
};

constexpr int kStepsPerBranch = 8;

void grow(Rng& rng, Vec2 start, double angle, double length, double radius, int level,
          int depth, std::vector<Branch>& out) {
  Branch b;
  b.level = level;
  b.radius = radius;
  b.points.push_back(start);
  Vec2 p = start;
  for (int i = 0; i < kStepsPerBranch; ++i) {
    angle += rng.normal(0.0, 0.12);
    p.x += std::cos(angle) * length / kStepsPerBranch;
    p.y += std::sin(angle) * length / kStepsPerBranch;
    b.points.push_back(p);
  }
  out.push_back(b);
  if (level + 1 >= depth) return;
  const double spread_a = rng.uniform(0.35, 0.7);
  const double spread_b = rng.uniform(0.35, 0.7);
  grow(rng, p, angle + spread_a, length * 0.75, radius * 0.72, level + 1, depth, out);
  grow(rng, p, angle - spread_b, length * 0.75, radius * 0.72, level + 1, depth, out);
}

struct Lung {
  Vec2 center;
  double ax = 0.0;  // semi-axes at the widest slice
  double ay = 0.0;
  std::vector<Branch> tree;  // lung-local coordinates
};

struct Lesion {
  std::size_t lung = 0;
  std::size_t branch = 0;
  std::size_t first_point = 0;  // lesion spans points [first, first + 4]
  int slice_begin = 0;
  int slice_end = 0;  // exclusive
};

double seg_distance(Vec2 p, Vec2 a, Vec2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx), ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

// Paints `mask` (N x N) with pixels within `radius` of segment a-b; all in
// pixel units.
void paint_capsule(std::vector<std::uint8_t>& mask, int n, Vec2 a, Vec2 b, double radius) {
  const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius - 1)));
  const int c1 = std::min(n - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius + 1)));
  const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius - 1)));
  const int r1 = std::min(n - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius + 1)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (seg_distance({c + 0.5, r + 0.5}, a, b) < radius) mask[static_cast<std::size_t>(r) * n + c] = 1;
    }
  }
}

double lung_scale(int slice, int n_slices) {
  return 0.75 + 0.25 * std::sin(M_PI * (slice + 0.5) / n_slices);
}

std::int16_t quantize(double hu) {
  return static_cast<std::int16_t>(std::clamp(std::round(hu), double(kMinHu), double(kMaxHu)));
}

}  // namespace

PhantomStudy generate_study(const PhantomSpec& spec, std::uint64_t study_seed) {
  spec.validate();
  const std::uint64_t stream = mix_seed(spec.seed, study_seed);
  Rng rng(stream);
  const int n = spec.image_size;
  const int ns = spec.n_slices;
  const double nd = n;

  const bool wants_pe = rng.bernoulli(spec.pe_lesion_probability);
  const double body_ax = 0.42 * rng.uniform(0.95, 1.05);
  const double body_ay = 0.32 * rng.uniform(0.95, 1.05);
  std::array<Lung, 2> lungs;
  for (int side = 0; side < 2; ++side) {
    Lung& lung = lungs[side];
    const double sign = side == 0 ? -1.0 : 1.0;
    lung.center = {0.5 + sign * 0.17 * rng.uniform(0.95, 1.05), 0.5 + rng.uniform(-0.02, 0.02)};
    lung.ax = 0.12 * rng.uniform(0.9, 1.1);
    lung.ay = 0.20 * rng.uniform(0.9, 1.1);
    // Hilum on the medial side; the trunk heads laterally.
    const Vec2 root{-sign * 0.7 * lung.ax, rng.uniform(-0.2, 0.2) * lung.ay};
    const double angle = (side == 0 ? M_PI : 0.0) + rng.uniform(-0.3, 0.3);
    grow(rng, root, angle, 0.09, 0.022, 0, spec.vessel_tree_depth, lung.tree);
  }

  Lesion lesion;
  if (wants_pe) {
    lesion.lung = rng.uniform_int(2);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < lungs[lesion.lung].tree.size(); ++i) {
      if (lungs[lesion.lung].tree[i].level <= 1) candidates.push_back(i);
    }
    lesion.branch = candidates[rng.uniform_int(candidates.size())];
    lesion.first_point = rng.uniform_int(kStepsPerBranch - 3);
    const int span = std::max(1, static_cast<int>(std::lround(0.4 * ns)));
    lesion.slice_begin = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(ns - span + 1)));
    lesion.slice_end = lesion.slice_begin + span;
  }

  PhantomStudy st;
  st.seed = study_seed;
  const Spacing spacing{350.0 / n, 350.0 / n, 2.5};
  for (HuVolume* v : {&st.ct, &st.ctpa}) {
    v->slices = ns;
    v->rows = v->cols = n;
    v->voxels.assign(static_cast<std::size_t>(ns) * n * n, 0);
    v->spacing = spacing;
  }
  st.ct.modality = Modality::ct;
  st.ctpa.modality = Modality::ctpa;
  st.ct.series_id = "phantom-" + std::to_string(spec.seed) + "-" + std::to_string(study_seed) + "-ct";
  st.ctpa.series_id = "phantom-" + std::to_string(spec.seed) + "-" + std::to_string(study_seed) + "-ctpa";
  for (MaskVolume* m : {&st.vessel_mask, &st.pe_mask}) {
    m->slices = ns;
    m->rows = m->cols = n;
    m->bits.assign(static_cast<std::size_t>(ns) * n * n, 0);
  }

  const std::size_t plane = static_cast<std::size_t>(n) * n;
  std::vector<std::uint8_t> vessel(plane), lesion_px(plane), in_lung(plane);
  for (int s = 0; s < ns; ++s) {
    const double f = lung_scale(s, ns);
    std::fill(vessel.begin(), vessel.end(), 0);
    std::fill(lesion_px.begin(), lesion_px.end(), 0);
    std::vector<double> base(plane);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double x = (c + 0.5) / nd - 0.5, y = (r + 0.5) / nd - 0.5;
        const double e = (x * x) / (body_ax * body_ax) + (y * y) / (body_ay * body_ay);
        double hu = kAirHu;
        if (e <= 1.0) hu = e >= 0.93 * 0.93 ? kBoneHu : kTissueHu;
        bool lung_px = false;
        for (const Lung& lung : lungs) {
          const double lx = (c + 0.5) / nd - lung.center.x, ly = (r + 0.5) / nd - lung.center.y;
          const double ax = lung.ax * f, ay = lung.ay * f;
          if (lx * lx / (ax * ax) + ly * ly / (ay * ay) <= 1.0) lung_px = true;
        }
        if (lung_px) hu = kLungHu;
        in_lung[static_cast<std::size_t>(r) * n + c] = lung_px;
        base[static_cast<std::size_t>(r) * n + c] = hu;
      }
    }
    auto to_px = [&](const Lung& lung, Vec2 q) {
      return Vec2{(lung.center.x + f * q.x) * nd, (lung.center.y + f * q.y) * nd};
    };
    for (const Lung& lung : lungs) {
      for (const Branch& b : lung.tree) {
        const double radius = std::max(b.radius * f * nd, 0.6);
        for (std::size_t i = 0; i + 1 < b.points.size(); ++i) {
          paint_capsule(vessel, n, to_px(lung, b.points[i]), to_px(lung, b.points[i + 1]), radius);
        }
      }
    }
    for (std::size_t i = 0; i < plane; ++i) vessel[i] &= in_lung[i];
    if (wants_pe && s >= lesion.slice_begin && s < lesion.slice_end) {
      const Lung& lung = lungs[lesion.lung];
      const Branch& b = lung.tree[lesion.branch];
      const double radius = std::max(b.radius * f * nd, 0.6) + 0.5;
      for (std::size_t i = lesion.first_point; i < lesion.first_point + 4; ++i) {
        paint_capsule(lesion_px, n, to_px(lung, b.points[i]), to_px(lung, b.points[i + 1]), radius);
      }
      for (std::size_t i = 0; i < plane; ++i) lesion_px[i] &= vessel[i];
    }

    Rng ct_noise(mix_seed(stream, 1 + 2 * static_cast<std::uint64_t>(s)));
    Rng ctpa_noise(mix_seed(stream, 2 + 2 * static_cast<std::uint64_t>(s)));
    auto ct_slice = st.ct.slice(s);
    auto ctpa_slice = st.ctpa.slice(s);
    bool any_lesion = false;
    for (std::size_t i = 0; i < plane; ++i) {
      double ct = base[i], ctpa = base[i];
      if (vessel[i]) {
        ct = kVesselHu;
        ctpa = kVesselHu + spec.vessel_brightening_delta;
        if (lesion_px[i]) {
          ct += spec.pe_lesion_ct_delta;
          ctpa -= spec.pe_lesion_darkening;
          any_lesion = true;
        }
      }
      if (spec.noise_sigma > 0.0) {
        ct += ct_noise.normal(0.0, spec.noise_sigma);
        ctpa += ctpa_noise.normal(0.0, spec.noise_sigma);
      }
      ct_slice[i] = quantize(ct);
      ctpa_slice[i] = quantize(ctpa);
      st.vessel_mask.bits[s * plane + i] = vessel[i];
      st.pe_mask.bits[s * plane + i] = lesion_px[i];
    }
    if (any_lesion) st.pe_slices.push_back(s);
  }
  st.has_pe = !st.pe_slices.empty();
  return st;
}

json spec_to_json(const PhantomSpec& s) {
  return json{{"image_size", s.image_size},
              {"n_slices", s.n_slices},
              {"vessel_tree_depth", s.vessel_tree_depth},
              {"vessel_brightening_delta", s.vessel_brightening_delta},
              {"pe_lesion_probability", s.pe_lesion_probability},
              {"pe_lesion_darkening", s.pe_lesion_darkening},
              {"pe_lesion_ct_delta", s.pe_lesion_ct_delta},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed}};
}

PhantomSpec spec_from_json(const json& j) {
  PhantomSpec s;
  s.image_size = j.value("image_size", s.image_size);
  s.n_slices = j.value("n_slices", s.n_slices);
  s.vessel_tree_depth = j.value("vessel_tree_depth", s.vessel_tree_depth);
  s.vessel_brightening_delta = j.value("vessel_brightening_delta", s.vessel_brightening_delta);
  s.pe_lesion_probability = j.value("pe_lesion_probability", s.pe_lesion_probability);
  s.pe_lesion_darkening = j.value("pe_lesion_darkening", s.pe_lesion_darkening);
  s.pe_lesion_ct_delta = j.value("pe_lesion_ct_delta", s.pe_lesion_ct_delta);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  return s;
}

json DatasetManifest::to_json() const {
  json studies_json = json::array();
  for (const StudyEntry& e : studies) {
    studies_json.push_back({{"id", e.id},
                            {"seed", e.seed},
                            {"has_pe", e.has_pe},
                            {"pe_slices", e.pe_slices},
                            {"ct", e.ct_dir},
                            {"ctpa", e.ctpa_dir},
                            {"vessel_masks", e.vessel_masks},
                            {"pe_masks", e.pe_masks}});
  }
  return json{{"format", "ct2ctpa-phantom-dataset"},
              {"version", 1},
              {"spec", spec_to_json(spec)},
              {"n_studies", studies.size()},
              {"studies", studies_json}};
}

DatasetManifest generate_dataset(const PhantomSpec& spec, int n_studies, const fs::path& out_dir) {
  spec.validate();
  if (n_studies < 0) throw ConfigError("phantom: n_studies must be >= 0");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory (" + ec.message() + ")", out_dir.string());

  DatasetManifest manifest;
  manifest.spec = spec;
  manifest.studies.resize(n_studies);
  std::exception_ptr failure;
  std::mutex failure_mu;
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < n_studies; ++k) {
    try {
      char id[32];
      std::snprintf(id, sizeof(id), "study_%04d", k);
      const PhantomStudy st = generate_study(spec, static_cast<std::uint64_t>(k));
      const fs::path dir = out_dir / id;
      ingest::write_series(st.ct, dir / "ct");
      ingest::write_series(st.ctpa, dir / "ctpa");
      fs::create_directories(dir / "masks");
      StudyEntry e;
      e.id = id;
      e.seed = static_cast<std::uint64_t>(k);
      e.has_pe = st.has_pe;
      e.pe_slices = st.pe_slices;
      e.ct_dir = std::string(id) + "/ct";
      e.ctpa_dir = std::string(id) + "/ctpa";
      for (int s = 0; s < st.ct.slices; ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "vessel_%04d.png", s);
        ingest::write_mask_png(dir / "masks" / name, st.vessel_mask.slice(s), st.ct.rows, st.ct.cols);
        e.vessel_masks.push_back(std::string(id) + "/masks/" + name);
        std::snprintf(name, sizeof(name), "pe_%04d.png", s);
        ingest::write_mask_png(dir / "masks" / name, st.pe_mask.slice(s), st.ct.rows, st.ct.cols);
        e.pe_masks.push_back(std::string(id) + "/masks/" + name);
      }
      manifest.studies[k] = std::move(e);
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  io::write_text(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

}  // namespace ct2ctpa::phantom
