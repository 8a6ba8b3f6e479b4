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

// In-memory phantom datasets for the training tests.

#include <cstdio>
#include <string>
#include <vector>

#include "ct2ctpa/ingest.hpp"
#include "ct2ctpa/phantom.hpp"

namespace ct2ctpa::testing {

struct ToyOptions {
  int studies = 4;
  int slices = 4;
  int size = 32;
  std::uint64_t seed = 0;
  bool paired = false;
  int test_studies = 1;  // the last ones
  double pe_probability = 0.5;
  double noise_sigma = 10.0;
};

inline ingest::SliceRecord toy_record(const HuVolume& v, const phantom::PhantomStudy& st, int s,
                                      const std::string& study, const std::string& split) {
  ingest::SliceRecord r;
  const ingest::HuWindow w;
  r.image.rows = v.rows;
  r.image.cols = v.cols;
  r.image.source_series = v.series_id;
  r.image.slice_index = s;
  for (std::int16_t hu : v.slice(s)) r.image.pixels.push_back(ingest::hu_window_value(hu, w));
  r.study_id = study;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_s%03d", s);
  r.name = study + buf;
  r.split = split;
  const auto vm = st.vessel_mask.slice(s);
  const auto pm = st.pe_mask.slice(s);
  r.vessel_mask.assign(vm.begin(), vm.end());
  r.pe_mask.assign(pm.begin(), pm.end());
  bool any = false;
  for (auto b : pm) any = any || b;
  r.has_pe = any;
  return r;
}

inline ingest::Dataset toy_dataset(const ToyOptions& o) {
  phantom::PhantomSpec spec;
  spec.image_size = o.size;
  spec.n_slices = o.slices;
  spec.seed = o.seed;
  spec.pe_lesion_probability = o.pe_probability;
  spec.noise_sigma = o.noise_sigma;
  std::vector<ingest::SliceRecord> ct, ctpa;
  for (int k = 0; k < o.studies; ++k) {
    const auto st = phantom::generate_study(spec, static_cast<std::uint64_t>(k));
    char id[16];
    std::snprintf(id, sizeof(id), "t%03d", k);
    const std::string split = k >= o.studies - o.test_studies ? "test" : "train";
    for (int s = 0; s < o.slices; ++s) {
      ct.push_back(toy_record(st.ct, st, s, id, split));
      ctpa.push_back(toy_record(st.ctpa, st, s, id, split));
    }
  }
  ingest::DatasetOptions opt;
  opt.mode = o.paired ? ingest::PairingMode::paired : ingest::PairingMode::unpaired;
  opt.image_size = o.size;
  opt.seed = o.seed;
  return ingest::Dataset(opt, std::move(ct), std::move(ctpa));
}

}  // namespace ct2ctpa::testing
