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

// Image quality measures on 8-bit exports (PSNR, SSIM, MAE), perceptual
// distance and FID on extractor features, and the pre-metric alignment.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ct2ctpa/image_io.hpp"
#include "ct2ctpa/models.hpp"
#include "ct2ctpa/tensor.hpp"

namespace ct2ctpa::metrics {

using io::Gray8;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

double mse(const Gray8& reference, const Gray8& candidate);
// +infinity when the images are identical.
double psnr(const Gray8& reference, const Gray8& candidate, double max_value = 255.0);
double mae(const Gray8& reference, const Gray8& candidate);

// "inf" for the infinite sentinel, otherwise fixed with `decimals` digits.
std::string format_value(double v, int decimals);

struct SsimConstants {
  double L = 255.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  int window = 11;
  double sigma = 1.5;

  // C1=(0.01L)^2, C2=(0.03L)^2, C3=C2/2, 11x11 window, sigma 1.5.
  static SsimConstants defaults(double L = 255.0);
  void validate() const;
};

// Normalised Gaussian window, window x window, row-major.
std::vector<double> gaussian_window(int window, double sigma);

// Mean of the per-location l^a c^b s^g over all valid window positions.
double ssim(const Gray8& x, const Gray8& y, const SsimConstants& k = SsimConstants::defaults());
double ssim(const std::vector<double>& x, const std::vector<double>& y, int rows, int cols,
            const SsimConstants& k);

// ---------------------------------------------------------------------------
// Feature extractor

// Resolves an extractor: "builtin" builds the pinned random-feature network;
// anything else names a checkpoint directory, looked up as a path first and
// then below $CT2CTPA_CACHE. Missing artifacts raise DependencyError.
std::unique_ptr<models::FeatureExtractor> load_extractor(const std::string& name);

inline constexpr std::uint64_t kBuiltinExtractorSeed = 0x1F1D5EEDULL;

// 8-bit image -> (1, 1, s, s) tensor in [-1, 1], bilinearly resampled to the
// extractor input side.
Tensor extractor_input(const Gray8& image, int side);

enum class LpipsVariant { cosine, squared_l2 };

// Per-layer, per-location distance between unit-normalised feature vectors,
// averaged over locations and then over layers.
double lpips(const Tensor& a, const Tensor& b, const models::FeatureExtractor& extractor,
             LpipsVariant variant = LpipsVariant::cosine);
double lpips(const Gray8& a, const Gray8& b, const models::FeatureExtractor& extractor,
             LpipsVariant variant = LpipsVariant::cosine);

struct FeatureStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t n = 0;
};

// Rows are samples. Requires at least two rows.
FeatureStats feature_stats(const Eigen::MatrixXd& embeddings);
Eigen::MatrixXd embed(const std::vector<Gray8>& images, const models::FeatureExtractor& extractor);
FeatureStats compute_feature_stats(const std::vector<Gray8>& images,
                                   const models::FeatureExtractor& extractor);

// Frechet distance between Gaussians fitted to two feature sets.
double fid(const FeatureStats& a, const FeatureStats& b);

// ---------------------------------------------------------------------------
// Alignment

// aligned(p) = candidate(c + scale * (p - c) + (dx, dy)), c the image centre.
struct AlignmentTransform {
  double dx = 0.0;
  double dy = 0.0;
  double scale = 1.0;

  bool is_identity() const { return dx == 0.0 && dy == 0.0 && scale == 1.0; }
};

struct AlignOptions {
  double max_shift = 8.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double min_gain = 1e-4;  // NCC improvement required to leave identity
};

struct Alignment {
  Gray8 aligned;
  AlignmentTransform transform;
  double ncc_identity = 0.0;
  double ncc_aligned = 0.0;
  bool degenerate_reference = false;  // constant reference; identity returned
};

double ncc(const std::vector<double>& a, const std::vector<double>& b);
// Bilinear resampling with edge clamping.
std::vector<double> warp(const std::vector<double>& image, int rows, int cols,
                         const AlignmentTransform& t);
Alignment align_for_metrics(const Gray8& candidate, const Gray8& reference,
                            const AlignOptions& options = {});

// ---------------------------------------------------------------------------
// Runs and reports

struct PairMetrics {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  double lpips = 0.0;
  AlignmentTransform transform;
  bool degenerate_reference = false;
};

// The five values of one table column.
struct MetricValues {
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  double lpips = 0.0;
  std::optional<double> fid;
};

struct MetricsReport {
  std::vector<PairMetrics> pairs;
  MetricValues aggregate;
  bool aligned = false;
  nlohmann::json provenance = nlohmann::json::object();

  nlohmann::json to_json() const;
  std::string to_csv() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

struct EvalConfig {
  bool align = false;
  AlignOptions align_options;
  std::string extractor = "builtin";
  LpipsVariant lpips_variant = LpipsVariant::cosine;
  SsimConstants ssim = SsimConstants::defaults();
};

// Compares identically named PNG files in two directories. Writes nothing.
MetricsReport evaluate_run(const std::filesystem::path& generated,
                           const std::filesystem::path& reference, const EvalConfig& config);
// metrics.csv + metrics.json
void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

// Table layout: metric rows, one column per run.
struct TableSpec {
  std::string title;
  std::string corner;  // top-left cell
  std::vector<std::string> columns;
};

std::optional<TableSpec> table_preset(const std::string& name);
std::vector<std::string> table_preset_names();

// Tab-separated rows: header, then PSNR, SSIM, MAE, LPIPS, FID.
std::string render_table(const TableSpec& spec, const std::vector<MetricValues>& columns);
std::string render_markdown(const TableSpec& spec, const std::vector<MetricValues>& columns);

}  // namespace ct2ctpa::metrics
