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

#include "ct2ctpa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ct2ctpa/error.hpp"
#include "ct2ctpa/ingest.hpp"

namespace ct2ctpa::metrics {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_same(const Gray8& a, const Gray8& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError("image shapes differ: " + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                     std::to_string(b.cols));
  }
  if (a.pixels.size() != static_cast<std::size_t>(a.rows) * a.cols ||
      b.pixels.size() != a.pixels.size()) {
    throw ShapeError("image buffer does not match its shape");
  }
}

std::vector<double> to_double(const Gray8& g) { return {g.pixels.begin(), g.pixels.end()}; }

}  // namespace

double mse(const Gray8& reference, const Gray8& candidate) {
  require_same(reference, candidate);
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = double(reference.pixels[i]) - double(candidate.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(reference.pixels.size());
}

double psnr(const Gray8& reference, const Gray8& candidate, double max_value) {
  const double m = mse(reference, candidate);
  if (m == 0.0) return kInfinity;
  return 10.0 * std::log10(max_value * max_value / m);
}

double mae(const Gray8& reference, const Gray8& candidate) {
  require_same(reference, candidate);
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    acc += std::fabs(double(reference.pixels[i]) - double(candidate.pixels[i]));
  }
  return acc / static_cast<double>(reference.pixels.size());
}

std::string format_value(double v, int decimals) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// ---------------------------------------------------------------------------
// SSIM

SsimConstants SsimConstants::defaults(double L) {
  SsimConstants k;
  k.L = L;
  k.c1 = (0.01 * L) * (0.01 * L);
  k.c2 = (0.03 * L) * (0.03 * L);
  k.c3 = k.c2 / 2.0;
  return k;
}

void SsimConstants::validate() const {
  if (!(c1 > 0 && c2 > 0 && c3 > 0)) throw ConfigError("SSIM constants C1, C2, C3 must be > 0");
  if (window < 1 || window % 2 == 0) throw ConfigError("SSIM window must be a positive odd size");
  if (!(sigma > 0)) throw ConfigError("SSIM sigma must be > 0");
}

namespace {

std::vector<double> gaussian_1d(int window, double sigma) {
  std::vector<double> g(window);
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable filtering of a rows x cols image.
std::vector<double> filter_valid(const std::vector<double>& img, int rows, int cols,
                                 const std::vector<double>& g) {
  const int w = static_cast<int>(g.size());
  const int orows = rows - w + 1, ocols = cols - w + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows) * ocols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < ocols; ++c) {
      double acc = 0.0;
      for (int k = 0; k < w; ++k) acc += g[k] * img[static_cast<std::size_t>(r) * cols + c + k];
      tmp[static_cast<std::size_t>(r) * ocols + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(orows) * ocols);
  for (int r = 0; r < orows; ++r) {
    for (int c = 0; c < ocols; ++c) {
      double acc = 0.0;
      for (int k = 0; k < w; ++k) acc += g[k] * tmp[static_cast<std::size_t>(r + k) * ocols + c];
      out[static_cast<std::size_t>(r) * ocols + c] = acc;
    }
  }
  return out;
}

double signed_pow(double v, double e) {
  if (e == 1.0) return v;
  return std::copysign(std::pow(std::fabs(v), e), v);
}

}  // namespace

std::vector<double> gaussian_window(int window, double sigma) {
  const auto g = gaussian_1d(window, sigma);
  std::vector<double> w(static_cast<std::size_t>(window) * window);
  for (int i = 0; i < window; ++i) {
    for (int j = 0; j < window; ++j) w[static_cast<std::size_t>(i) * window + j] = g[i] * g[j];
  }
  return w;
}

double ssim(const std::vector<double>& x, const std::vector<double>& y, int rows, int cols,
            const SsimConstants& k) {
  k.validate();
  if (x.size() != y.size() || x.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("SSIM inputs must share one shape");
  }
  if (rows < k.window || cols < k.window) {
    throw ShapeError("image " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " is smaller than the " + std::to_string(k.window) + "x" +
                     std::to_string(k.window) + " SSIM window");
  }
  const auto g = gaussian_1d(k.window, k.sigma);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, rows, cols, g);
  const auto my = filter_valid(y, rows, cols, g);
  const auto exx = filter_valid(xx, rows, cols, g);
  const auto eyy = filter_valid(yy, rows, cols, g);
  const auto exy = filter_valid(xy, rows, cols, g);
  // With unit exponents and C3 = C2/2 the contrast and structure factors
  // collapse to one ratio; this keeps identical inputs at exactly 1.
  const bool two_factor = k.alpha == 1.0 && k.beta == 1.0 && k.gamma == 1.0 && k.c3 == k.c2 / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = std::max(exx[i] - mx[i] * mx[i], 0.0);
    const double vy = std::max(eyy[i] - my[i] * my[i], 0.0);
    const double cov = exy[i] - mx[i] * my[i];
    const double l = (2.0 * mx[i] * my[i] + k.c1) / (mx[i] * mx[i] + my[i] * my[i] + k.c1);
    if (two_factor) {
      total += l * (2.0 * cov + k.c2) / (vx + vy + k.c2);
      continue;
    }
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    const double c = (2.0 * sx * sy + k.c2) / (vx + vy + k.c2);
    const double s = (cov + k.c3) / (sx * sy + k.c3);
    total += signed_pow(l, k.alpha) * signed_pow(c, k.beta) * signed_pow(s, k.gamma);
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const Gray8& x, const Gray8& y, const SsimConstants& k) {
  require_same(x, y);
  return ssim(to_double(x), to_double(y), x.rows, x.cols, k);
}

// ---------------------------------------------------------------------------
// Features

std::unique_ptr<models::FeatureExtractor> load_extractor(const std::string& name) {
  if (name == "builtin") {
    return std::make_unique<models::FeatureExtractor>(models::ExtractorConfig{},
                                                      kBuiltinExtractorSeed);
  }
  std::vector<fs::path> tried{fs::path(name)};
  if (const char* cache = std::getenv("CT2CTPA_CACHE")) tried.push_back(fs::path(cache) / name);
  for (const auto& p : tried) {
    if (fs::exists(p / "manifest.json")) return models::load_extractor(p);
  }
  std::string where;
  for (const auto& p : tried) where += " " + p.string();
  throw DependencyError("feature extractor '" + name + "' not found (looked in:" + where +
                        "). Place an extractor checkpoint directory (manifest.json + params.bin) "
                        "under $CT2CTPA_CACHE/" + name +
                        ", or pass --extractor builtin for the pinned built-in network.");
}

namespace {

std::vector<double> bilinear_resize(const std::vector<double>& img, int rows, int cols, int side) {
  std::vector<double> out(static_cast<std::size_t>(side) * side);
  const double sr = static_cast<double>(rows) / side, sc = static_cast<double>(cols) / side;
  for (int r = 0; r < side; ++r) {
    const double y = std::clamp((r + 0.5) * sr - 0.5, 0.0, rows - 1.0);
    const int y0 = static_cast<int>(y), y1 = std::min(y0 + 1, rows - 1);
    const double fy = y - y0;
    for (int c = 0; c < side; ++c) {
      const double x = std::clamp((c + 0.5) * sc - 0.5, 0.0, cols - 1.0);
      const int x0 = static_cast<int>(x), x1 = std::min(x0 + 1, cols - 1);
      const double fx = x - x0;
      const auto at = [&](int rr, int cc) { return img[static_cast<std::size_t>(rr) * cols + cc]; };
      out[static_cast<std::size_t>(r) * side + c] =
          (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
          fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
    }
  }
  return out;
}

}  // namespace

Tensor extractor_input(const Gray8& image, int side) {
  ingest::FloatImage f;
  f.rows = image.rows;
  f.cols = image.cols;
  f.pixels.resize(image.pixels.size());
  for (std::size_t i = 0; i < f.pixels.size(); ++i) f.pixels[i] = ingest::from_u8(image.pixels[i]);
  if (f.rows == f.cols && f.rows >= side) {
    f = ingest::resize(f, side);
  } else {
    const auto r = bilinear_resize({f.pixels.begin(), f.pixels.end()}, f.rows, f.cols, side);
    f.rows = f.cols = side;
    f.pixels.assign(r.begin(), r.end());
  }
  return Tensor(Shape{1, 1, side, side}, std::move(f.pixels));
}

namespace {

double layer_distance(const Tensor& a, const Tensor& b, LpipsVariant variant) {
  const Shape s = a.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  double total = 0.0;
  for (std::size_t p = 0; p < plane; ++p) {
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (int c = 0; c < s.c; ++c) {
      const double va = a.data()[c * plane + p], vb = b.data()[c * plane + p];
      aa += va * va;
      bb += vb * vb;
      ab += va * vb;
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    constexpr double kEps = 1e-10;
    double cosine;
    if (na < kEps && nb < kEps) {
      cosine = 1.0;  // both silent: no difference at this location
    } else if (na < kEps || nb < kEps) {
      cosine = 0.0;
    } else {
      cosine = ab / (na * nb);
    }
    total += variant == LpipsVariant::cosine ? 1.0 - cosine : 2.0 - 2.0 * cosine;
  }
  return total / static_cast<double>(plane);
}

}  // namespace

double lpips(const Tensor& a, const Tensor& b, const models::FeatureExtractor& extractor,
             LpipsVariant variant) {
  require_same_shape(a.shape(), b.shape(), "lpips");
  const int side = extractor.config().input_size;
  if (a.shape() != Shape{1, 1, side, side}) {
    throw ShapeError("lpips expects (1, 1, " + std::to_string(side) + ", " + std::to_string(side) +
                     ") inputs, got " + a.shape().str());
  }
  const auto ta = extractor.taps(a);
  const auto tb = extractor.taps(b);
  double total = 0.0;
  for (std::size_t l = 0; l < ta.size(); ++l) total += layer_distance(ta[l], tb[l], variant);
  return std::max(0.0, total / static_cast<double>(ta.size()));
}

double lpips(const Gray8& a, const Gray8& b, const models::FeatureExtractor& extractor,
             LpipsVariant variant) {
  require_same(a, b);
  const int side = extractor.config().input_size;
  return lpips(extractor_input(a, side), extractor_input(b, side), extractor, variant);
}

FeatureStats feature_stats(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) {
    throw ConfigError("feature statistics need at least 2 images (got " + std::to_string(x.rows()) + ")");
  }
  FeatureStats st;
  st.n = static_cast<std::size_t>(x.rows());
  st.mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - st.mu.transpose();
  st.sigma = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  st.sigma = 0.5 * (st.sigma + st.sigma.transpose());
  return st;
}

Eigen::MatrixXd embed(const std::vector<Gray8>& images, const models::FeatureExtractor& extractor) {
  const int side = extractor.config().input_size;
  const int dim = extractor.config().channels.back();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), dim);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(images.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Tensor f = extractor.infer(extractor_input(images[i], side));
    for (int d = 0; d < dim; ++d) out(i, d) = f.at(0, d, 0, 0);
  }
  return out;
}

FeatureStats compute_feature_stats(const std::vector<Gray8>& images,
                                   const models::FeatureExtractor& extractor) {
  if (images.size() < 2) {
    throw ConfigError("feature statistics need at least 2 images (got " +
                      std::to_string(images.size()) + ")");
  }
  return feature_stats(embed(images, extractor));
}

namespace {

// Symmetric PSD square root; eigenvalues below -tol are an error.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for ") + what);
  Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-8 * scale) {
      throw NumericError(std::string(what) + " is not positive semidefinite (eigenvalue " +
                         std::to_string(ev[i]) + ")");
    }
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows()) {
    throw ShapeError("FID feature dimensions differ: " + std::to_string(a.mu.size()) + " vs " +
                     std::to_string(b.mu.size()));
  }
  const Eigen::MatrixXd root_a = psd_sqrt(a.sigma, "covariance A");
  psd_sqrt(b.sigma, "covariance B");
  Eigen::MatrixXd m = root_a * b.sigma * root_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  double tr_root = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    tr_root += std::sqrt(std::max(es.eigenvalues()[i], 0.0));
  }
  const double d = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_root;
  return std::max(d, 0.0);
}

// ---------------------------------------------------------------------------
// Alignment

double ncc(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> warp(const std::vector<double>& img, int rows, int cols,
                         const AlignmentTransform& t) {
  std::vector<double> out(img.size());
  const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
  for (int r = 0; r < rows; ++r) {
    const double y = std::clamp(cy + t.scale * (r - cy) + t.dy, 0.0, rows - 1.0);
    const int y0 = std::min(static_cast<int>(y), rows - 1), y1 = std::min(y0 + 1, rows - 1);
    const double fy = y - y0;
    for (int c = 0; c < cols; ++c) {
      const double x = std::clamp(cx + t.scale * (c - cx) + t.dx, 0.0, cols - 1.0);
      const int x0 = std::min(static_cast<int>(x), cols - 1), x1 = std::min(x0 + 1, cols - 1);
      const double fx = x - x0;
      const auto at = [&](int rr, int cc) { return img[static_cast<std::size_t>(rr) * cols + cc]; };
      out[static_cast<std::size_t>(r) * cols + c] =
          (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
          fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
    }
  }
  return out;
}

Alignment align_for_metrics(const Gray8& candidate, const Gray8& reference, const AlignOptions& o) {
  require_same(candidate, reference);
  const int rows = reference.rows, cols = reference.cols;
  const auto cand = to_double(candidate);
  const auto ref = to_double(reference);
  Alignment out;
  out.aligned = candidate;
  const bool constant_ref = std::all_of(reference.pixels.begin(), reference.pixels.end(),
                                        [&](std::uint8_t v) { return v == reference.pixels[0]; });
  if (constant_ref) {
    out.degenerate_reference = true;
    return out;
  }
  const auto score = [&](const AlignmentTransform& t) { return ncc(warp(cand, rows, cols, t), ref); };
  out.ncc_identity = ncc(cand, ref);

  // Coarse grid: integer shifts, scale steps of 0.02 (1.0 is on the grid).
  std::vector<AlignmentTransform> grid;
  const int max_shift = static_cast<int>(std::floor(o.max_shift));
  for (int k = -50; k <= 50; ++k) {
    const double s = 1.0 + 0.02 * k;
    if (s < o.min_scale - 1e-12 || s > o.max_scale + 1e-12) continue;
    for (int dy = -max_shift; dy <= max_shift; ++dy) {
      for (int dx = -max_shift; dx <= max_shift; ++dx) grid.push_back({double(dx), double(dy), s});
    }
  }
  std::vector<double> scores(grid.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) scores[i] = score(grid[i]);
  std::size_t best_i = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (scores[i] > scores[best_i]) best_i = i;
  }
  AlignmentTransform best = grid[best_i];
  double best_score = scores[best_i];

  // Local refinement with shrinking steps.
  double dt = 0.5, ds = 0.01;
  while (dt >= 0.06) {
    std::vector<AlignmentTransform> around;
    for (int a = -1; a <= 1; ++a) {
      for (int b = -1; b <= 1; ++b) {
        for (int c = -1; c <= 1; ++c) {
          if (a == 0 && b == 0 && c == 0) continue;
          AlignmentTransform t{best.dx + a * dt, best.dy + b * dt, best.scale + c * ds};
          if (std::fabs(t.dx) > o.max_shift || std::fabs(t.dy) > o.max_shift ||
              t.scale < o.min_scale || t.scale > o.max_scale) {
            continue;
          }
          around.push_back(t);
        }
      }
    }
    std::vector<double> s(around.size());
    const std::ptrdiff_t m = static_cast<std::ptrdiff_t>(around.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t i = 0; i < m; ++i) s[i] = score(around[i]);
    std::size_t arg = around.size();
    for (std::size_t i = 0; i < around.size(); ++i) {
      if (s[i] > best_score && (arg == around.size() || s[i] > s[arg])) arg = i;
    }
    if (arg < around.size()) {
      best = around[arg];
      best_score = s[arg];
    } else {
      dt /= 2.0;
      ds /= 2.0;
    }
  }

  if (best_score - out.ncc_identity > o.min_gain) {
    out.transform = best;
    out.ncc_aligned = best_score;
    const auto w = warp(cand, rows, cols, best);
    for (std::size_t i = 0; i < w.size(); ++i) {
      out.aligned.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(w[i]), 0L, 255L));
    }
  } else {
    out.ncc_aligned = out.ncc_identity;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

json number_or_sentinel(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double from_number_or_sentinel(const json& j) {
  if (j.is_string()) return j.get<std::string>() == "inf" ? kInfinity : -kInfinity;
  return j.get<double>();
}

}  // namespace

json MetricsReport::to_json() const {
  json rows = json::array();
  for (const auto& p : pairs) {
    rows.push_back({{"pair", p.name},
                    {"PSNR", number_or_sentinel(p.psnr)},
                    {"SSIM", p.ssim},
                    {"MAE", p.mae},
                    {"LPIPS", p.lpips},
                    {"alignment", {{"dx", p.transform.dx}, {"dy", p.transform.dy}, {"scale", p.transform.scale}}},
                    {"degenerate_reference", p.degenerate_reference}});
  }
  json agg = {{"PSNR", number_or_sentinel(aggregate.psnr)},
              {"SSIM", aggregate.ssim},
              {"MAE", aggregate.mae},
              {"LPIPS", aggregate.lpips}};
  agg["FID"] = aggregate.fid ? json(*aggregate.fid) : json(nullptr);
  return json{{"format", "ct2ctpa-metrics"},
              {"version", 1},
              {"aligned", aligned},
              {"pairs", rows},
              {"aggregate", agg},
              {"provenance", provenance}};
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport r;
  r.aligned = j.value("aligned", false);
  // a values-only report (no per-pair rows) is allowed
  for (const auto& row : j.value("pairs", json::array())) {
    PairMetrics p;
    p.name = row.at("pair");
    p.psnr = from_number_or_sentinel(row.at("PSNR"));
    p.ssim = row.at("SSIM");
    p.mae = row.at("MAE");
    p.lpips = row.at("LPIPS");
    if (row.contains("alignment")) {
      p.transform = {row["alignment"].at("dx"), row["alignment"].at("dy"), row["alignment"].at("scale")};
    }
    p.degenerate_reference = row.value("degenerate_reference", false);
    r.pairs.push_back(std::move(p));
  }
  const json& a = j.at("aggregate");
  r.aggregate.psnr = from_number_or_sentinel(a.at("PSNR"));
  r.aggregate.ssim = a.at("SSIM");
  r.aggregate.mae = a.at("MAE");
  r.aggregate.lpips = a.at("LPIPS");
  if (!a.at("FID").is_null()) r.aggregate.fid = a.at("FID").get<double>();
  r.provenance = j.value("provenance", json::object());
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "pair,PSNR,SSIM,MAE,LPIPS,FID\n";
  for (const auto& p : pairs) {
    os << p.name << ',' << format_value(p.psnr, 6) << ',' << format_value(p.ssim, 6) << ','
       << format_value(p.mae, 6) << ',' << format_value(p.lpips, 6) << ",\n";
  }
  os << "mean," << format_value(aggregate.psnr, 6) << ',' << format_value(aggregate.ssim, 6) << ','
     << format_value(aggregate.mae, 6) << ',' << format_value(aggregate.lpips, 6) << ','
     << (aggregate.fid ? format_value(*aggregate.fid, 6) : std::string()) << '\n';
  return os.str();
}

namespace {

std::map<std::string, fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("image directory not found", dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out[e.path().filename().string()] = e.path();
  }
  return out;
}

}  // namespace

MetricsReport evaluate_run(const fs::path& generated, const fs::path& reference,
                           const EvalConfig& config) {
  const auto gen = list_pngs(generated);
  const auto ref = list_pngs(reference);
  std::vector<std::string> only_gen, only_ref, names;
  for (const auto& [k, v] : gen) (ref.count(k) ? names : only_gen).push_back(k);
  for (const auto& [k, v] : ref) {
    if (!gen.count(k)) only_ref.push_back(k);
  }
  if (!only_gen.empty() || !only_ref.empty()) {
    std::string msg = "unmatched files:";
    if (!only_gen.empty()) {
      msg += " only in " + generated.string() + ":";
      for (const auto& s : only_gen) msg += " " + s;
    }
    if (!only_ref.empty()) {
      msg += (only_gen.empty() ? " only in " : "; only in ") + reference.string() + ":";
      for (const auto& s : only_ref) msg += " " + s;
    }
    throw IoError(msg, generated.string());
  }
  if (names.empty()) throw IoError("no PNG files to compare", generated.string());

  const auto extractor = load_extractor(config.extractor);
  MetricsReport report;
  report.aligned = config.align;
  report.pairs.resize(names.size());
  std::vector<Gray8> gen_imgs(names.size()), ref_imgs(names.size());
  std::exception_ptr failure;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(names.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const Gray8 r = io::read_png(ref.at(names[i]));
      Gray8 g = io::read_png(gen.at(names[i]));
      PairMetrics& p = report.pairs[i];
      p.name = names[i];
      if (config.align) {
        const Alignment a = align_for_metrics(g, r, config.align_options);
        g = a.aligned;
        p.transform = a.transform;
        p.degenerate_reference = a.degenerate_reference;
      }
      p.psnr = psnr(r, g);
      p.ssim = ssim(r, g, config.ssim);
      p.mae = mae(r, g);
      p.lpips = lpips(r, g, *extractor, config.lpips_variant);
      gen_imgs[i] = std::move(g);
      ref_imgs[i] = r;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  MetricValues& agg = report.aggregate;
  for (const auto& p : report.pairs) {
    agg.psnr += p.psnr;
    agg.ssim += p.ssim;
    agg.mae += p.mae;
    agg.lpips += p.lpips;
  }
  const double count = static_cast<double>(report.pairs.size());
  agg.psnr /= count;
  agg.ssim /= count;
  agg.mae /= count;
  agg.lpips /= count;
  if (names.size() >= 2) {
    agg.fid = fid(compute_feature_stats(gen_imgs, *extractor), compute_feature_stats(ref_imgs, *extractor));
  }
  report.provenance = {{"generated", generated.string()},
                       {"reference", reference.string()},
                       {"extractor", config.extractor},
                       {"extractor_fingerprint", models::hex64(extractor->fingerprint())},
                       {"lpips_variant", config.lpips_variant == LpipsVariant::cosine ? "cosine" : "squared_l2"},
                       {"ssim", {{"window", config.ssim.window}, {"sigma", config.ssim.sigma}, {"L", config.ssim.L}}},
                       {"align", config.align},
                       {"n_pairs", names.size()}};
  return report;
}

void write_report(const MetricsReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  io::write_text(out_dir / "metrics.csv", report.to_csv());
  io::write_text(out_dir / "metrics.json", report.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Tables

std::optional<TableSpec> table_preset(const std::string& name) {
  if (name == "table1") return TableSpec{"Table1. Comparison of the generated results", "", {"Simulated CTPA"}};
  if (name == "table2") {
    return TableSpec{"Table 2 Comparison of the output image with categorization network", "",
                     {"Classification model", "Without classification model"}};
  }
  if (name == "table3") {
    return TableSpec{"Table 3 Comparison of classification network and discriminator weights on the output image.",
                     "", {"Ratio = 1", "Ratio = 0.3", "Ratio = 0.1"}};
  }
  if (name == "table4") {
    return TableSpec{"Table 4 Comparison of different depths of the discriminators on the output images",
                     "Target CTPA", {"3-layers", "4-layers"}};
  }
  if (name == "table5") {
    return TableSpec{"Table 5 Comparison of loss function for output image", "",
                     {"BCE+L1", "BCE+SSIM", "MSE+SSIM"}};
  }
  if (name == "table6") {
    return TableSpec{"Table 6 Comparison of categorized network monitoring targets to output images",
                     "Target CTPA", {"On Rec_CT", "On Fake_CT"}};
  }
  return std::nullopt;
}

std::vector<std::string> table_preset_names() {
  return {"table1", "table2", "table3", "table4", "table5", "table6"};
}

namespace {

std::vector<std::pair<std::string, std::vector<std::string>>> metric_rows(
    const std::vector<MetricValues>& columns) {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows{
      {"PSNR", {}}, {"SSIM", {}}, {"MAE", {}}, {"LPIPS", {}}, {"FID", {}}};
  for (const auto& v : columns) {
    rows[0].second.push_back(format_value(v.psnr, 2));
    rows[1].second.push_back(format_value(v.ssim, 3));
    rows[2].second.push_back(format_value(v.mae, 2));
    rows[3].second.push_back(format_value(v.lpips, 3));
    rows[4].second.push_back(v.fid ? format_value(*v.fid, 2) : "-");
  }
  return rows;
}

void check_columns(const TableSpec& spec, const std::vector<MetricValues>& columns) {
  if (spec.columns.size() != columns.size()) {
    throw ConfigError("table '" + spec.title + "' has " + std::to_string(spec.columns.size()) +
                      " columns but " + std::to_string(columns.size()) + " runs were given");
  }
}

}  // namespace

std::string render_table(const TableSpec& spec, const std::vector<MetricValues>& columns) {
  check_columns(spec, columns);
  std::string out = spec.title + "\n" + spec.corner;
  for (const auto& c : spec.columns) out += "\t" + c;
  out += "\n";
  for (const auto& [name, cells] : metric_rows(columns)) {
    out += name;
    for (const auto& c : cells) out += "\t" + c;
    out += "\n";
  }
  return out;
}

std::string render_markdown(const TableSpec& spec, const std::vector<MetricValues>& columns) {
  check_columns(spec, columns);
  std::string out = "**" + spec.title + "**\n\n| " + spec.corner + " |";
  for (const auto& c : spec.columns) out += " " + c + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < spec.columns.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& [name, cells] : metric_rows(columns)) {
    out += "| " + name + " |";
    for (const auto& c : cells) out += " " + c + " |";
    out += "\n";
  }
  return out;
}

}  // namespace ct2ctpa::metrics
