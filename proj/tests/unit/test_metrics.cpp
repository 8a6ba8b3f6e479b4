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

#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "ct2ctpa/error.hpp"
#include "ct2ctpa/ingest.hpp"
#include "ct2ctpa/metrics.hpp"
#include "ct2ctpa/phantom.hpp"
#include "ct2ctpa/rng.hpp"
#include "tempdir.hpp"

using namespace ct2ctpa;
using namespace ct2ctpa::metrics;

namespace {

Gray8 constant(int side, std::uint8_t v) {
  Gray8 g;
  g.rows = g.cols = side;
  g.pixels.assign(static_cast<std::size_t>(side) * side, v);
  return g;
}

Gray8 random_image(int side, Rng& rng) {
  Gray8 g = constant(side, 0);
  for (auto& p : g.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return g;
}

// Windowed phantom CT slices as 8-bit images.
std::vector<Gray8> phantom_slices(int count, int side = 64) {
  phantom::PhantomSpec spec;
  spec.image_size = side;
  spec.n_slices = 10;
  std::vector<Gray8> out;
  for (std::uint64_t study = 0; static_cast<int>(out.size()) < count; ++study) {
    const auto st = phantom::generate_study(spec, study);
    for (int s = 0; s < st.ct.slices && static_cast<int>(out.size()) < count; ++s) {
      ingest::NormalizedImage img;
      img.rows = img.cols = side;
      for (auto hu : st.ct.slice(s)) img.pixels.push_back(ingest::hu_window_value(hu, {}));
      out.push_back(ingest::to_gray8(img));
    }
  }
  return out;
}

// Explicit per-window SSIM with the three-factor form.
double brute_force_ssim(const Gray8& x, const Gray8& y, const SsimConstants& k) {
  const auto w = gaussian_window(k.window, k.sigma);
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + k.window <= x.rows; ++r) {
    for (int c = 0; c + k.window <= x.cols; ++c) {
      std::vector<double> px, py, pw;
      for (int i = 0; i < k.window; ++i) {
        for (int j = 0; j < k.window; ++j) {
          px.push_back(x.at(r + i, c + j));
          py.push_back(y.at(r + i, c + j));
          pw.push_back(w[i * k.window + j]);
        }
      }
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < px.size(); ++i) {
        mx += pw[i] * px[i];
        my += pw[i] * py[i];
      }
      double vx = 0, vy = 0, cxy = 0;
      for (std::size_t i = 0; i < px.size(); ++i) {
        vx += pw[i] * (px[i] - mx) * (px[i] - mx);
        vy += pw[i] * (py[i] - my) * (py[i] - my);
        cxy += pw[i] * (px[i] - mx) * (py[i] - my);
      }
      const double sx = std::sqrt(vx), sy = std::sqrt(vy);
      const double l = (2 * mx * my + k.c1) / (mx * mx + my * my + k.c1);
      const double cc = (2 * sx * sy + k.c2) / (vx + vy + k.c2);
      const double s = (cxy + k.c3) / (sx * sy + k.c3);
      total += std::pow(l, k.alpha) * std::pow(cc, k.beta) * std::pow(s, k.gamma);
      ++count;
    }
  }
  return total / count;
}

Gray8 shifted_scaled(const Gray8& ref, double dx, double dy, double scale) {
  // candidate(q) = ref(c + (q - c - t) / s), the inverse of the alignment map.
  Gray8 out = ref;
  const double cy = (ref.rows - 1) / 2.0, cx = (ref.cols - 1) / 2.0;
  for (int r = 0; r < ref.rows; ++r) {
    for (int c = 0; c < ref.cols; ++c) {
      const double y = std::clamp(cy + (r - cy - dy) / scale, 0.0, ref.rows - 1.0);
      const double x = std::clamp(cx + (c - cx - dx) / scale, 0.0, ref.cols - 1.0);
      const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
      const int y1 = std::min(y0 + 1, ref.rows - 1), x1 = std::min(x0 + 1, ref.cols - 1);
      const double fy = y - y0, fx = x - x0;
      const double v = (1 - fy) * ((1 - fx) * ref.at(y0, x0) + fx * ref.at(y0, x1)) +
                       fy * ((1 - fx) * ref.at(y1, x0) + fx * ref.at(y1, x1));
      out.pixels[static_cast<std::size_t>(r) * ref.cols + c] = static_cast<std::uint8_t>(std::lround(v));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mse, psnr, mae hand-evaluated values") {
  const Gray8 z = constant(8, 0), f = constant(8, 255);
  const Gray8 a = constant(8, 100), b = constant(8, 116);
  CHECK(mse(a, a) == 0.0);
  CHECK(mse(z, f) == 65025.0);
  CHECK(mse(a, b) == 256.0);
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(z, f) == doctest::Approx(0.0));
  CHECK(psnr(a, b) == doctest::Approx(24.0484).epsilon(1e-3 / 24.0484));
  CHECK(mae(a, a) == 0.0);
  CHECK(mae(z, f) == 255.0);
  Gray8 half = a;
  for (std::size_t i = 0; i < half.pixels.size() / 2; ++i) half.pixels[i] += 10;
  CHECK(mae(a, half) == 5.0);
  CHECK(format_value(psnr(a, a), 2) == "inf");
  CHECK_THROWS_AS(mse(a, constant(4, 0)), ShapeError);

  double prev = kInfinity;
  for (int d = 1; d < 120; ++d) {
    const double p = psnr(a, constant(8, static_cast<std::uint8_t>(100 + d)));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim closed forms") {
  const auto k = SsimConstants::defaults();
  Rng rng(1);
  const Gray8 x = random_image(32, rng);
  CHECK(ssim(x, x) == 1.0);
  const double c1 = k.c1;
  const double expected = (2.0 * 100 * 200 + c1) / (100.0 * 100 + 200.0 * 200 + c1);
  CHECK(expected == doctest::Approx(40006.5025 / 50006.5025));
  CHECK(ssim(constant(16, 100), constant(16, 200)) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(constant(8, 1), constant(8, 1)), ShapeError);
}

TEST_CASE("ssim matches the brute-force window oracle") {
  Rng rng(42);
  SsimConstants odd = SsimConstants::defaults();
  odd.c3 = odd.c2 / 3.0;  // forces the general three-factor path
  SsimConstants small = SsimConstants::defaults();
  small.window = 7;
  for (int t = 0; t < 20; ++t) {
    const Gray8 x = random_image(16, rng);
    Gray8 y = x;
    for (auto& p : y.pixels) p = static_cast<std::uint8_t>(std::clamp<int>(p + int(rng.uniform_int(81)) - 40, 0, 255));
    if (t % 4 == 0) y = random_image(16, rng);
    for (const auto& k : {SsimConstants::defaults(), odd, small}) {
      CHECK(std::fabs(ssim(x, y, k) - brute_force_ssim(x, y, k)) < 1e-10);
      CHECK(std::fabs(ssim(x, y, k) - ssim(y, x, k)) < 1e-12);
    }
  }
}

TEST_CASE("fid on synthetic features") {
  Rng rng(7);
  const int d = 16, n = 10000;
  Eigen::MatrixXd a(n, d), b(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      a(i, j) = rng.normal();
      b(i, j) = 0.5 + rng.normal();
    }
  }
  const FeatureStats sa = feature_stats(a), sb = feature_stats(b);
  CHECK(fid(sa, sa) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(fid(sa, sa) < 1e-6);
  const double v = fid(sa, sb);
  CHECK(std::fabs(v - 4.0) <= 0.05 * 4.0);
  CHECK(std::fabs(fid(sa, sb) - fid(sb, sa)) < 1e-8);

  FeatureStats bad = sa;
  bad.sigma(0, 0) = -1.0;
  CHECK_THROWS_AS(fid(bad, sb), NumericError);
  FeatureStats small = feature_stats(a.leftCols(4));
  CHECK_THROWS_AS(fid(small, sb), ShapeError);
  CHECK_THROWS_AS(feature_stats(a.topRows(1)), ConfigError);
}

TEST_CASE("feature statistics from the extractor") {
  const auto ex = load_extractor("builtin");
  auto imgs = phantom_slices(6);
  const Eigen::MatrixXd e = embed(imgs, *ex);
  const FeatureStats st = compute_feature_stats(imgs, *ex);
  for (Eigen::Index j = 0; j < e.cols(); ++j) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < e.rows(); ++i) m += e(i, j);
    CHECK(std::fabs(st.mu[j] - m / e.rows()) < 1e-10);
  }
  std::vector<Gray8> perm(imgs.rbegin(), imgs.rend());
  const FeatureStats sp = compute_feature_stats(perm, *ex);
  CHECK((st.mu - sp.mu).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((st.sigma - sp.sigma).cwiseAbs().maxCoeff() < 1e-10);
  const FeatureStats dup = compute_feature_stats({imgs[0], imgs[0], imgs[0]}, *ex);
  CHECK(dup.sigma.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(compute_feature_stats({imgs[0]}, *ex), ConfigError);
}

TEST_CASE("lpips identity, symmetry and noise monotonicity") {
  const auto ex = load_extractor("builtin");
  const auto imgs = phantom_slices(50);
  Rng rng(3);
  CHECK(lpips(imgs[0], imgs[0], *ex) < 1e-6);
  for (int i = 0; i < 5; ++i) {
    const Gray8& a = imgs[i];
    const Gray8& b = imgs[i + 20];
    CHECK(std::fabs(lpips(a, b, *ex) - lpips(b, a, *ex)) < 1e-12);
  }
  double prev = 0.0;
  for (double sigma : {0.05, 0.1, 0.2}) {
    double total = 0.0;
    for (const Gray8& img : imgs) {
      Gray8 noisy = img;
      for (auto& p : noisy.pixels) {
        const double v = ingest::from_u8(p) + rng.normal(0.0, sigma);
        p = ingest::to_u8(static_cast<float>(v));
      }
      total += lpips(img, noisy, *ex);
    }
    const double mean = total / imgs.size();
    CHECK(mean >= prev);
    prev = mean;
  }
  CHECK(lpips(imgs[0], imgs[1], *ex, LpipsVariant::squared_l2) ==
        doctest::Approx(2.0 * lpips(imgs[0], imgs[1], *ex)));
}

TEST_CASE("extractor resolution through the cache") {
  TempDir cache;
  setenv("CT2CTPA_CACHE", cache.path().c_str(), 1);
  CHECK_THROWS_WITH_AS(load_extractor("vgg-lite"), doctest::Contains("CT2CTPA_CACHE"), DependencyError);
  const auto builtin = load_extractor("builtin");
  models::save_checkpoint(*builtin, cache / "vgg-lite");
  const auto loaded = load_extractor("vgg-lite");
  CHECK(loaded->fingerprint() == builtin->fingerprint());
  unsetenv("CT2CTPA_CACHE");
}

TEST_CASE("alignment recovers known transforms") {
  const auto imgs = phantom_slices(3, 64);
  const Gray8& ref = imgs[1];
  const Alignment id = align_for_metrics(ref, ref);
  CHECK(id.transform.is_identity());
  CHECK(id.aligned.pixels == ref.pixels);

  const Alignment sh = align_for_metrics(shifted_scaled(ref, 3, -2, 1.0), ref);
  CHECK(std::fabs(sh.transform.dx - 3) <= 0.5);
  CHECK(std::fabs(sh.transform.dy + 2) <= 0.5);
  CHECK(sh.ncc_aligned >= sh.ncc_identity);

  const Alignment sc = align_for_metrics(shifted_scaled(ref, 0, 0, 1.05), ref);
  CHECK(std::fabs(sc.transform.scale - 1.05) <= 0.0105);

  const Alignment deg = align_for_metrics(ref, constant(64, 9));
  CHECK(deg.degenerate_reference);
  CHECK(deg.transform.is_identity());
}

TEST_CASE("evaluate_run self-comparison and aggregates") {
  TempDir a, b;
  const auto imgs = phantom_slices(4);
  Rng rng(9);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const std::string name = "s" + std::to_string(i) + ".png";
    io::write_png(a / name, imgs[i]);
    Gray8 noisy = imgs[i];
    for (auto& p : noisy.pixels) p = static_cast<std::uint8_t>(std::clamp<int>(p + int(rng.uniform_int(21)) - 10, 0, 255));
    io::write_png(b / name, noisy);
  }
  const MetricsReport self = evaluate_run(a.path(), a.path(), {});
  CHECK(std::isinf(self.aggregate.psnr));
  CHECK(self.aggregate.mae == 0.0);
  CHECK(self.aggregate.ssim == 1.0);
  CHECK(self.aggregate.lpips < 1e-6);
  REQUIRE(self.aggregate.fid);
  CHECK(*self.aggregate.fid < 1e-6);

  const MetricsReport r = evaluate_run(b.path(), a.path(), {});
  double sum = 0.0;
  for (const auto& p : r.pairs) sum += p.mae;
  CHECK(std::fabs(r.aggregate.mae - sum / r.pairs.size()) < 1e-9);
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  CHECK(back.to_csv() == r.to_csv());
  CHECK(self.to_csv().find("mean,inf,1.000000,0.000000") != std::string::npos);

  io::write_png(a / "extra.png", imgs[0]);
  CHECK_THROWS_WITH_AS(evaluate_run(b.path(), a.path(), {}), doctest::Contains("extra.png"), IoError);
}

TEST_CASE("table renderer reproduces the Table 1 column") {
  const auto spec = table_preset("table1");
  REQUIRE(spec);
  const std::string t = render_table(*spec, {{11.24, 0.324, 102.13, 0.439, 223.68}});
  CHECK(t ==
        "Table1. Comparison of the generated results\n"
        "\tSimulated CTPA\n"
        "PSNR\t11.24\n"
        "SSIM\t0.324\n"
        "MAE\t102.13\n"
        "LPIPS\t0.439\n"
        "FID\t223.68\n");
  const auto t4 = table_preset("table4");
  REQUIRE(t4);
  const std::string r4 = render_table(*t4, {{11.23, 0.304, 96.38, 0.428, std::nullopt},
                                            {11.25, 0.276, 97.31, 0.459, std::nullopt}});
  CHECK(r4.find("Target CTPA\t3-layers\t4-layers\n") != std::string::npos);
  CHECK(r4.find("SSIM\t0.304\t0.276\n") != std::string::npos);
  CHECK_THROWS_AS(render_table(*t4, {{}}), ConfigError);
}
