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
#include <set>

#include "ct2ctpa/error.hpp"
#include "ct2ctpa/image_io.hpp"
#include "ct2ctpa/metrics.hpp"
#include "ct2ctpa/training.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"
#include "toy_data.hpp"

using namespace ct2ctpa;
using namespace ct2ctpa::training;
using ct2ctpa::testing::ToyOptions;
using ct2ctpa::testing::toy_dataset;

namespace {

TrainConfig tiny(Mode mode) {
  TrainConfig c;
  c.mode = mode;
  c.generator.backbone = models::Backbone::unet;
  c.generator.unet_depth = 2;
  c.generator.base_channels = 4;
  c.discriminator.base_channels = 4;
  c.pixel_discriminator.base_channels = 4;
  c.epochs = 2;
  c.n_samples = 1;
  c.seed = 11;
  return c;
}

ingest::Dataset tiny_data(bool paired = false) {
  ToyOptions o;
  o.studies = 3;
  o.slices = 2;
  o.size = 32;
  o.paired = paired;
  o.pe_probability = 0.7;
  return toy_dataset(o);
}

// Random frozen classifier saved to `dir`.
void write_classifier(const std::filesystem::path& dir, std::uint64_t seed = 4) {
  models::ClassifierConfig cc;
  cc.depth = 2;
  cc.base_channels = 4;
  cc.input_size = 32;
  models::Classifier clf(cc, seed);
  clf.set_frozen(true);
  models::save_checkpoint(clf, dir);
}

Tensor filled(Shape s, float v) { return Tensor(s, v); }

}  // namespace

TEST_CASE("adversarial loss examples") {
  const Shape s{2, 1, 3, 3};
  CHECK(ag::item(adversarial_loss(AdversarialKind::mse, ag::constant(filled(s, 1.0f)), true)) == 0.0f);
  for (bool real : {true, false}) {
    CHECK(ag::item(adversarial_loss(AdversarialKind::bce, ag::constant(filled(s, 0.0f)), real)) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
  }
  // mse(l, 1) + mse(l, 0) = mean((l-1)^2 + l^2), smallest at l = 0.5
  Rng rng(3);
  const Tensor l = testing::random_tensor(s, rng);
  double expect = 0.0;
  for (float v : l.span()) expect += (v - 1.0) * (v - 1.0) + v * v;
  expect /= static_cast<double>(l.numel());
  const double got = ag::item(adversarial_loss(AdversarialKind::mse, ag::constant(l), true)) +
                     ag::item(adversarial_loss(AdversarialKind::mse, ag::constant(l), false));
  CHECK(got == doctest::Approx(expect).epsilon(1e-6));
  double best = 1e9, arg = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const float v = static_cast<float>(k) / 100.0f;
    const double sum = ag::item(adversarial_loss(AdversarialKind::mse, ag::constant(filled(s, v)), true)) +
                       ag::item(adversarial_loss(AdversarialKind::mse, ag::constant(filled(s, v)), false));
    if (sum < best) best = sum, arg = v;
  }
  CHECK(arg == doctest::Approx(0.5));

  Tensor bad = filled(s, 0.0f);
  bad.data()[4] = std::nanf("");
  CHECK_THROWS_AS(adversarial_loss(AdversarialKind::mse, ag::constant(bad), true), NumericError);
  CHECK_THROWS_AS(adversarial_loss(AdversarialKind::bce, ag::constant(bad), false), NumericError);
}

TEST_CASE("cycle loss examples") {
  Rng rng(5);
  Tensor a = testing::random_tensor({1, 1, 12, 12}, rng, 0.4);
  for (CycleKind k : {CycleKind::l1, CycleKind::ssim}) {
    CHECK(ag::item(cycle_loss(k, ag::constant(a), ag::constant(a))) == doctest::Approx(0.0).epsilon(1e-7));
  }
  Tensor b = a;
  for (float& v : b.span()) v += 0.25f;
  CHECK(ag::item(cycle_loss(CycleKind::l1, ag::constant(b), ag::constant(a))) ==
        doctest::Approx(0.25).epsilon(1e-6));
  CHECK(ag::item(cycle_loss(CycleKind::ssim, ag::constant(b), ag::constant(a))) > 0.0f);
  CHECK_THROWS_AS(cycle_loss(CycleKind::l1, ag::constant(a), ag::constant(Tensor({1, 1, 12, 10}))),
                  ShapeError);
}

TEST_CASE("ssim cycle loss equals one minus the metric SSIM at training constants") {
  Rng rng(7);
  metrics::SsimConstants k = metrics::SsimConstants::defaults(2.0);
  k.window = 7;
  k.sigma = 1.5;
  for (int t = 0; t < 5; ++t) {
    const Tensor x = testing::random_tensor({1, 1, 16, 16}, rng, 0.5);
    const Tensor y = testing::random_tensor({1, 1, 16, 16}, rng, 0.5);
    const std::vector<double> xd(x.span().begin(), x.span().end());
    const std::vector<double> yd(y.span().begin(), y.span().end());
    const double oracle = 1.0 - metrics::ssim(xd, yd, 16, 16, k);
    CHECK(ag::item(cycle_loss(CycleKind::ssim, ag::constant(x), ag::constant(y))) ==
          doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("ssim cycle loss gradient matches central differences") {
  Rng rng(9);
  metrics::SsimConstants k = metrics::SsimConstants::defaults(2.0);
  k.window = 7;
  const Tensor x = testing::random_tensor({1, 1, 8, 8}, rng, 0.5);
  const Tensor y = testing::random_tensor({1, 1, 8, 8}, rng, 0.5);
  const std::vector<double> yd(y.span().begin(), y.span().end());

  ag::Var xv = ag::parameter(x);
  ag::backward(cycle_loss(CycleKind::ssim, xv, ag::constant(y)));
  // Oracle in double precision on the metric implementation.
  const double h = 1e-5;
  double max_fd = 0.0;
  std::vector<double> fd(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::vector<double> p(x.span().begin(), x.span().end()), m = p;
    p[i] += h;
    m[i] -= h;
    fd[i] = -(metrics::ssim(p, yd, 8, 8, k) - metrics::ssim(m, yd, 8, 8, k)) / (2 * h);
    max_fd = std::max(max_fd, std::fabs(fd[i]));
  }
  REQUIRE(max_fd > 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CAPTURE(i);
    CHECK(std::fabs(xv->grad.data()[i] - fd[i]) <= 1e-4 * max_fd);
  }
}

TEST_CASE("Adam takes a first step of size lr along the gradient sign") {
  ag::Var w = ag::parameter(Tensor({1, 1, 1, 3}, std::vector<float>{1.0f, -2.0f, 0.5f}));
  Adam opt({w}, 0.01, 0.5, 0.999);
  const Tensor before = w->value;
  ag::backward(ag::mean(ag::scale(w, 3.0f)));  // gradient +1 everywhere
  opt.step();
  for (int i = 0; i < 3; ++i) CHECK(w->value.data()[i] == doctest::Approx(before.data()[i] - 0.01).epsilon(1e-5));
  // Minimises a quadratic.
  ag::Var q = ag::parameter(Tensor({1, 1, 1, 1}, std::vector<float>{3.0f}));
  Adam o2({q}, 0.05, 0.9, 0.999);
  for (int t = 0; t < 2000; ++t) {
    o2.zero_grad();
    ag::backward(ag::mse_to_constant(q, 1.0f));
    o2.step();
  }
  CHECK(q->value.data()[0] == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("replay buffer only returns fakes it has been shown") {
  ReplayBuffer pool(5, 42);
  std::set<float> shown;
  for (int step = 0; step < 60; ++step) {
    Tensor fake({2, 1, 2, 2});
    for (int n = 0; n < 2; ++n) {
      const float id = static_cast<float>(step * 2 + n + 1);
      for (int i = 0; i < 4; ++i) fake.data()[n * 4 + i] = id;
      shown.insert(id);
    }
    const Tensor out = pool.query(fake);
    for (int n = 0; n < 2; ++n) {
      const float v = out.data()[n * 4];
      CHECK(shown.count(v) == 1);  // never a real image (negative ids) or unseen item
      for (int i = 1; i < 4; ++i) CHECK(out.data()[n * 4 + i] == v);
    }
  }
  CHECK(pool.size() == 5);
  ReplayBuffer off(0, 1);
  const Tensor t({1, 1, 2, 2}, 0.3f);
  CHECK(off.query(t).vec() == t.vec());
  CHECK(off.size() == 0);
}

TEST_CASE("loss log csv and epoch means") {
  LossLog log;
  log.columns = {"a", "b"};
  log.rows.push_back({1, 0, {1.0, std::nan("")}});
  log.rows.push_back({1, 1, {3.0, 2.0}});
  log.rows.push_back({2, 2, {5.0, 4.0}});
  CHECK(log.epoch_mean("a", 1) == 2.0);
  CHECK(log.epoch_mean("b", 1) == 2.0);
  CHECK(std::isnan(log.epoch_mean("a", 3)));
  CHECK(log.to_csv() == "epoch,step,a,b\n1,0,1,\n1,1,3,2\n2,2,5,4\n");
  CHECK_THROWS_AS(log.column("zz"), ConfigError);
}

TEST_CASE("train config flat keys round-trip and validate") {
  TrainConfig c = tiny(Mode::pe_cyclegan);
  c.loss.lambda_classifier = 0.3;
  c.loss.supervision_target = SupervisionTarget::rec_ct;
  c.classifier = "clf";
  TrainConfig d;
  d.apply_flat(c.to_flat());
  CHECK(d.to_flat() == c.to_flat());
  CHECK(d.hash() == c.hash());
  std::set<std::string> keys;
  const auto flat = c.to_flat();
  for (auto it = flat.begin(); it != flat.end(); ++it) keys.insert(it.key());
  const auto listed = TrainConfig::flat_keys();
  CHECK(keys == std::set<std::string>(listed.begin(), listed.end()));
  d.loss.lambda_classifier = 1.0;
  CHECK(d.hash() != c.hash());

  CHECK_THROWS_WITH_AS(d.apply_flat({{"loss.lamda_cls", 0.1}}), doctest::Contains("loss.lamda_cls"), ConfigError);
  CHECK_THROWS_WITH_AS(d.apply_flat({{"epochs", "ten"}}), doctest::Contains("epochs"), ConfigError);
  CHECK(parse_mode("pe-cyclegan") == Mode::pe_cyclegan);
  CHECK_THROWS_AS(parse_mode("gan"), ConfigError);

  TrainConfig pe = tiny(Mode::pe_cyclegan);
  pe.loss.supervision_target = SupervisionTarget::rec_ct;
  CHECK_THROWS_WITH_AS(pe.validate(), doctest::Contains("classifier"), ConfigError);
  pe.classifier = "x";
  pe.loss.supervision_target = SupervisionTarget::none;
  CHECK_THROWS_AS(pe.validate(), ConfigError);
  TrainConfig lam = tiny(Mode::cyclegan);
  lam.loss.lambda_classifier = 1.5;
  CHECK_THROWS_AS(lam.validate(), ConfigError);
}

TEST_CASE("cyclegan run writes a consistent, deterministic run directory") {
  TempDir t1, t2;
  const auto data = tiny_data();
  const TrainConfig cfg = tiny(Mode::cyclegan);
  int image_events = 0;
  TrainHooks hooks;
  hooks.on_images = [&](const StepImages& im) {
    // all four roles exist at every step
    CHECK((im.fake_ctpa && im.rec_ct && im.fake_ct && im.rec_ctpa));
    CHECK(im.supervised == nullptr);
    ++image_events;
  };
  const RunArtifacts a = train(cfg, data, t1.path() / "run", hooks);
  const RunArtifacts b = train(cfg, data, t2.path() / "run");

  // 2 train studies x 2 slices, batch 1, 2 epochs
  REQUIRE(a.log.rows.size() == 8);
  CHECK(image_events == 8);
  for (std::size_t i = 0; i < a.log.rows.size(); ++i) {
    CHECK(a.log.rows[i].step == static_cast<long>(i));
    const auto& v = a.log.rows[i].values;
    double sum = 0.0;
    for (const char* c : {"g_adv_ctpa", "g_adv_ct", "g_cycle_ct", "g_cycle_ctpa", "g_identity", "g_cls"}) {
      const double x = v[a.log.column(c)];
      CHECK(std::isfinite(x));
      sum += x;
    }
    const double total = v[a.log.column("g_total")];
    CHECK(std::fabs(total - sum) <= 1e-6 * std::max(1.0, std::fabs(total)));
    CHECK(std::isnan(v[a.log.column("cls_raw")]));
  }
  const auto run = t1.path() / "run";
  for (const char* f : {"config.json", "losses.csv", "manifest.json", "timing.json"}) {
    CHECK(std::filesystem::exists(run / f));
  }
  for (const char* role : {"g_ct2ctpa", "g_ctpa2ct", "d_ctpa", "d_ct"}) {
    CHECK(std::filesystem::exists(run / "checkpoints/epoch_2" / role / "manifest.json"));
  }
  CHECK(a.manifest["config_hash"] == cfg.hash());
  CHECK(a.manifest["final_generator"] == "checkpoints/epoch_2/g_ct2ctpa");
  // sample grid: CT | Fake_CTPA | Rec_CT | real CTPA
  const auto grid = io::read_png(run / "samples/epoch_2/t002_s000.png");
  CHECK(grid.rows == 32);
  CHECK(grid.cols == 4 * 32 + 3 * 2);
  CHECK(std::filesystem::exists(run / "samples/epoch_2/t002_s000_ctpa.png"));

  CHECK(io::read_text(run / "losses.csv") == io::read_text(t2.path() / "run/losses.csv"));
  CHECK(io::read_text(run / "manifest.json") == io::read_text(t2.path() / "run/manifest.json"));
  CHECK(io::read_text(run / "checkpoints/epoch_2/g_ct2ctpa/params.bin") ==
        io::read_text(t2.path() / "run/checkpoints/epoch_2/g_ct2ctpa/params.bin"));

  TempDir t3;
  TrainConfig other = cfg;
  other.seed = 12;
  const RunArtifacts c = train(other, data, t3.path() / "run");
  CHECK(c.log.to_csv() != a.log.to_csv());
}

TEST_CASE("pe-cyclegan with zero weight reproduces the cyclegan log") {
  TempDir tmp;
  write_classifier(tmp.path() / "clf");
  const auto data = tiny_data();
  const TrainConfig plain = tiny(Mode::cyclegan);
  TrainConfig pe = plain;
  pe.mode = Mode::pe_cyclegan;
  pe.loss.lambda_classifier = 0.0;
  pe.loss.supervision_target = SupervisionTarget::rec_ct;
  pe.classifier = (tmp.path() / "clf").string();
  const RunArtifacts a = train(plain, data, tmp.path() / "a");
  const RunArtifacts b = train(pe, data, tmp.path() / "b");
  CHECK(a.log.to_csv() == b.log.to_csv());
  CHECK(io::read_text(tmp.path() / "a/checkpoints/epoch_2/g_ct2ctpa/params.bin") ==
        io::read_text(tmp.path() / "b/checkpoints/epoch_2/g_ct2ctpa/params.bin"));
}

TEST_CASE("classifier stays frozen and consumes the configured image") {
  TempDir tmp;
  write_classifier(tmp.path() / "clf");
  const auto fp0 = models::load_classifier(tmp.path() / "clf")->fingerprint();
  const auto data = tiny_data();
  for (SupervisionTarget target : {SupervisionTarget::rec_ct, SupervisionTarget::fake_ct}) {
    TrainConfig cfg = tiny(Mode::pe_cyclegan);
    cfg.epochs = 1;
    cfg.loss.lambda_classifier = 0.3;
    cfg.loss.supervision_target = target;
    cfg.classifier = (tmp.path() / "clf").string();
    int steps = 0;
    TrainHooks hooks;
    hooks.on_classifier_fingerprint = [&](std::uint64_t fp) {
      CHECK(fp == fp0);
      ++steps;
    };
    hooks.on_images = [&](const StepImages& im) {
      const auto& expect = target == SupervisionTarget::rec_ct ? im.rec_ct : im.fake_ct;
      CHECK(im.supervised.get() == expect.get());
      CHECK(im.supervised_role == to_string(target));
    };
    const auto run = tmp.path() / to_string(target);
    const RunArtifacts art = train(cfg, data, run, hooks);
    CHECK(steps == 4);
    CHECK(art.manifest["classifier"]["fingerprint_constant"] == true);
    CHECK(art.manifest["classifier"]["supervised_role"] == to_string(target));
    for (const auto& r : art.log.rows) {
      const double raw = r.values[art.log.column("cls_raw")];
      CHECK(std::isfinite(raw));
      CHECK(r.values[art.log.column("g_cls")] == doctest::Approx(0.3 * raw).epsilon(1e-6));
    }
  }
  CHECK(models::load_classifier(tmp.path() / "clf")->fingerprint() == fp0);
}

TEST_CASE("classifier supervision loss contract") {
  models::ClassifierConfig cc;
  cc.depth = 1;
  cc.base_channels = 4;
  cc.input_size = 16;
  models::Classifier clf(cc, 2);
  Rng rng(1);
  ag::Var img = ag::parameter(testing::random_tensor({2, 1, 16, 16}, rng, 0.5));
  CHECK_THROWS_WITH_AS(classifier_supervision_loss(clf, img, {1, 0}), doctest::Contains("frozen"), ConfigError);
  clf.set_frozen(true);
  CHECK_THROWS_AS(classifier_supervision_loss(clf, img, {1}), ConfigError);
  CHECK_THROWS_AS(classifier_supervision_loss(clf, img, {1, -1}), ConfigError);

  const auto fp = clf.fingerprint();
  ag::backward(classifier_supervision_loss(clf, img, {1, 0}));
  CHECK(!img->grad.empty());
  for (const auto& p : clf.parameters()) CHECK(p.var->grad.empty());
  CHECK(clf.fingerprint() == fp);

  // A head biased hard towards PE gives ~zero loss on PE labels.
  for (const auto& p : clf.parameters()) {
    if (p.name == "head.bias") p.var->value.data()[1] = 60.0f;
  }
  CHECK(ag::item(classifier_supervision_loss(clf, ag::constant(img->value), {1, 1})) < 1e-6f);
}

TEST_CASE("missing labels are rejected when the classifier is used") {
  TempDir tmp;
  write_classifier(tmp.path() / "clf");
  auto data = tiny_data();
  std::vector<ingest::SliceRecord> ct = data.ct_slices();
  for (auto& r : ct) r.has_pe.reset();
  const ingest::Dataset unlabeled(data.options(), ct, data.ctpa_slices());
  TrainConfig cfg = tiny(Mode::pe_cyclegan);
  cfg.loss.lambda_classifier = 0.3;
  cfg.loss.supervision_target = SupervisionTarget::rec_ct;
  cfg.classifier = (tmp.path() / "clf").string();
  CHECK_THROWS_WITH_AS(train(cfg, unlabeled, tmp.path() / "run"), doctest::Contains("PE label"), ConfigError);
}

TEST_CASE("pix2pix needs pairs and writes a loadable generator") {
  TempDir tmp;
  const TrainConfig cfg = tiny(Mode::pix2pix);
  CHECK_THROWS_WITH_AS(train(cfg, tiny_data(false), tmp.path() / "u"), doctest::Contains("paired"), ConfigError);
  const auto data = tiny_data(true);
  const RunArtifacts a = train(cfg, data, tmp.path() / "a");
  const RunArtifacts b = train(cfg, data, tmp.path() / "b");
  CHECK(a.log.to_csv() == b.log.to_csv());
  for (const auto& r : a.log.rows) {
    CHECK(std::isfinite(r.values[a.log.column("g_adv_patch")]));
    CHECK(std::isfinite(r.values[a.log.column("g_adv_pixel")]));
    const double sum = r.values[1] + r.values[2] + r.values[3];
    CHECK(std::fabs(r.values[0] - sum) <= 1e-6 * std::max(1.0, sum));
  }
  const auto g = models::load_generator(resolve_generator(tmp.path() / "a"));
  CHECK(g->kind() == "generator");
  CHECK(std::filesystem::exists(tmp.path() / "a/checkpoints/epoch_2/d_pixel/manifest.json"));
  CHECK(io::read_png(tmp.path() / "a/samples/epoch_2/t002_s000.png").cols == 3 * 32 + 2 * 2);
}

TEST_CASE("checkpoint round trip and inference contract") {
  TempDir tmp;
  models::GeneratorConfig gc;
  gc.backbone = models::Backbone::unet;
  gc.unet_depth = 2;
  gc.base_channels = 4;
  models::Generator g(gc, 21);
  Rng rng(2);
  Tensor x = testing::random_tensor({1, 1, 32, 32}, rng, 0.5);
  const Tensor before = generate(g, x);
  models::save_checkpoint(g, tmp.path() / "g");
  const auto loaded = models::load_generator(resolve_generator(tmp.path() / "g"));
  const Tensor after = generate(*loaded, x);
  CHECK(before.vec() == after.vec());
  CHECK(generate(*loaded, x).vec() == after.vec());
  for (float v : after.span()) CHECK((v >= -1.0f && v <= 1.0f));
  CHECK_THROWS_AS(generate(g, Tensor({1, 1, 30, 30})), ShapeError);
  CHECK_THROWS_AS(generate(g, Tensor({1, 2, 32, 32})), ShapeError);
  CHECK_THROWS_AS(resolve_generator(tmp.path() / "nothing"), IoError);

  const auto data = tiny_data();
  const auto n = generate_dir(g, data.split("test").ct_slices(), tmp.path() / "out");
  CHECK(n == 2);
  CHECK(std::filesystem::exists(tmp.path() / "out/png/t002_s001.png"));
  CHECK(std::filesystem::exists(tmp.path() / "out/arrays/t002_s001.f32"));
  const auto arr = io::read_f32(tmp.path() / "out/arrays/t002_s000.f32");
  CHECK(arr == generate(g, data.split("test").ct_slices()[0].image.to_tensor()).to_vector());
}

TEST_CASE("classifier pretraining separates phantom lesions") {
  TempDir tmp;
  ToyOptions o;
  o.studies = 50;
  o.slices = 4;
  o.size = 64;
  o.test_studies = 10;
  const auto data = toy_dataset(o);
  ClassifierTrainConfig cfg;
  const ClassifierResult res = pretrain_classifier(cfg, data, tmp.path() / "clf");
  MESSAGE("held-out accuracy " << res.val_accuracy << ", balanced " << res.val_balanced_accuracy);
  CHECK(res.n_val == 40);
  CHECK(res.val_accuracy >= 0.9);
  CHECK(res.val_balanced_accuracy >= 0.9);

  // reload reproduces the validation numbers
  const auto clf = models::load_classifier(tmp.path() / "clf");
  CHECK(clf->frozen());
  const ClassifierEval ev = evaluate_classifier(*clf, data.split("test").ct_slices());
  CHECK(ev.accuracy == res.val_accuracy);
  CHECK(ev.balanced_accuracy == res.val_balanced_accuracy);
  const auto man = nlohmann::json::parse(io::read_text(tmp.path() / "clf/manifest.json"));
  CHECK(man["extra"]["val_accuracy"].get<double>() == res.val_accuracy);
}

TEST_CASE("label-shuffled pretraining stays at chance") {
  TempDir tmp;
  ToyOptions o;
  o.studies = 90;
  o.slices = 4;
  o.size = 64;
  o.test_studies = 50;
  const auto data = toy_dataset(o);
  double mean = 0.0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ClassifierTrainConfig cfg;
    cfg.epochs = 6;
    cfg.seed = seed;
    cfg.shuffle_labels = true;
    const auto res = pretrain_classifier(cfg, data, tmp.path() / ("clf" + std::to_string(seed)));
    MESSAGE("seed " << seed << " balanced accuracy " << res.val_balanced_accuracy);
    mean += res.val_balanced_accuracy / 3.0;
  }
  CHECK(mean == doctest::Approx(0.5).epsilon(0.2));  // 0.5 +- 0.1
}

TEST_CASE("classifier pretraining rejects a single-class dataset") {
  TempDir tmp;
  ToyOptions o;
  o.studies = 3;
  o.slices = 2;
  o.pe_probability = 0.0;
  CHECK_THROWS_WITH_AS(pretrain_classifier({}, toy_dataset(o), tmp.path() / "c"),
                       doctest::Contains("both classes"), ConfigError);
}

TEST_CASE("supervised-role evaluation runs the generator pair") {
  models::GeneratorConfig gc;
  gc.backbone = models::Backbone::unet;
  gc.unet_depth = 2;
  gc.base_channels = 4;
  models::Generator a(gc, 1), b(gc, 2);
  models::ClassifierConfig cc;
  cc.base_channels = 4;
  cc.input_size = 32;
  models::Classifier clf(cc, 3);
  const auto data = tiny_data();
  const auto& slices = data.ct_slices();
  const auto rec = evaluate_supervised_role(a, b, clf, slices, SupervisionTarget::rec_ct);
  // oracle: the same classifier on explicitly reconstructed images
  double loss = 0.0;
  for (const auto& r : slices) {
    const double p = clf.probability(b.infer(a.infer(r.image.to_tensor())))[0];
    loss -= std::log(*r.has_pe ? p : 1.0 - p);
  }
  CHECK(rec.loss == doctest::Approx(loss / slices.size()).epsilon(1e-9));
  CHECK(rec.n == slices.size());
  CHECK_THROWS_AS(evaluate_supervised_role(a, b, clf, slices, SupervisionTarget::none), ConfigError);
}
