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


#include "ct2ctpa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "ct2ctpa/error.hpp"
#include "ct2ctpa/image_io.hpp"

namespace ct2ctpa::training {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed tags: every random stream of a run derives from cfg.seed.
enum SeedTag : std::uint64_t {
  kSeedGenA = 1,
  kSeedGenB = 2,
  kSeedDiscA = 3,
  kSeedDiscB = 4,
  kSeedPoolA = 5,
  kSeedPoolB = 6,
  kSeedClassifier = 7,
  kSeedLabelShuffle = 8,
  kSeedOrder = 100,
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void write_json(const fs::path& path, const json& j) {
  io::write_text(path, j.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------
// Enums

std::string to_string(Mode m) {
  switch (m) {
    case Mode::pix2pix: return "pix2pix";
    case Mode::cyclegan: return "cyclegan";
    case Mode::pe_cyclegan: return "pe_cyclegan";
  }
  return "?";
}
std::string to_string(AdversarialKind k) { return k == AdversarialKind::bce ? "bce" : "mse"; }
std::string to_string(CycleKind k) { return k == CycleKind::l1 ? "l1" : "ssim"; }
std::string to_string(SupervisionTarget t) {
  switch (t) {
    case SupervisionTarget::rec_ct: return "rec_ct";
    case SupervisionTarget::fake_ct: return "fake_ct";
    case SupervisionTarget::none: return "none";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  const std::string v = lower(s);
  if (v == "pix2pix") return Mode::pix2pix;
  if (v == "cyclegan") return Mode::cyclegan;
  if (v == "pe_cyclegan" || v == "pe-cyclegan") return Mode::pe_cyclegan;
  throw ConfigError("unknown mode '" + s + "' (pix2pix, cyclegan, pe-cyclegan)");
}
AdversarialKind parse_adversarial(const std::string& s) {
  const std::string v = lower(s);
  if (v == "bce") return AdversarialKind::bce;
  if (v == "mse") return AdversarialKind::mse;
  throw ConfigError("unknown adversarial loss '" + s + "' (bce, mse)");
}
CycleKind parse_cycle(const std::string& s) {
  const std::string v = lower(s);
  if (v == "l1") return CycleKind::l1;
  if (v == "ssim") return CycleKind::ssim;
  throw ConfigError("unknown cycle loss '" + s + "' (l1, ssim)");
}
SupervisionTarget parse_target(const std::string& s) {
  const std::string v = lower(s);
  if (v == "rec_ct" || v == "rec-ct") return SupervisionTarget::rec_ct;
  if (v == "fake_ct" || v == "fake-ct") return SupervisionTarget::fake_ct;
  if (v == "none") return SupervisionTarget::none;
  throw ConfigError("unknown supervision target '" + s + "' (rec_ct, fake_ct, none)");
}

// ---------------------------------------------------------------------------
// TrainConfig

TrainConfig::TrainConfig() {
  pixel_discriminator.kind = models::DiscriminatorKind::pixel;
  pixel_discriminator.n_layers = 0;
}

void TrainConfig::validate() const {
  generator.validate();
  discriminator.validate();
  if (discriminator.kind != models::DiscriminatorKind::patch) {
    throw ConfigError("discriminator must be a patch discriminator");
  }
  if (mode == Mode::pix2pix) pixel_discriminator.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("optim.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optim.beta1/beta2 must be in [0, 1)");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (checkpoint_interval < 0 || sample_interval < 0 || n_samples < 0) {
    throw ConfigError("checkpoint_interval, sample_interval and n_samples must be >= 0");
  }
  if (replay_buffer_size < 0) throw ConfigError("replay_buffer must be >= 0");
  if (!(loss.lambda_cycle >= 0.0)) throw ConfigError("loss.lambda_cycle must be >= 0");
  if (!(loss.lambda_identity >= 0.0)) throw ConfigError("loss.lambda_identity must be >= 0");
  if (!(loss.lambda_classifier >= 0.0 && loss.lambda_classifier <= 1.0)) {
    throw ConfigError("loss.lambda_cls must be in [0, 1]");
  }
  if (ssim.window < 3 || ssim.window % 2 == 0) throw ConfigError("ssim.window must be odd and >= 3");
  if (!(ssim.sigma > 0.0) || !(ssim.dynamic_range > 0.0)) {
    throw ConfigError("ssim.sigma and ssim.dynamic_range must be positive");
  }
  if (mode == Mode::pe_cyclegan) {
    if (classifier.empty()) {
      throw ConfigError("pe-cyclegan mode requires a pretrained classifier checkpoint (--classifier DIR)");
    }
    if (loss.supervision_target == SupervisionTarget::none) {
      throw ConfigError("pe-cyclegan mode needs loss.target rec_ct or fake_ct (got none)");
    }
  }
}

std::vector<std::string> TrainConfig::flat_keys() {
  return {"mode",
          "generator.backbone",
          "generator.blocks",
          "generator.unet_depth",
          "generator.base_channels",
          "discriminator.layers",
          "discriminator.base_channels",
          "pixel_discriminator.base_channels",
          "loss.adversarial",
          "loss.cycle",
          "loss.lambda_cycle",
          "loss.lambda_cls",
          "loss.target",
          "loss.lambda_identity",
          "ssim.window",
          "ssim.sigma",
          "ssim.dynamic_range",
          "epochs",
          "optim.lr",
          "optim.beta1",
          "optim.beta2",
          "batch_size",
          "seed",
          "checkpoint_interval",
          "sample_interval",
          "n_samples",
          "replay_buffer",
          "classifier"};
}

json TrainConfig::to_flat() const {
  // nlohmann orders object keys, so dump() is canonical.
  return {{"mode", to_string(mode)},
          {"generator.backbone", models::to_string(generator.backbone)},
          {"generator.blocks", generator.n_residual_blocks},
          {"generator.unet_depth", generator.unet_depth},
          {"generator.base_channels", generator.base_channels},
          {"discriminator.layers", discriminator.n_layers},
          {"discriminator.base_channels", discriminator.base_channels},
          {"pixel_discriminator.base_channels", pixel_discriminator.base_channels},
          {"loss.adversarial", to_string(loss.adversarial_kind)},
          {"loss.cycle", to_string(loss.cycle_kind)},
          {"loss.lambda_cycle", loss.lambda_cycle},
          {"loss.lambda_cls", loss.lambda_classifier},
          {"loss.target", to_string(loss.supervision_target)},
          {"loss.lambda_identity", loss.lambda_identity},
          {"ssim.window", ssim.window},
          {"ssim.sigma", ssim.sigma},
          {"ssim.dynamic_range", ssim.dynamic_range},
          {"epochs", epochs},
          {"optim.lr", lr},
          {"optim.beta1", beta1},
          {"optim.beta2", beta2},
          {"batch_size", batch_size},
          {"seed", seed},
          {"checkpoint_interval", checkpoint_interval},
          {"sample_interval", sample_interval},
          {"n_samples", n_samples},
          {"replay_buffer", replay_buffer_size},
          {"classifier", classifier}};
}

void TrainConfig::apply_flat(const json& flat) {
  if (!flat.is_object()) throw ConfigError("training config must be a JSON object");
  for (auto it = flat.begin(); it != flat.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "mode") mode = parse_mode(v.get<std::string>());
      else if (k == "generator.backbone") {
        const std::string b = lower(v.get<std::string>());
        if (b == "unet") generator.backbone = models::Backbone::unet;
        else if (b == "resnet") generator.backbone = models::Backbone::resnet;
        else throw ConfigError("generator.backbone must be unet or resnet (got '" + b + "')");
      } else if (k == "generator.blocks") generator.n_residual_blocks = v.get<int>();
      else if (k == "generator.unet_depth") generator.unet_depth = v.get<int>();
      else if (k == "generator.base_channels") generator.base_channels = v.get<int>();
      else if (k == "discriminator.layers") discriminator.n_layers = v.get<int>();
      else if (k == "discriminator.base_channels") discriminator.base_channels = v.get<int>();
      else if (k == "pixel_discriminator.base_channels") pixel_discriminator.base_channels = v.get<int>();
      else if (k == "loss.adversarial") loss.adversarial_kind = parse_adversarial(v.get<std::string>());
      else if (k == "loss.cycle") loss.cycle_kind = parse_cycle(v.get<std::string>());
      else if (k == "loss.lambda_cycle") loss.lambda_cycle = v.get<double>();
      else if (k == "loss.lambda_cls") loss.lambda_classifier = v.get<double>();
      else if (k == "loss.target") loss.supervision_target = parse_target(v.get<std::string>());
      else if (k == "loss.lambda_identity") loss.lambda_identity = v.get<double>();
      else if (k == "ssim.window") ssim.window = v.get<int>();
      else if (k == "ssim.sigma") ssim.sigma = v.get<double>();
      else if (k == "ssim.dynamic_range") ssim.dynamic_range = v.get<double>();
      else if (k == "epochs") epochs = v.get<int>();
      else if (k == "optim.lr") lr = v.get<double>();
      else if (k == "optim.beta1") beta1 = v.get<double>();
      else if (k == "optim.beta2") beta2 = v.get<double>();
      else if (k == "batch_size") batch_size = v.get<int>();
      else if (k == "seed") seed = v.get<std::uint64_t>();
      else if (k == "checkpoint_interval") checkpoint_interval = v.get<int>();
      else if (k == "sample_interval") sample_interval = v.get<int>();
      else if (k == "n_samples") n_samples = v.get<int>();
      else if (k == "replay_buffer") replay_buffer_size = v.get<int>();
      else if (k == "classifier") classifier = v.get<std::string>();
      else throw ConfigError("unknown training config key '" + k + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + k + "': wrong type (" + v.dump() + ")");
    }
  }
}

std::string TrainConfig::hash() const {
  const std::string s = to_flat().dump();
  return models::hex64(fnv1a(s.data(), s.size()));
}

// ---------------------------------------------------------------------------
// Losses

ag::Var adversarial_loss(AdversarialKind kind, const ag::Var& logits, bool target_is_real) {
  for (float v : logits->value.span()) {
    if (!std::isfinite(v)) throw NumericError("adversarial_loss: non-finite logits");
  }
  const float target = target_is_real ? 1.0f : 0.0f;
  if (kind == AdversarialKind::bce) return ag::bce_with_logits(logits, target);
  return ag::mse_to_constant(logits, target);
}

ag::Var cycle_loss(CycleKind kind, const ag::Var& reconstructed, const ag::Var& original,
                   const SsimLossConfig& ssim) {
  require_same_shape(reconstructed->shape(), original->shape(), "cycle_loss");
  if (kind == CycleKind::l1) return ag::l1_loss(reconstructed, original);
  const double c1 = std::pow(0.01 * ssim.dynamic_range, 2);
  const double c2 = std::pow(0.03 * ssim.dynamic_range, 2);
  const ag::Var s = ag::ssim(reconstructed, original, ssim.window, ssim.sigma, c1, c2);
  return ag::add(ag::constant(Tensor(s->shape(), 1.0f)), ag::scale(s, -1.0f));
}

ag::Var classifier_supervision_loss(const models::Classifier& classifier, const ag::Var& image,
                                    const std::vector<int>& labels) {
  if (!classifier.frozen()) {
    throw ConfigError("classifier supervision needs a frozen classifier");
  }
  if (labels.size() != static_cast<std::size_t>(image->shape().n)) {
    throw ConfigError("classifier supervision: " + std::to_string(labels.size()) +
                      " labels for a batch of " + std::to_string(image->shape().n));
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw ConfigError("classifier supervision: missing or invalid PE label");
  }
  return ag::softmax_cross_entropy(classifier.forward(image), labels);
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->grad = Tensor();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float step = static_cast<float>(lr_ * std::sqrt(c2) / c1);
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float eps = static_cast<float>(eps_ * std::sqrt(c2));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Node& p = *params_[i];
    if (p.grad.empty()) continue;
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const std::size_t n = p.value.numel();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      w[k] -= step * m[k] / (std::sqrt(v[k]) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// ReplayBuffer

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
  if (capacity < 0) throw ConfigError("replay buffer capacity must be >= 0");
}

Tensor ReplayBuffer::query(const Tensor& x) {
  if (capacity_ == 0) return x;
  const Shape s = x.shape();
  const Shape item{1, s.c, s.h, s.w};
  const std::size_t per = item.numel();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    Tensor cur(item, std::vector<float>(x.data() + n * per, x.data() + (n + 1) * per));
    const Tensor* pick = &cur;
    Tensor swapped;
    if (items_.size() < static_cast<std::size_t>(capacity_)) {
      items_.push_back(cur);
    } else if (rng_.uniform() < 0.5) {
      const std::size_t k = rng_.uniform_int(items_.size());
      swapped = std::move(items_[k]);
      items_[k] = cur;
      pick = &swapped;
    }
    std::copy(pick->data(), pick->data() + per, out.data() + n * per);
  }
  return out;
}

// ---------------------------------------------------------------------------
// LossLog

std::size_t LossLog::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("loss log has no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double LossLog::epoch_mean(const std::string& name, int epoch) const {
  const std::size_t c = column(name);
  double acc = 0.0;
  std::size_t n = 0;
  for (const Row& r : rows) {
    if (r.epoch != epoch || std::isnan(r.values[c])) continue;
    acc += r.values[c];
    ++n;
  }
  return n ? acc / static_cast<double>(n) : kNaN;
}

std::string LossLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,step";
  for (const auto& c : columns) os << ',' << c;
  os << '\n';
  char buf[32];
  for (const Row& r : rows) {
    os << r.epoch << ',' << r.step;
    for (double v : r.values) {
      os << ',';
      if (std::isnan(v)) continue;
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Run plumbing

namespace {

Tensor stack(const std::vector<ingest::SliceRecord>& recs, const std::vector<std::size_t>& order,
             std::size_t first, int count) {
  const auto& im0 = recs.front().image;
  Tensor t(Shape{count, 1, im0.rows, im0.cols});
  const std::size_t plane = static_cast<std::size_t>(im0.rows) * im0.cols;
  for (int b = 0; b < count; ++b) {
    const auto& im = recs[order[(first + b) % order.size()]].image;
    if (im.rows != im0.rows || im.cols != im0.cols) {
      throw ShapeError("dataset slices have mixed sizes");
    }
    std::copy(im.pixels.begin(), im.pixels.end(), t.data() + b * plane);
  }
  return t;
}

std::vector<int> labels_of(const std::vector<ingest::SliceRecord>& recs,
                           const std::vector<std::size_t>& order, std::size_t first, int count) {
  std::vector<int> out(count);
  for (int b = 0; b < count; ++b) {
    const auto& r = recs[order[(first + b) % order.size()]];
    if (!r.has_pe) throw ConfigError("slice '" + r.name + "' has no PE label");
    out[b] = *r.has_pe ? 1 : 0;
  }
  return out;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(p));
  return p;
}

io::Gray8 panel(const Tensor& t) {
  return ingest::to_gray8(ingest::NormalizedImage::from_tensor(t));
}

bool due(int epoch, int interval, int last) {
  return epoch == last || (interval > 0 && epoch % interval == 0);
}

const std::vector<ingest::SliceRecord>& sample_source(const ingest::Dataset& test,
                                                      const ingest::Dataset& train, bool ct) {
  const auto& t = ct ? test.ct_slices() : test.ctpa_slices();
  if (!t.empty()) return t;
  return ct ? train.ct_slices() : train.ctpa_slices();
}

const ingest::SliceRecord* find_by_name(const std::vector<ingest::SliceRecord>& recs,
                                        const std::string& name) {
  for (const auto& r : recs) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

// Shared bookkeeping for all three trainers.
class Run {
 public:
  Run(const TrainConfig& cfg, const fs::path& dir, std::vector<std::string> columns,
      const TrainHooks& hooks)
      : cfg_(cfg), hooks_(hooks), start_(std::chrono::steady_clock::now()) {
    art_.run_dir = dir;
    art_.log.columns = std::move(columns);
    fs::create_directories(dir);
    write_json(dir / "config.json", cfg.to_flat());
  }

  void log(int epoch, std::vector<double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isnan(values[i]) && !std::isfinite(values[i])) {
        throw NumericError("non-finite " + art_.log.columns[i] + " at step " + std::to_string(step_));
      }
    }
    LossLog::Row row{epoch, step_++, std::move(values)};
    art_.log.rows.push_back(std::move(row));
    if (hooks_.on_step) hooks_.on_step(art_.log.rows.back(), art_.log);
  }

  void end_epoch(int epoch, const std::vector<std::string>& summary) {
    io::write_text(art_.run_dir / "losses.csv", art_.log.to_csv());
    if (hooks_.quiet) return;
    std::cerr << "epoch " << epoch << "/" << cfg_.epochs;
    for (const auto& c : summary) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), " %s=%.4f", c.c_str(), art_.log.epoch_mean(c, epoch));
      std::cerr << buf;
    }
    std::cerr << "\n";
  }

  fs::path checkpoint(int epoch, const std::vector<std::pair<std::string, const models::Module*>>& nets) {
    const fs::path dir = art_.run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch));
    for (const auto& [role, m] : nets) {
      models::save_checkpoint(*m, dir / role,
                              {{"epoch", epoch}, {"role", role}, {"mode", to_string(cfg_.mode)},
                               {"run_config_hash", cfg_.hash()}});
    }
    art_.checkpoints.push_back(dir);
    return dir;
  }

  fs::path samples_dir(int epoch) const {
    return art_.run_dir / "samples" / ("epoch_" + std::to_string(epoch));
  }

  RunArtifacts finish(json extra) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json means = json::object();
    for (const auto& c : art_.log.columns) {
      json series = json::array();
      for (int e = 1; e <= cfg_.epochs; ++e) {
        const double m = art_.log.epoch_mean(c, e);
        series.push_back(std::isnan(m) ? json(nullptr) : json(m));
      }
      means[c] = series;
    }
    json ckpts = json::array();
    for (const auto& p : art_.checkpoints) ckpts.push_back(fs::relative(p, art_.run_dir).generic_string());
    json m = {{"format", "ct2ctpa-run"},
              {"version", 1},
              {"tool_version", CT2CTPA_VERSION},
              {"mode", to_string(cfg_.mode)},
              {"config", cfg_.to_flat()},
              {"config_hash", cfg_.hash()},
              {"seed", cfg_.seed},
              {"epochs", cfg_.epochs},
              {"steps", step_},
              {"checkpoints", ckpts},
              {"epoch_means", means}};
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    art_.manifest = m;
    io::write_text(art_.run_dir / "losses.csv", art_.log.to_csv());
    write_json(art_.run_dir / "manifest.json", m);
    // Wall time lives apart so the manifest stays byte-reproducible.
    write_json(art_.run_dir / "timing.json", {{"wall_seconds", wall}, {"steps", step_}});
    return std::move(art_);
  }

  long step() const { return step_; }

 private:
  const TrainConfig& cfg_;
  const TrainHooks& hooks_;
  RunArtifacts art_;
  long step_ = 0;
  std::chrono::steady_clock::time_point start_;
};

std::vector<ag::Var> concat_params(const models::Module& a, const models::Module& b) {
  std::vector<ag::Var> out = a.trainable();
  for (auto& v : b.trainable()) out.push_back(v);
  return out;
}

ag::Var half_sum(const ag::Var& a, const ag::Var& b) {
  return ag::scale(ag::sum_scalars({a, b}), 0.5f);
}

ingest::Dataset train_split(const ingest::Dataset& data) {
  ingest::Dataset train = data.split("train");
  if (train.ct_slices().empty()) throw ConfigError("dataset has no training CT slices");
  if (train.ctpa_slices().empty()) throw ConfigError("dataset has no training CTPA slices");
  return train;
}

RunArtifacts run_cycle(const TrainConfig& cfg, const ingest::Dataset& data, const fs::path& run_dir,
                       const TrainHooks& hooks) {
  cfg.validate();
  const bool pe = cfg.mode == Mode::pe_cyclegan;
  const ingest::Dataset train = train_split(data);
  const ingest::Dataset test = data.split("test");
  const auto& cts = train.ct_slices();
  const auto& ctpas = train.ctpa_slices();

  models::Generator ga(cfg.generator, mix_seed(cfg.seed, kSeedGenA));  // CT -> CTPA
  models::Generator gb(cfg.generator, mix_seed(cfg.seed, kSeedGenB));  // CTPA -> CT
  const int side = cts.front().image.rows;
  if (side % ga.size_multiple() != 0) {
    throw ShapeError("image size " + std::to_string(side) + " is not a multiple of " +
                     std::to_string(ga.size_multiple()) + " required by the generator");
  }
  models::DiscriminatorConfig dcfg = cfg.discriminator;
  dcfg.in_channels = 1;
  models::Discriminator da(dcfg, mix_seed(cfg.seed, kSeedDiscA));  // judges CTPA
  models::Discriminator db(dcfg, mix_seed(cfg.seed, kSeedDiscB));  // judges CT
  ReplayBuffer pool_a(cfg.replay_buffer_size, mix_seed(cfg.seed, kSeedPoolA));
  ReplayBuffer pool_b(cfg.replay_buffer_size, mix_seed(cfg.seed, kSeedPoolB));

  std::unique_ptr<models::Classifier> clf;
  std::uint64_t clf_fp = 0;
  if (pe) {
    clf = models::load_classifier(cfg.classifier);
    clf->set_frozen(true);
    clf_fp = clf->fingerprint();
  }
  const bool supervise = pe && cfg.loss.lambda_classifier > 0.0;
  const bool on_rec = cfg.loss.supervision_target == SupervisionTarget::rec_ct;

  Adam g_opt(concat_params(ga, gb), cfg.lr, cfg.beta1, cfg.beta2);
  Adam d_opt(concat_params(da, db), cfg.lr, cfg.beta1, cfg.beta2);

  Run run(cfg, run_dir,
          {"g_total", "g_adv_ctpa", "g_adv_ct", "g_cycle_ct", "g_cycle_ctpa", "g_identity", "g_cls",
           "cycle_raw", "cls_raw", "d_ctpa", "d_ct"},
          hooks);

  const int B = cfg.batch_size;
  const std::size_t n_steps = (std::max(cts.size(), ctpas.size()) + B - 1) / B;
  const bool paired = train.mode() == ingest::PairingMode::paired;
  const float lc = static_cast<float>(cfg.loss.lambda_cycle);
  const float li = static_cast<float>(cfg.loss.lambda_identity);
  const float lk = static_cast<float>(cfg.loss.lambda_classifier);
  fs::path last_ckpt;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t es = mix_seed(cfg.seed, kSeedOrder + 2 * static_cast<std::uint64_t>(epoch));
    const auto ct_order = permutation(cts.size(), es);
    const auto ctpa_order = paired ? ct_order : permutation(ctpas.size(), mix_seed(es, 1));

    for (std::size_t s = 0; s < n_steps; ++s) {
      const ag::Var ct = ag::constant(stack(cts, ct_order, s * B, B));
      const ag::Var ctpa = ag::constant(stack(ctpas, ctpa_order, s * B, B));

      // Generator update; discriminators only pass gradients through.
      da.set_frozen(true);
      db.set_frozen(true);
      const ag::Var fake_ctpa = ga.forward(ct);
      const ag::Var rec_ct = gb.forward(fake_ctpa);
      const ag::Var fake_ct = gb.forward(ctpa);
      const ag::Var rec_ctpa = ga.forward(fake_ct);
      const ag::Var adv_a = adversarial_loss(cfg.loss.adversarial_kind, da.forward(fake_ctpa), true);
      const ag::Var adv_b = adversarial_loss(cfg.loss.adversarial_kind, db.forward(fake_ct), true);
      const ag::Var cyc_a = cycle_loss(cfg.loss.cycle_kind, rec_ct, ct, cfg.ssim);
      const ag::Var cyc_b = cycle_loss(cfg.loss.cycle_kind, rec_ctpa, ctpa, cfg.ssim);
      const ag::Var w_cyc_a = ag::scale(cyc_a, lc);
      const ag::Var w_cyc_b = ag::scale(cyc_b, lc);
      std::vector<ag::Var> terms{adv_a, adv_b, w_cyc_a, w_cyc_b};

      double identity = 0.0;
      if (li > 0.0f) {
        const ag::Var id = ag::scale(
            ag::sum_scalars({ag::l1_loss(ga.forward(ctpa), ctpa), ag::l1_loss(gb.forward(ct), ct)}), li);
        terms.push_back(id);
        identity = ag::item(id);
      }

      StepImages images{ct, ctpa, fake_ctpa, rec_ct, fake_ct, rec_ctpa, nullptr, ""};
      double cls_w = 0.0, cls_raw = kNaN;
      if (supervise) {
        const ag::Var& target = on_rec ? rec_ct : fake_ct;
        const auto labels = on_rec ? labels_of(cts, ct_order, s * B, B)
                                   : labels_of(ctpas, ctpa_order, s * B, B);
        const ag::Var cls = classifier_supervision_loss(*clf, target, labels);
        const ag::Var w_cls = ag::scale(cls, lk);
        terms.push_back(w_cls);
        cls_w = ag::item(w_cls);
        cls_raw = ag::item(cls);
        images.supervised = target;
        images.supervised_role = on_rec ? "rec_ct" : "fake_ct";
      }
      const ag::Var total = ag::sum_scalars(terms);
      g_opt.zero_grad();
      ag::backward(total);
      g_opt.step();
      da.set_frozen(false);
      db.set_frozen(false);
      if (hooks.on_images) hooks.on_images(images);

      // Discriminator update on real vs replayed fakes.
      const ag::Var fa = ag::constant(pool_a.query(fake_ctpa->value));
      const ag::Var fb = ag::constant(pool_b.query(fake_ct->value));
      const ag::Var d_a = half_sum(adversarial_loss(cfg.loss.adversarial_kind, da.forward(ctpa), true),
                                   adversarial_loss(cfg.loss.adversarial_kind, da.forward(fa), false));
      const ag::Var d_b = half_sum(adversarial_loss(cfg.loss.adversarial_kind, db.forward(ct), true),
                                   adversarial_loss(cfg.loss.adversarial_kind, db.forward(fb), false));
      d_opt.zero_grad();
      ag::backward(d_a);
      ag::backward(d_b);
      d_opt.step();

      if (clf && hooks.on_classifier_fingerprint) hooks.on_classifier_fingerprint(clf->fingerprint());
      const double ca = ag::item(cyc_a), cb = ag::item(cyc_b);
      run.log(epoch, {ag::item(total), ag::item(adv_a), ag::item(adv_b), ag::item(w_cyc_a),
                      ag::item(w_cyc_b), identity, cls_w, ca + cb, cls_raw, ag::item(d_a),
                      ag::item(d_b)});
    }
    run.end_epoch(epoch, {"g_total", "cycle_raw", "d_ctpa", "d_ct"});

    if (due(epoch, cfg.checkpoint_interval, cfg.epochs)) {
      last_ckpt = run.checkpoint(epoch, {{"g_ct2ctpa", &ga}, {"g_ctpa2ct", &gb}, {"d_ctpa", &da}, {"d_ct", &db}});
    }
    if (due(epoch, cfg.sample_interval, cfg.epochs) && cfg.n_samples > 0) {
      const fs::path dir = run.samples_dir(epoch);
      fs::create_directories(dir);
      const auto& src_ct = sample_source(test, train, true);
      const auto& src_ctpa = sample_source(test, train, false);
      for (std::size_t i = 0; i < std::min<std::size_t>(cfg.n_samples, src_ct.size()); ++i) {
        const Tensor x = src_ct[i].image.to_tensor();
        const Tensor fake = ga.infer(x);
        std::vector<io::Gray8> panels{panel(x), panel(fake), panel(gb.infer(fake))};
        if (const auto* real = find_by_name(data.ctpa_slices(), src_ct[i].name)) {
          panels.push_back(panel(real->image.to_tensor()));
        }
        io::write_png(dir / (src_ct[i].name + ".png"), io::hconcat(panels));
      }
      for (std::size_t i = 0; i < std::min<std::size_t>(cfg.n_samples, src_ctpa.size()); ++i) {
        const Tensor y = src_ctpa[i].image.to_tensor();
        const Tensor fake = gb.infer(y);
        const std::vector<io::Gray8> panels{panel(y), panel(fake), panel(ga.infer(fake))};
        io::write_png(dir / (src_ctpa[i].name + "_ctpa.png"), io::hconcat(panels));
      }
    }
  }

  json extra = {{"final_generator", fs::relative(last_ckpt / "g_ct2ctpa", run_dir).generic_string()},
                {"final_inverse_generator", fs::relative(last_ckpt / "g_ctpa2ct", run_dir).generic_string()},
                {"n_train_ct", cts.size()},
                {"n_train_ctpa", ctpas.size()},
                {"pairing", ingest::to_string(train.mode())}};
  if (clf) {
    const bool constant = clf->fingerprint() == clf_fp;
    extra["classifier"] = {{"path", cfg.classifier},
                           {"fingerprint", models::hex64(clf_fp)},
                           {"fingerprint_constant", constant},
                           {"supervised_role", supervise ? to_string(cfg.loss.supervision_target) : "none"}};
    if (!constant) throw NumericError("classifier parameters changed during training");
  }
  return run.finish(extra);
}

}  // namespace

RunArtifacts train_cyclegan(const TrainConfig& cfg, const ingest::Dataset& data, const fs::path& run_dir,
                            const TrainHooks& hooks) {
  if (cfg.mode != Mode::cyclegan) throw ConfigError("train_cyclegan: mode is " + to_string(cfg.mode));
  return run_cycle(cfg, data, run_dir, hooks);
}

RunArtifacts train_pe_cyclegan(const TrainConfig& cfg, const ingest::Dataset& data,
                               const fs::path& run_dir, const TrainHooks& hooks) {
  if (cfg.mode != Mode::pe_cyclegan) throw ConfigError("train_pe_cyclegan: mode is " + to_string(cfg.mode));
  return run_cycle(cfg, data, run_dir, hooks);
}

RunArtifacts train_pix2pix(const TrainConfig& cfg, const ingest::Dataset& data, const fs::path& run_dir,
                           const TrainHooks& hooks) {
  if (cfg.mode != Mode::pix2pix) throw ConfigError("train_pix2pix: mode is " + to_string(cfg.mode));
  cfg.validate();
  if (data.mode() != ingest::PairingMode::paired) {
    throw ConfigError("pix2pix mode needs a paired dataset (preprocess with --pairing paired)");
  }
  const ingest::Dataset train = train_split(data);
  const ingest::Dataset test = data.split("test");
  const auto& cts = train.ct_slices();
  const auto& ctpas = train.ctpa_slices();

  models::Generator g(cfg.generator, mix_seed(cfg.seed, kSeedGenA));
  const int side = cts.front().image.rows;
  if (side % g.size_multiple() != 0) {
    throw ShapeError("image size " + std::to_string(side) + " is not a multiple of " +
                     std::to_string(g.size_multiple()) + " required by the generator");
  }
  // Conditional discriminators see concat(CT, candidate).
  models::DiscriminatorConfig pcfg = cfg.discriminator;
  pcfg.in_channels = 2;
  models::DiscriminatorConfig xcfg = cfg.pixel_discriminator;
  xcfg.kind = models::DiscriminatorKind::pixel;
  xcfg.in_channels = 2;
  models::Discriminator dp(pcfg, mix_seed(cfg.seed, kSeedDiscA));
  models::Discriminator dx(xcfg, mix_seed(cfg.seed, kSeedDiscB));

  Adam g_opt(g.trainable(), cfg.lr, cfg.beta1, cfg.beta2);
  Adam d_opt(concat_params(dp, dx), cfg.lr, cfg.beta1, cfg.beta2);
  Run run(cfg, run_dir, {"g_total", "g_adv_patch", "g_adv_pixel", "g_l1", "d_patch", "d_pixel"}, hooks);

  const int B = cfg.batch_size;
  const std::size_t n_steps = (cts.size() + B - 1) / B;
  const float lc = static_cast<float>(cfg.loss.lambda_cycle);
  const auto kind = cfg.loss.adversarial_kind;
  fs::path last_ckpt;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = permutation(cts.size(), mix_seed(cfg.seed, kSeedOrder + 2 * static_cast<std::uint64_t>(epoch)));
    for (std::size_t s = 0; s < n_steps; ++s) {
      const ag::Var ct = ag::constant(stack(cts, order, s * B, B));
      const ag::Var ctpa = ag::constant(stack(ctpas, order, s * B, B));

      dp.set_frozen(true);
      dx.set_frozen(true);
      const ag::Var fake = g.forward(ct);
      const ag::Var cond_fake = ag::concat_channels(ct, fake);
      const ag::Var adv_p = adversarial_loss(kind, dp.forward(cond_fake), true);
      const ag::Var adv_x = adversarial_loss(kind, dx.forward(cond_fake), true);
      const ag::Var l1 = ag::scale(ag::l1_loss(fake, ctpa), lc);
      const ag::Var total = ag::sum_scalars({adv_p, adv_x, l1});
      g_opt.zero_grad();
      ag::backward(total);
      g_opt.step();
      dp.set_frozen(false);
      dx.set_frozen(false);
      if (hooks.on_images) hooks.on_images(StepImages{ct, ctpa, fake, nullptr, nullptr, nullptr, nullptr, ""});

      const ag::Var cond_real = ag::concat_channels(ct, ctpa);
      const ag::Var cond_det = ag::concat_channels(ct, ag::detach(fake));
      const ag::Var d_p = half_sum(adversarial_loss(kind, dp.forward(cond_real), true),
                                   adversarial_loss(kind, dp.forward(cond_det), false));
      const ag::Var d_x = half_sum(adversarial_loss(kind, dx.forward(cond_real), true),
                                   adversarial_loss(kind, dx.forward(cond_det), false));
      d_opt.zero_grad();
      ag::backward(d_p);
      ag::backward(d_x);
      d_opt.step();

      run.log(epoch, {ag::item(total), ag::item(adv_p), ag::item(adv_x), ag::item(l1), ag::item(d_p),
                      ag::item(d_x)});
    }
    run.end_epoch(epoch, {"g_total", "g_l1", "d_patch", "d_pixel"});
    if (due(epoch, cfg.checkpoint_interval, cfg.epochs)) {
      last_ckpt = run.checkpoint(epoch, {{"generator", &g}, {"d_patch", &dp}, {"d_pixel", &dx}});
    }
    if (due(epoch, cfg.sample_interval, cfg.epochs) && cfg.n_samples > 0) {
      const fs::path dir = run.samples_dir(epoch);
      fs::create_directories(dir);
      const ingest::Dataset& src = test.size() ? test : train;
      for (std::size_t i = 0; i < std::min<std::size_t>(cfg.n_samples, src.size()); ++i) {
        const Tensor x = src.ct_slices()[i].image.to_tensor();
        const std::vector<io::Gray8> panels{panel(x), panel(g.infer(x)),
                                            panel(src.ctpa_slices()[i].image.to_tensor())};
        io::write_png(dir / (src.ct_slices()[i].name + ".png"), io::hconcat(panels));
      }
    }
  }
  return run.finish({{"final_generator", fs::relative(last_ckpt / "generator", run_dir).generic_string()},
                     {"n_train_ct", cts.size()},
                     {"n_train_ctpa", ctpas.size()},
                     {"pairing", "paired"}});
}

RunArtifacts train(const TrainConfig& cfg, const ingest::Dataset& data, const fs::path& run_dir,
                   const TrainHooks& hooks) {
  switch (cfg.mode) {
    case Mode::pix2pix: return train_pix2pix(cfg, data, run_dir, hooks);
    case Mode::cyclegan: return train_cyclegan(cfg, data, run_dir, hooks);
    case Mode::pe_cyclegan: return train_pe_cyclegan(cfg, data, run_dir, hooks);
  }
  throw ConfigError("unknown mode");
}

// ---------------------------------------------------------------------------
// Classifier

namespace {

ClassifierEval eval_tensors(const models::Classifier& clf, const std::vector<Tensor>& images,
                            const std::vector<int>& labels) {
  ClassifierEval ev;
  ev.n = images.size();
  if (images.empty()) return ev;
  double loss = 0.0;
  std::size_t correct = 0, pos = 0, neg = 0, tp = 0, tn = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double p = clf.probability(images[i])[0];
    const int y = labels[i];
    const double q = std::clamp(y ? p : 1.0 - p, 1e-12, 1.0);
    loss -= std::log(q);
    const int pred = p >= 0.5 ? 1 : 0;
    correct += pred == y;
    if (y) {
      ++pos;
      tp += pred == 1;
    } else {
      ++neg;
      tn += pred == 0;
    }
  }
  const double n = static_cast<double>(images.size());
  ev.loss = loss / n;
  ev.accuracy = static_cast<double>(correct) / n;
  ev.balanced_accuracy = (pos && neg) ? 0.5 * (double(tp) / double(pos) + double(tn) / double(neg))
                                      : ev.accuracy;
  return ev;
}

std::vector<int> require_labels(const std::vector<ingest::SliceRecord>& slices) {
  std::vector<int> out;
  out.reserve(slices.size());
  for (const auto& r : slices) {
    if (!r.has_pe) throw ConfigError("slice '" + r.name + "' has no PE label");
    out.push_back(*r.has_pe ? 1 : 0);
  }
  return out;
}

}  // namespace

ClassifierEval evaluate_classifier(const models::Classifier& classifier,
                                   const std::vector<ingest::SliceRecord>& slices) {
  const auto labels = require_labels(slices);
  std::vector<Tensor> images;
  images.reserve(slices.size());
  for (const auto& r : slices) images.push_back(r.image.to_tensor());
  return eval_tensors(classifier, images, labels);
}

ClassifierEval evaluate_supervised_role(const models::Generator& g_ct2ctpa,
                                        const models::Generator& g_ctpa2ct,
                                        const models::Classifier& classifier,
                                        const std::vector<ingest::SliceRecord>& slices,
                                        SupervisionTarget role) {
  if (role == SupervisionTarget::none) throw ConfigError("supervised role must be rec_ct or fake_ct");
  const auto labels = require_labels(slices);
  std::vector<Tensor> images;
  images.reserve(slices.size());
  for (const auto& r : slices) {
    const Tensor x = r.image.to_tensor();
    images.push_back(role == SupervisionTarget::rec_ct ? g_ctpa2ct.infer(g_ct2ctpa.infer(x))
                                                       : g_ctpa2ct.infer(x));
  }
  return eval_tensors(classifier, images, labels);
}

ClassifierResult pretrain_classifier(const ClassifierTrainConfig& cfg, const ingest::Dataset& data,
                                     const fs::path& out_dir, bool quiet) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
    throw ConfigError("classifier epochs, batch_size and lr must be positive");
  }
  const ingest::Dataset train = data.split("train");
  const ingest::Dataset test = data.split("test");
  const auto& tr = train.ct_slices();
  if (tr.empty()) throw ConfigError("no training CT slices for the classifier");
  std::vector<int> labels = require_labels(tr);
  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0 || n_pos == labels.size()) {
    throw ConfigError("classifier pretraining needs both classes; all " + std::to_string(labels.size()) +
                      " training slices are " + (n_pos ? "PE" : "no-PE"));
  }
  if (cfg.shuffle_labels) {
    Rng rng(mix_seed(cfg.seed, kSeedLabelShuffle));
    rng.shuffle(std::span<int>(labels));
  }

  models::ClassifierConfig mc = cfg.model;
  mc.input_size = tr.front().image.rows;
  mc.validate();
  models::Classifier clf(mc, mix_seed(cfg.seed, kSeedClassifier));
  Adam opt(clf.trainable(), cfg.lr, 0.9, 0.999);

  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  Rng rng(mix_seed(cfg.seed, kSeedOrder));
  const int B = cfg.batch_size;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Oversample the minority class to balance each epoch.
    std::vector<std::size_t> order;
    const auto& major = pos.size() >= neg.size() ? pos : neg;
    const auto& minor = pos.size() >= neg.size() ? neg : pos;
    order.insert(order.end(), major.begin(), major.end());
    order.insert(order.end(), minor.begin(), minor.end());
    for (std::size_t k = minor.size(); k < major.size(); ++k) {
      order.push_back(minor[rng.uniform_int(minor.size())]);
    }
    rng.shuffle(std::span<std::size_t>(order));
    double acc = 0.0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < order.size(); s += B) {
      const int count = static_cast<int>(std::min<std::size_t>(B, order.size() - s));
      std::vector<int> y(count);
      for (int b = 0; b < count; ++b) y[b] = labels[order[s + b]];
      const ag::Var x = ag::constant(stack(tr, order, s, count));
      const ag::Var loss = ag::softmax_cross_entropy(clf.forward(x), y);
      opt.zero_grad();
      ag::backward(loss);
      opt.step();
      acc += ag::item(loss);
      ++batches;
    }
    if (!quiet) {
      std::fprintf(stderr, "classifier epoch %d/%d loss=%.4f\n", epoch, cfg.epochs, acc / double(batches));
    }
  }

  ClassifierResult res;
  std::vector<Tensor> tr_images;
  for (const auto& r : tr) tr_images.push_back(r.image.to_tensor());
  res.train_accuracy = eval_tensors(clf, tr_images, labels).accuracy;
  const auto& val = test.ct_slices().empty() ? tr : test.ct_slices();
  const ClassifierEval ev = evaluate_classifier(clf, val);
  res.val_accuracy = ev.accuracy;
  res.val_balanced_accuracy = ev.balanced_accuracy;
  res.val_loss = ev.loss;
  res.n_train = tr.size();
  res.n_val = val.size();
  res.checkpoint = out_dir;

  clf.set_frozen(true);
  models::save_checkpoint(clf, out_dir,
                          {{"train_accuracy", res.train_accuracy},
                           {"val_accuracy", res.val_accuracy},
                           {"val_balanced_accuracy", res.val_balanced_accuracy},
                           {"val_loss", res.val_loss},
                           {"n_train", res.n_train},
                           {"n_val", res.n_val},
                           {"val_split", test.ct_slices().empty() ? "train" : "test"},
                           {"epochs", cfg.epochs},
                           {"seed", cfg.seed},
                           {"shuffle_labels", cfg.shuffle_labels}});
  return res;
}

// ---------------------------------------------------------------------------
// Inference

fs::path resolve_generator(const fs::path& path) {
  const fs::path man = path / "manifest.json";
  if (!fs::exists(man)) throw IoError("not a checkpoint or run directory", path.string());
  json j;
  try {
    j = json::parse(io::read_text(man));
  } catch (const json::exception& e) {
    throw IoError(std::string("bad manifest: ") + e.what(), man.string());
  }
  const std::string format = j.value("format", "");
  if (format == "ct2ctpa-checkpoint") return path;
  if (format == "ct2ctpa-run") {
    if (!j.contains("final_generator")) throw IoError("run manifest lacks final_generator", man.string());
    return path / j["final_generator"].get<std::string>();
  }
  throw IoError("unrecognised manifest format '" + format + "'", man.string());
}

Tensor generate(const models::Generator& g, const Tensor& input) {
  const Shape s = input.shape();
  const int m = g.size_multiple();
  if (s.n != 1 || s.c != g.config().in_channels || s.h % m != 0 || s.w % m != 0) {
    throw ShapeError("generator expects (1, " + std::to_string(g.config().in_channels) +
                     ", H, W) with H, W multiples of " + std::to_string(m) + "; got " + s.str());
  }
  return g.infer(input);
}

std::size_t generate_dir(const models::Generator& g, const std::vector<ingest::SliceRecord>& slices,
                         const fs::path& out_dir) {
  fs::create_directories(out_dir / "png");
  fs::create_directories(out_dir / "arrays");
  json items = json::array();
  std::map<std::string, int> seen;
  for (const auto& r : slices) {
    if (seen[r.name]++) throw ConfigError("duplicate slice name '" + r.name + "'");
    const Tensor y = generate(g, r.image.to_tensor());
    const auto img = ingest::NormalizedImage::from_tensor(y, r.name, r.image.slice_index);
    ingest::export_png(img, out_dir / "png" / (r.name + ".png"));
    io::write_f32(out_dir / "arrays" / (r.name + ".f32"), img.pixels);
    items.push_back({{"name", r.name}, {"study", r.study_id}, {"split", r.split},
                     {"rows", img.rows}, {"cols", img.cols}});
  }
  write_json(out_dir / "manifest.json", {{"format", "ct2ctpa-generated"},
                                         {"version", 1},
                                         {"generator_fingerprint", models::hex64(g.fingerprint())},
                                         {"count", slices.size()},
                                         {"items", items}});
  return slices.size();
}

}  // namespace ct2ctpa::training
