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

#include "ct2ctpa/models.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace ct2ctpa::models {

using nlohmann::json;

namespace {

int channels_at(int base, int level) { return base * std::min(1 << level, 8); }

Backbone parse_backbone(const std::string& s) {
  if (s == "unet") return Backbone::unet;
  if (s == "resnet") return Backbone::resnet;
  throw ConfigError("generator.backbone: unknown backbone '" + s + "'");
}

DiscriminatorKind parse_disc_kind(const std::string& s) {
  if (s == "pixel") return DiscriminatorKind::pixel;
  if (s == "patch") return DiscriminatorKind::patch;
  throw ConfigError("discriminator.kind: unknown kind '" + s + "'");
}

}  // namespace

std::string to_string(Backbone b) { return b == Backbone::unet ? "unet" : "resnet"; }
std::string to_string(DiscriminatorKind k) {
  return k == DiscriminatorKind::pixel ? "pixel" : "patch";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void GeneratorConfig::validate() const {
  if (backbone == Backbone::resnet && n_residual_blocks != 9 &&
      n_residual_blocks != 34 && n_residual_blocks != 50) {
    throw ConfigError("generator.n_residual_blocks must be one of 9, 34, 50 (got " +
                      std::to_string(n_residual_blocks) + ")");
  }
  if (backbone == Backbone::unet && (unet_depth < 2 || unet_depth > 10)) {
    throw ConfigError("generator.unet_depth must be in [2, 10]");
  }
  if (base_channels < 1 || in_channels < 1 || out_channels < 1) {
    throw ConfigError("generator channel counts must be positive");
  }
}

void DiscriminatorConfig::validate() const {
  if (kind == DiscriminatorKind::patch && n_layers != 3 && n_layers != 4 &&
      n_layers != 6) {
    throw ConfigError("discriminator.n_layers must be one of 3, 4, 6 (got " +
                      std::to_string(n_layers) + ")");
  }
  if (base_channels < 1 || in_channels < 1) {
    throw ConfigError("discriminator channel counts must be positive");
  }
}

void ClassifierConfig::validate() const {
  if (depth < 1 || base_channels < 1) throw ConfigError("classifier depth/base_channels must be positive");
  if (n_classes != 2) throw ConfigError("classifier.n_classes must be 2");
  if (input_size < (1 << depth)) throw ConfigError("classifier.input_size too small for depth");
}

void to_json(json& j, const GeneratorConfig& c) {
  j = json{{"backbone", to_string(c.backbone)},
           {"n_residual_blocks", c.n_residual_blocks},
           {"unet_depth", c.unet_depth},
           {"base_channels", c.base_channels},
           {"in_channels", c.in_channels},
           {"out_channels", c.out_channels}};
}

void from_json(const json& j, GeneratorConfig& c) {
  c = GeneratorConfig{};
  if (j.contains("backbone")) c.backbone = parse_backbone(j.at("backbone").get<std::string>());
  c.n_residual_blocks = j.value("n_residual_blocks", c.n_residual_blocks);
  c.unet_depth = j.value("unet_depth", c.unet_depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
}

void to_json(json& j, const DiscriminatorConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"n_layers", c.n_layers},
           {"base_channels", c.base_channels},
           {"in_channels", c.in_channels}};
}

void from_json(const json& j, DiscriminatorConfig& c) {
  c = DiscriminatorConfig{};
  if (j.contains("kind")) c.kind = parse_disc_kind(j.at("kind").get<std::string>());
  c.n_layers = j.value("n_layers", c.n_layers);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.in_channels = j.value("in_channels", c.in_channels);
}

void to_json(json& j, const ClassifierConfig& c) {
  j = json{{"depth", c.depth},
           {"base_channels", c.base_channels},
           {"n_classes", c.n_classes},
           {"input_size", c.input_size}};
}

void from_json(const json& j, ClassifierConfig& c) {
  c = ClassifierConfig{};
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.input_size = j.value("input_size", c.input_size);
}

void ExtractorConfig::validate() const {
  if (channels.empty()) throw ConfigError("extractor.channels must not be empty");
  for (int c : channels) {
    if (c < 1) throw ConfigError("extractor.channels entries must be >= 1");
  }
  const int shrink = 1 << channels.size();
  if (input_size < shrink || input_size % shrink != 0) {
    throw ConfigError("extractor.input_size must be a multiple of " + std::to_string(shrink));
  }
}

void to_json(json& j, const ExtractorConfig& c) {
  j = json{{"channels", c.channels}, {"input_size", c.input_size}};
}

void from_json(const json& j, ExtractorConfig& c) {
  c = ExtractorConfig{};
  c.channels = j.value("channels", c.channels);
  c.input_size = j.value("input_size", c.input_size);
}

ag::Var ConvLayer::operator()(const ag::Var& x) const {
  if (transposed) return ag::conv_transpose2d(x, weight, bias, stride, pad, out_pad);
  return ag::conv2d(x, weight, bias, stride, pad);
}

// ---------------------------------------------------------------------------
// Module

Tensor Module::infer(const Tensor& x) const {
  ag::NoGradGuard guard;
  return forward(ag::constant(x))->value;
}

std::vector<ag::Var> Module::trainable() const {
  std::vector<ag::Var> out;
  if (frozen_) return out;
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

std::size_t Module::count_parameters(bool trainable_only) const {
  if (trainable_only && frozen_) return 0;
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.numel();
  return n;
}

void Module::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : params_) {
    p.var->requires_grad = !frozen;
    p.var->grad = Tensor();
  }
}

std::uint64_t Module::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a(p.var->value.data(), p.var->value.numel() * sizeof(float), h);
  }
  return h;
}

ag::Var Module::add_param(std::string name, Tensor t) {
  ag::Var v = ag::parameter(std::move(t));
  params_.push_back({std::move(name), v});
  return v;
}

ConvLayer Module::conv(const std::string& name, int in_c, int out_c, int k,
                       int stride, int pad, float init_std) {
  Tensor w(Shape{out_c, in_c, k, k});
  for (float& v : w.span()) v = static_cast<float>(rng_.normal(0.0, init_std));
  ConvLayer layer;
  layer.weight = add_param(name + ".weight", std::move(w));
  layer.bias = add_param(name + ".bias", Tensor(Shape{1, out_c, 1, 1}));
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

ConvLayer Module::conv_transpose(const std::string& name, int in_c, int out_c,
                                 int k, int stride, int pad, int out_pad) {
  Tensor w(Shape{in_c, out_c, k, k});
  for (float& v : w.span()) v = static_cast<float>(rng_.normal(0.0, 0.02));
  ConvLayer layer;
  layer.weight = add_param(name + ".weight", std::move(w));
  layer.bias = add_param(name + ".bias", Tensor(Shape{1, out_c, 1, 1}));
  layer.stride = stride;
  layer.pad = pad;
  layer.out_pad = out_pad;
  layer.transposed = true;
  return layer;
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(const GeneratorConfig& cfg, std::uint64_t seed)
    : Module(seed), cfg_(cfg) {
  cfg_.validate();
  const int ngf = cfg_.base_channels;
  if (cfg_.backbone == Backbone::resnet) {
    encoder_.push_back(conv("enc0", cfg_.in_channels, ngf, 7, 1, 0));
    encoder_.push_back(conv("enc1", ngf, 2 * ngf, 3, 2, 1));
    encoder_.push_back(conv("enc2", 2 * ngf, 4 * ngf, 3, 2, 1));
    for (int b = 0; b < cfg_.n_residual_blocks; ++b) {
      const std::string p = "block" + std::to_string(b);
      ConvLayer a = conv(p + ".conv_a", 4 * ngf, 4 * ngf, 3, 1, 0);
      ConvLayer c = conv(p + ".conv_b", 4 * ngf, 4 * ngf, 3, 1, 0);
      blocks_.emplace_back(std::move(a), std::move(c));
    }
    decoder_.push_back(conv_transpose("dec0", 4 * ngf, 2 * ngf, 3, 2, 1, 1));
    decoder_.push_back(conv_transpose("dec1", 2 * ngf, ngf, 3, 2, 1, 1));
    decoder_.push_back(conv("dec2", ngf, cfg_.out_channels, 7, 1, 0));
  } else {
    const int depth = cfg_.unet_depth;
    for (int i = 0; i < depth; ++i) {
      const int in_c = i == 0 ? cfg_.in_channels : channels_at(ngf, i - 1);
      encoder_.push_back(conv("down" + std::to_string(i), in_c, channels_at(ngf, i), 4, 2, 1));
    }
    decoder_.resize(depth);
    for (int j = depth - 1; j >= 0; --j) {
      const int in_c = j == depth - 1 ? channels_at(ngf, j) : 2 * channels_at(ngf, j);
      const int out_c = j == 0 ? cfg_.out_channels : channels_at(ngf, j - 1);
      decoder_[j] = conv_transpose("up" + std::to_string(j), in_c, out_c, 4, 2, 1, 0);
    }
  }
}

int Generator::size_multiple() const {
  return cfg_.backbone == Backbone::resnet ? 4 : (1 << cfg_.unet_depth);
}

ag::Var Generator::forward(const ag::Var& x) const {
  const Shape& s = x->shape();
  if (s.c != cfg_.in_channels || s.h % size_multiple() != 0 ||
      s.w % size_multiple() != 0) {
    throw ShapeError("generator input " + s.str() + " needs " +
                     std::to_string(cfg_.in_channels) +
                     " channels and sides divisible by " +
                     std::to_string(size_multiple()));
  }
  return cfg_.backbone == Backbone::resnet ? forward_resnet(x) : forward_unet(x);
}

ag::Var Generator::forward_resnet(const ag::Var& x) const {
  ag::Var h = ag::relu(ag::instance_norm(encoder_[0](ag::reflect_pad(x, 3))));
  h = ag::relu(ag::instance_norm(encoder_[1](h)));
  h = ag::relu(ag::instance_norm(encoder_[2](h)));
  for (const auto& [a, b] : blocks_) {
    ag::Var r = ag::relu(ag::instance_norm(a(ag::reflect_pad(h, 1))));
    r = ag::instance_norm(b(ag::reflect_pad(r, 1)));
    h = ag::add(h, r);
  }
  h = ag::relu(ag::instance_norm(decoder_[0](h)));
  h = ag::relu(ag::instance_norm(decoder_[1](h)));
  return ag::tanh(decoder_[2](ag::reflect_pad(h, 3)));
}

ag::Var Generator::forward_unet(const ag::Var& x) const {
  const int depth = cfg_.unet_depth;
  std::vector<ag::Var> skips;
  ag::Var h = x;
  for (int i = 0; i < depth; ++i) {
    if (i > 0) h = ag::leaky_relu(h, 0.2f);
    h = encoder_[i](h);
    // Outermost and innermost stages carry no normalization.
    if (i > 0 && i < depth - 1) h = ag::instance_norm(h);
    skips.push_back(h);
  }
  for (int j = depth - 1; j >= 0; --j) {
    h = decoder_[j](ag::relu(h));
    if (j > 0) {
      h = ag::concat_channels(ag::instance_norm(h), skips[j - 1]);
    } else {
      h = ag::tanh(h);
    }
  }
  return h;
}

json Generator::config_json() const { return cfg_; }

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed)
    : Module(seed), cfg_(cfg) {
  cfg_.validate();
  const int ndf = cfg_.base_channels;
  if (cfg_.kind == DiscriminatorKind::pixel) {
    layers_.push_back(conv("conv0", cfg_.in_channels, ndf, 1, 1, 0));
    layers_.push_back(conv("conv1", ndf, 2 * ndf, 1, 1, 0));
    layers_.push_back(conv("conv2", 2 * ndf, 1, 1, 1, 0));
    return;
  }
  layers_.push_back(conv("conv0", cfg_.in_channels, ndf, 4, 2, 1));
  for (int i = 1; i < cfg_.n_layers; ++i) {
    layers_.push_back(conv("conv" + std::to_string(i), channels_at(ndf, i - 1),
                           channels_at(ndf, i), 4, 2, 1));
  }
  const int n = cfg_.n_layers;
  layers_.push_back(conv("conv" + std::to_string(n), channels_at(ndf, n - 1),
                         channels_at(ndf, n), 4, 1, 1));
  layers_.push_back(conv("conv" + std::to_string(n + 1), channels_at(ndf, n), 1, 4, 1, 1));
}

ag::Var Discriminator::forward(const ag::Var& x) const {
  if (x->shape().c != cfg_.in_channels) {
    throw ShapeError("discriminator expects " + std::to_string(cfg_.in_channels) +
                     " channels, got " + x->shape().str());
  }
  ag::Var h = x;
  const std::size_t last = layers_.size() - 1;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i == last) break;
    if (i > 0) h = ag::instance_norm(h);
    h = ag::leaky_relu(h, 0.2f);
  }
  return h;
}

int Discriminator::output_side(int side) const {
  if (cfg_.kind == DiscriminatorKind::pixel) return side;
  for (int i = 0; i < cfg_.n_layers; ++i) side = (side + 2 - 4) / 2 + 1;
  side = side - 1;  // k=4, s=1, p=1
  side = side - 1;
  return side;
}

json Discriminator::config_json() const { return cfg_; }

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(const ClassifierConfig& cfg, std::uint64_t seed)
    : Module(seed), cfg_(cfg) {
  cfg_.validate();
  int c = cfg_.base_channels;
  // He scale; there is no normalisation to rescue a small init.
  const auto he = [](int fan_in) { return static_cast<float>(std::sqrt(2.0 / fan_in)); };
  stem_ = conv("stem", 1, c, 3, 1, 1, he(9));
  for (int s = 0; s < cfg_.depth; ++s) {
    const std::string p = "stage" + std::to_string(s);
    Stage st;
    st.down = conv(p + ".down", c, 2 * c, 3, 2, 1, he(9 * c));
    c *= 2;
    st.res_a = conv(p + ".res_a", c, c, 3, 1, 1, he(9 * c));
    st.res_b = conv(p + ".res_b", c, c, 3, 1, 1, 0.5f * he(9 * c));
    stages_.push_back(std::move(st));
  }
  head_ = conv("head", c + kHistogramBins, cfg_.n_classes, 1, 1, 0);
}

ag::Var Classifier::forward(const ag::Var& x) const {
  if (x->shape().c != 1) throw ShapeError("classifier expects 1 channel, got " + x->shape().str());
  ag::Var h = ag::leaky_relu(stem_(x), 0.2f);
  for (const Stage& st : stages_) {
    h = ag::leaky_relu(st.down(h), 0.2f);
    ag::Var r = ag::leaky_relu(st.res_a(h), 0.2f);
    r = st.res_b(r);
    h = ag::leaky_relu(ag::add(h, r), 0.2f);
  }
  // Soft pooling keeps a small lesion from being averaged away; the log
  // intensity histogram sees a rare HU band directly.
  const ag::Var pooled = ag::lse_pool(h, 4.0f);
  return head_(ag::concat_channels(pooled, ag::log_histogram(x, kHistogramBins, -1.0f, 1.0f)));
}

std::vector<float> Classifier::probability(const Tensor& x) const {
  const Tensor logits = infer(x);
  std::vector<float> out(logits.shape().n);
  for (int n = 0; n < logits.shape().n; ++n) {
    const double a = logits.at(n, 0, 0, 0);
    const double b = logits.at(n, 1, 0, 0);
    // softmax over two classes
    out[n] = static_cast<float>(1.0 / (1.0 + std::exp(a - b)));
  }
  return out;
}

json Classifier::config_json() const { return cfg_; }

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const Module& module, const std::filesystem::path& dir,
                     const json& extra) {
  std::filesystem::create_directories(dir);
  json params = json::array();
  std::size_t offset = 0;
  const auto bin_path = dir / "params.bin";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("cannot write checkpoint", bin_path.string());
  for (const auto& p : module.parameters()) {
    const Shape& s = p.var->value.shape();
    const std::size_t count = p.var->value.numel();
    params.push_back({{"name", p.name},
                      {"shape", {s.n, s.c, s.h, s.w}},
                      {"offset", offset},
                      {"count", count}});
    // float32 little-endian; the supported targets are all little-endian.
    bin.write(reinterpret_cast<const char*>(p.var->value.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
    offset += count;
  }
  if (!bin) throw IoError("short write", bin_path.string());
  json manifest = {{"format", "ct2ctpa-checkpoint"},
                   {"version", 1},
                   {"kind", module.kind()},
                   {"config", module.config_json()},
                   {"seed", module.init_seed()},
                   {"frozen", module.frozen()},
                   {"dtype", "float32"},
                   {"byte_order", "little"},
                   {"parameter_count", offset},
                   {"fingerprint", hex64(module.fingerprint())},
                   {"parameters", params},
                   {"extra", extra}};
  const auto man_path = dir / "manifest.json";
  std::ofstream man(man_path);
  if (!man) throw IoError("cannot write checkpoint", man_path.string());
  man << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor::FeatureExtractor(const ExtractorConfig& cfg, std::uint64_t seed)
    : Module(seed), cfg_(cfg) {
  cfg_.validate();
  int in_c = 1;
  for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
    const int c = cfg_.channels[i];
    const std::string p = "stage" + std::to_string(i);
    ConvLayer a = conv(p + ".conv_a", in_c, c, 3, 1, 1, std::sqrt(2.0f / (in_c * 9)));
    ConvLayer b = conv(p + ".conv_b", c, c, 3, 2, 1, std::sqrt(2.0f / (c * 9)));
    stages_.emplace_back(std::move(a), std::move(b));
    in_c = c;
  }
}

ag::Var FeatureExtractor::forward(const ag::Var& x) const {
  ag::Var h = x;
  for (const auto& [a, b] : stages_) h = ag::relu(b(ag::relu(a(h))));
  return ag::global_avg_pool(h);
}

std::vector<Tensor> FeatureExtractor::taps(const Tensor& x) const {
  ag::NoGradGuard guard;
  std::vector<Tensor> out;
  ag::Var h = ag::constant(x);
  for (const auto& [a, b] : stages_) {
    h = ag::relu(b(ag::relu(a(h))));
    out.push_back(h->value);
  }
  return out;
}

json FeatureExtractor::config_json() const { return cfg_; }

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto man_path = dir / "manifest.json";
  std::ifstream man(man_path);
  if (!man) throw IoError("checkpoint manifest not found", man_path.string());
  json manifest;
  try {
    manifest = json::parse(man);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint manifest (") + e.what() + ")",
                  man_path.string());
  }
  if (manifest.value("format", "") != "ct2ctpa-checkpoint") {
    throw IoError("not a ct2ctpa checkpoint", man_path.string());
  }
  const std::string kind = manifest.at("kind");
  const std::uint64_t seed = manifest.at("seed");
  std::unique_ptr<Module> module;
  if (kind == "generator") {
    module = std::make_unique<Generator>(manifest.at("config").get<GeneratorConfig>(), seed);
  } else if (kind == "discriminator") {
    module = std::make_unique<Discriminator>(
        manifest.at("config").get<DiscriminatorConfig>(), seed);
  } else if (kind == "classifier") {
    module = std::make_unique<Classifier>(manifest.at("config").get<ClassifierConfig>(), seed);
  } else if (kind == "extractor") {
    module = std::make_unique<FeatureExtractor>(manifest.at("config").get<ExtractorConfig>(), seed);
  } else {
    throw IoError("unknown checkpoint kind '" + kind + "'", man_path.string());
  }
  const auto bin_path = dir / "params.bin";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("checkpoint parameters not found", bin_path.string());
  const auto& entries = manifest.at("parameters");
  const auto& params = module->parameters();
  if (entries.size() != params.size()) {
    throw IoError("parameter count mismatch", bin_path.string());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    Tensor& t = params[i].var->value;
    if (e.at("name").get<std::string>() != params[i].name ||
        e.at("count").get<std::size_t>() != t.numel()) {
      throw IoError("parameter '" + params[i].name + "' does not match manifest",
                    bin_path.string());
    }
    bin.read(reinterpret_cast<char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!bin) throw IoError("truncated parameter file", bin_path.string());
  if (hex64(module->fingerprint()) != manifest.at("fingerprint").get<std::string>()) {
    throw IoError("parameter fingerprint mismatch", bin_path.string());
  }
  module->set_frozen(manifest.value("frozen", false));
  return {std::move(module), std::move(manifest)};
}

std::unique_ptr<Generator> load_generator(const std::filesystem::path& dir) {
  LoadedCheckpoint ck = load_checkpoint(dir);
  auto* g = dynamic_cast<Generator*>(ck.module.get());
  if (!g) throw IoError("checkpoint is not a generator", dir.string());
  ck.module.release();
  return std::unique_ptr<Generator>(g);
}

std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& dir) {
  LoadedCheckpoint ck = load_checkpoint(dir);
  auto* c = dynamic_cast<Classifier*>(ck.module.get());
  if (!c) throw IoError("checkpoint is not a classifier", dir.string());
  ck.module.release();
  return std::unique_ptr<Classifier>(c);
}

std::unique_ptr<FeatureExtractor> load_extractor(const std::filesystem::path& dir) {
  LoadedCheckpoint ck = load_checkpoint(dir);
  auto* e = dynamic_cast<FeatureExtractor*>(ck.module.get());
  if (!e) throw IoError("checkpoint is not a feature extractor", dir.string());
  ck.module.release();
  return std::unique_ptr<FeatureExtractor>(e);
}

}  // namespace ct2ctpa::models
