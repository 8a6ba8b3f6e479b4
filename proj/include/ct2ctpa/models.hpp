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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ct2ctpa/autograd.hpp"
#include "ct2ctpa/rng.hpp"

namespace ct2ctpa::models {

enum class Backbone { unet, resnet };
enum class DiscriminatorKind { pixel, patch };

struct GeneratorConfig {
  Backbone backbone = Backbone::resnet;
  int n_residual_blocks = 9;  // resnet only: 9, 34 or 50
  int unet_depth = 5;         // unet only: number of stride-2 stages
  int base_channels = 64;
  int in_channels = 1;
  int out_channels = 1;

  void validate() const;
};

struct DiscriminatorConfig {
  DiscriminatorKind kind = DiscriminatorKind::patch;
  int n_layers = 3;  // patch only: 3, 4 or 6
  int base_channels = 64;
  int in_channels = 1;

  void validate() const;
};

struct ClassifierConfig {
  int depth = 2;  // residual stages, each halving resolution
  int base_channels = 8;
  int n_classes = 2;
  int input_size = 64;

  void validate() const;
};

// Fixed convolutional feature extractor for perceptual metrics.
struct ExtractorConfig {
  std::vector<int> channels{16, 32, 64};  // one stride-2 stage each
  int input_size = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);
void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);
void to_json(nlohmann::json& j, const ExtractorConfig& c);
void from_json(const nlohmann::json& j, ExtractorConfig& c);

std::string to_string(Backbone b);
std::string to_string(DiscriminatorKind k);

struct NamedParameter {
  std::string name;
  ag::Var var;
};

// Convolution weights plus their hyper-parameters.
struct ConvLayer {
  ag::Var weight;
  ag::Var bias;
  int stride = 1;
  int pad = 0;
  int out_pad = 0;
  bool transposed = false;

  ag::Var operator()(const ag::Var& x) const;
};

// A network with an ordered, named parameter list. Forward passes never
// mutate the module, so distinct modules may run concurrently.
class Module {
 public:
  virtual ~Module() = default;

  virtual ag::Var forward(const ag::Var& x) const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json config_json() const = 0;

  // Inference helper: runs forward without recording history.
  Tensor infer(const Tensor& x) const;

  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<ag::Var> trainable() const;
  std::size_t count_parameters(bool trainable_only = true) const;

  // Frozen modules keep their values but never accumulate gradients.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  // FNV-1a over the parameter values in declaration order.
  std::uint64_t fingerprint() const;
  std::uint64_t init_seed() const { return init_seed_; }

 protected:
  explicit Module(std::uint64_t seed) : init_seed_(seed), rng_(seed) {}

  ConvLayer conv(const std::string& name, int in_c, int out_c, int k,
                 int stride, int pad, float init_std = 0.02f);
  ConvLayer conv_transpose(const std::string& name, int in_c, int out_c, int k,
                           int stride, int pad, int out_pad);

 private:
  ag::Var add_param(std::string name, Tensor t);

  std::vector<NamedParameter> params_;
  bool frozen_ = false;
  std::uint64_t init_seed_;
  Rng rng_;
};

// Image-to-image map [-1,1]^{C,H,W} -> [-1,1]^{C,H,W}.
class Generator final : public Module {
 public:
  Generator(const GeneratorConfig& cfg, std::uint64_t seed);

  ag::Var forward(const ag::Var& x) const override;
  std::string kind() const override { return "generator"; }
  nlohmann::json config_json() const override;
  const GeneratorConfig& config() const { return cfg_; }

  // Spatial sizes must be divisible by this.
  int size_multiple() const;

 private:
  ag::Var forward_resnet(const ag::Var& x) const;
  ag::Var forward_unet(const ag::Var& x) const;

  GeneratorConfig cfg_;
  std::vector<ConvLayer> encoder_;
  std::vector<std::pair<ConvLayer, ConvLayer>> blocks_;
  std::vector<ConvLayer> decoder_;
};

// Emits real/fake logits: per pixel (pixel kind) or per patch (patch kind).
class Discriminator final : public Module {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

  ag::Var forward(const ag::Var& x) const override;
  std::string kind() const override { return "discriminator"; }
  nlohmann::json config_json() const override;
  const DiscriminatorConfig& config() const { return cfg_; }

  // Logit grid size for a square input of the given side.
  int output_side(int input_side) const;

 private:
  DiscriminatorConfig cfg_;
  std::vector<ConvLayer> layers_;
};

// Small residual PE / no-PE classifier producing (N, 2, 1, 1) logits.
class Classifier final : public Module {
 public:
  Classifier(const ClassifierConfig& cfg, std::uint64_t seed);

  ag::Var forward(const ag::Var& x) const override;
  std::string kind() const override { return "classifier"; }
  nlohmann::json config_json() const override;
  const ClassifierConfig& config() const { return cfg_; }

  // P(PE) per batch item.
  std::vector<float> probability(const Tensor& x) const;

 private:
  struct Stage {
    ConvLayer down;
    ConvLayer res_a;
    ConvLayer res_b;
  };
  ClassifierConfig cfg_;
  static constexpr int kHistogramBins = 16;
  ConvLayer stem_;
  std::vector<Stage> stages_;
  ConvLayer head_;
};

// Stage taps feed LPIPS; forward() returns the globally pooled last stage
// (N, C, 1, 1), the embedding used for FID. Weights use He initialisation
// and are either built from a pinned seed or loaded from a checkpoint.
class FeatureExtractor final : public Module {
 public:
  FeatureExtractor(const ExtractorConfig& cfg, std::uint64_t seed);

  ag::Var forward(const ag::Var& x) const override;
  std::string kind() const override { return "extractor"; }
  nlohmann::json config_json() const override;
  const ExtractorConfig& config() const { return cfg_; }

  // Post-activation outputs of each stage, without recording history.
  std::vector<Tensor> taps(const Tensor& x) const;

 private:
  ExtractorConfig cfg_;
  std::vector<std::pair<ConvLayer, ConvLayer>> stages_;
};

// Loads a checkpoint written by save_checkpoint (any kind).
struct LoadedCheckpoint {
  std::unique_ptr<Module> module;
  nlohmann::json manifest;
};

// Layout: <dir>/manifest.json + <dir>/params.bin (see docs/formats.md).
void save_checkpoint(const Module& module, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

std::unique_ptr<Generator> load_generator(const std::filesystem::path& dir);
std::unique_ptr<Classifier> load_classifier(const std::filesystem::path& dir);
std::unique_ptr<FeatureExtractor> load_extractor(const std::filesystem::path& dir);

std::string hex64(std::uint64_t v);

}  // namespace ct2ctpa::models
