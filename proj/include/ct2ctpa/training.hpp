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

// Trainers for the three modes (pix2pix, cyclegan, pe-cyclegan), their
// losses, the classifier pretraining loop and checkpoint inference.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ct2ctpa/autograd.hpp"
#include "ct2ctpa/ingest.hpp"
#include "ct2ctpa/models.hpp"
#include "ct2ctpa/rng.hpp"

namespace ct2ctpa::training {

enum class Mode { pix2pix, cyclegan, pe_cyclegan };
enum class AdversarialKind { bce, mse };
enum class CycleKind { l1, ssim };
enum class SupervisionTarget { rec_ct, fake_ct, none };

std::string to_string(Mode m);
std::string to_string(AdversarialKind k);
std::string to_string(CycleKind k);
std::string to_string(SupervisionTarget t);
Mode parse_mode(const std::string& s);  // accepts pe-cyclegan and pe_cyclegan
AdversarialKind parse_adversarial(const std::string& s);
CycleKind parse_cycle(const std::string& s);
SupervisionTarget parse_target(const std::string& s);

struct LossConfig {
  AdversarialKind adversarial_kind = AdversarialKind::bce;
  CycleKind cycle_kind = CycleKind::l1;
  double lambda_cycle = 10.0;
  double lambda_classifier = 0.0;
  SupervisionTarget supervision_target = SupervisionTarget::none;
  double lambda_identity = 0.0;
};

// SSIM cycle loss on [-1, 1] images: L = 2, C1 = (0.01 L)^2, C2 = (0.03 L)^2.
struct SsimLossConfig {
  int window = 7;
  double sigma = 1.5;
  double dynamic_range = 2.0;
};

struct TrainConfig {
  Mode mode = Mode::cyclegan;
  models::GeneratorConfig generator;
  models::DiscriminatorConfig discriminator;        // patch discriminator(s)
  models::DiscriminatorConfig pixel_discriminator;  // pix2pix only
  LossConfig loss;
  SsimLossConfig ssim;
  int epochs = 200;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 1;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // epochs; 0 keeps only the final epoch
  int sample_interval = 0;      // epochs; 0 samples only the final epoch
  int n_samples = 4;
  int replay_buffer_size = 50;
  std::string classifier;  // checkpoint directory, pe_cyclegan only

  TrainConfig();
  void validate() const;

  // Flat dotted-key view ("loss.lambda_cls", "generator.blocks", ...).
  nlohmann::json to_flat() const;
  // Applies the keys present in `flat`; unknown keys raise ConfigError.
  void apply_flat(const nlohmann::json& flat);
  static std::vector<std::string> flat_keys();
  // FNV-1a of the canonical flat serialisation.
  std::string hash() const;
};

// ---------------------------------------------------------------------------
// Losses

ag::Var adversarial_loss(AdversarialKind kind, const ag::Var& logits, bool target_is_real);
ag::Var cycle_loss(CycleKind kind, const ag::Var& reconstructed, const ag::Var& original,
                   const SsimLossConfig& ssim = {});
// Softmax cross-entropy of the frozen classifier on `image`; gradients reach
// `image` only.
ag::Var classifier_supervision_loss(const models::Classifier& classifier, const ag::Var& image,
                                    const std::vector<int>& labels);

// Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<ag::Var> params, double lr, double beta1, double beta2, double eps = 1e-8);
  void step();
  void zero_grad();

 private:
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Pool of past fakes. Returned images come from the pool or the query
// itself; real images never enter it.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, std::uint64_t seed);
  // x is (N, C, H, W); each item is exchanged independently.
  Tensor query(const Tensor& x);
  std::size_t size() const { return items_.size(); }

 private:
  int capacity_;
  Rng rng_;
  std::vector<Tensor> items_;
};

// ---------------------------------------------------------------------------
// Runs

struct LossLog {
  std::vector<std::string> columns;
  struct Row {
    int epoch = 0;
    long step = 0;
    std::vector<double> values;  // NaN when not applicable
  };
  std::vector<Row> rows;

  std::size_t column(const std::string& name) const;
  // Mean of a column over the rows of one epoch (NaN rows skipped).
  double epoch_mean(const std::string& name, int epoch) const;
  std::string to_csv() const;
};

// Tensors of one training step, for instrumentation.
struct StepImages {
  ag::Var ct, ctpa;
  ag::Var fake_ctpa, rec_ct, fake_ct, rec_ctpa;
  ag::Var supervised;  // the tensor fed to the classifier, if any
  std::string supervised_role;
};

struct TrainHooks {
  std::function<void(const LossLog::Row&, const LossLog&)> on_step;
  std::function<void(const StepImages&)> on_images;
  // Called after every optimizer step with the classifier fingerprint.
  std::function<void(std::uint64_t)> on_classifier_fingerprint;
  bool quiet = true;
};

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::vector<std::filesystem::path> checkpoints;  // epoch directories
  LossLog log;
  nlohmann::json manifest;
};

// Dispatches on cfg.mode. Writes config.json, losses.csv, checkpoints/,
// samples/ and manifest.json below run_dir.
RunArtifacts train(const TrainConfig& cfg, const ingest::Dataset& data,
                   const std::filesystem::path& run_dir, const TrainHooks& hooks = {});
RunArtifacts train_pix2pix(const TrainConfig& cfg, const ingest::Dataset& data,
                           const std::filesystem::path& run_dir, const TrainHooks& hooks = {});
RunArtifacts train_cyclegan(const TrainConfig& cfg, const ingest::Dataset& data,
                            const std::filesystem::path& run_dir, const TrainHooks& hooks = {});
RunArtifacts train_pe_cyclegan(const TrainConfig& cfg, const ingest::Dataset& data,
                               const std::filesystem::path& run_dir, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Classifier

struct ClassifierTrainConfig {
  models::ClassifierConfig model;
  int epochs = 12;
  double lr = 3e-3;
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool shuffle_labels = false;  // permutation control
};

struct ClassifierResult {
  std::filesystem::path checkpoint;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double val_balanced_accuracy = 0.0;  // mean of per-class recalls
  double val_loss = 0.0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

// Trains on the CT slices of split "train", validates on split "test"
// (or on the training slices when the test split is empty). Writes a frozen
// checkpoint to out_dir with the accuracies in its manifest.
ClassifierResult pretrain_classifier(const ClassifierTrainConfig& cfg, const ingest::Dataset& data,
                                     const std::filesystem::path& out_dir, bool quiet = true);

struct ClassifierEval {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;  // equals accuracy when one class is present
  double loss = 0.0;               // mean cross-entropy
  std::size_t n = 0;
};
ClassifierEval evaluate_classifier(const models::Classifier& classifier,
                                   const std::vector<ingest::SliceRecord>& slices);
// Classifier loss on the image a trained pair would supervise: Rec_CT is
// computed from the CT slices, Fake_CT from the CTPA slices.
ClassifierEval evaluate_supervised_role(const models::Generator& g_ct2ctpa,
                                        const models::Generator& g_ctpa2ct,
                                        const models::Classifier& classifier,
                                        const std::vector<ingest::SliceRecord>& slices,
                                        SupervisionTarget role);

// ---------------------------------------------------------------------------
// Inference

// Resolves a generator: a checkpoint directory, or a run directory (final
// epoch's CT->CTPA generator).
std::filesystem::path resolve_generator(const std::filesystem::path& path);

// Deterministic forward pass of one (1, 1, H, W) image.
Tensor generate(const models::Generator& g, const Tensor& input);

// Writes <out>/png/<name>.png and <out>/arrays/<name>.f32 for every slice
// plus manifest.json. Returns the number of images written.
std::size_t generate_dir(const models::Generator& g, const std::vector<ingest::SliceRecord>& slices,
                         const std::filesystem::path& out_dir);

}  // namespace ct2ctpa::training
