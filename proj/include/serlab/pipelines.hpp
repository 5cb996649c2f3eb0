// Copyright 2026 The SER Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "serlab/augment.hpp"
#include "serlab/eval.hpp"
#include "serlab/features.hpp"
#include "serlab/manifest.hpp"
#include "serlab/model.hpp"
#include "serlab/objectives.hpp"
#include "serlab/optim.hpp"
#include "serlab/rng.hpp"
#include "serlab/sampling.hpp"
#include "serlab/tensor.hpp"

namespace serlab::pipelines {

using Store = tensor::ParameterStore<float>;

enum class Mode { kBaseline, kContrastiveAdapt, kFinetune, kByolMixed };
std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

/// Corpus roles for one fold.
struct CorpusSet {
  std::vector<UtteranceRecord> hrl_labeled;
  std::vector<UtteranceRecord> hrl_validation;
  /// Emotion labels are never read from these.
  std::vector<UtteranceRecord> lrl_unlabeled;
  std::vector<UtteranceRecord> lrl_eval;
};

/// Partitions records carrying fold splits: HRL train -> hrl_labeled, HRL
/// validation -> hrl_validation, other-language train -> lrl_unlabeled,
/// other-language test -> lrl_eval.
CorpusSet corpus_from_splits(const std::vector<UtteranceRecord>& records, const std::string& hrl_language);

struct TrainConfig {
  Mode mode = Mode::kBaseline;
  optim::AdamWConfig optimizer;
  std::size_t batch_size = 64;
  std::size_t batches_per_epoch = 100;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  double lambda_start = 0.8;
  double lambda_end = 0.2;
  /// Replaces the schedule when set.
  std::optional<double> constant_lambda;
  double momentum = 0.99;
  bool cosine_momentum = false;
  model::EncoderConfig encoder;
  objectives::ContrastiveConfig contrastive;
  /// Restrict contrastive positives to the two views of one utterance.
  bool same_utterance_positives = false;
  augment::AugmentSpec augment;
  /// Waveform-augmentation variants precomputed per utterance; 0 augments
  /// every draw afresh.
  std::size_t waveform_variants = 0;
  /// Seed of the variant bank; unset uses the run seed.
  std::optional<std::uint64_t> variant_seed;
  /// Reduced-strength views per labeled utterance in byol_mixed (1..3).
  std::size_t supervised_views = 3;
  double ssl_lrl_probability = 0.5;
  /// Share of LRL speakers held out to validate contrastive adaptation.
  double validation_speaker_fraction = 0.2;
  std::size_t validation_batches = 10;
  bool log_steps = true;

  /// Defaults for a mode (byol_mixed crops to 300 frames, others to 400).
  static TrainConfig defaults(Mode mode);
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys are rejected. Missing keys keep the mode defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON, as 16 hex digits.
  std::string hash() const;
};

void validate_corpora(const TrainConfig& config, const CorpusSet& corpora);

struct EpochRecord {
  int epoch = 0;
  double metric = 0.0;
  double train_loss = 0.0;
};

struct Checkpoint {
  Mode mode = Mode::kBaseline;
  TrainConfig config;
  /// Inference parameters: encoder (+ head).
  Store params;
  /// byol_mixed only.
  std::optional<Store> online;
  std::optional<Store> target;
  Store optimizer_state;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_metric = 0.0;
  std::string metric_name;
  std::vector<EpochRecord> history;
};

/// Directory with model.serk, optimizer.serk, [online.serk, target.serk] and
/// checkpoint.json.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

struct StopDecision {
  bool stop = false;
  int best_epoch = -1;
  int epochs_since_best = 0;
};

/// Stops after `patience` consecutive epochs without strict improvement.
StopDecision early_stop(const std::vector<double>& history, int patience, bool higher_is_better = true);

struct RunOptions {
  /// JSON-lines training log; empty disables file logging.
  std::filesystem::path log_path;
  std::function<void(const nlohmann::json&)> on_log;
  /// Progress lines (one per epoch) when non-null.
  std::ostream* progress = nullptr;
  /// The caller already loaded every needed record (and variant bank); the
  /// trainer then treats the feature store as read-only.
  bool features_ready = false;
};

Checkpoint train_baseline(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& features,
                          const RunOptions& options = {});
Checkpoint train_contrastive_adapt(const TrainConfig& config, const CorpusSet& corpora,
                                   features::FeatureStore& features, const RunOptions& options = {});
/// Encoder from `init` (or fresh when null), fresh head and optimizer state.
Checkpoint train_finetune(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& features,
                          const Checkpoint* init, const RunOptions& options = {});
Checkpoint train_byol_mixed(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& features,
                            const RunOptions& options = {});
Checkpoint train(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& features,
                 const Checkpoint* init = nullptr, const RunOptions& options = {});

/// Eval-mode predictions on center-cropped clean spectrograms.
std::vector<int> predict(const Store& params, const model::EncoderConfig& encoder,
                         const std::vector<UtteranceRecord>& records, const features::FeatureStore& features);
eval::EvalReport evaluate(const Store& params, const model::EncoderConfig& encoder,
                          const std::vector<UtteranceRecord>& records, const features::FeatureStore& features);
/// Eval-mode embeddings [N, d_model] for the same inputs predict() uses.
tensor::Tensor<float> embed(const Store& params, const model::EncoderConfig& encoder,
                            const std::vector<UtteranceRecord>& records, const features::FeatureStore& features);

/// Recomputes the checkpoint's validation metric from its parameters.
/// Writes embed() rows as CSV (see eval::write_embeddings_csv).
void export_embeddings(const Store& params, const model::EncoderConfig& encoder,
                       const std::vector<UtteranceRecord>& records, const features::FeatureStore& features,
                       const std::filesystem::path& out_path);

double validation_metric(const Checkpoint& checkpoint, const CorpusSet& corpora, features::FeatureStore& features);

/// Loads every record the mode touches (with audio when waveform views are needed).
void prepare_features(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& features);

// ---------------------------------------------------------------------------
// Single optimization steps, shared by the trainers.

namespace steps {

struct StepStats {
  std::optional<double> ce;
  std::optional<double> byol;
  std::optional<double> lambda;
  std::optional<double> mixed;
  std::optional<double> ntxent;
  double loss = 0.0;
};

struct SupervisedBatch {
  tensor::Tensor<float> inputs;  // [B, T, n_mels]
  std::vector<int> labels;
  std::vector<std::size_t> lengths;
};

/// Cross-entropy step on encoder + head.
StepStats supervised_step(Store& params, const model::EncoderConfig& encoder, const SupervisedBatch& batch,
                          const optim::AdamWConfig& optimizer, RngStream dropout_rng);

struct ContrastiveBatch {
  tensor::Tensor<float> inputs;  // [2B, T, n_mels], clean/augmented per utterance
  std::vector<std::int64_t> speakers;
  std::vector<std::int64_t> utterances;
};

double contrastive_loss(const Store& params, const model::EncoderConfig& encoder, const ContrastiveBatch& batch,
                        const objectives::ContrastiveConfig& config, bool same_utterance_positives);
StepStats contrastive_step(Store& params, const model::EncoderConfig& encoder, const ContrastiveBatch& batch,
                           const objectives::ContrastiveConfig& config, bool same_utterance_positives,
                           const optim::AdamWConfig& optimizer);

/// One mixed step: CE on `supervised` through online encoder + head, BYOL on
/// the two views, optimizer step on the online store, then EMA into target.
/// When `grads_out` is set it receives the gradient map of the step.
StepStats byol_mixed_step(optim::OnlineTargetPair<float>& pair, const model::EncoderConfig& encoder,
                          const SupervisedBatch& supervised, const tensor::Tensor<float>& view_a,
                          const tensor::Tensor<float>& view_b, double lambda, const optim::AdamWConfig& optimizer,
                          RngStream dropout_rng, tensor::GradientMap<float>* grads_out = nullptr);

/// Target-store prefixes: encoder and projector.
const std::vector<std::string>& target_prefixes();

}  // namespace steps

/// Online store for byol_mixed: encoder, head, projector and predictor.
Store make_byol_online(const model::EncoderConfig& encoder, RngStream& rng);
/// Target encoder + online head.
Store byol_inference_store(const Store& online, const Store& target);

}  // namespace serlab::pipelines
