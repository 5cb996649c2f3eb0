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

#include "serlab/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "serlab/parallel.hpp"

namespace serlab::pipelines {

using nlohmann::json;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kBaseline: return "baseline";
    case Mode::kContrastiveAdapt: return "contrastive_adapt";
    case Mode::kFinetune: return "finetune";
    case Mode::kByolMixed: return "byol_mixed";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  if (text == "baseline") return Mode::kBaseline;
  if (text == "contrastive_adapt") return Mode::kContrastiveAdapt;
  if (text == "finetune") return Mode::kFinetune;
  if (text == "byol_mixed") return Mode::kByolMixed;
  throw std::invalid_argument("unknown mode '" + text +
                              "' (expected baseline, contrastive_adapt, finetune or byol_mixed)");
}

CorpusSet corpus_from_splits(const std::vector<UtteranceRecord>& records, const std::string& hrl_language) {
  CorpusSet out;
  for (const auto& r : records) {
    if (!r.split) throw std::invalid_argument("record '" + r.id + "' has no split; run prepare first");
    const bool hrl = r.language == hrl_language;
    switch (*r.split) {
      case Split::kTrain: (hrl ? out.hrl_labeled : out.lrl_unlabeled).push_back(r); break;
      case Split::kValidation:
        if (hrl) out.hrl_validation.push_back(r);
        break;
      case Split::kTest:
        if (!hrl) out.lrl_eval.push_back(r);
        break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

json range_json(Range r) { return json::array({r.lo, r.hi}); }

Range parse_range(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("augment." + key + " must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json augment_to_json(const augment::AugmentSpec& s) {
  return {{"noise_snr_db", range_json(s.noise_snr_db)},
          {"polarity_prob", s.polarity_prob},
          {"gain_db", range_json(s.gain_db)},
          {"speed", range_json(s.speed)},
          {"stretch", range_json(s.stretch)},
          {"n_freq_masks", s.n_freq_masks},
          {"max_freq_width", s.max_freq_width},
          {"n_time_masks", s.n_time_masks},
          {"max_time_width", s.max_time_width},
          {"mixup_max_ratio", s.mixup_max_ratio},
          {"rrc_freq_scale", range_json(s.rrc_freq_scale)},
          {"rrc_time_scale", range_json(s.rrc_time_scale)}};
}

augment::AugmentSpec augment_from_json(const json& j, augment::AugmentSpec s) {
  if (!j.is_object()) throw std::invalid_argument("augment section must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "noise_snr_db") s.noise_snr_db = parse_range(v, key);
    else if (key == "polarity_prob") s.polarity_prob = v.get<double>();
    else if (key == "gain_db") s.gain_db = parse_range(v, key);
    else if (key == "speed") s.speed = parse_range(v, key);
    else if (key == "stretch") s.stretch = parse_range(v, key);
    else if (key == "n_freq_masks") s.n_freq_masks = v.get<int>();
    else if (key == "max_freq_width") s.max_freq_width = v.get<int>();
    else if (key == "n_time_masks") s.n_time_masks = v.get<int>();
    else if (key == "max_time_width") s.max_time_width = v.get<int>();
    else if (key == "mixup_max_ratio") s.mixup_max_ratio = v.get<double>();
    else if (key == "rrc_freq_scale") s.rrc_freq_scale = parse_range(v, key);
    else if (key == "rrc_time_scale") s.rrc_time_scale = parse_range(v, key);
    else throw std::invalid_argument("augment: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

TrainConfig TrainConfig::defaults(Mode mode) {
  TrainConfig c;
  c.mode = mode;
  c.encoder.max_frames = mode == Mode::kByolMixed ? 300 : 400;
  return c;
}

void TrainConfig::validate() const {
  optimizer.validate();
  encoder.validate();
  contrastive.validate();
  augment.validate();
  if (batch_size == 0 || batch_size % 4 != 0) throw std::invalid_argument("train: batch_size must be a positive multiple of 4");
  if (batches_per_epoch == 0) throw std::invalid_argument("train: batches_per_epoch must be positive");
  if (max_epochs <= 0) throw std::invalid_argument("train: max_epochs must be positive");
  if (patience <= 0) throw std::invalid_argument("train: patience must be positive");
  for (double l : {lambda_start, lambda_end})
    if (l < 0.0 || l > 1.0) throw std::invalid_argument("train: lambda endpoints must be in [0, 1]");
  if (constant_lambda && (*constant_lambda < 0.0 || *constant_lambda > 1.0)) {
    throw std::invalid_argument("train: constant_lambda must be in [0, 1]");
  }
  if (momentum < 0.0 || momentum > 1.0) throw std::invalid_argument("train: momentum must be in [0, 1]");
  if (supervised_views < 1 || supervised_views > 3) throw std::invalid_argument("train: supervised_views must be 1..3");
  if (ssl_lrl_probability < 0.0 || ssl_lrl_probability > 1.0) {
    throw std::invalid_argument("train: ssl_lrl_probability must be in [0, 1]");
  }
  if (!(validation_speaker_fraction > 0.0 && validation_speaker_fraction < 1.0)) {
    throw std::invalid_argument("train: validation_speaker_fraction must be in (0, 1)");
  }
  if (validation_batches == 0) throw std::invalid_argument("train: validation_batches must be positive");
}

json TrainConfig::to_json() const {
  return {{"mode", pipelines::to_string(mode)},
          {"optimizer",
           {{"lr", optimizer.lr},
            {"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"eps", optimizer.eps},
            {"weight_decay", optimizer.weight_decay}}},
          {"batch_size", batch_size},
          {"batches_per_epoch", batches_per_epoch},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"seed", seed},
          {"lambda_start", lambda_start},
          {"lambda_end", lambda_end},
          {"constant_lambda", constant_lambda ? json(*constant_lambda) : json(nullptr)},
          {"momentum", momentum},
          {"cosine_momentum", cosine_momentum},
          {"encoder", encoder.to_json()},
          {"contrastive",
           {{"temperature", contrastive.temperature},
            {"denominator", objectives::to_string(contrastive.denominator)}}},
          {"same_utterance_positives", same_utterance_positives},
          {"augment", augment_to_json(augment)},
          {"waveform_variants", waveform_variants},
          {"variant_seed", variant_seed ? json(*variant_seed) : json(nullptr)},
          {"supervised_views", supervised_views},
          {"ssl_lrl_probability", ssl_lrl_probability},
          {"validation_speaker_fraction", validation_speaker_fraction},
          {"validation_batches", validation_batches},
          {"log_steps", log_steps}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c = defaults(j.contains("mode") ? parse_mode(j.at("mode").get<std::string>()) : Mode::kBaseline);
  for (const auto& [key, v] : j.items()) {
    if (key == "mode") continue;
    if (key == "optimizer") {
      if (!v.is_object()) throw std::invalid_argument("optimizer section must be an object");
      for (const auto& [k, x] : v.items()) {
        if (k == "lr") c.optimizer.lr = x.get<double>();
        else if (k == "beta1") c.optimizer.beta1 = x.get<double>();
        else if (k == "beta2") c.optimizer.beta2 = x.get<double>();
        else if (k == "eps") c.optimizer.eps = x.get<double>();
        else if (k == "weight_decay") c.optimizer.weight_decay = x.get<double>();
        else throw std::invalid_argument("optimizer: unknown key '" + k + "'");
      }
    } else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "batches_per_epoch") c.batches_per_epoch = v.get<std::size_t>();
    else if (key == "max_epochs") c.max_epochs = v.get<int>();
    else if (key == "patience") c.patience = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "lambda_start") c.lambda_start = v.get<double>();
    else if (key == "lambda_end") c.lambda_end = v.get<double>();
    else if (key == "constant_lambda") c.constant_lambda = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    else if (key == "momentum") c.momentum = v.get<double>();
    else if (key == "cosine_momentum") c.cosine_momentum = v.get<bool>();
    else if (key == "encoder") {
      json merged = c.encoder.to_json();
      if (!v.is_object()) throw std::invalid_argument("encoder section must be an object");
      for (const auto& [k, x] : v.items()) {
        if (!merged.contains(k)) throw std::invalid_argument("encoder config: unknown key '" + k + "'");
        merged[k] = x;
      }
      c.encoder = model::EncoderConfig::from_json(merged);
    } else if (key == "contrastive") {
      if (!v.is_object()) throw std::invalid_argument("contrastive section must be an object");
      for (const auto& [k, x] : v.items()) {
        if (k == "temperature") c.contrastive.temperature = x.get<double>();
        else if (k == "denominator") c.contrastive.denominator = objectives::parse_denominator(x.get<std::string>());
        else throw std::invalid_argument("contrastive: unknown key '" + k + "'");
      }
    } else if (key == "same_utterance_positives") c.same_utterance_positives = v.get<bool>();
    else if (key == "augment") c.augment = augment_from_json(v, c.augment);
    else if (key == "waveform_variants") c.waveform_variants = v.get<std::size_t>();
    else if (key == "variant_seed")
      c.variant_seed = v.is_null() ? std::nullopt : std::optional<std::uint64_t>(v.get<std::uint64_t>());
    else if (key == "supervised_views") c.supervised_views = v.get<std::size_t>();
    else if (key == "ssl_lrl_probability") c.ssl_lrl_probability = v.get<double>();
    else if (key == "validation_speaker_fraction") c.validation_speaker_fraction = v.get<double>();
    else if (key == "validation_batches") c.validation_batches = v.get<std::size_t>();
    else if (key == "log_steps") c.log_steps = v.get<bool>();
    else throw std::invalid_argument("train config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

std::string TrainConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

void validate_corpora(const TrainConfig& config, const CorpusSet& corpora) {
  auto need = [](const std::vector<UtteranceRecord>& r, const char* role, Mode mode) {
    if (r.empty()) {
      throw std::invalid_argument("mode " + to_string(mode) + " needs a non-empty " + std::string(role) + " corpus");
    }
  };
  const Mode m = config.mode;
  if (m == Mode::kBaseline || m == Mode::kFinetune || m == Mode::kByolMixed) {
    need(corpora.hrl_labeled, "hrl_labeled", m);
    need(corpora.hrl_validation, "hrl_validation", m);
    for (const auto& r : corpora.hrl_labeled)
      if (!r.emotion) throw std::invalid_argument("hrl_labeled record '" + r.id + "' has no emotion label");
    for (const auto& r : corpora.hrl_validation)
      if (!r.emotion) throw std::invalid_argument("hrl_validation record '" + r.id + "' has no emotion label");
  }
  if (m == Mode::kContrastiveAdapt || m == Mode::kByolMixed) {
    need(corpora.lrl_unlabeled, "lrl_unlabeled", m);
  }
  if (m == Mode::kContrastiveAdapt) {
    std::set<std::string> speakers;
    for (const auto& r : corpora.lrl_unlabeled) {
      if (r.speaker_id.empty()) throw std::invalid_argument("lrl_unlabeled record '" + r.id + "' has no speaker id");
      speakers.insert(r.speaker_id);
    }
    if (speakers.size() < 2) throw std::invalid_argument("contrastive_adapt needs at least 2 speakers");
  }
}

// ---------------------------------------------------------------------------
// Early stopping

StopDecision early_stop(const std::vector<double>& history, int patience, bool higher_is_better) {
  StopDecision d;
  double best = 0.0;
  for (std::size_t e = 0; e < history.size(); ++e) {
    const double v = history[e];
    const bool better = d.best_epoch < 0 || (higher_is_better ? v > best : v < best);
    if (better) {
      best = v;
      d.best_epoch = static_cast<int>(e);
      d.epochs_since_best = 0;
    } else {
      ++d.epochs_since_best;
    }
  }
  d.stop = d.best_epoch >= 0 && d.epochs_since_best >= patience;
  return d;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int kCheckpointFormat = 1;

std::vector<std::string> frozen_names(const Store& s) {
  std::vector<std::string> out;
  for (const auto& e : s.entries())
    if (e.frozen) out.push_back(e.name);
  return out;
}

void apply_frozen(Store& s, const std::set<std::string>& frozen) {
  for (auto& e : s.entries()) e.frozen = frozen.count(e.name) > 0;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& c) {
  std::filesystem::create_directories(dir);
  optim::write_parameters(dir / "model.serk", c.params);
  optim::write_parameters(dir / "optimizer.serk", c.optimizer_state);
  json files = {{"model", "model.serk"}, {"optimizer", "optimizer.serk"}};
  std::set<std::string> frozen;
  for (const auto& n : frozen_names(c.params)) frozen.insert(n);
  if (c.online) {
    optim::write_parameters(dir / "online.serk", *c.online);
    files["online"] = "online.serk";
    for (const auto& n : frozen_names(*c.online)) frozen.insert(n);
  }
  if (c.target) {
    optim::write_parameters(dir / "target.serk", *c.target);
    files["target"] = "target.serk";
  }
  json history = json::array();
  for (const auto& h : c.history) history.push_back({{"epoch", h.epoch}, {"metric", h.metric}, {"train_loss", h.train_loss}});
  json side = {{"format", kCheckpointFormat},
               {"mode", to_string(c.mode)},
               {"config", c.config.to_json()},
               {"config_hash", c.config.hash()},
               {"encoder", c.config.encoder.to_json()},
               {"frozen", std::vector<std::string>(frozen.begin(), frozen.end())},
               {"epochs_run", c.epochs_run},
               {"best_epoch", c.best_epoch},
               {"best_metric", c.best_metric},
               {"metric", c.metric_name},
               {"history", history},
               {"files", files}};
  std::ofstream os(dir / "checkpoint.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "checkpoint.json").string());
  os << side.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "checkpoint.json");
  if (!is) throw std::runtime_error("no checkpoint.json in " + dir.string());
  json side;
  try {
    side = json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint.json: " + std::string(e.what()));
  }
  if (side.value("format", 0) != kCheckpointFormat) throw std::runtime_error("unsupported checkpoint format");
  Checkpoint c;
  c.mode = parse_mode(side.at("mode").get<std::string>());
  c.config = TrainConfig::from_json(side.at("config"));
  if (c.config.hash() != side.at("config_hash").get<std::string>()) {
    throw std::runtime_error("checkpoint config hash mismatch");
  }
  std::set<std::string> frozen;
  for (const auto& n : side.at("frozen")) frozen.insert(n.get<std::string>());
  c.params = optim::read_parameters(dir / "model.serk");
  apply_frozen(c.params, frozen);
  const auto& files = side.at("files");
  if (files.contains("online")) {
    c.online = optim::read_parameters(dir / "online.serk");
    apply_frozen(*c.online, frozen);
  }
  if (files.contains("target")) {
    c.target = optim::read_parameters(dir / "target.serk");
    apply_frozen(*c.target, frozen);
  }
  c.optimizer_state = optim::read_parameters(dir / "optimizer.serk");
  optim::restore_optimizer_state(c.online ? *c.online : c.params, c.optimizer_state);
  c.epochs_run = side.at("epochs_run").get<int>();
  c.best_epoch = side.at("best_epoch").get<int>();
  c.best_metric = side.at("best_metric").get<double>();
  c.metric_name = side.at("metric").get<std::string>();
  for (const auto& h : side.at("history")) {
    c.history.push_back({h.at("epoch").get<int>(), h.at("metric").get<double>(), h.at("train_loss").get<double>()});
  }
  return c;
}

// ---------------------------------------------------------------------------
// Views

namespace {

dsp::LogMelExtractor& local_extractor(const dsp::FrontEndParams& p) {
  thread_local std::unique_ptr<dsp::LogMelExtractor> ex;
  auto same = [&](const dsp::FrontEndParams& q) {
    return q.sample_rate == p.sample_rate && q.n_fft == p.n_fft && q.hop == p.hop && q.n_mels == p.n_mels &&
           q.fmin == p.fmin && q.fmax == p.fmax && q.power_floor == p.power_floor &&
           q.dynamic_range == p.dynamic_range;
  };
  if (!ex || !same(ex->params())) ex = std::make_unique<dsp::LogMelExtractor>(p);
  return *ex;
}

Tensor<float> stack(const std::vector<dsp::MelSpectrogram>& views, const model::EncoderConfig& enc) {
  std::vector<const dsp::MelSpectrogram*> ptrs;
  ptrs.reserve(views.size());
  for (const auto& v : views) ptrs.push_back(&v);
  return model::batch_input<float>(ptrs, enc);
}

std::size_t valid_frames(const dsp::MelSpectrogram& m, int max_frames) {
  return static_cast<std::size_t>(std::min(m.n_frames, max_frames));
}

int label_of(const UtteranceRecord& r) { return static_cast<int>(*r.emotion); }

std::vector<UtteranceRecord> strip_labels(std::vector<UtteranceRecord> records) {
  for (auto& r : records) {
    r.emotion.reset();
    r.emotion_raw.reset();
  }
  return records;
}

steps::SupervisedBatch baseline_batch(const TrainConfig& cfg, const std::vector<UtteranceRecord>& records,
                                      const sampling::Batch& idx, const features::FeatureStore& fs,
                                      std::int64_t step) {
  std::vector<dsp::MelSpectrogram> views(idx.size());
  steps::SupervisedBatch b;
  b.lengths.resize(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) {
    RngStream rng = RngStream(cfg.seed).split("baseline_view", static_cast<std::uint64_t>(step), i);
    const auto& rec = records[idx[i]];
    dsp::MelSpectrogram mel = features::augmented_view(fs, rec, cfg.augment, rng, local_extractor(fs.params()));
    b.lengths[i] = valid_frames(mel, cfg.encoder.max_frames);
    views[i] = dsp::crop_or_pad(mel, cfg.encoder.max_frames, dsp::CropMode::kTrain, &rng);
  });
  for (auto i : idx) b.labels.push_back(label_of(records[i]));
  b.inputs = stack(views, cfg.encoder);
  return b;
}

steps::ContrastiveBatch contrastive_batch(const TrainConfig& cfg, const std::vector<UtteranceRecord>& records,
                                          const sampling::Batch& idx, const features::FeatureStore& fs,
                                          RngStream base, bool eval_crop) {
  std::vector<dsp::MelSpectrogram> views(2 * idx.size());
  const auto mode = eval_crop ? dsp::CropMode::kEval : dsp::CropMode::kTrain;
  parallel_for(idx.size(), [&](std::size_t i) {
    RngStream rng = base.split("cl_view", i);
    const auto& rec = records[idx[i]];
    views[2 * i] = dsp::crop_or_pad(fs.clean(rec.id), cfg.encoder.max_frames, mode, &rng);
    dsp::MelSpectrogram aug = features::augmented_view(fs, rec, cfg.augment, rng, local_extractor(fs.params()));
    views[2 * i + 1] = dsp::crop_or_pad(aug, cfg.encoder.max_frames, mode, &rng);
  });
  steps::ContrastiveBatch b;
  std::map<std::string, std::int64_t> speaker_index;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& rec = records[idx[i]];
    auto [it, inserted] = speaker_index.emplace(rec.speaker_id, static_cast<std::int64_t>(speaker_index.size()));
    for (int v = 0; v < 2; ++v) {
      b.speakers.push_back(it->second);
      b.utterances.push_back(static_cast<std::int64_t>(i));
    }
  }
  b.inputs = stack(views, cfg.encoder);
  return b;
}

struct ByolInputs {
  steps::SupervisedBatch supervised;
  Tensor<float> view_a;
  Tensor<float> view_b;
};

ByolInputs byol_inputs(const TrainConfig& cfg, const std::vector<UtteranceRecord>& hrl,
                       const std::vector<UtteranceRecord>& lrl, const sampling::MixedBatch& mb,
                       const features::FeatureStore& fs, std::int64_t step) {
  const int frames = cfg.encoder.max_frames;
  const RngStream base = RngStream(cfg.seed).split("byol_view", static_cast<std::uint64_t>(step));
  ByolInputs out;
  const std::size_t nv = cfg.supervised_views;
  std::vector<dsp::MelSpectrogram> sup(mb.hrl.size() * nv);
  out.supervised.lengths.resize(sup.size());
  parallel_for(mb.hrl.size(), [&](std::size_t i) {
    RngStream rng = base.split("supervised", i);
    const auto& mel = fs.clean(hrl[mb.hrl[i]].id);
    dsp::MelSpectrogram crop = dsp::crop_or_pad(mel, frames, dsp::CropMode::kTrain, &rng);
    auto views = augment::make_views(crop, augment::Pipeline::kByolSupervised, cfg.augment, rng);
    for (std::size_t v = 0; v < nv; ++v) {
      sup[i * nv + v] = std::move(views[v]);
      out.supervised.lengths[i * nv + v] = valid_frames(mel, frames);
    }
  });
  for (auto i : mb.hrl)
    for (std::size_t v = 0; v < nv; ++v) out.supervised.labels.push_back(label_of(hrl[i]));
  out.supervised.inputs = stack(sup, cfg.encoder);

  const std::size_t n = mb.ssl.size();
  std::vector<dsp::MelSpectrogram> crops(n), a(n), b(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream rng = base.split("ssl_crop", i);
    const auto& ref = mb.ssl[i];
    const auto& rec = ref.source == sampling::Source::kHrl ? hrl[ref.index] : lrl[ref.index];
    crops[i] = dsp::crop_or_pad(fs.clean(rec.id), frames, dsp::CropMode::kTrain, &rng);
  });
  parallel_for(n, [&](std::size_t i) {
    RngStream rng = base.split("ssl_view", i);
    const std::size_t partner = n > 1 ? (i + 1 + rng.uniform_int(n - 1)) % n : i;
    auto views = augment::make_views(crops[i], augment::Pipeline::kByolSsl, cfg.augment, rng, &crops[partner]);
    a[i] = std::move(views[0]);
    b[i] = std::move(views[1]);
  });
  out.view_a = stack(a, cfg.encoder);
  out.view_b = stack(b, cfg.encoder);
  return out;
}

/// Fixed validation batches over held-out LRL speakers.
struct ContrastiveSplit {
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> validation;
};

ContrastiveSplit split_speakers(const TrainConfig& cfg, const std::vector<UtteranceRecord>& lrl) {
  std::set<std::string> ids;
  for (const auto& r : lrl) ids.insert(r.speaker_id);
  std::vector<std::string> speakers(ids.begin(), ids.end());
  RngStream rng = RngStream(cfg.seed).split("validation_speakers");
  rng.shuffle(speakers.begin(), speakers.end());
  auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_speaker_fraction * static_cast<double>(speakers.size())));
  n_val = std::clamp<std::size_t>(n_val, 2, speakers.size() > 2 ? speakers.size() - 2 : 0);
  std::set<std::string> val(speakers.begin(), speakers.begin() + static_cast<std::ptrdiff_t>(n_val));
  ContrastiveSplit out;
  for (const auto& r : lrl) (val.count(r.speaker_id) ? out.validation : out.train).push_back(r);
  return out;
}

sampling::SpeakerBatchSpec speaker_spec(const TrainConfig& cfg) {
  return {cfg.batch_size / 4, 4};
}

std::vector<steps::ContrastiveBatch> contrastive_validation(const TrainConfig& cfg,
                                                            const std::vector<UtteranceRecord>& validation,
                                                            const features::FeatureStore& fs) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : validation) ++counts[r.speaker_id];
  std::size_t eligible = 0;
  for (const auto& [id, n] : counts)
    if (n >= 4) ++eligible;
  if (eligible < 2) throw std::invalid_argument("contrastive validation needs at least 2 held-out speakers with 4 utterances");
  sampling::SpeakerSampler sampler(validation, {std::min<std::size_t>(eligible, cfg.batch_size / 4), 4},
                                   RngStream(cfg.seed).split("validation_sampler").next_u64());
  std::vector<steps::ContrastiveBatch> out;
  for (std::size_t b = 0; b < cfg.validation_batches; ++b) {
    out.push_back(contrastive_batch(cfg, validation, sampler.batch(0, b), fs,
                                    RngStream(cfg.seed).split("validation_view", b), true));
  }
  return out;
}

double mean_contrastive_loss(const Store& params, const TrainConfig& cfg,
                             const std::vector<steps::ContrastiveBatch>& batches) {
  double total = 0.0;
  for (const auto& b : batches) {
    total += steps::contrastive_loss(params, cfg.encoder, b, cfg.contrastive, cfg.same_utterance_positives);
  }
  return total / static_cast<double>(batches.size());
}

std::vector<dsp::MelSpectrogram> eval_inputs(const model::EncoderConfig& enc, const std::vector<UtteranceRecord>& records,
                                             const features::FeatureStore& fs, std::vector<std::size_t>& lengths) {
  std::vector<dsp::MelSpectrogram> specs(records.size());
  lengths.resize(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& mel = fs.clean(records[i].id);
    lengths[i] = valid_frames(mel, enc.max_frames);
    specs[i] = dsp::crop_or_pad(mel, enc.max_frames, dsp::CropMode::kEval);
  });
  return specs;
}

// ---------------------------------------------------------------------------
// Loop

class Logger {
 public:
  explicit Logger(const RunOptions& o) : options_(o) {
    if (!o.log_path.empty()) {
      if (o.log_path.has_parent_path()) std::filesystem::create_directories(o.log_path.parent_path());
      file_.open(o.log_path);
      if (!file_) throw std::runtime_error("cannot open log " + o.log_path.string());
    }
  }
  void write(const json& j) {
    if (file_.is_open()) file_ << j.dump() << '\n';
    if (options_.on_log) options_.on_log(j);
  }

 private:
  const RunOptions& options_;
  std::ofstream file_;
};

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct LoopHooks {
  std::function<steps::StepStats(int epoch, std::size_t batch, std::int64_t global_step)> step;
  std::function<double()> validate;
  std::function<void()> snapshot;
  bool higher_is_better = true;
  std::string metric_name;
};

void run_loop(const TrainConfig& cfg, LoopHooks& hooks, Checkpoint& ckpt, const RunOptions& options) {
  Logger log(options);
  std::vector<double> history;
  std::int64_t global = 0;
  ckpt.metric_name = hooks.metric_name;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b, ++global) {
      const steps::StepStats s = hooks.step(epoch, b, global);
      loss_sum += s.loss;
      if (cfg.log_steps) {
        log.write({{"kind", "step"},
                   {"epoch", epoch},
                   {"step", global},
                   {"ce", opt_json(s.ce)},
                   {"byol", opt_json(s.byol)},
                   {"lambda", opt_json(s.lambda)},
                   {"mixed", opt_json(s.mixed)},
                   {"ntxent", opt_json(s.ntxent)}});
      }
    }
    const double metric = hooks.validate();
    history.push_back(metric);
    const StopDecision d = early_stop(history, cfg.patience, hooks.higher_is_better);
    const double train_loss = loss_sum / static_cast<double>(cfg.batches_per_epoch);
    ckpt.history.push_back({epoch, metric, train_loss});
    if (d.best_epoch == epoch) {
      hooks.snapshot();
      ckpt.best_epoch = epoch;
      ckpt.best_metric = metric;
    }
    ckpt.epochs_run = epoch + 1;
    log.write({{"kind", "epoch"},
               {"epoch", epoch},
               {"train_loss", train_loss},
               {"metric", hooks.metric_name},
               {"value", metric},
               {"best_epoch", d.best_epoch},
               {"best_value", ckpt.best_metric},
               {"stop", d.stop}});
    if (options.progress) {
      *options.progress << to_string(cfg.mode) << " epoch " << epoch << " loss " << train_loss << ' '
                        << hooks.metric_name << ' ' << metric << (d.best_epoch == epoch ? " *" : "") << '\n';
    }
    if (d.stop) break;
  }
}

RngStream init_rng(const TrainConfig& cfg) { return RngStream(cfg.seed).split("init"); }

}  // namespace

void prepare_features(const TrainConfig& cfg, const CorpusSet& c, features::FeatureStore& fs) {
  switch (cfg.mode) {
    case Mode::kBaseline:
    case Mode::kFinetune:
      fs.load(c.hrl_labeled, true);
      fs.load(c.hrl_validation, false);
      fs.build_variants(c.hrl_labeled, cfg.augment, cfg.waveform_variants, cfg.variant_seed.value_or(cfg.seed));
      break;
    case Mode::kContrastiveAdapt:
      fs.load(c.lrl_unlabeled, true);
      fs.build_variants(c.lrl_unlabeled, cfg.augment, cfg.waveform_variants, cfg.variant_seed.value_or(cfg.seed));
      break;
    case Mode::kByolMixed:
      fs.load(c.hrl_labeled, false);
      fs.load(c.lrl_unlabeled, false);
      fs.load(c.hrl_validation, false);
      break;
  }
}

// ---------------------------------------------------------------------------
// Steps

namespace steps {

const std::vector<std::string>& target_prefixes() {
  static const std::vector<std::string> p{"encoder.", "projector."};
  return p;
}

StepStats supervised_step(Store& params, const model::EncoderConfig& enc, const SupervisedBatch& batch,
                          const optim::AdamWConfig& optimizer, RngStream dropout_rng) {
  Tape<float> tape;
  Var<float> x = tape.constant(batch.inputs);
  Var<float> emb = model::encode(tape, params, x, enc, true, nullptr, batch.lengths);
  Var<float> logits = model::classify(tape, params, emb, enc, true, &dropout_rng);
  Var<float> ce = objectives::cross_entropy(logits, batch.labels);
  tape.backward(ce);
  optim::adamw_step(params, tape.gradients(params), optimizer);
  StepStats s;
  s.ce = ce.value().item();
  s.loss = *s.ce;
  return s;
}

namespace {

Var<float> contrastive_forward(Tape<float>& tape, const Store& params, const model::EncoderConfig& enc,
                               const ContrastiveBatch& batch, const objectives::ContrastiveConfig& config,
                               bool same_utterance) {
  Var<float> x = tape.constant(batch.inputs);
  Var<float> z = model::encode(tape, params, x, enc, tape.grad_enabled(), nullptr);
  return objectives::nt_xent(z, batch.speakers, config,
                             same_utterance ? std::span<const std::int64_t>(batch.utterances)
                                            : std::span<const std::int64_t>());
}

}  // namespace

double contrastive_loss(const Store& params, const model::EncoderConfig& enc, const ContrastiveBatch& batch,
                        const objectives::ContrastiveConfig& config, bool same_utterance_positives) {
  Tape<float> tape(false);
  return contrastive_forward(tape, params, enc, batch, config, same_utterance_positives).value().item();
}

StepStats contrastive_step(Store& params, const model::EncoderConfig& enc, const ContrastiveBatch& batch,
                           const objectives::ContrastiveConfig& config, bool same_utterance_positives,
                           const optim::AdamWConfig& optimizer) {
  Tape<float> tape;
  Var<float> loss = contrastive_forward(tape, params, enc, batch, config, same_utterance_positives);
  tape.backward(loss);
  optim::adamw_step(params, tape.gradients(params), optimizer);
  StepStats s;
  s.ntxent = loss.value().item();
  s.loss = *s.ntxent;
  return s;
}

StepStats byol_mixed_step(optim::OnlineTargetPair<float>& pair, const model::EncoderConfig& enc,
                          const SupervisedBatch& supervised, const Tensor<float>& view_a, const Tensor<float>& view_b,
                          double lambda, const optim::AdamWConfig& optimizer, RngStream dropout_rng,
                          tensor::GradientMap<float>* grads_out) {
  using model::HeadRole;
  Store& online = pair.online;
  Tape<float> tape;
  Var<float> x = tape.constant(supervised.inputs);
  Var<float> emb = model::encode(tape, online, x, enc, true, nullptr, supervised.lengths);
  Var<float> logits = model::classify(tape, online, emb, enc, true, &dropout_rng);
  Var<float> ce = objectives::cross_entropy(logits, supervised.labels);

  auto online_branch = [&](const Tensor<float>& view) {
    Var<float> e = model::encode(tape, online, tape.constant(view), enc, true, nullptr);
    return model::project_predict(tape, online, model::project_predict(tape, online, e, HeadRole::kProjector),
                                  HeadRole::kPredictor);
  };
  Var<float> q_a = online_branch(view_a);
  Var<float> q_b = online_branch(view_b);

  // target branch: separate gradient-free tape over the read-only target store
  Tape<float> target_tape(false);
  auto target_branch = [&](const Tensor<float>& view) {
    Var<float> e = model::encode(target_tape, pair.target, target_tape.constant(view), enc, false, nullptr);
    return model::project_predict(target_tape, pair.target, e, HeadRole::kProjector).value();
  };
  const Tensor<float> t_a = target_branch(view_a);
  const Tensor<float> t_b = target_branch(view_b);

  Var<float> byol = objectives::byol_loss(q_a, t_b, q_b, t_a);
  Var<float> total = objectives::mixed_loss(ce, byol, lambda);
  tape.backward(total);
  tensor::GradientMap<float> grads = tape.gradients(online);
  optim::adamw_step(online, grads, optimizer);
  optim::ema_update(pair.target, online.subset(target_prefixes()), pair.momentum);
  if (grads_out) *grads_out = std::move(grads);

  StepStats s;
  s.ce = ce.value().item();
  s.byol = byol.value().item();
  s.lambda = lambda;
  s.mixed = total.value().item();
  s.loss = *s.mixed;
  return s;
}

}  // namespace steps

Store make_byol_online(const model::EncoderConfig& enc, RngStream& rng) {
  Store s = model::make_classifier(enc, rng);
  model::init_byol_head(s, enc, model::HeadRole::kProjector, rng);
  model::init_byol_head(s, enc, model::HeadRole::kPredictor, rng);
  return s;
}

Store byol_inference_store(const Store& online, const Store& target) {
  Store out;
  for (const auto& e : target.entries())
    if (e.name.rfind("encoder.", 0) == 0) out.add(e.name, e.value, e.frozen);
  for (const auto& e : online.entries())
    if (e.name.rfind("head.", 0) == 0) out.add(e.name, e.value, e.frozen);
  return out;
}

// ---------------------------------------------------------------------------
// Inference helpers

tensor::Tensor<float> embed(const Store& params, const model::EncoderConfig& enc,
                            const std::vector<UtteranceRecord>& records, const features::FeatureStore& fs) {
  std::vector<std::size_t> lengths;
  const auto specs = eval_inputs(enc, records, fs, lengths);
  return model::infer(params, enc, specs, 64, lengths).embeddings;
}

void export_embeddings(const Store& params, const model::EncoderConfig& enc,
                       const std::vector<UtteranceRecord>& records, const features::FeatureStore& fs,
                       const std::filesystem::path& out_path) {
  if (records.empty()) {
    eval::write_embeddings_csv(out_path, records, {}, static_cast<std::size_t>(enc.d_model));
    return;
  }
  const auto e = embed(params, enc, records, fs);
  eval::write_embeddings_csv(out_path, records, e.data, e.dim(1));
}

std::vector<int> predict(const Store& params, const model::EncoderConfig& enc,
                         const std::vector<UtteranceRecord>& records, const features::FeatureStore& fs) {
  if (!params.contains("head.fc2.weight")) throw std::invalid_argument("predict: parameters have no classification head");
  std::vector<std::size_t> lengths;
  const auto specs = eval_inputs(enc, records, fs, lengths);
  return model::argmax_rows(model::infer(params, enc, specs, 64, lengths).logits);
}

eval::EvalReport evaluate(const Store& params, const model::EncoderConfig& enc,
                          const std::vector<UtteranceRecord>& records, const features::FeatureStore& fs) {
  const auto preds = predict(params, enc, records, fs);
  std::vector<int> truths;
  std::vector<Gender> genders;
  for (const auto& r : records) {
    if (!r.emotion) throw std::invalid_argument("evaluate: record '" + r.id + "' has no emotion label");
    truths.push_back(static_cast<int>(*r.emotion));
    genders.push_back(r.gender);
  }
  return eval::compute_metrics(truths, preds, genders);
}

// ---------------------------------------------------------------------------
// Trainers

Checkpoint train_baseline(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& fs,
                          const RunOptions& options) {
  return train_finetune(config, corpora, fs, nullptr, options);
}

Checkpoint train_finetune(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& fs,
                          const Checkpoint* init, const RunOptions& options) {
  config.validate();
  validate_corpora(config, corpora);
  if (!options.features_ready) prepare_features(config, corpora, fs);
  RngStream rng = init_rng(config);
  Store params = model::make_classifier(config.encoder, rng);
  if (init) {
    if (!(init->config.encoder == config.encoder)) {
      throw std::invalid_argument("finetune: encoder config differs from the initialization checkpoint");
    }
    for (auto& e : params.entries()) {
      if (e.name.rfind("encoder.", 0) != 0) continue;
      if (!init->params.contains(e.name)) throw std::invalid_argument("finetune: checkpoint lacks " + e.name);
      const auto& src = init->params.entry(e.name);
      if (src.value.shape != e.value.shape) {
        throw std::invalid_argument("finetune: shape mismatch for " + e.name + ": " +
                                    tensor::shape_string(src.value.shape) + " vs " +
                                    tensor::shape_string(e.value.shape));
      }
      e.value = src.value;
      e.frozen = src.frozen;
    }
  }
  sampling::BalancedSampler sampler(corpora.hrl_labeled, {config.batch_size, kNumEmotions}, config.seed);

  Checkpoint ckpt;
  ckpt.mode = config.mode;
  ckpt.config = config;
  Store best = params;
  LoopHooks hooks;
  hooks.metric_name = "macro_f1";
  hooks.step = [&](int epoch, std::size_t b, std::int64_t global) {
    const auto idx = sampler.batch(static_cast<std::uint64_t>(epoch), b);
    const auto batch = baseline_batch(config, corpora.hrl_labeled, idx, fs, global);
    return steps::supervised_step(params, config.encoder, batch, config.optimizer,
                                  RngStream(config.seed).split("dropout", static_cast<std::uint64_t>(global)));
  };
  hooks.validate = [&] { return evaluate(params, config.encoder, corpora.hrl_validation, fs).macro_f1; };
  hooks.snapshot = [&] { best = params; };
  run_loop(config, hooks, ckpt, options);
  ckpt.params = std::move(best);
  ckpt.optimizer_state = optim::optimizer_state(ckpt.params);
  return ckpt;
}

Checkpoint train_contrastive_adapt(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& fs,
                                   const RunOptions& options) {
  config.validate();
  validate_corpora(config, corpora);
  if (!options.features_ready) prepare_features(config, corpora, fs);
  const auto unlabeled = strip_labels(corpora.lrl_unlabeled);
  const ContrastiveSplit split = split_speakers(config, unlabeled);
  sampling::SpeakerSampler sampler(split.train, speaker_spec(config), config.seed);
  const auto validation = contrastive_validation(config, split.validation, fs);

  RngStream rng = init_rng(config);
  Store params;
  model::init_encoder(params, config.encoder, rng);

  Checkpoint ckpt;
  ckpt.mode = config.mode;
  ckpt.config = config;
  Store best = params;
  LoopHooks hooks;
  hooks.metric_name = "val_ntxent";
  hooks.higher_is_better = false;
  hooks.step = [&](int epoch, std::size_t b, std::int64_t global) {
    const auto idx = sampler.batch(static_cast<std::uint64_t>(epoch), b);
    const auto batch = contrastive_batch(config, split.train, idx, fs,
                                         RngStream(config.seed).split("cl_step", static_cast<std::uint64_t>(global)),
                                         false);
    return steps::contrastive_step(params, config.encoder, batch, config.contrastive,
                                   config.same_utterance_positives, config.optimizer);
  };
  hooks.validate = [&] { return mean_contrastive_loss(params, config, validation); };
  hooks.snapshot = [&] { best = params; };
  run_loop(config, hooks, ckpt, options);
  ckpt.params = std::move(best);
  ckpt.optimizer_state = optim::optimizer_state(ckpt.params);
  return ckpt;
}

Checkpoint train_byol_mixed(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& fs,
                            const RunOptions& options) {
  config.validate();
  validate_corpora(config, corpora);
  if (!options.features_ready) prepare_features(config, corpora, fs);
  const auto unlabeled = strip_labels(corpora.lrl_unlabeled);
  sampling::MixedSourceSampler sampler(corpora.hrl_labeled, unlabeled, {config.batch_size, kNumEmotions},
                                       config.batch_size, config.seed, config.ssl_lrl_probability);
  RngStream rng = init_rng(config);
  optim::OnlineTargetPair<float> pair;
  pair.online = make_byol_online(config.encoder, rng);
  pair.target = pair.online.subset(steps::target_prefixes());
  pair.target.reset_optimizer_state();
  pair.momentum = config.momentum;
  const objectives::MixedLossSchedule schedule{
      config.lambda_start, config.lambda_end,
      static_cast<std::int64_t>(config.batches_per_epoch) * config.max_epochs};

  Checkpoint ckpt;
  ckpt.mode = config.mode;
  ckpt.config = config;
  Store best_online = pair.online, best_target = pair.target;
  LoopHooks hooks;
  hooks.metric_name = "macro_f1";
  hooks.step = [&](int epoch, std::size_t b, std::int64_t global) {
    const auto mb = sampler.batch(static_cast<std::uint64_t>(epoch), b);
    const auto in = byol_inputs(config, corpora.hrl_labeled, unlabeled, mb, fs, global);
    const double lambda = config.constant_lambda ? *config.constant_lambda : objectives::lambda_at(global, schedule);
    pair.momentum = config.cosine_momentum ? optim::cosine_momentum(config.momentum, global, schedule.total_steps)
                                           : config.momentum;
    return steps::byol_mixed_step(pair, config.encoder, in.supervised, in.view_a, in.view_b, lambda,
                                  config.optimizer,
                                  RngStream(config.seed).split("dropout", static_cast<std::uint64_t>(global)));
  };
  hooks.validate = [&] {
    return evaluate(byol_inference_store(pair.online, pair.target), config.encoder, corpora.hrl_validation, fs)
        .macro_f1;
  };
  hooks.snapshot = [&] {
    best_online = pair.online;
    best_target = pair.target;
  };
  run_loop(config, hooks, ckpt, options);
  ckpt.params = byol_inference_store(best_online, best_target);
  ckpt.optimizer_state = optim::optimizer_state(best_online);
  ckpt.online = std::move(best_online);
  ckpt.target = std::move(best_target);
  return ckpt;
}

Checkpoint train(const TrainConfig& config, const CorpusSet& corpora, features::FeatureStore& fs,
                 const Checkpoint* init, const RunOptions& options) {
  switch (config.mode) {
    case Mode::kBaseline: return train_baseline(config, corpora, fs, options);
    case Mode::kContrastiveAdapt: return train_contrastive_adapt(config, corpora, fs, options);
    case Mode::kFinetune: return train_finetune(config, corpora, fs, init, options);
    case Mode::kByolMixed: return train_byol_mixed(config, corpora, fs, options);
  }
  throw std::logic_error("unreachable");
}

double validation_metric(const Checkpoint& c, const CorpusSet& corpora, features::FeatureStore& fs) {
  prepare_features(c.config, corpora, fs);
  if (c.mode == Mode::kContrastiveAdapt) {
    const ContrastiveSplit split = split_speakers(c.config, strip_labels(corpora.lrl_unlabeled));
    return mean_contrastive_loss(c.params, c.config, contrastive_validation(c.config, split.validation, fs));
  }
  return evaluate(c.params, c.config.encoder, corpora.hrl_validation, fs).macro_f1;
}

}  // namespace serlab::pipelines
