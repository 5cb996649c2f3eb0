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

#include "testkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "serlab/objectives.hpp"

namespace serlab::testkit {

namespace {

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelativeFloor});
}

double evaluate(const InputFn& fn, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return fn(tape, vars).value().item();
}

double evaluate(const StoreFn& fn, const ParameterStore<double>& store) {
  Tape<double> tape(false);
  return fn(tape, store).value().item();
}

std::size_t draw(RngStream& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

// Values bounded away from zero, for kinks such as relu.
Tensor<double> away_from_zero(Shape shape, RngStream& rng) {
  auto t = random_tensor(std::move(shape), rng, 0.05, 1.0);
  for (auto& v : t.data)
    if (rng.bernoulli(0.5)) v = -v;
  return t;
}

std::vector<std::int64_t> view_speakers(std::size_t n_speakers, std::size_t per_speaker) {
  std::vector<std::int64_t> s;
  for (std::size_t k = 0; k < n_speakers; ++k)
    for (std::size_t u = 0; u < per_speaker; ++u) s.push_back(static_cast<std::int64_t>(k));
  return s;
}

}  // namespace

Tensor<double> random_tensor(Shape shape, RngStream& rng, double lo, double hi) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Var<double> scalarize(Tape<double>& tape, const Var<double>& x) {
  if (x.value().size() == 1) return sum(x);
  RngStream rng(0x5ca1ab1e + x.value().size());
  auto w = random_tensor(x.shape(), rng, 0.5, 1.5);
  return sum(mul(x, tape.constant(std::move(w))));
}

GradResult gradcheck(const GradCase& c, double h) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : c.inputs) vars.push_back(tape.variable(t));
  auto loss = c.fn(tape, vars);
  tape.backward(loss);

  GradResult r;
  auto inputs = c.inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& g = vars[i].grad();
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double orig = inputs[i].data[e];
      inputs[i].data[e] = orig + h;
      const double up = evaluate(c.fn, inputs);
      inputs[i].data[e] = orig - h;
      const double down = evaluate(c.fn, inputs);
      inputs[i].data[e] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = g.data.empty() ? 0.0 : g.data[e];
      r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic, numeric));
      ++r.checked;
    }
  }
  return r;
}

GradResult gradcheck(const StoreCase& c, RngStream& rng, std::size_t per_entry, double h) {
  Tape<double> tape;
  auto loss = c.fn(tape, c.store);
  tape.backward(loss);
  auto grads = tape.gradients(c.store);

  GradResult r;
  auto store = c.store;
  for (auto& entry : store.entries()) {
    if (entry.frozen) continue;
    const auto it = grads.find(entry.name);
    std::vector<std::size_t> coords;
    if (entry.value.size() <= per_entry) {
      for (std::size_t e = 0; e < entry.value.size(); ++e) coords.push_back(e);
    } else {
      for (std::size_t k = 0; k < per_entry; ++k) coords.push_back(rng.uniform_int(entry.value.size()));
    }
    for (auto e : coords) {
      const double orig = entry.value.data[e];
      entry.value.data[e] = orig + h;
      const double up = evaluate(c.fn, store);
      entry.value.data[e] = orig - h;
      const double down = evaluate(c.fn, store);
      entry.value.data[e] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = it == grads.end() ? 0.0 : it->second.data[e];
      r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic, numeric));
      ++r.checked;
    }
  }
  return r;
}

std::vector<GradCase> primitive_cases(RngStream& rng) {
  std::vector<GradCase> out;
  const std::size_t n = draw(rng, 2, 4), k = draw(rng, 2, 5), m = draw(rng, 2, 4), b = draw(rng, 2, 3);

  out.push_back({"matmul", {random_tensor({n, k}, rng), random_tensor({k, m}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, matmul(v[0], v[1])); }});
  out.push_back({"linear", {random_tensor({b, n, k}, rng), random_tensor({k, m}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, linear(v[0], v[1])); }});
  out.push_back({"linear_bias", {random_tensor({b, n, k}, rng), random_tensor({k, m}, rng), random_tensor({m}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, linear(v[0], v[1], v[2])); }});
  out.push_back({"bmm", {random_tensor({b, n, k}, rng), random_tensor({b, k, m}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, bmm(v[0], v[1])); }});
  out.push_back({"bmm_transposed", {random_tensor({b, n, k}, rng), random_tensor({b, m, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, bmm(v[0], v[1], true)); }});
  for (int stride : {1, 2}) {
    const std::size_t steps = draw(rng, 4, 7), cin = draw(rng, 2, 3), cout = draw(rng, 2, 3);
    out.push_back({"conv1d_stride" + std::to_string(stride),
                   {random_tensor({b, steps, cin}, rng), random_tensor({3, cin, cout}, rng), random_tensor({cout}, rng)},
                   [stride](auto& t, auto& v) { return scalarize(t, conv1d(v[0], v[1], v[2], stride, 1)); }});
  }
  out.push_back({"add", {random_tensor({n, k}, rng), random_tensor({n, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, add(v[0], v[1])); }});
  out.push_back({"add_broadcast", {random_tensor({b, n, k}, rng), random_tensor({k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, add(v[0], v[1])); }});
  out.push_back({"mul", {random_tensor({n, k}, rng), random_tensor({n, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, mul(v[0], v[1])); }});
  out.push_back({"mul_broadcast", {random_tensor({b, n, k}, rng), random_tensor({n, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, mul(v[0], v[1])); }});
  const double c = rng.uniform(-2.0, 2.0);
  out.push_back({"scale", {random_tensor({n, k}, rng)},
                 [c](auto& t, auto& v) { return scalarize(t, scale(v[0], c)); }});
  out.push_back({"sum", {random_tensor({n, k}, rng)}, [](auto&, auto& v) { return sum(v[0]); }});
  out.push_back({"mean", {random_tensor({b, n, k}, rng)}, [](auto&, auto& v) { return mean(v[0]); }});
  out.push_back({"layer_norm",
                 {random_tensor({b, n, k + 2}, rng), random_tensor({k + 2}, rng, 0.5, 1.5), random_tensor({k + 2}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, layer_norm(v[0], v[1], v[2])); }});
  out.push_back({"gelu", {random_tensor({n, k}, rng, -3.0, 3.0)},
                 [](auto& t, auto& v) { return scalarize(t, gelu(v[0])); }});
  out.push_back({"relu", {away_from_zero({n, k}, rng)}, [](auto& t, auto& v) { return scalarize(t, relu(v[0])); }});
  out.push_back({"softmax", {random_tensor({n, k}, rng, -2.0, 2.0)},
                 [](auto& t, auto& v) { return scalarize(t, softmax(v[0])); }});
  out.push_back({"log_softmax", {random_tensor({n, k}, rng, -2.0, 2.0)},
                 [](auto& t, auto& v) { return scalarize(t, log_softmax(v[0])); }});
  out.push_back({"mean_pool_time", {random_tensor({b, n + 2, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, mean_pool_time(v[0])); }});
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < b; ++i) lengths.push_back(draw(rng, 1, n + 2));
  out.push_back({"mean_pool_time_masked", {random_tensor({b, n + 2, k}, rng)},
                 [lengths](auto& t, auto& v) { return scalarize(t, mean_pool_time(v[0], lengths)); }});
  const std::uint64_t mask_seed = rng.next_u64();
  out.push_back({"dropout", {random_tensor({n, k + 4}, rng)}, [mask_seed](auto& t, auto& v) {
                   RngStream r(mask_seed);
                   return scalarize(t, dropout(v[0], 0.3, true, &r));
                 }});
  out.push_back({"l2_normalize", {away_from_zero({n, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, l2_normalize(v[0])); }});
  out.push_back({"batch_standardize", {random_tensor({n + 2, k}, rng)},
                 [](auto& t, auto& v) { return scalarize(t, batch_standardize(v[0])); }});
  return out;
}

std::vector<GradCase> loss_cases(RngStream& rng) {
  using namespace objectives;
  std::vector<GradCase> out;
  const std::size_t d = draw(rng, 3, 6);
  const std::size_t n_spk = draw(rng, 2, 3), per = draw(rng, 2, 3);
  const auto speakers = view_speakers(n_spk, per);
  const double tau = rng.uniform(0.2, 1.0);
  for (auto mode : {Denominator::kIncludePositive, Denominator::kNegativesOnly}) {
    ContrastiveConfig cfg{tau, mode};
    out.push_back({"nt_xent_" + to_string(mode), {random_tensor({speakers.size(), d}, rng)},
                   [speakers, cfg](auto&, auto& v) { return nt_xent(v[0], speakers, cfg); }});
  }
  // Two views per utterance, positives restricted to the same utterance.
  std::vector<std::int64_t> spk2, groups;
  for (std::int64_t u = 0; u < 4; ++u)
    for (int view = 0; view < 2; ++view) {
      spk2.push_back(u / 2);
      groups.push_back(u);
    }
  out.push_back({"nt_xent_same_utterance", {random_tensor({spk2.size(), d}, rng)},
                 [spk2, groups, tau](auto&, auto& v) {
                   return nt_xent(v[0], spk2, ContrastiveConfig{tau, Denominator::kIncludePositive}, groups);
                 }});

  const std::size_t bsz = draw(rng, 2, 6);
  std::vector<int> labels;
  for (std::size_t i = 0; i < bsz; ++i) labels.push_back(static_cast<int>(rng.uniform_int(4)));
  out.push_back({"cross_entropy", {random_tensor({bsz, 4}, rng, -3.0, 3.0)},
                 [labels](auto&, auto& v) { return cross_entropy(v[0], labels); }});
  std::vector<double> weights{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                              rng.uniform(0.5, 2.0)};
  out.push_back({"cross_entropy_weighted", {random_tensor({bsz, 4}, rng, -3.0, 3.0)},
                 [labels, weights](auto&, auto& v) { return cross_entropy(v[0], labels, weights); }});

  auto t_a = random_tensor({bsz, d}, rng), t_b = random_tensor({bsz, d}, rng);
  out.push_back({"byol_regression", {random_tensor({bsz, d}, rng)},
                 [t_b](auto&, auto& v) { return byol_regression(v[0], t_b); }});
  out.push_back({"byol", {random_tensor({bsz, d}, rng), random_tensor({bsz, d}, rng)},
                 [t_a, t_b](auto&, auto& v) { return byol_loss(v[0], t_b, v[1], t_a); }});
  const double lambda = rng.uniform(0.0, 1.0);
  out.push_back({"mixed",
                 {random_tensor({bsz, 4}, rng, -3.0, 3.0), random_tensor({bsz, d}, rng), random_tensor({bsz, d}, rng)},
                 [labels, t_a, t_b, lambda](auto&, auto& v) {
                   return mixed_loss(cross_entropy(v[0], labels), byol_loss(v[1], t_b, v[2], t_a), lambda);
                 }});
  return out;
}

std::vector<StoreCase> model_cases(RngStream& rng) {
  using namespace model;
  EncoderConfig cfg;
  cfg.n_mels = 6;
  cfg.d_model = 8;
  cfg.n_blocks = 1;
  cfg.max_frames = 12;
  cfg.projector_hidden = 6;
  cfg.projector_dim = 4;
  cfg.block = rng.bernoulli(0.5) ? BlockKind::kFeedforwardResidual : BlockKind::kSingleHeadAttention;
  const std::size_t b = 3;
  auto x = random_tensor({b, 12, 6}, rng, -1.0, 1.0);
  std::vector<int> labels{0, 2, 3};
  const std::uint64_t drop_seed = rng.next_u64();

  std::vector<StoreCase> out;
  ParameterStore<double> cls;
  RngStream init(rng.next_u64());
  init_encoder(cls, cfg, init);
  init_head(cls, cfg, init);
  // Unfreeze the front end so its gradients are checked too.
  for (auto& e : cls.entries()) e.frozen = false;
  out.push_back({"encoder_classifier_" + to_string(cfg.block), cls, [cfg, x, labels, drop_seed](auto& t, auto& p) {
                   RngStream r(drop_seed);
                   auto emb = encode(t, p, t.constant(x), cfg, true, &r);
                   return objectives::cross_entropy(classify(t, p, emb, cfg, true, &r), labels);
                 }});

  ParameterStore<double> heads;
  init_byol_head(heads, cfg, HeadRole::kProjector, init);
  init_byol_head(heads, cfg, HeadRole::kPredictor, init);
  auto emb = random_tensor({b + 1, static_cast<std::size_t>(cfg.d_model)}, rng);
  out.push_back({"projector_predictor", heads, [emb](auto& t, auto& p) {
                   auto z = project_predict(t, p, t.constant(emb), HeadRole::kProjector);
                   return scalarize(t, project_predict(t, p, z, HeadRole::kPredictor));
                 }});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double nt_xent_reference(const Rows& z, const std::vector<std::int64_t>& speakers, double tau,
                         bool include_positive, const std::vector<std::int64_t>& groups) {
  double total = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double negatives = 0;
    for (std::size_t k = 0; k < z.size(); ++k)
      if (speakers[k] != speakers[i]) negatives += std::exp(cosine(z[i], z[k]) / tau);
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (j == i || speakers[j] != speakers[i]) continue;
      if (!groups.empty() && groups[j] != groups[i]) continue;
      const double pos = std::exp(cosine(z[i], z[j]) / tau);
      const double denom = include_positive ? negatives + pos : negatives;
      total += -std::log(pos / denom);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double cross_entropy_reference(const Rows& logits, const std::vector<int>& labels,
                               const std::vector<double>& weights) {
  double total = 0, norm = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double z = 0;
    for (double v : logits[i]) z += std::exp(v);
    const double nll = -std::log(std::exp(logits[i][labels[i]]) / z);
    const double w = weights.empty() ? 1.0 : weights[labels[i]];
    total += w * nll;
    norm += w;
  }
  return total / norm;
}

double byol_reference(const Rows& q_a, const Rows& t_b, const Rows& q_b, const Rows& t_a) {
  double ab = 0, ba = 0;
  for (std::size_t i = 0; i < q_a.size(); ++i) {
    ab += 2.0 - 2.0 * cosine(q_a[i], t_b[i]);
    ba += 2.0 - 2.0 * cosine(q_b[i], t_a[i]);
  }
  const double n = static_cast<double>(q_a.size());
  return 0.5 * (ab / n + ba / n);
}

Tensor<double> to_tensor(const Rows& rows) {
  Tensor<double> t({rows.size(), rows.empty() ? 0 : rows[0].size()});
  std::size_t k = 0;
  for (const auto& r : rows)
    for (double v : r) t.data[k++] = v;
  return t;
}

bool metrics_match_reference(const std::vector<int>& truths, const std::vector<int>& predictions,
                             const std::vector<Gender>& genders, int n_classes,
                             const eval::EvalReport& report, std::string& why) {
  std::ostringstream msg;
  const std::size_t n = truths.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += truths[i] == predictions[i];
  if (report.accuracy != static_cast<double>(correct) / n) msg << "accuracy ";
  double f1_sum = 0, recall_sum = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += truths[i] == c && predictions[i] == c;
      fp += truths[i] != c && predictions[i] == c;
      fn += truths[i] == c && predictions[i] != c;
    }
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = tp > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
    if (report.per_class_recall[c] != recall) msg << "recall[" << c << "] ";
    if (report.per_class_f1[c] != f1) msg << "f1[" << c << "] ";
    for (int p = 0; p < n_classes; ++p) {
      std::int64_t count = 0;
      for (std::size_t i = 0; i < n; ++i) count += truths[i] == c && predictions[i] == p;
      if (report.confusion[c][p] != count) msg << "confusion[" << c << "][" << p << "] ";
    }
    f1_sum += f1;
    recall_sum += recall;
  }
  if (report.macro_f1 != f1_sum / n_classes) msg << "macro_f1 ";
  if (report.uar != recall_sum / n_classes) msg << "uar ";
  if (!genders.empty()) {
    for (Gender g : {Gender::kFemale, Gender::kMale, Gender::kUnknown}) {
      std::int64_t total = 0, ok = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (genders[i] == g) {
          ++total;
          ok += truths[i] == predictions[i];
        }
      const auto it = report.per_gender.find(std::string(to_string(g)));
      if (total == 0) {
        if (it != report.per_gender.end()) msg << "gender " << to_string(g) << " ";
        continue;
      }
      if (it == report.per_gender.end() || it->second.n != total || it->second.correct != ok ||
          it->second.rate != static_cast<double>(ok) / total)
        msg << "gender " << to_string(g) << " ";
    }
  }
  why = msg.str();
  return why.empty();
}

}  // namespace serlab::testkit
