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

#include "serlab/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace serlab::eval {

namespace {

std::string class_name(int c) {
  if (c >= 0 && c < kNumEmotions) return std::string(display_name(static_cast<Emotion>(c)));
  return "class" + std::to_string(c);
}

std::string gender_key(const std::vector<Gender>& genders, std::size_t i) {
  if (genders.empty()) return "unknown";
  return std::string(to_string(genders[i]));
}

}  // namespace

EvalReport compute_metrics(const std::vector<int>& truths, const std::vector<int>& predictions,
                           const std::vector<Gender>& genders, int n_classes) {
  if (truths.size() != predictions.size()) {
    throw std::invalid_argument("compute_metrics: " + std::to_string(truths.size()) + " truths vs " +
                                std::to_string(predictions.size()) + " predictions");
  }
  if (truths.empty()) throw std::invalid_argument("compute_metrics: empty input");
  if (!genders.empty() && genders.size() != truths.size()) {
    throw std::invalid_argument("compute_metrics: genders not aligned with labels");
  }
  if (n_classes < 1) throw std::invalid_argument("compute_metrics: n_classes must be positive");
  const auto k = static_cast<std::size_t>(n_classes);
  EvalReport r;
  r.n_samples = static_cast<std::int64_t>(truths.size());
  r.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
      throw std::invalid_argument("compute_metrics: label out of range at index " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    if (t == p) ++correct;
    auto& g = r.per_gender[gender_key(genders, i)];
    ++g.n;
    if (t == p) ++g.correct;
  }
  for (auto& [name, g] : r.per_gender) g.rate = static_cast<double>(g.correct) / static_cast<double>(g.n);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truths.size());

  r.per_class_recall.assign(k, 0.0);
  r.per_class_precision.assign(k, 0.0);
  r.per_class_f1.assign(k, 0.0);
  double f1_sum = 0.0, recall_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t support = 0, predicted = 0;
    for (std::size_t j = 0; j < k; ++j) {
      support += r.confusion[c][j];
      predicted += r.confusion[j][c];
    }
    const std::int64_t tp = r.confusion[c][c];
    const std::int64_t fp = predicted - tp, fn = support - tp;
    if (support == 0) {
      r.zero_support.push_back(static_cast<int>(c));
      std::cerr << "warning: class '" << class_name(static_cast<int>(c))
                << "' has no truth samples; its recall and F1 count as 0\n";
    } else {
      r.per_class_recall[c] = static_cast<double>(tp) / static_cast<double>(support);
    }
    if (predicted > 0) r.per_class_precision[c] = static_cast<double>(tp) / static_cast<double>(predicted);
    if (support > 0 && tp > 0) r.per_class_f1[c] = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    f1_sum += r.per_class_f1[c];
    recall_sum += r.per_class_recall[c];
  }
  r.macro_f1 = f1_sum / static_cast<double>(k);
  r.uar = recall_sum / static_cast<double>(k);
  return r;
}

std::vector<std::vector<double>> confusion_delta_exact(const std::vector<ConfusionMatrix>& a,
                                                       const std::vector<ConfusionMatrix>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("confusion_delta: empty confusion list");
  if (a.size() != b.size()) {
    throw std::invalid_argument("confusion_delta: fold count mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  const std::size_t k = a[0].size();
  auto check = [k](const ConfusionMatrix& m) {
    if (m.size() != k) throw std::invalid_argument("confusion_delta: shape mismatch");
    for (const auto& row : m)
      if (row.size() != k) throw std::invalid_argument("confusion_delta: shape mismatch");
  };
  std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
  for (std::size_t f = 0; f < a.size(); ++f) {
    check(a[f]);
    check(b[f]);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) out[i][j] += static_cast<double>(a[f][i][j] - b[f][i][j]);
  }
  for (auto& row : out)
    for (auto& v : row) v /= static_cast<double>(a.size());
  return out;
}

std::vector<std::vector<std::int64_t>> confusion_delta(const std::vector<ConfusionMatrix>& a,
                                                       const std::vector<ConfusionMatrix>& b) {
  const auto exact = confusion_delta_exact(a, b);
  std::vector<std::vector<std::int64_t>> out(exact.size());
  for (std::size_t i = 0; i < exact.size(); ++i)
    for (double v : exact[i]) out[i].push_back(static_cast<std::int64_t>(std::llround(v)));
  return out;
}

GenderReport gender_report(const std::vector<int>& truths, const std::vector<int>& predictions,
                           const std::vector<Gender>& genders, int n_classes) {
  if (genders.size() != truths.size()) throw std::invalid_argument("gender_report: genders not aligned with labels");
  const EvalReport base = compute_metrics(truths, predictions, genders, n_classes);
  GenderReport out;
  out.groups = base.per_gender;
  std::map<std::string, std::vector<std::int64_t>> support, hits;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const std::string key = gender_key(genders, i);
    auto& s = support[key];
    auto& h = hits[key];
    s.resize(static_cast<std::size_t>(n_classes), 0);
    h.resize(static_cast<std::size_t>(n_classes), 0);
    ++s[static_cast<std::size_t>(truths[i])];
    if (truths[i] == predictions[i]) ++h[static_cast<std::size_t>(truths[i])];
  }
  for (const auto& [key, s] : support) {
    std::vector<double> recall(s.size(), 0.0);
    for (std::size_t c = 0; c < s.size(); ++c)
      if (s[c] > 0) recall[c] = static_cast<double>(hits[key][c]) / static_cast<double>(s[c]);
    out.per_class_recall[key] = std::move(recall);
  }
  std::int64_t lo = 0, hi = 0;
  for (const auto& [key, g] : out.groups) {
    if (g.n == 0) continue;
    lo = lo == 0 ? g.n : std::min(lo, g.n);
    hi = std::max(hi, g.n);
  }
  out.imbalance_ratio = lo > 0 ? static_cast<double>(hi) / static_cast<double>(lo) : 1.0;
  return out;
}

EvalReport aggregate_runs(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("aggregate_runs: need at least 2 reports for a std");
  auto stats = [&](auto getter) {
    double mean = 0.0;
    for (const auto& r : reports) mean += getter(r);
    mean /= static_cast<double>(reports.size());
    double ss = 0.0;
    for (const auto& r : reports) ss += (getter(r) - mean) * (getter(r) - mean);
    return MeanStd{mean, std::sqrt(ss / static_cast<double>(reports.size() - 1))};
  };
  EvalReport out;
  out.n_runs = static_cast<std::int64_t>(reports.size());
  out.aggregate["accuracy"] = stats([](const EvalReport& r) { return r.accuracy; });
  out.aggregate["macro_f1"] = stats([](const EvalReport& r) { return r.macro_f1; });
  out.aggregate["uar"] = stats([](const EvalReport& r) { return r.uar; });
  out.accuracy = out.aggregate["accuracy"].mean;
  out.macro_f1 = out.aggregate["macro_f1"].mean;
  out.uar = out.aggregate["uar"].mean;

  const std::size_t k = reports[0].confusion.size();
  out.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  out.per_class_recall.assign(k, 0.0);
  out.per_class_precision.assign(k, 0.0);
  out.per_class_f1.assign(k, 0.0);
  for (const auto& r : reports) {
    if (r.confusion.size() != k) throw std::invalid_argument("aggregate_runs: class count mismatch");
    out.n_samples += r.n_samples;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) out.confusion[i][j] += r.confusion[i][j];
      out.per_class_recall[i] += r.per_class_recall[i] / static_cast<double>(reports.size());
      out.per_class_precision[i] += r.per_class_precision[i] / static_cast<double>(reports.size());
      out.per_class_f1[i] += r.per_class_f1[i] / static_cast<double>(reports.size());
    }
    for (const auto& [key, g] : r.per_gender) {
      auto& dst = out.per_gender[key];
      dst.n += g.n;
      dst.correct += g.correct;
    }
  }
  for (auto& [key, g] : out.per_gender) g.rate = g.n ? static_cast<double>(g.correct) / static_cast<double>(g.n) : 0.0;
  for (const auto& [key, g] : out.per_gender) {
    out.aggregate["gender." + key] = stats([&key = key](const EvalReport& r) {
      auto it = r.per_gender.find(key);
      return it == r.per_gender.end() ? 0.0 : it->second.rate;
    });
  }
  return out;
}

std::string format_mean_std(double mean, double std, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << mean << "_(" << std << ")";
  return os.str();
}

namespace {

const std::vector<std::pair<std::string, std::string>>& table_rows() {
  static const std::vector<std::pair<std::string, std::string>> rows = {
      {"Accuracy", "accuracy"}, {"Macro F1", "macro_f1"}, {"UAR", "uar"}};
  return rows;
}

MeanStd metric_of(const EvalReport& r, const std::string& key) {
  if (auto it = r.aggregate.find(key); it != r.aggregate.end()) return it->second;
  if (key == "accuracy") return {r.accuracy, 0.0};
  if (key == "macro_f1") return {r.macro_f1, 0.0};
  return {r.uar, 0.0};
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_comparison_table(const std::vector<ModelColumn>& columns, int precision) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Metric"});
  for (const auto& c : columns) cells[0].push_back(c.name);
  for (const auto& [label, key] : table_rows()) {
    std::vector<std::string> row{label};
    for (const auto& c : columns) {
      const MeanStd ms = metric_of(c.report, key);
      row.push_back(format_mean_std(ms.mean, ms.std, precision));
    }
    cells.push_back(std::move(row));
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells[i].size(); ++j) os << (j ? "  " : "") << pad(cells[i][j], width[j], j > 0);
    os << '\n';
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

nlohmann::json comparison_json(const std::vector<ModelColumn>& columns) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& c : columns) {
    nlohmann::json col;
    for (const auto& [label, key] : table_rows()) {
      const MeanStd ms = metric_of(c.report, key);
      col[key] = {{"mean", ms.mean}, {"std", ms.std}, {"cell", format_mean_std(ms.mean, ms.std)}};
    }
    col["n_runs"] = c.report.n_runs;
    out[c.name] = col;
  }
  return out;
}

namespace {

template <typename Cell>
std::string render_grid(const std::vector<std::vector<std::int64_t>>& m, Cell cell) {
  std::vector<std::string> header{"Truth\\Pred"};
  for (std::size_t c = 0; c < m.size(); ++c) header.push_back(class_name(static_cast<int>(c)));
  std::vector<std::vector<std::string>> rows{header};
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::vector<std::string> row{class_name(static_cast<int>(i))};
    for (auto v : m[i]) row.push_back(cell(v));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "  " : "") << pad(row[j], width[j], j > 0);
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string render_confusion_delta(const std::vector<std::vector<std::int64_t>>& delta) {
  return render_grid(delta, [](std::int64_t v) { return v > 0 ? "+" + std::to_string(v) : std::to_string(v); });
}

std::string render_confusion(const ConfusionMatrix& m) {
  return render_grid(m, [](std::int64_t v) { return std::to_string(v); });
}

std::string render_gender_report(const GenderReport& report, const std::string& model_name) {
  std::ostringstream os;
  std::vector<std::string> parts;
  for (const auto& [key, g] : report.groups) {
    parts.push_back(std::to_string(static_cast<long>(std::lround(100.0 * g.rate))) + "% of " + key);
  }
  os << "The " << model_name << " correctly predicts ";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) os << (i + 1 == parts.size() ? " and " : ", ");
    os << parts[i];
  }
  os << " utterances.\n";
  for (const auto& [key, g] : report.groups) {
    os << "  " << pad(key, 8) << std::fixed << std::setprecision(1) << pad(std::to_string(g.correct), 6, true) << " / "
       << pad(std::to_string(g.n), 6) << " correct (" << 100.0 * g.rate << "%)\n";
  }
  os << "  imbalance ratio: " << std::setprecision(2) << report.imbalance_ratio << '\n';
  return os.str();
}

std::string render_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "n = " << r.n_samples << '\n';
  os << "Accuracy  " << r.accuracy << '\n';
  os << "Macro F1  " << r.macro_f1 << '\n';
  os << "UAR       " << r.uar << '\n';
  os << "per-class recall:";
  for (std::size_t c = 0; c < r.per_class_recall.size(); ++c)
    os << ' ' << class_name(static_cast<int>(c)) << '=' << r.per_class_recall[c];
  os << '\n' << render_confusion(r.confusion);
  for (int c : r.zero_support) os << "warning: class " << class_name(c) << " has zero support\n";
  return os.str();
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["uar"] = r.uar;
  j["n_samples"] = r.n_samples;
  j["n_runs"] = r.n_runs;
  j["confusion"] = r.confusion;
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.confusion.size(); ++c) classes.push_back(class_name(static_cast<int>(c)));
  j["classes"] = classes;
  j["per_class_recall"] = r.per_class_recall;
  j["per_class_precision"] = r.per_class_precision;
  j["per_class_f1"] = r.per_class_f1;
  j["zero_support"] = r.zero_support;
  nlohmann::json genders = nlohmann::json::object();
  for (const auto& [key, g] : r.per_gender) genders[key] = {{"n", g.n}, {"correct", g.correct}, {"rate", g.rate}};
  j["per_gender"] = genders;
  if (!r.aggregate.empty()) {
    nlohmann::json agg = nlohmann::json::object();
    for (const auto& [key, ms] : r.aggregate) agg[key] = {{"mean", ms.mean}, {"std", ms.std}};
    j["aggregate"] = agg;
  }
  return j;
}

nlohmann::json to_json(const GenderReport& report) {
  nlohmann::json j;
  for (const auto& [key, g] : report.groups) {
    j["groups"][key] = {{"n", g.n},
                        {"correct", g.correct},
                        {"rate", g.rate},
                        {"percent", 100.0 * g.rate},
                        {"per_class_recall", report.per_class_recall.at(key)}};
  }
  j["imbalance_ratio"] = report.imbalance_ratio;
  return j;
}

void write_embeddings_csv(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records,
                          const std::vector<float>& values, std::size_t dim) {
  if (values.size() != records.size() * dim) {
    throw std::invalid_argument("write_embeddings_csv: " + std::to_string(values.size()) + " values for " +
                                std::to_string(records.size()) + " records of dim " + std::to_string(dim));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "id,emotion,gender,language";
  for (std::size_t k = 0; k < dim; ++k) os << ",e" << k;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << r.id << ',' << (r.emotion ? std::string(to_string(*r.emotion)) : std::string()) << ','
       << to_string(r.gender) << ',' << r.language;
    for (std::size_t k = 0; k < dim; ++k) {
      auto res = std::to_chars(buf, buf + sizeof buf, values[i * dim + k]);
      os << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace serlab::eval
