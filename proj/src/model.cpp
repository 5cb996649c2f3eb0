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

#include "serlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "serlab/rng.hpp"

namespace serlab::model {

using tensor::Shape;

std::string to_string(BlockKind kind) {
  return kind == BlockKind::kFeedforwardResidual ? "feedforward_residual" : "single_head_attention";
}

BlockKind parse_block_kind(const std::string& text) {
  if (text == "feedforward_residual") return BlockKind::kFeedforwardResidual;
  if (text == "single_head_attention") return BlockKind::kSingleHeadAttention;
  throw std::invalid_argument("unknown block kind: " + text);
}

void EncoderConfig::validate() const {
  if (n_mels <= 0) throw std::invalid_argument("encoder: n_mels must be positive");
  if (d_model < 2 || d_model % 2 != 0) throw std::invalid_argument("encoder: d_model must be even and >= 2");
  if (n_blocks < 0) throw std::invalid_argument("encoder: n_blocks must be >= 0");
  if (conv_kernel <= 0 || conv_stride <= 0 || conv_padding < 0) {
    throw std::invalid_argument("encoder: invalid conv geometry");
  }
  if (max_frames < conv_kernel) throw std::invalid_argument("encoder: max_frames shorter than the conv kernel");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder: dropout must be in [0, 1)");
  if (n_classes < 2) throw std::invalid_argument("encoder: n_classes must be >= 2");
  if (projector_hidden <= 0 || projector_dim <= 0) throw std::invalid_argument("encoder: invalid projector size");
  if (conv_frames(static_cast<std::size_t>(max_frames)) > static_cast<std::size_t>(max_frames)) {
    throw std::invalid_argument("encoder: conv output longer than max_frames");
  }
}

std::size_t EncoderConfig::conv_frames(std::size_t input_frames) const {
  auto out = static_cast<std::int64_t>(input_frames);
  for (int layer = 0; layer < 2; ++layer) {
    out = (out + 2 * conv_padding - conv_kernel) / conv_stride + 1;
    if (out <= 0) return 0;
  }
  return static_cast<std::size_t>(out);
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"n_mels", n_mels},
          {"d_model", d_model},
          {"n_blocks", n_blocks},
          {"conv_kernel", conv_kernel},
          {"conv_stride", conv_stride},
          {"conv_padding", conv_padding},
          {"max_frames", max_frames},
          {"block", to_string(block)},
          {"mask_aware_pooling", mask_aware_pooling},
          {"dropout", dropout},
          {"n_classes", n_classes},
          {"projector_hidden", projector_hidden},
          {"projector_dim", projector_dim}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("encoder config must be an object");
  EncoderConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_mels") c.n_mels = value.get<int>();
    else if (key == "d_model") c.d_model = value.get<int>();
    else if (key == "n_blocks") c.n_blocks = value.get<int>();
    else if (key == "conv_kernel") c.conv_kernel = value.get<int>();
    else if (key == "conv_stride") c.conv_stride = value.get<int>();
    else if (key == "conv_padding") c.conv_padding = value.get<int>();
    else if (key == "max_frames") c.max_frames = value.get<int>();
    else if (key == "block") c.block = parse_block_kind(value.get<std::string>());
    else if (key == "mask_aware_pooling") c.mask_aware_pooling = value.get<bool>();
    else if (key == "dropout") c.dropout = value.get<double>();
    else if (key == "n_classes") c.n_classes = value.get<int>();
    else if (key == "projector_hidden") c.projector_hidden = value.get<int>();
    else if (key == "projector_dim") c.projector_dim = value.get<int>();
    else throw std::invalid_argument("encoder config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

template <typename T>
Tensor<T> positional_table(std::size_t positions, std::size_t channels) {
  if (channels < 4 || channels % 2 != 0) throw std::invalid_argument("positional_table: channels must be even and >= 4");
  const std::size_t half = channels / 2;
  const double increment = std::log(10000.0) / static_cast<double>(half - 1);
  Tensor<T> out({positions, channels});
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double angle = static_cast<double>(p) * std::exp(-increment * static_cast<double>(i));
      out.data[p * channels + i] = static_cast<T>(std::sin(angle));
      out.data[p * channels + half + i] = static_cast<T>(std::cos(angle));
    }
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> uniform_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor<T> t({rows, cols});
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

/// [rows, cols] with orthonormal columns (rows >= cols), else orthonormal rows.
template <typename T>
Tensor<T> orthonormal_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  const bool by_cols = rows >= cols;
  const std::size_t n_vec = by_cols ? cols : rows, len = by_cols ? rows : cols;
  std::vector<std::vector<double>> basis;
  while (basis.size() < n_vec) {
    std::vector<double> v(len);
    for (auto& x : v) x = rng.normal();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += v[i] * b[i];
        for (std::size_t i = 0; i < len; ++i) v[i] -= dot * b[i];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  Tensor<T> t({rows, cols});
  for (std::size_t k = 0; k < n_vec; ++k)
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t r = by_cols ? i : k, c = by_cols ? k : i;
      t.data[r * cols + c] = static_cast<T>(basis[k][i]);
    }
  return t;
}

template <typename T>
void add_linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out, RngStream& rng) {
  store.add(name + ".weight", uniform_matrix<T>(in, out, rng));
  store.add(name + ".bias", Tensor<T>({out}));
}

template <typename T>
Var<T> apply_linear(Tape<T>& tape, const ParameterStore<T>& p, const Var<T>& x, const std::string& name) {
  return tensor::linear(x, tape.parameter(p, name + ".weight"), tape.parameter(p, name + ".bias"));
}

std::string block_name(int i) { return "encoder.block" + std::to_string(i); }

}  // namespace

template <typename T>
void init_encoder(ParameterStore<T>& store, const EncoderConfig& config, RngStream& rng) {
  config.validate();
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto k = static_cast<std::size_t>(config.conv_kernel);
  RngStream conv_rng = rng.split("encoder.conv");
  std::size_t cin = static_cast<std::size_t>(config.n_mels);
  for (int layer = 1; layer <= 2; ++layer) {
    Tensor<T> w = orthonormal_matrix<T>(k * cin, d, conv_rng);
    w.shape = {k, cin, d};
    const std::string name = "encoder.conv" + std::to_string(layer);
    store.add(name + ".weight", std::move(w), true);
    store.add(name + ".bias", Tensor<T>({d}), true);
    cin = d;
  }
  store.add("encoder.pos_embedding",
            positional_table<T>(config.conv_frames(static_cast<std::size_t>(config.max_frames)), d), true);

  RngStream body_rng = rng.split("encoder.body");
  for (int b = 0; b < config.n_blocks; ++b) {
    const std::string name = block_name(b);
    if (config.block == BlockKind::kSingleHeadAttention) {
      store.add(name + ".attn_ln.gamma", Tensor<T>({d}, T(1)));
      store.add(name + ".attn_ln.beta", Tensor<T>({d}));
      for (const char* proj : {"q", "k", "v", "o"}) add_linear(store, name + ".attn." + proj, d, d, body_rng);
    }
    store.add(name + ".ln.gamma", Tensor<T>({d}, T(1)));
    store.add(name + ".ln.beta", Tensor<T>({d}));
    add_linear(store, name + ".fc1", d, 4 * d, body_rng);
    add_linear(store, name + ".fc2", 4 * d, d, body_rng);
  }
  store.add("encoder.ln_post.gamma", Tensor<T>({d}, T(1)));
  store.add("encoder.ln_post.beta", Tensor<T>({d}));
}

template <typename T>
void init_head(ParameterStore<T>& store, const EncoderConfig& config, RngStream& rng) {
  RngStream head_rng = rng.split("head");
  const auto d = static_cast<std::size_t>(config.d_model);
  add_linear(store, "head.fc1", d, d, head_rng);
  add_linear(store, "head.fc2", d, static_cast<std::size_t>(config.n_classes), head_rng);
}

template <typename T>
void init_byol_head(ParameterStore<T>& store, const EncoderConfig& config, HeadRole role, RngStream& rng) {
  const std::string prefix = role == HeadRole::kProjector ? "projector" : "predictor";
  RngStream r = rng.split(prefix);
  const auto in = static_cast<std::size_t>(role == HeadRole::kProjector ? config.d_model : config.projector_dim);
  add_linear(store, prefix + ".fc1", in, static_cast<std::size_t>(config.projector_hidden), r);
  add_linear(store, prefix + ".fc2", static_cast<std::size_t>(config.projector_hidden),
             static_cast<std::size_t>(config.projector_dim), r);
}

ParameterStore<float> make_classifier(const EncoderConfig& config, RngStream& rng) {
  ParameterStore<float> store;
  init_encoder(store, config, rng);
  init_head(store, config, rng);
  return store;
}

template <typename T>
Tensor<T> batch_input(std::span<const dsp::MelSpectrogram* const> specs, const EncoderConfig& config) {
  if (specs.empty()) throw std::invalid_argument("batch_input: empty batch");
  const auto frames = static_cast<std::size_t>(specs[0]->n_frames);
  const auto mels = static_cast<std::size_t>(config.n_mels);
  if (frames == 0 || frames > static_cast<std::size_t>(config.max_frames)) {
    throw std::invalid_argument("batch_input: " + std::to_string(frames) + " frames exceeds max_frames " +
                                std::to_string(config.max_frames));
  }
  Tensor<T> out({specs.size(), frames, mels});
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const auto& s = *specs[b];
    if (s.n_mels != config.n_mels) {
      throw std::invalid_argument("batch_input: expected " + std::to_string(config.n_mels) + " mel bins, got " +
                                  std::to_string(s.n_mels));
    }
    if (static_cast<std::size_t>(s.n_frames) != frames) throw std::invalid_argument("batch_input: ragged batch");
    T* dst = out.data.data() + b * frames * mels;
    for (std::size_t m = 0; m < mels; ++m)
      for (std::size_t t = 0; t < frames; ++t) dst[t * mels + m] = static_cast<T>(s.values[m * frames + t]);
  }
  return out;
}

template <typename T>
Var<T> encode(Tape<T>& tape, const ParameterStore<T>& p, const Var<T>& x, const EncoderConfig& config, bool train,
              RngStream* rng, std::span<const std::size_t> lengths) {
  (void)train;
  (void)rng;
  const auto& xs = x.shape();
  if (xs.size() != 3 || xs[2] != static_cast<std::size_t>(config.n_mels)) {
    throw std::invalid_argument("encode: expected [B, T, " + std::to_string(config.n_mels) + "] input, got " +
                                tensor::shape_string(xs));
  }
  if (xs[1] > static_cast<std::size_t>(config.max_frames)) {
    throw std::invalid_argument("encode: input longer than max_frames");
  }
  Var<T> h = x;
  for (const char* name : {"encoder.conv1", "encoder.conv2"}) {
    const std::string n = name;
    h = tensor::gelu(tensor::conv1d(h, tape.parameter(p, n + ".weight"), tape.parameter(p, n + ".bias"),
                                    config.conv_stride, config.conv_padding));
  }
  const std::size_t steps = h.shape()[1], d = h.shape()[2];
  const auto& table = p.value("encoder.pos_embedding");
  if (table.dim(0) < steps || table.dim(1) != d) {
    throw std::invalid_argument("encode: positional table " + tensor::shape_string(table.shape) +
                                " too small for " + tensor::shape_string(h.shape()));
  }
  Var<T> pos = tape.parameter(p, "encoder.pos_embedding");
  if (table.dim(0) != steps) {
    // prefix of the frozen table; the table itself never receives gradient
    Tensor<T> prefix({steps, d}, std::vector<T>(table.data.begin(), table.data.begin() + steps * d));
    pos = tape.constant(std::move(prefix));
  }
  h = tensor::add(h, pos);

  for (int b = 0; b < config.n_blocks; ++b) {
    const std::string name = block_name(b);
    if (config.block == BlockKind::kSingleHeadAttention) {
      Var<T> a = tensor::layer_norm(h, tape.parameter(p, name + ".attn_ln.gamma"),
                                    tape.parameter(p, name + ".attn_ln.beta"));
      Var<T> q = apply_linear(tape, p, a, name + ".attn.q");
      Var<T> k = apply_linear(tape, p, a, name + ".attn.k");
      Var<T> v = apply_linear(tape, p, a, name + ".attn.v");
      Var<T> scores = tensor::scale(tensor::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
      Var<T> ctx = tensor::bmm(tensor::softmax(scores), v);
      h = tensor::add(h, apply_linear(tape, p, ctx, name + ".attn.o"));
    }
    Var<T> f = tensor::layer_norm(h, tape.parameter(p, name + ".ln.gamma"), tape.parameter(p, name + ".ln.beta"));
    f = apply_linear(tape, p, tensor::gelu(apply_linear(tape, p, f, name + ".fc1")), name + ".fc2");
    h = tensor::add(h, f);
  }
  h = tensor::layer_norm(h, tape.parameter(p, "encoder.ln_post.gamma"), tape.parameter(p, "encoder.ln_post.beta"));

  if (config.mask_aware_pooling && !lengths.empty()) {
    std::vector<std::size_t> pooled(lengths.size());
    for (std::size_t i = 0; i < lengths.size(); ++i) pooled[i] = std::max<std::size_t>(1, config.conv_frames(lengths[i]));
    return tensor::mean_pool_time(h, std::span<const std::size_t>(pooled));
  }
  return tensor::mean_pool_time(h);
}

template <typename T>
Var<T> classify(Tape<T>& tape, const ParameterStore<T>& p, const Var<T>& emb, const EncoderConfig& config,
                bool train, RngStream* rng) {
  Var<T> h = tensor::relu(apply_linear(tape, p, emb, "head.fc1"));
  h = tensor::dropout(h, config.dropout, train, rng);
  return apply_linear(tape, p, h, "head.fc2");
}

template <typename T>
Var<T> project_predict(Tape<T>& tape, const ParameterStore<T>& p, const Var<T>& x, HeadRole role) {
  const std::string prefix = role == HeadRole::kProjector ? "projector" : "predictor";
  Var<T> h = tensor::batch_standardize(apply_linear(tape, p, x, prefix + ".fc1"));
  return apply_linear(tape, p, tensor::gelu(h), prefix + ".fc2");
}

Inference infer(const ParameterStore<float>& params, const EncoderConfig& config,
                std::span<const dsp::MelSpectrogram> specs, std::size_t batch_size,
                std::span<const std::size_t> lengths) {
  if (batch_size == 0) throw std::invalid_argument("infer: batch_size must be positive");
  const bool has_head = params.contains("head.fc2.weight");
  const auto d = static_cast<std::size_t>(config.d_model), c = static_cast<std::size_t>(config.n_classes);
  Inference out;
  out.embeddings = Tensor<float>({specs.size(), d});
  if (has_head) out.logits = Tensor<float>({specs.size(), c});
  for (std::size_t start = 0; start < specs.size(); start += batch_size) {
    const std::size_t end = std::min(specs.size(), start + batch_size);
    std::vector<const dsp::MelSpectrogram*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&specs[i]);
    Tape<float> tape(false);
    Var<float> x = tape.constant(batch_input<float>(ptrs, config));
    std::span<const std::size_t> lens;
    if (!lengths.empty()) lens = lengths.subspan(start, end - start);
    Var<float> emb = encode(tape, params, x, config, false, nullptr, lens);
    std::copy(emb.value().data.begin(), emb.value().data.end(), out.embeddings.data.begin() + start * d);
    if (has_head) {
      Var<float> logits = classify(tape, params, emb, config, false, nullptr);
      std::copy(logits.value().data.begin(), logits.value().data.end(), out.logits.data.begin() + start * c);
    }
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor<float>& logits) {
  if (logits.rank() != 2) throw std::invalid_argument("argmax_rows: expected a matrix");
  const std::size_t cols = logits.dim(1);
  std::vector<int> out(logits.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    const float* row = logits.data.data() + r * cols;
    out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
  }
  return out;
}

#define SERLAB_MODEL_INSTANTIATE(T)                                                                             \
  template Tensor<T> positional_table<T>(std::size_t, std::size_t);                                             \
  template void init_encoder<T>(ParameterStore<T>&, const EncoderConfig&, RngStream&);                          \
  template void init_head<T>(ParameterStore<T>&, const EncoderConfig&, RngStream&);                             \
  template void init_byol_head<T>(ParameterStore<T>&, const EncoderConfig&, HeadRole, RngStream&);              \
  template Tensor<T> batch_input<T>(std::span<const dsp::MelSpectrogram* const>, const EncoderConfig&);         \
  template Var<T> encode<T>(Tape<T>&, const ParameterStore<T>&, const Var<T>&, const EncoderConfig&, bool,      \
                            RngStream*, std::span<const std::size_t>);                                          \
  template Var<T> classify<T>(Tape<T>&, const ParameterStore<T>&, const Var<T>&, const EncoderConfig&, bool,    \
                              RngStream*);                                                                      \
  template Var<T> project_predict<T>(Tape<T>&, const ParameterStore<T>&, const Var<T>&, HeadRole);

SERLAB_MODEL_INSTANTIATE(float)
SERLAB_MODEL_INSTANTIATE(double)

#undef SERLAB_MODEL_INSTANTIATE

}  // namespace serlab::model
