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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

#include "serlab/dsp.hpp"
#include "serlab/rng.hpp"

namespace serlab::dsp {

namespace {

constexpr int kSincZeroCrossings = 16;
constexpr int kSincOversample = 512;
constexpr double kSincRolloff = 0.95;

const std::vector<double>& sinc_table() {
  static const std::vector<double> table = [] {
    const int n = kSincZeroCrossings * kSincOversample + 2;
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
      double x = static_cast<double>(i) / kSincOversample;
      double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      double w = x >= kSincZeroCrossings
                     ? 0.0
                     : 0.5 * (1.0 + std::cos(std::numbers::pi * x / kSincZeroCrossings));
      t[i] = sinc * w;
    }
    return t;
  }();
  return table;
}

inline double sinc_kernel(double x) {
  const auto& t = sinc_table();
  double u = std::abs(x) * kSincOversample;
  auto idx = static_cast<std::size_t>(u);
  if (idx + 1 >= t.size()) return 0.0;
  double frac = u - static_cast<double>(idx);
  return t[idx] + frac * (t[idx + 1] - t[idx]);
}

}  // namespace

std::vector<float> resample_by_step(std::span<const float> input, double step,
                                    std::size_t out_len,
                                    ResampleQuality quality) {
  std::vector<float> out(out_len, 0.0f);
  const auto n_in = static_cast<std::int64_t>(input.size());
  if (n_in == 0) return out;
  if (quality == ResampleQuality::kLinear) {
    for (std::size_t n = 0; n < out_len; ++n) {
      double t = static_cast<double>(n) * step;
      auto i = static_cast<std::int64_t>(std::floor(t));
      double frac = t - static_cast<double>(i);
      double a = (i >= 0 && i < n_in) ? input[i] : 0.0;
      double b = (i + 1 >= 0 && i + 1 < n_in) ? input[i + 1] : 0.0;
      out[n] = static_cast<float>(a + frac * (b - a));
    }
    return out;
  }
  const double cutoff = kSincRolloff * std::min(1.0, 1.0 / step);
  const double half_width = kSincZeroCrossings / cutoff;
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) * step;
    auto lo = static_cast<std::int64_t>(std::ceil(t - half_width));
    auto hi = static_cast<std::int64_t>(std::floor(t + half_width));
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min<std::int64_t>(hi, n_in - 1);
    double acc = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
      acc += input[k] * sinc_kernel(cutoff * (t - static_cast<double>(k)));
    }
    out[n] = static_cast<float>(acc * cutoff);
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int target_rate,
                   ResampleQuality quality) {
  if (target_rate <= 0) throw std::invalid_argument("resample: target_rate must be positive");
  if (target_rate == clip.sample_rate) return clip;
  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples = resample_by_step(clip.samples, 1.0 / ratio, out_len, quality);
  return out;
}

double hz_to_mel(double hz) {
  // Slaney scale: linear below 1 kHz, logarithmic above.
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz >= min_log_hz) return min_log_mel + std::log(hz / min_log_hz) / logstep;
  return hz / f_sp;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel >= min_log_mel) return min_log_hz * std::exp(logstep * (mel - min_log_mel));
  return f_sp * mel;
}

namespace {

std::vector<double> mel_points_hz(const FrontEndParams& p) {
  const double lo = hz_to_mel(p.fmin), hi = hz_to_mel(p.fmax);
  std::vector<double> pts(p.n_mels + 2);
  for (int i = 0; i < p.n_mels + 2; ++i) {
    pts[i] = mel_to_hz(lo + (hi - lo) * i / (p.n_mels + 1));
  }
  return pts;
}

}  // namespace

std::vector<double> mel_center_frequencies(const FrontEndParams& p) {
  auto pts = mel_points_hz(p);
  return {pts.begin() + 1, pts.end() - 1};
}

std::vector<double> mel_filterbank(const FrontEndParams& p) {
  const int n_bins = p.n_fft / 2 + 1;
  std::vector<double> fft_freqs(n_bins);
  for (int k = 0; k < n_bins; ++k) {
    fft_freqs[k] = static_cast<double>(k) * p.sample_rate / p.n_fft;
  }
  auto pts = mel_points_hz(p);
  std::vector<double> fb(static_cast<std::size_t>(p.n_mels) * n_bins, 0.0);
  for (int m = 0; m < p.n_mels; ++m) {
    const double lower_width = pts[m + 1] - pts[m];
    const double upper_width = pts[m + 2] - pts[m + 1];
    const double enorm = 2.0 / (pts[m + 2] - pts[m]);
    for (int k = 0; k < n_bins; ++k) {
      double lower = (fft_freqs[k] - pts[m]) / lower_width;
      double upper = (pts[m + 2] - fft_freqs[k]) / upper_width;
      double w = std::max(0.0, std::min(lower, upper));
      fb[static_cast<std::size_t>(m) * n_bins + k] = w * enorm;
    }
  }
  return fb;
}

LogMelExtractor::LogMelExtractor(FrontEndParams p) : p_(p), plan_(p.n_fft) {
  if (p_.n_fft <= 0 || p_.hop <= 0 || p_.n_mels <= 0) {
    throw std::invalid_argument("LogMelExtractor: invalid parameters");
  }
  window_.resize(p_.n_fft);
  for (int n = 0; n < p_.n_fft; ++n) {
    window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / p_.n_fft);
  }
  const int n_bins = p_.n_fft / 2 + 1;
  auto fb = mel_filterbank(p_);
  filters_.resize(p_.n_mels);
  for (int m = 0; m < p_.n_mels; ++m) {
    const double* row = fb.data() + static_cast<std::size_t>(m) * n_bins;
    int first = 0, last = n_bins - 1;
    while (first < n_bins && row[first] == 0.0) ++first;
    while (last >= first && row[last] == 0.0) --last;
    filters_[m].start = static_cast<std::size_t>(first);
    if (last >= first) filters_[m].weights.assign(row + first, row + last + 1);
  }
}

std::vector<double> LogMelExtractor::power(const AudioClip& clip) {
  if (clip.sample_rate != p_.sample_rate) {
    throw std::invalid_argument("log_mel: clip must be at " +
                                std::to_string(p_.sample_rate) + " Hz, got " +
                                std::to_string(clip.sample_rate));
  }
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  if (n < p_.n_fft) {
    throw std::invalid_argument("log_mel: clip of " + std::to_string(n) +
                                " samples is shorter than one window (" +
                                std::to_string(p_.n_fft) + ")");
  }
  const int pad = p_.n_fft / 2;
  const int n_frames = static_cast<int>(n / p_.hop);
  const int n_bins = p_.n_fft / 2 + 1;
  auto sample_at = [&](std::int64_t i) -> double {
    // Reflect padding without edge repetition.
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return clip.samples[static_cast<std::size_t>(i)];
  };
  std::vector<std::complex<double>> frame(p_.n_fft), spectrum(p_.n_fft);
  std::vector<double> pow_a(n_bins), pow_b(n_bins);
  std::vector<double> out(static_cast<std::size_t>(p_.n_mels) * n_frames);
  auto emit = [&](int f, const std::vector<double>& pow) {
    for (int m = 0; m < p_.n_mels; ++m) {
      const auto& filt = filters_[m];
      double acc = 0.0;
      for (std::size_t j = 0; j < filt.weights.size(); ++j) {
        acc += filt.weights[j] * pow[filt.start + j];
      }
      out[static_cast<std::size_t>(m) * n_frames + f] = acc;
    }
  };
  // Two real frames per complex transform: frame f in the real part, f + 1 in
  // the imaginary part, separated by conjugate symmetry.
  const int N = p_.n_fft;
  for (int f = 0; f < n_frames; f += 2) {
    const bool pair = f + 1 < n_frames;
    const std::int64_t start = static_cast<std::int64_t>(f) * p_.hop - pad;
    for (int i = 0; i < N; ++i) {
      const double b = pair ? sample_at(start + p_.hop + i) * window_[i] : 0.0;
      frame[i] = {sample_at(start + i) * window_[i], b};
    }
    plan_.forward(frame, spectrum);
    for (int k = 0; k < n_bins; ++k) {
      const std::complex<double> z = spectrum[k];
      const std::complex<double> zc = std::conj(spectrum[(N - k) % N]);
      pow_a[k] = std::norm(0.5 * (z + zc));
      pow_b[k] = std::norm(0.5 * (z - zc));
    }
    emit(f, pow_a);
    if (pair) emit(f + 1, pow_b);
  }
  return out;
}

MelSpectrogram LogMelExtractor::operator()(const AudioClip& clip) {
  auto pow = power(clip);
  MelSpectrogram spec;
  spec.n_mels = p_.n_mels;
  spec.n_frames = static_cast<int>(pow.size() / p_.n_mels);
  spec.hop = p_.hop;
  spec.source_rate = p_.sample_rate;
  spec.values.resize(pow.size());
  const double log_floor = std::log10(p_.power_floor);
  double max_log = log_floor;
  for (auto& v : pow) {
    v = std::log10(std::max(v, p_.power_floor));
    max_log = std::max(max_log, v);
  }
  const double clamp_lo = std::max(log_floor, max_log - p_.dynamic_range);
  for (std::size_t i = 0; i < pow.size(); ++i) {
    spec.values[i] = static_cast<float>((std::max(pow[i], clamp_lo) + 4.0) / 4.0);
  }
  spec.floor_value = static_cast<float>((clamp_lo + 4.0) / 4.0);
  return spec;
}

std::vector<double> mel_power(const AudioClip& clip, const FrontEndParams& p) {
  LogMelExtractor ex(p);
  return ex.power(clip);
}

MelSpectrogram log_mel(const AudioClip& clip, const FrontEndParams& p) {
  LogMelExtractor ex(p);
  return ex(clip);
}

MelSpectrogram crop_or_pad(const MelSpectrogram& spec, int target_frames,
                           CropMode mode, RngStream* rng) {
  if (target_frames <= 0) throw std::invalid_argument("crop_or_pad: target_frames must be positive");
  if (spec.n_frames == target_frames) return spec;
  MelSpectrogram out = spec;
  out.n_frames = target_frames;
  out.values.assign(static_cast<std::size_t>(spec.n_mels) * target_frames, spec.floor_value);
  int start = 0;
  int copy = std::min(spec.n_frames, target_frames);
  if (spec.n_frames > target_frames) {
    const int slack = spec.n_frames - target_frames;
    if (mode == CropMode::kTrain) {
      if (!rng) throw std::invalid_argument("crop_or_pad: train mode needs an rng");
      start = static_cast<int>(rng->uniform_int(static_cast<std::uint64_t>(slack) + 1));
    } else {
      start = slack / 2;
    }
  }
  for (int m = 0; m < spec.n_mels; ++m) {
    std::copy_n(spec.values.begin() + static_cast<std::ptrdiff_t>(m) * spec.n_frames + start, copy,
                out.values.begin() + static_cast<std::ptrdiff_t>(m) * target_frames);
  }
  return out;
}

void write_matrix(const std::filesystem::path& path, int rows, int cols,
                  std::span<const float> values) {
  if (static_cast<std::size_t>(rows) * cols != values.size()) {
    throw std::invalid_argument("write_matrix: shape does not match value count");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  out.write("SMAT", 4);
  put_u32(static_cast<std::uint32_t>(rows));
  put_u32(static_cast<std::uint32_t>(cols));
  for (float f : values) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(u);
  }
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  auto get_u32 = [&]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::invalid_argument("matrix: truncated file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  };
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "SMAT", 4) != 0) {
    throw std::invalid_argument("matrix: bad magic in " + path.string());
  }
  Matrix m;
  m.rows = static_cast<int>(get_u32());
  m.cols = static_cast<int>(get_u32());
  m.values.resize(static_cast<std::size_t>(m.rows) * m.cols);
  for (auto& v : m.values) {
    std::uint32_t u = get_u32();
    std::memcpy(&v, &u, 4);
  }
  return m;
}

}  // namespace serlab::dsp
