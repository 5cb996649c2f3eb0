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

#include "serlab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace serlab::augment {

AugmentSpec AugmentSpec::reduced() const {
  AugmentSpec r = *this;
  r.max_freq_width = max_freq_width / 2;
  r.max_time_width = max_time_width / 2;
  r.rrc_freq_scale.lo = std::max(rrc_freq_scale.lo, 0.8);
  r.rrc_time_scale.lo = std::max(rrc_time_scale.lo, 0.8);
  r.strength = Strength::kReduced;
  return r;
}

void AugmentSpec::validate() const {
  auto check = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("augment: degenerate range ") + name);
  };
  check(noise_snr_db, "noise_snr_db");
  check(gain_db, "gain_db");
  check(speed, "speed");
  check(stretch, "stretch");
  check(rrc_freq_scale, "rrc_freq_scale");
  check(rrc_time_scale, "rrc_time_scale");
  if (speed.lo <= 0 || stretch.lo <= 0) throw std::invalid_argument("augment: factors must be positive");
  if (rrc_freq_scale.lo <= 0 || rrc_freq_scale.hi > 1 || rrc_time_scale.lo <= 0 || rrc_time_scale.hi > 1) {
    throw std::invalid_argument("augment: crop scales must lie in (0, 1]");
  }
  if (mixup_max_ratio < 0 || mixup_max_ratio > 1) {
    throw std::invalid_argument("augment: mixup_max_ratio must be in [0, 1]");
  }
  if (polarity_prob < 0 || polarity_prob > 1) throw std::invalid_argument("augment: polarity_prob must be in [0, 1]");
  if (n_freq_masks < 0 || n_time_masks < 0 || max_freq_width < 0 || max_time_width < 0) {
    throw std::invalid_argument("augment: mask counts and widths must be non-negative");
  }
}

double mean_power(const AudioClip& clip) {
  if (clip.samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : clip.samples) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(clip.samples.size());
}

NoiseOutcome add_noise_snr(const AudioClip& clip, double snr_db, RngStream& rng) {
  NoiseOutcome out{clip, false};
  const double p_signal = mean_power(clip);
  if (p_signal <= 0.0) {
    out.snr_undefined = true;
    return out;
  }
  std::vector<double> noise(clip.samples.size());
  double p_drawn = 0.0;
  for (auto& v : noise) {
    v = rng.normal();
    p_drawn += v * v;
  }
  p_drawn /= static_cast<double>(noise.size());
  const double p_target = p_signal / std::pow(10.0, snr_db / 10.0);
  // Scale the realized noise, not the distribution, so the SNR is exact.
  const double scale = p_drawn > 0 ? std::sqrt(p_target / p_drawn) : 0.0;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    out.clip.samples[i] = static_cast<float>(clip.samples[i] + scale * noise[i]);
  }
  return out;
}

AudioClip invert_polarity(const AudioClip& clip) {
  AudioClip out = clip;
  for (auto& s : out.samples) s = -s;
  return out;
}

GainOutcome apply_gain(const AudioClip& clip, double gain_db) {
  GainOutcome out{clip, 0.0};
  if (gain_db == 0.0) return out;
  const double g = std::pow(10.0, gain_db / 20.0);
  std::size_t clipped = 0;
  for (auto& s : out.clip.samples) {
    double v = s * g;
    if (v > 1.0 || v < -1.0) {
      ++clipped;
      v = std::clamp(v, -1.0, 1.0);
    }
    s = static_cast<float>(v);
  }
  if (!out.clip.samples.empty()) {
    out.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(out.clip.samples.size());
  }
  return out;
}

AudioClip speed_perturb(const AudioClip& clip, double factor, dsp::ResampleQuality quality) {
  if (!(factor > 0)) throw std::invalid_argument("speed_perturb: factor must be positive");
  if (factor == 1.0) return clip;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.samples.size()) / factor));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = dsp::resample_by_step(clip.samples, factor, out_len, quality);
  return out;
}

MelSpectrogram spectral_stretch(const MelSpectrogram& spec, double factor) {
  if (!(factor > 0)) throw std::invalid_argument("spectral_stretch: factor must be positive");
  if (factor == 1.0) return spec;
  MelSpectrogram out = spec;
  const int f = spec.n_mels, t = spec.n_frames;
  const float shift = static_cast<float>(std::log10(factor) / 4.0);
  for (int m = 0; m < f; ++m) {
    const double src = m / factor;
    const auto lo = static_cast<int>(std::floor(src));
    const double frac = src - lo;
    for (int j = 0; j < t; ++j) {
      float v;
      if (lo >= f - 1) {
        v = (lo == f - 1 && frac == 0.0) ? spec.at(f - 1, j) : spec.floor_value;
      } else {
        const float a = spec.at(lo, j), b = spec.at(lo + 1, j);
        v = static_cast<float>(a + frac * (b - a));
      }
      out.at(m, j) = std::max(v - shift, spec.floor_value);
    }
  }
  return out;
}

MelSpectrogram spec_augment(const MelSpectrogram& spec, int n_freq_masks, int max_f,
                            int n_time_masks, int max_t, RngStream& rng) {
  if (max_f > spec.n_mels || max_t > spec.n_frames || max_f < 0 || max_t < 0) {
    throw std::invalid_argument("spec_augment: mask widths exceed spectrogram axes");
  }
  MelSpectrogram out = spec;
  if (n_freq_masks == 0 && n_time_masks == 0) return out;
  double sum = 0.0;
  for (float v : spec.values) sum += v;
  const auto fill = static_cast<float>(sum / static_cast<double>(spec.values.size()));
  for (int i = 0; i < n_freq_masks; ++i) {
    const auto w = static_cast<int>(rng.uniform_int_closed(0, max_f));
    const auto start = static_cast<int>(rng.uniform_int_closed(0, spec.n_mels - w));
    for (int m = start; m < start + w; ++m) {
      for (int j = 0; j < spec.n_frames; ++j) out.at(m, j) = fill;
    }
  }
  for (int i = 0; i < n_time_masks; ++i) {
    const auto w = static_cast<int>(rng.uniform_int_closed(0, max_t));
    const auto start = static_cast<int>(rng.uniform_int_closed(0, spec.n_frames - w));
    for (int m = 0; m < spec.n_mels; ++m) {
      for (int j = start; j < start + w; ++j) out.at(m, j) = fill;
    }
  }
  return out;
}

MelSpectrogram mixup(const MelSpectrogram& a, const MelSpectrogram& b, double ratio) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("mixup: shape mismatch (" + std::to_string(a.n_mels) + "x" +
                                std::to_string(a.n_frames) + " vs " + std::to_string(b.n_mels) +
                                "x" + std::to_string(b.n_frames) + ")");
  }
  if (ratio < 0 || ratio > 1) throw std::invalid_argument("mixup: ratio must be in [0, 1]");
  if (ratio == 0.0) return a;
  if (ratio == 1.0) return b;
  MelSpectrogram out = a;
  const double wa = 1.0 - ratio, wb = ratio;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    // Normalized values v map to log10 power 4v - 4.
    const double la = 4.0 * a.values[i] - 4.0, lb = 4.0 * b.values[i] - 4.0;
    const double hi = std::max(la, lb);
    const double mixed = hi + std::log10(wa * std::pow(10.0, la - hi) + wb * std::pow(10.0, lb - hi));
    out.values[i] = static_cast<float>((mixed + 4.0) / 4.0);
  }
  out.floor_value = std::min(a.floor_value, b.floor_value);
  return out;
}

MelSpectrogram random_resize_crop(const MelSpectrogram& spec, Range freq_scale, Range time_scale,
                                  RngStream& rng) {
  const int f = spec.n_mels, t = spec.n_frames;
  const double sf = rng.uniform(freq_scale.lo, freq_scale.hi);
  const double st = rng.uniform(time_scale.lo, time_scale.hi);
  const int h = std::clamp(static_cast<int>(std::lround(f * sf)), 1, f);
  const int w = std::clamp(static_cast<int>(std::lround(t * st)), 1, t);
  const auto y0 = static_cast<int>(rng.uniform_int_closed(0, f - h));
  const auto x0 = static_cast<int>(rng.uniform_int_closed(0, t - w));
  if (h == f && w == t) return spec;

  MelSpectrogram out = spec;
  auto coord = [](int i, int out_len, int in_len) {
    return out_len > 1 ? static_cast<double>(i) * (in_len - 1) / (out_len - 1) : 0.0;
  };
  for (int i = 0; i < f; ++i) {
    const double sy = coord(i, f, h);
    const int yi = std::min(static_cast<int>(sy), h - 1);
    const int yn = std::min(yi + 1, h - 1);
    const double fy = sy - yi;
    for (int j = 0; j < t; ++j) {
      const double sx = coord(j, t, w);
      const int xi = std::min(static_cast<int>(sx), w - 1);
      const int xn = std::min(xi + 1, w - 1);
      const double fx = sx - xi;
      const double a = spec.at(y0 + yi, x0 + xi), b = spec.at(y0 + yi, x0 + xn);
      const double c = spec.at(y0 + yn, x0 + xi), d = spec.at(y0 + yn, x0 + xn);
      const double top = a + fx * (b - a);
      const double bottom = c + fx * (d - c);
      out.at(i, j) = static_cast<float>(top + fy * (bottom - top));
    }
  }
  return out;
}

Pipeline parse_pipeline(std::string_view name) {
  if (name == "cl_adapt") return Pipeline::kClAdapt;
  if (name == "byol_ssl") return Pipeline::kByolSsl;
  if (name == "byol_supervised") return Pipeline::kByolSupervised;
  if (name == "baseline") return Pipeline::kBaseline;
  throw std::invalid_argument("unknown augmentation pipeline '" + std::string(name) + "'");
}

std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::kClAdapt: return "cl_adapt";
    case Pipeline::kByolSsl: return "byol_ssl";
    case Pipeline::kByolSupervised: return "byol_supervised";
    case Pipeline::kBaseline: return "baseline";
  }
  return "?";
}

AudioClip augment_waveform(const AudioClip& clip, const AugmentSpec& spec, RngStream& rng) {
  AudioClip x = add_noise_snr(clip, rng.uniform(spec.noise_snr_db.lo, spec.noise_snr_db.hi), rng).clip;
  if (rng.bernoulli(spec.polarity_prob)) x = invert_polarity(x);
  x = apply_gain(x, rng.uniform(spec.gain_db.lo, spec.gain_db.hi)).clip;
  return speed_perturb(x, rng.uniform(spec.speed.lo, spec.speed.hi));
}

MelSpectrogram augment_spectrogram(const MelSpectrogram& mel, const AugmentSpec& spec,
                                   RngStream& rng) {
  MelSpectrogram x = spectral_stretch(mel, rng.uniform(spec.stretch.lo, spec.stretch.hi));
  return spec_augment(x, spec.n_freq_masks, std::min(spec.max_freq_width, x.n_mels),
                      spec.n_time_masks, std::min(spec.max_time_width, x.n_frames), rng);
}

std::vector<MelSpectrogram> make_views(const AudioClip& clip, Pipeline pipeline,
                                       const AugmentSpec& spec,
                                       dsp::LogMelExtractor& extractor, RngStream& rng) {
  auto augmented = [&](RngStream r) {
    return augment_spectrogram(extractor(augment_waveform(clip, spec, r)), spec, r);
  };
  switch (pipeline) {
    case Pipeline::kClAdapt:
      return {extractor(clip), augmented(rng.split("view", 1))};
    case Pipeline::kBaseline:
      return {augmented(rng.split("view", 0))};
    default:
      throw std::invalid_argument("make_views: pipeline " + std::string(to_string(pipeline)) +
                                  " operates on spectrograms, not waveforms");
  }
}

std::vector<MelSpectrogram> make_views(const MelSpectrogram& mel, Pipeline pipeline,
                                       const AugmentSpec& spec, RngStream& rng,
                                       const MelSpectrogram* mix_partner) {
  std::vector<MelSpectrogram> views;
  switch (pipeline) {
    case Pipeline::kByolSsl:
      for (int v = 0; v < 2; ++v) {
        RngStream r = rng.split("view", static_cast<std::uint64_t>(v));
        MelSpectrogram x = mel;
        if (mix_partner) x = mixup(x, *mix_partner, r.uniform(0.0, spec.mixup_max_ratio));
        x = spec_augment(x, spec.n_freq_masks, std::min(spec.max_freq_width, x.n_mels),
                         spec.n_time_masks, std::min(spec.max_time_width, x.n_frames), r);
        views.push_back(random_resize_crop(x, spec.rrc_freq_scale, spec.rrc_time_scale, r));
      }
      return views;
    case Pipeline::kByolSupervised: {
      const AugmentSpec weak = spec.strength == Strength::kReduced ? spec : spec.reduced();
      for (int v = 0; v < 3; ++v) {
        RngStream r = rng.split("view", static_cast<std::uint64_t>(v));
        MelSpectrogram x = spec_augment(mel, weak.n_freq_masks, std::min(weak.max_freq_width, mel.n_mels),
                                        weak.n_time_masks, std::min(weak.max_time_width, mel.n_frames), r);
        views.push_back(random_resize_crop(x, weak.rrc_freq_scale, weak.rrc_time_scale, r));
      }
      return views;
    }
    default:
      throw std::invalid_argument("make_views: pipeline " + std::string(to_string(pipeline)) +
                                  " operates on waveforms, not spectrograms");
  }
}

}  // namespace serlab::augment
