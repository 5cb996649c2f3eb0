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

#include <string_view>
#include <vector>

#include "serlab/dsp.hpp"
#include "serlab/manifest.hpp"
#include "serlab/rng.hpp"

namespace serlab::augment {

using dsp::AudioClip;
using dsp::MelSpectrogram;

enum class Strength { kFull, kReduced };

struct AugmentSpec {
  Range noise_snr_db{10.0, 20.0};
  double polarity_prob = 0.5;
  Range gain_db{-6.0, 6.0};
  Range speed{0.9, 1.1};
  Range stretch{0.9, 1.1};
  int n_freq_masks = 2;
  int max_freq_width = 15;
  int n_time_masks = 2;
  int max_time_width = 50;
  double mixup_max_ratio = 0.4;
  Range rrc_freq_scale{0.6, 1.0};
  Range rrc_time_scale{0.6, 1.0};
  Strength strength = Strength::kFull;

  /// Half mask widths; crop-scale lower bound raised to 0.8.
  AugmentSpec reduced() const;
  void validate() const;
};

struct NoiseOutcome {
  AudioClip clip;
  /// Set when the input has zero power and the clip is returned unchanged.
  bool snr_undefined = false;
};

NoiseOutcome add_noise_snr(const AudioClip& clip, double snr_db, RngStream& rng);
AudioClip invert_polarity(const AudioClip& clip);

struct GainOutcome {
  AudioClip clip;
  double clipped_fraction = 0.0;
};
GainOutcome apply_gain(const AudioClip& clip, double gain_db);

/// Playback-rate change; output length round(len / factor), pitch follows.
AudioClip speed_perturb(const AudioClip& clip, double factor,
                        dsp::ResampleQuality quality = dsp::ResampleQuality::kSinc);

/// Rescales the mel axis by `factor` (content at bin b moves to b * factor).
/// Linear power is rescaled by 1/factor so total energy is conserved up to
/// content pushed past the top bin.
MelSpectrogram spectral_stretch(const MelSpectrogram& spec, double factor);

/// Masks contiguous bands with the spectrogram's mean value. Widths are drawn
/// from U{0..max}.
MelSpectrogram spec_augment(const MelSpectrogram& spec, int n_freq_masks, int max_f,
                            int n_time_masks, int max_t, RngStream& rng);

/// Mixes two spectrograms in the linear-power domain.
MelSpectrogram mixup(const MelSpectrogram& a, const MelSpectrogram& b, double ratio);

/// Crops a random sub-rectangle with independent axis scales drawn from the
/// given ranges and resizes it bilinearly back to the input shape.
MelSpectrogram random_resize_crop(const MelSpectrogram& spec, Range freq_scale,
                                  Range time_scale, RngStream& rng);

enum class Pipeline { kClAdapt, kByolSsl, kByolSupervised, kBaseline };
Pipeline parse_pipeline(std::string_view name);
std::string_view to_string(Pipeline p);

/// noise -> polarity -> gain -> speed, drawing every parameter from spec.
AudioClip augment_waveform(const AudioClip& clip, const AugmentSpec& spec, RngStream& rng);
/// spectral stretch -> SpecAugment.
MelSpectrogram augment_spectrogram(const MelSpectrogram& mel, const AugmentSpec& spec,
                                   RngStream& rng);

/// Waveform pipelines: cl_adapt yields (clean, augmented); baseline yields a
/// single augmented view. Other pipelines are rejected.
std::vector<MelSpectrogram> make_views(const AudioClip& clip, Pipeline pipeline,
                                       const AugmentSpec& spec,
                                       dsp::LogMelExtractor& extractor, RngStream& rng);

/// Spectrogram pipelines: byol_ssl yields two independently augmented views
/// (mixup with `mix_partner` when given, masking, random-resize-crop);
/// byol_supervised yields three reduced-strength views (masking and
/// random-resize-crop only). Waveform pipelines are rejected.
std::vector<MelSpectrogram> make_views(const MelSpectrogram& mel, Pipeline pipeline,
                                       const AugmentSpec& spec, RngStream& rng,
                                       const MelSpectrogram* mix_partner = nullptr);

double mean_power(const AudioClip& clip);

}  // namespace serlab::augment
