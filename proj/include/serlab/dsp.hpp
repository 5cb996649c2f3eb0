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

#include <complex>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace serlab {
class RngStream;
}

namespace serlab::dsp {

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Log-mel matrix stored mel-major: values[m * n_frames + t].
struct MelSpectrogram {
  int n_mels = 80;
  int n_frames = 0;
  int hop = 160;
  int source_rate = 16000;
  /// Lowest value the dynamic-range clamp allows; used as the padding value.
  float floor_value = -1.5f;
  std::vector<float> values;

  float& at(int mel, int frame) {
    return values[static_cast<std::size_t>(mel) * n_frames + frame];
  }
  float at(int mel, int frame) const {
    return values[static_cast<std::size_t>(mel) * n_frames + frame];
  }
  bool same_shape(const MelSpectrogram& o) const {
    return n_mels == o.n_mels && n_frames == o.n_frames;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

AudioClip load_audio(const std::filesystem::path& path);
AudioClip decode_wav(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_wav(const AudioClip& clip,
                                      WavEncoding encoding = WavEncoding::kPcm16);
void save_wav(const std::filesystem::path& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::kPcm16);

enum class ResampleQuality { kSinc, kLinear };

AudioClip resample(const AudioClip& clip, int target_rate,
                   ResampleQuality quality = ResampleQuality::kSinc);

/// Band-limited interpolation of `input` read at a uniform rate `step`
/// (source samples per output sample), producing `out_len` samples.
std::vector<float> resample_by_step(std::span<const float> input, double step,
                                    std::size_t out_len,
                                    ResampleQuality quality);

struct FrontEndParams {
  int sample_rate = 16000;
  int n_fft = 400;
  int hop = 160;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double power_floor = 1e-10;
  double dynamic_range = 8.0;
};

/// Mixed-radix complex FFT plan (radix 2/3/4/5 butterflies plus a generic
/// prime fallback). Immutable after construction.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  std::size_t size() const { return n_; }
  void forward(std::span<const std::complex<double>> in,
               std::span<std::complex<double>> out) const;

 private:
  void recurse(const std::complex<double>* in, std::complex<double>* out,
               std::size_t n, std::size_t stride, std::size_t level) const;
  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<std::complex<double>> twiddles_;
  mutable std::vector<std::complex<double>> scratch_;
};

std::vector<std::complex<double>> dft_reference(
    std::span<const std::complex<double>> in);

/// Slaney-style triangular filterbank, rows = mel bins, cols = n_fft/2 + 1.
std::vector<double> mel_filterbank(const FrontEndParams& p);
double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Center frequency (Hz) of each mel filter.
std::vector<double> mel_center_frequencies(const FrontEndParams& p);

/// Pre-log mel power (n_mels x n_frames, mel-major).
std::vector<double> mel_power(const AudioClip& clip,
                              const FrontEndParams& p = {});

/// Feature extractor with cached window, filterbank and FFT plan. Not
/// thread-safe; use one per thread.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(FrontEndParams p = {});
  const FrontEndParams& params() const { return p_; }
  std::vector<double> power(const AudioClip& clip);
  MelSpectrogram operator()(const AudioClip& clip);

 private:
  struct Filter {
    std::size_t start = 0;
    std::vector<double> weights;
  };
  FrontEndParams p_;
  std::vector<double> window_;
  std::vector<Filter> filters_;
  FftPlan plan_;
};

MelSpectrogram log_mel(const AudioClip& clip, const FrontEndParams& p = {});

enum class CropMode { kTrain, kEval };

/// Crops (random start in train mode, centered in eval mode) or right-pads
/// with the floor value to exactly target_frames frames.
MelSpectrogram crop_or_pad(const MelSpectrogram& spec, int target_frames,
                           CropMode mode, RngStream* rng = nullptr);

/// Simple binary matrix: magic "SMAT", rows u32, cols u32, f32 LE values.
void write_matrix(const std::filesystem::path& path, int rows, int cols,
                  std::span<const float> values);
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;
};
Matrix read_matrix(const std::filesystem::path& path);

}  // namespace serlab::dsp
