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
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "serlab/dsp.hpp"
#include "serlab/manifest.hpp"
#include "serlab/parallel.hpp"
#include "serlab/rng.hpp"

namespace serlab {

SynthCorpusConfig SynthCorpusConfig::defaults() {
  SynthCorpusConfig c;
  c.languages = {{"hrl", 0.0, 0.0}, {"lrl", 40.0, 3.0}};
  c.class_prosody[static_cast<int>(Emotion::kAngry)] = {{200, 240}, {25, 35}, {0.25, 0.35}, {6.0, 7.5}};
  c.class_prosody[static_cast<int>(Emotion::kHappy)] = {{210, 250}, {35, 50}, {0.16, 0.24}, {4.5, 6.0}};
  c.class_prosody[static_cast<int>(Emotion::kNeutral)] = {{140, 170}, {5, 12}, {0.10, 0.16}, {3.0, 4.0}};
  c.class_prosody[static_cast<int>(Emotion::kSad)] = {{120, 150}, {3, 8}, {0.05, 0.09}, {1.8, 2.8}};
  return c;
}

void SynthCorpusConfig::validate() const {
  auto check_range = [](const Range& r, const char* what) {
    if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("synth config: bad range for ") + what);
  };
  if (n_speakers <= 0 || utterances_per_speaker <= 0) {
    throw std::invalid_argument("synth config: speaker and utterance counts must be positive");
  }
  if (n_sessions <= 0 || n_sessions > n_speakers) {
    throw std::invalid_argument("synth config: n_sessions must be in [1, n_speakers]");
  }
  if (languages.empty()) throw std::invalid_argument("synth config: no language domains");
  if (sample_rate <= 0) throw std::invalid_argument("synth config: sample_rate must be positive");
  check_range(duration_s, "duration_s");
  check_range(background_snr_db, "background_snr_db");
  if (duration_s.lo <= 0) throw std::invalid_argument("synth config: durations must be positive");
  if (male_fraction < 0.0 || male_fraction > 1.0) {
    throw std::invalid_argument("synth config: male_fraction must be in [0, 1]");
  }
  for (const auto& p : class_prosody) {
    check_range(p.pitch_hz, "pitch_hz");
    check_range(p.pitch_var_hz, "pitch_var_hz");
    check_range(p.rms, "rms");
    check_range(p.mod_rate_hz, "mod_rate_hz");
    if (p.pitch_hz.lo <= 0 || p.rms.lo <= 0 || p.mod_rate_hz.lo <= 0) {
      throw std::invalid_argument("synth config: prosody values must be positive");
    }
  }
  for (int a = 0; a < kNumEmotions; ++a) {
    for (int b = a + 1; b < kNumEmotions; ++b) {
      const auto& x = class_prosody[a];
      const auto& y = class_prosody[b];
      auto same = [](const Range& r, const Range& s) { return r.lo == s.lo && r.hi == s.hi; };
      if (same(x.pitch_hz, y.pitch_hz) && same(x.pitch_var_hz, y.pitch_var_hz) &&
          same(x.rms, y.rms) && same(x.mod_rate_hz, y.mod_rate_hz)) {
        throw std::invalid_argument("synth config: classes " +
                                    std::string(to_string(static_cast<Emotion>(a))) + " and " +
                                    std::string(to_string(static_cast<Emotion>(b))) +
                                    " have identical prosody");
      }
    }
  }
}

namespace {

struct SpeakerTraits {
  double pitch_offset_hz;
  Gender gender;
};

std::vector<SpeakerTraits> speaker_traits(const SynthCorpusConfig& c, std::size_t domain) {
  const int n = c.n_speakers;
  const int n_male = static_cast<int>(std::lround(c.male_fraction * n));
  const int n_female = n - n_male;
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  RngStream rng = RngStream(c.seed).split("gender", domain);
  rng.shuffle(order.begin(), order.end());
  std::vector<SpeakerTraits> traits(n);
  for (int j = 0; j < n; ++j) {
    const int s = order[j];
    if (j < n_male) {
      traits[s] = {-c.speaker_offset_span_hz * (j + 1) / n_male, Gender::kMale};
    } else {
      const int f = j - n_male;
      traits[s] = {c.speaker_offset_span_hz * (f + 1) / n_female, Gender::kFemale};
    }
  }
  return traits;
}

// Vocal-tract resonances: harmonic amplitudes follow a fixed per-speaker
// envelope over frequency, so the timbre does not move with pitch.
struct Timbre {
  std::array<double, 3> center_hz;
  std::array<double, 3> bandwidth_hz;
  std::array<double, 3> gain;
  double tilt_db_per_octave;

  double amplitude(int harmonic, double f0) const {
    const double f = harmonic * f0;
    double a = 1.0;
    for (int j = 0; j < 3; ++j) {
      const double z = (f - center_hz[j]) / bandwidth_hz[j];
      a += gain[j] * std::exp(-0.5 * z * z);
    }
    return a / harmonic * std::pow(10.0, -tilt_db_per_octave * std::log2(static_cast<double>(harmonic)) / 20.0);
  }
};

Timbre speaker_timbre(const SynthCorpusConfig& c, std::size_t domain, int speaker) {
  RngStream rng = RngStream(c.seed).split("timbre", domain, static_cast<std::uint64_t>(speaker));
  Timbre t;
  t.center_hz = {rng.uniform(300.0, 900.0), rng.uniform(1000.0, 2200.0), rng.uniform(2400.0, 3600.0)};
  for (int j = 0; j < 3; ++j) {
    t.bandwidth_hz[j] = rng.uniform(80.0, 200.0) * (1.0 + j);
    t.gain[j] = rng.uniform(1.0, 4.0);
  }
  t.tilt_db_per_octave = c.languages[domain].tilt_db_per_octave;
  return t;
}

Emotion emotion_for(int speaker, int utterance) {
  return static_cast<Emotion>((speaker + utterance) % kNumEmotions);
}

}  // namespace

std::vector<float> synthesize_utterance(const SynthCorpusConfig& config, std::size_t domain,
                                        int speaker, int utterance, Emotion emotion,
                                        double duration_s) {
  const auto traits = speaker_traits(config, domain);
  const auto timbre = speaker_timbre(config, domain, speaker);
  const auto& lang = config.languages.at(domain);
  const auto& pros = config.class_prosody[static_cast<int>(emotion)];
  RngStream rng = RngStream(config.seed)
                      .split("utterance", domain,
                             static_cast<std::uint64_t>(speaker) * 100000 + utterance);

  const double sr = config.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sr));
  const double pitch_mean = rng.uniform(pros.pitch_hz.lo, pros.pitch_hz.hi) +
                            traits[speaker].pitch_offset_hz + lang.base_pitch_offset_hz;
  const double pitch_var = rng.uniform(pros.pitch_var_hz.lo, pros.pitch_var_hz.hi);
  const double target_rms = rng.uniform(pros.rms.lo, pros.rms.hi);
  const double mod_rate = rng.uniform(pros.mod_rate_hz.lo, pros.mod_rate_hz.hi);
  const double contour_rate = rng.uniform(0.8, 2.0);
  const double contour_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double mod_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double mod_depth = 0.6;
  const double background_snr_db = rng.uniform(config.background_snr_db.lo, config.background_snr_db.hi);

  const int h = config.n_harmonics;
  std::vector<double> phase_offset(h);
  for (int k = 0; k < h; ++k) {
    // Schroeder phases keep the crest factor low.
    phase_offset[k] = -std::numbers::pi * (k + 1) * k / h;
  }

  std::vector<double> x(n);
  std::vector<double> amps(h);
  double phase = 0.0;
  const double fade = 0.02 * sr;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f0 = pitch_mean + pitch_var * std::sin(2.0 * std::numbers::pi * contour_rate * t + contour_phase);
    phase += 2.0 * std::numbers::pi * f0 / sr;
    if (i % 32 == 0) {
      for (int k = 0; k < h; ++k) amps[k] = timbre.amplitude(k + 1, f0);
    }
    double v = 0.0;
    for (int k = 0; k < h; ++k) {
      if ((k + 1) * f0 >= 0.45 * sr) break;
      v += amps[k] * std::sin((k + 1) * phase + phase_offset[k]);
    }
    double env = 1.0 - mod_depth * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * mod_rate * t + mod_phase));
    double ramp = std::min({1.0, (static_cast<double>(i) + 1.0) / fade,
                            static_cast<double>(n - i) / fade});
    x[i] = v * env * ramp;
  }
  double power = 0.0;
  for (double v : x) power += v * v;
  const double noise_rms = std::sqrt(power / static_cast<double>(n) * std::pow(10.0, -background_snr_db / 10.0));
  power = 0.0;
  for (double& v : x) {
    v += noise_rms * rng.normal();
    power += v * v;
  }
  const double rms = std::sqrt(power / static_cast<double>(n));
  double gain = rms > 0 ? target_rms / rms : 0.0;
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v) * gain);
  if (peak > 0.999) gain *= 0.999 / peak;
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i] * gain);
  return out;
}

SynthCorpus generate_synth_corpus(const SynthCorpusConfig& config,
                                  const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);

  struct Job {
    std::size_t domain;
    int speaker;
    int utterance;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < config.languages.size(); ++d) {
    for (int s = 0; s < config.n_speakers; ++s) {
      for (int u = 0; u < config.utterances_per_speaker; ++u) jobs.push_back({d, s, u});
    }
  }
  std::vector<std::vector<SpeakerTraits>> traits;
  for (std::size_t d = 0; d < config.languages.size(); ++d) traits.push_back(speaker_traits(config, d));

  std::vector<UtteranceRecord> records(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    const auto& lang = config.languages[job.domain];
    char id[128], spk[96];
    std::snprintf(id, sizeof id, "%s_s%03d_u%03d", lang.tag.c_str(), job.speaker, job.utterance);
    std::snprintf(spk, sizeof spk, "%s_spk%03d", lang.tag.c_str(), job.speaker);
    RngStream rng = RngStream(config.seed).split("duration", job.domain,
                                                 static_cast<std::uint64_t>(job.speaker) * 100000 + job.utterance);
    const double dur_raw = rng.uniform(config.duration_s.lo, config.duration_s.hi);
    const auto n_samples = std::llround(dur_raw * config.sample_rate);
    const double duration = static_cast<double>(n_samples) / config.sample_rate;
    const Emotion emotion = emotion_for(job.speaker, job.utterance);

    dsp::AudioClip clip;
    clip.sample_rate = config.sample_rate;
    clip.samples = synthesize_utterance(config, job.domain, job.speaker, job.utterance, emotion, duration);

    UtteranceRecord r;
    r.id = id;
    r.audio_path = "audio/" + lang.tag + "/" + r.id + ".wav";
    r.speaker_id = spk;
    r.emotion = emotion;
    r.gender = traits[job.domain][job.speaker].gender;
    r.session = "session" + std::to_string(job.speaker % config.n_sessions);
    r.language = lang.tag;
    r.duration_s = duration;
    dsp::save_wav(out_dir / r.audio_path, clip);
    records[i] = std::move(r);
  });

  SynthCorpus corpus;
  corpus.records = std::move(records);
  corpus.manifest_path = out_dir / "manifest.jsonl";
  manifest::write_manifest(corpus.manifest_path, corpus.records);
  return corpus;
}

}  // namespace serlab
