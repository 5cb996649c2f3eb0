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

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "serlab/dsp.hpp"

namespace serlab::dsp {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioClip decode_wav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::invalid_argument("wav: missing RIFF/WAVE header");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Truncated data chunks are common in the wild; clamp to what exists.
      if (std::memcmp(chunk, "data", 4) != 0) {
        throw std::invalid_argument("wav: corrupt chunk size");
      }
      size = static_cast<std::uint32_t>(bytes.size() - body);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw std::invalid_argument("wav: short fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && size >= 40) {
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw std::invalid_argument("wav: missing fmt chunk");
  if (!data) throw std::invalid_argument("wav: missing data chunk");
  if (channels == 0 || rate == 0) throw std::invalid_argument("wav: corrupt fmt chunk");

  const bool pcm = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == kFormatFloat && bits == 32;
  if (!pcm && !flt) {
    throw std::invalid_argument("wav: unsupported encoding (format " +
                                std::to_string(format) + ", " +
                                std::to_string(bits) + " bits)");
  }
  const std::size_t frame_bytes = std::size_t(bits / 8) * channels;
  const std::size_t n_frames = data_size / frame_bytes;
  if (n_frames == 0) throw std::invalid_argument("wav: no samples");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + f * frame_bytes + c * (bits / 8);
      double v = 0.0;
      if (flt) {
        std::uint32_t u = read_u32(p);
        float x;
        std::memcpy(&x, &u, 4);
        v = x;
      } else if (bits == 8) {
        v = (double(p[0]) - 128.0) / 128.0;
      } else if (bits == 16) {
        v = double(static_cast<std::int16_t>(read_u16(p))) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) |
                         (std::int32_t(static_cast<std::int8_t>(p[2])) << 16);
        v = double(x) / 8388608.0;
      } else {
        v = double(static_cast<std::int32_t>(read_u32(p))) / 2147483648.0;
      }
      acc += v;
    }
    double mono = acc / channels;
    if (mono > 1.0) mono = 1.0;
    if (mono < -1.0) mono = -1.0;
    clip.samples[f] = static_cast<float>(mono);
  }
  return clip;
}

AudioClip load_audio(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const AudioClip& clip,
                                      WavEncoding encoding) {
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(clip.samples.size() * (bits / 8));
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (float s : clip.samples) {
    if (encoding == WavEncoding::kPcm16) {
      double scaled = static_cast<double>(s) * 32768.0;
      if (scaled > 32767.0) scaled = 32767.0;
      if (scaled < -32768.0) scaled = -32768.0;
      auto q = static_cast<std::int16_t>(scaled >= 0 ? scaled + 0.5 : scaled - 0.5);
      put_u16(out, static_cast<std::uint16_t>(q));
    } else {
      std::uint32_t u;
      std::memcpy(&u, &s, 4);
      put_u32(out, u);
    }
  }
  return out;
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip,
              WavEncoding encoding) {
  auto bytes = encode_wav(clip, encoding);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace serlab::dsp
