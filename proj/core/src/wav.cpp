// Copyright 2026 The Mono2Binaural Authors. All Rights Reserved.
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

#include "m2b/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace m2b {

namespace {

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint32_t read_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}
uint16_t read_u16(const unsigned char* p) {
  return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}

void put_u32(std::string& s, uint32_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
  s.push_back(char((v >> 16) & 0xff));
  s.push_back(char((v >> 24) & 0xff));
}
void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}

float bits_to_float(uint32_t bits) {
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}
uint32_t float_to_bits(float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  return bits;
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file: " + path);
  }

  uint16_t format = 0, channels = 0, bits_per_sample = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* hdr = p + pos;
    uint32_t chunk_len = read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > n) throw IoError("truncated WAV chunk: " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw IoError("short fmt chunk: " + path);
      format = read_u16(body);
      channels = read_u16(body + 2);
      sample_rate = read_u32(body + 4);
      bits_per_sample = read_u16(body + 14);
      if (format == kFormatExtensible && chunk_len >= 40) {
        // SubFormat GUID starts with the effective format tag.
        format = read_u16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) throw IoError("missing fmt/data chunk: " + path);
  if (channels != 1 && channels != 2)
    throw IoError("unsupported channel count " + std::to_string(channels) + ": " + path);
  if (sample_rate == 0) throw IoError("zero sample rate: " + path);

  size_t bytes_per_sample = bits_per_sample / 8;
  if (format == kFormatPcm && bits_per_sample != 16)
    throw IoError("only 16-bit PCM supported: " + path);
  if (format == kFormatFloat && bits_per_sample != 32)
    throw IoError("only 32-bit float supported: " + path);
  if (format != kFormatPcm && format != kFormatFloat)
    throw IoError("unsupported WAV format tag: " + path);

  size_t frame_bytes = bytes_per_sample * channels;
  size_t frames = frame_bytes == 0 ? 0 : data_len / frame_bytes;

  Waveform w;
  w.sample_rate_hz = static_cast<int>(sample_rate);
  w.channels.assign(channels, std::vector<double>(frames));
  for (size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* s = data + (i * channels + c) * bytes_per_sample;
      double v;
      if (format == kFormatPcm) {
        int16_t raw = static_cast<int16_t>(read_u16(s));
        v = static_cast<double>(raw) / 32768.0;
      } else {
        v = static_cast<double>(bits_to_float(read_u32(s)));
      }
      w.channels[c][i] = v;
    }
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w, WavEncoding enc) {
  w.validate();
  int channels = w.num_channels();
  size_t frames = w.length();
  uint16_t bits = enc == WavEncoding::kFloat32 ? 32 : 16;
  uint16_t format = enc == WavEncoding::kFloat32 ? kFormatFloat : kFormatPcm;
  uint32_t byte_rate = uint32_t(w.sample_rate_hz) * channels * bits / 8;
  uint16_t block_align = uint16_t(channels * bits / 8);
  uint32_t data_len = uint32_t(frames * block_align);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, uint16_t(channels));
  put_u32(out, uint32_t(w.sample_rate_hz));
  put_u32(out, byte_rate);
  put_u16(out, block_align);
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_len);

  for (size_t i = 0; i < frames; ++i) {
    for (int c = 0; c < channels; ++c) {
      double v = w.channels[c][i];
      if (enc == WavEncoding::kFloat32) {
        put_u32(out, float_to_bits(static_cast<float>(v)));
      } else {
        double clamped = std::clamp(v, -1.0, 1.0);
        auto q = static_cast<int>(std::lrint(clamped * 32767.0));
        put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write WAV: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short WAV write: " + path);
}

}  // namespace m2b
