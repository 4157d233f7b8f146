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

#include "m2b/binaural.hpp"

#include <algorithm>

namespace m2b {

void BinauralPair::validate() const {
  left.validate();
  right.validate();
  if (!left.is_mono() || !right.is_mono())
    throw ShapeMismatch("binaural pair channels must be mono");
  if (left.length() != right.length())
    throw ShapeMismatch("left/right lengths differ");
  if (left.sample_rate_hz != right.sample_rate_hz)
    throw ShapeMismatch("left/right sample rates differ");
}

Waveform BinauralPair::as_stereo() const {
  validate();
  Waveform w;
  w.sample_rate_hz = left.sample_rate_hz;
  w.channels = {left.channels[0], right.channels[0]};
  return w;
}

BinauralPair BinauralPair::from_stereo(const Waveform& stereo) {
  stereo.validate();
  if (stereo.num_channels() != 2)
    throw ShapeMismatch("expected a stereo waveform");
  BinauralPair b;
  b.left = Waveform(stereo.channels[0], stereo.sample_rate_hz);
  b.right = Waveform(stereo.channels[1], stereo.sample_rate_hz);
  return b;
}

Waveform mix_to_mono(const BinauralPair& b) {
  b.validate();
  size_t n = b.length();
  Waveform out;
  out.sample_rate_hz = b.sample_rate_hz();
  out.channels.assign(1, std::vector<double>(n));
  const auto& l = b.left.channels[0];
  const auto& r = b.right.channels[0];
  for (size_t i = 0; i < n; ++i) out.channels[0][i] = l[i] + r[i];
  return out;
}

Waveform difference(const BinauralPair& b) {
  b.validate();
  size_t n = b.length();
  Waveform out;
  out.sample_rate_hz = b.sample_rate_hz();
  out.channels.assign(1, std::vector<double>(n));
  const auto& l = b.left.channels[0];
  const auto& r = b.right.channels[0];
  for (size_t i = 0; i < n; ++i) out.channels[0][i] = l[i] - r[i];
  return out;
}

BinauralPair reconstruct_channels(const Waveform& mono, const Waveform& diff) {
  if (!mono.is_mono() || !diff.is_mono())
    throw ShapeMismatch("reconstruct_channels expects mono inputs");
  if (mono.length() != diff.length())
    throw ShapeMismatch("mono/diff lengths differ");
  size_t n = mono.length();
  BinauralPair out;
  out.left.sample_rate_hz = mono.sample_rate_hz;
  out.right.sample_rate_hz = mono.sample_rate_hz;
  out.left.channels.assign(1, std::vector<double>(n));
  out.right.channels.assign(1, std::vector<double>(n));
  const auto& m = mono.channels[0];
  const auto& d = diff.channels[0];
  for (size_t i = 0; i < n; ++i) {
    out.left.channels[0][i] = (m[i] + d[i]) / 2.0;
    out.right.channels[0][i] = (m[i] - d[i]) / 2.0;
  }
  return out;
}

ComplexSpectrogram apply_complex_mask(const ComplexSpectrogram& spec,
                                      const ComplexMask& mask) {
  if (spec.frames != mask.frames || spec.bins != mask.bins)
    throw ShapeMismatch("mask/spectrogram dimensions differ");
  ComplexSpectrogram out = spec;
  for (size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = mask.values[i] * spec.values[i];
  }
  return out;
}

ComplexMask ideal_difference_mask(const ComplexSpectrogram& mix,
                                  const ComplexSpectrogram& diff, double eps) {
  if (mix.frames != diff.frames || mix.bins != diff.bins)
    throw ShapeMismatch("mix/diff dimensions differ");
  ComplexMask mask;
  mask.frames = mix.frames;
  mask.bins = mix.bins;
  mask.values.resize(mix.values.size());
  const std::complex<double> shift(eps, 0.0);
  for (size_t i = 0; i < mix.values.size(); ++i) {
    std::complex<double> m = diff.values[i] / (mix.values[i] + shift);
    mask.values[i] = {std::clamp(m.real(), -1.0, 1.0),
                      std::clamp(m.imag(), -1.0, 1.0)};
  }
  return mask;
}

}  // namespace m2b
