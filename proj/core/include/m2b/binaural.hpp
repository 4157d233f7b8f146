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

// Mono/binaural algebra: mixing, difference signal, complex-mask
// application, and channel reconstruction. The mixed mono signal is
// x_M = x_L + x_R and the difference is x_D = x_L - x_R, so both
// channels are recovered as (x_M +- x_D) / 2.

#ifndef M2B_BINAURAL_HPP_
#define M2B_BINAURAL_HPP_

#include <complex>
#include <vector>

#include "m2b/dsp.hpp"

namespace m2b {

// Two equal-length mono channels at the same rate.
struct BinauralPair {
  Waveform left;
  Waveform right;

  void validate() const;
  size_t length() const { return left.length(); }
  int sample_rate_hz() const { return left.sample_rate_hz; }
  Waveform as_stereo() const;
  static BinauralPair from_stereo(const Waveform& stereo);
};

// T x F grid of bounded complex multipliers: real and imaginary parts
// each lie in [-1, 1].
struct ComplexMask {
  int frames = 0;
  int bins = 0;
  std::vector<std::complex<double>> values;

  std::complex<double>& at(int t, int f) { return values[size_t(t) * bins + f]; }
  const std::complex<double>& at(int t, int f) const {
    return values[size_t(t) * bins + f];
  }
};

// x_M(t) = x_L(t) + x_R(t).
Waveform mix_to_mono(const BinauralPair& b);

// x_D(t) = x_L(t) - x_R(t).
Waveform difference(const BinauralPair& b);

// L = (mono + diff) / 2, R = (mono - diff) / 2. By construction the
// output satisfies L + R = mono and L - R = diff exactly.
BinauralPair reconstruct_channels(const Waveform& mono, const Waveform& diff);

// Per-bin complex product mask * spec.
ComplexSpectrogram apply_complex_mask(const ComplexSpectrogram& spec,
                                      const ComplexMask& mask);

// Diagnostic oracle inverting the mask application: per-bin
// Xd / (Xm + eps), with real and imaginary parts clamped to [-1, 1].
ComplexMask ideal_difference_mask(const ComplexSpectrogram& mix,
                                  const ComplexSpectrogram& diff, double eps);

}  // namespace m2b

#endif  // M2B_BINAURAL_HPP_
