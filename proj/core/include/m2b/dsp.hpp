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

#ifndef M2B_DSP_HPP_
#define M2B_DSP_HPP_

#include <complex>
#include <utility>
#include <vector>

#include "m2b/error.hpp"

namespace m2b {

// Sampled audio, 1 or 2 channels, dimensionless amplitude.
struct Waveform {
  std::vector<std::vector<double>> channels;
  int sample_rate_hz = 0;

  Waveform() = default;
  Waveform(std::vector<double> mono, int rate)
      : channels{std::move(mono)}, sample_rate_hz(rate) {}
  Waveform(std::vector<double> left, std::vector<double> right, int rate)
      : channels{std::move(left), std::move(right)}, sample_rate_hz(rate) {}

  int num_channels() const { return static_cast<int>(channels.size()); }
  size_t length() const { return channels.empty() ? 0 : channels[0].size(); }
  double duration_s() const {
    return sample_rate_hz > 0 ? static_cast<double>(length()) / sample_rate_hz
                              : 0.0;
  }
  bool is_mono() const { return channels.size() == 1; }
  const std::vector<double>& mono() const;

  // Throws InvalidAudio unless all samples are finite, channel lengths
  // match, and the rate is positive.
  void validate() const;
};

// Analysis parameters for stft/istft. Defaults follow 16 kHz audio:
// 25 ms Hann window, 10 ms hop, 512-point FFT, centered frames padded
// reflectively by fft_size/2 on each side.
struct SpectrogramParams {
  int window_len = 400;
  int hop = 160;
  int fft_size = 512;
  bool centered = true;

  int num_bins() const { return fft_size / 2 + 1; }
  int num_frames(size_t signal_len) const;
  void validate() const;
};

// T x F grid of complex STFT values, row-major over frames.
struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<std::complex<double>> values;
  SpectrogramParams params;
  size_t source_len = 0;

  std::complex<double>& at(int t, int f) { return values[size_t(t) * bins + f]; }
  const std::complex<double>& at(int t, int f) const {
    return values[size_t(t) * bins + f];
  }
  double total_energy() const;
};

struct Envelope {
  std::vector<double> samples;  // nonnegative
  int sample_rate_hz = 0;
};

// Band-limited windowed-sinc resampling (64-tap kernel). Returns the
// input unchanged when target_hz equals the source rate.
Waveform resample(const Waveform& w, int target_hz);

// Centered STFT of a mono waveform: T = 1 + floor(len / hop),
// F = fft_size/2 + 1.
ComplexSpectrogram stft(const Waveform& w, const SpectrogramParams& p);

// Overlap-add inverse with window-square normalization; exact inverse of
// stft for any window with nonzero overlap coverage. Output has out_len
// samples at the given rate.
Waveform istft(const ComplexSpectrogram& spec, const SpectrogramParams& p,
               size_t out_len, int sample_rate_hz);

// Magnitude of the analytic signal (discrete Hilbert transform via FFT).
Envelope envelope(const Waveform& w);

// Scales all channels jointly so that the RMS over every sample of every
// channel equals target_rms. Returns the scaled waveform and the applied
// gain. Throws SilentSegment on all-zero input.
std::pair<Waveform, double> rms_normalize(const Waveform& w,
                                          double target_rms);

double rms(const Waveform& w);

}  // namespace m2b

#endif  // M2B_DSP_HPP_
