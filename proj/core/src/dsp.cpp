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

#include "m2b/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fft.hpp"

namespace m2b {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Periodic Hann window of length n.
std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  }
  return w;
}

// Reflect index into [0, len) without repeating the edge sample.
size_t reflect_index(long long i, size_t len) {
  if (len == 1) return 0;
  long long period = 2 * (static_cast<long long>(len) - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(len)) m = period - m;
  return static_cast<size_t>(m);
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = kPi * x;
  return std::sin(px) / px;
}

}  // namespace

const std::vector<double>& Waveform::mono() const {
  if (channels.size() != 1)
    throw ShapeMismatch("expected mono waveform, got " +
                        std::to_string(channels.size()) + " channels");
  return channels[0];
}

void Waveform::validate() const {
  if (sample_rate_hz <= 0) throw InvalidAudio("sample rate must be positive");
  if (channels.empty() || channels.size() > 2)
    throw InvalidAudio("waveform must have 1 or 2 channels");
  size_t len = channels[0].size();
  for (const auto& ch : channels) {
    if (ch.size() != len) throw InvalidAudio("channel lengths differ");
    for (double v : ch) {
      if (!std::isfinite(v)) throw InvalidAudio("non-finite sample");
    }
  }
}

void SpectrogramParams::validate() const {
  if (!(hop > 0 && hop <= window_len && window_len <= fft_size))
    throw ShapeMismatch("need 0 < hop <= window_len <= fft_size");
  // Overlap-add coverage: with hop <= window_len/2 the Hann window-square
  // sum is bounded away from zero everywhere, which is what exact
  // inversion requires.
  if (hop > window_len / 2)
    throw ShapeMismatch("hop must not exceed window_len/2 for invertibility");
}

int SpectrogramParams::num_frames(size_t signal_len) const {
  if (centered) {
    return 1 + static_cast<int>(signal_len / static_cast<size_t>(hop));
  }
  if (signal_len < static_cast<size_t>(fft_size)) return 0;
  return 1 + static_cast<int>((signal_len - fft_size) / hop);
}

double ComplexSpectrogram::total_energy() const {
  // One-sided spectrum: interior bins stand for a conjugate pair.
  double e = 0.0;
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < bins; ++f) {
      double mult = (f == 0 || f == bins - 1) ? 1.0 : 2.0;
      e += mult * std::norm(at(t, f));
    }
  }
  return e;
}

Waveform resample(const Waveform& w, int target_hz) {
  if (target_hz <= 0) throw InvalidAudio("target rate must be positive");
  w.validate();
  if (target_hz == w.sample_rate_hz) return w;

  const double ratio = static_cast<double>(target_hz) / w.sample_rate_hz;
  const double cutoff = std::min(1.0, ratio);  // relative to source Nyquist
  constexpr int kHalfTaps = 32;                // 64-tap windowed sinc

  size_t out_len = static_cast<size_t>(
      std::llround(static_cast<double>(w.length()) * ratio));
  Waveform out;
  out.sample_rate_hz = target_hz;
  out.channels.assign(w.channels.size(), std::vector<double>(out_len));

  for (size_t c = 0; c < w.channels.size(); ++c) {
    const auto& src = w.channels[c];
    auto& dst = out.channels[c];
    const long long n = static_cast<long long>(src.size());
    for (size_t o = 0; o < out_len; ++o) {
      double p = static_cast<double>(o) / ratio;
      long long i0 = static_cast<long long>(std::floor(p));
      double acc = 0.0, norm = 0.0;
      for (long long k = i0 - kHalfTaps + 1; k <= i0 + kHalfTaps; ++k) {
        double t = p - static_cast<double>(k);
        double win = 0.5 + 0.5 * std::cos(kPi * t / kHalfTaps);
        double h = cutoff * sinc(cutoff * t) * win;
        norm += h;
        if (k >= 0 && k < n) acc += src[static_cast<size_t>(k)] * h;
      }
      dst[o] = norm != 0.0 ? acc / norm : 0.0;
    }
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& w, const SpectrogramParams& p) {
  w.validate();
  p.validate();
  const auto& x = w.mono();
  if (x.empty()) throw InvalidAudio("stft of empty signal");

  const int fft_size = p.fft_size;
  const int pad = fft_size / 2;
  const int frames = p.num_frames(x.size());
  const int bins = p.num_bins();

  std::vector<double> window = hann_window(p.window_len);
  const int win_off = (fft_size - p.window_len) / 2;

  ComplexSpectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.params = p;
  spec.source_len = x.size();
  spec.values.resize(static_cast<size_t>(frames) * bins);

  std::vector<double> frame(fft_size);
  for (int t = 0; t < frames; ++t) {
    const long long start =
        static_cast<long long>(t) * p.hop - (p.centered ? pad : 0);
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int j = 0; j < p.window_len; ++j) {
      long long idx = start + win_off + j;
      double v;
      if (idx >= 0 && idx < static_cast<long long>(x.size())) {
        v = x[static_cast<size_t>(idx)];
      } else if (p.centered) {
        v = x[reflect_index(idx, x.size())];
      } else {
        v = 0.0;
      }
      frame[win_off + j] = v * window[j];
    }
    fft::rfft(frame.data(), fft_size, &spec.values[size_t(t) * bins]);
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, const SpectrogramParams& p,
               size_t out_len, int sample_rate_hz) {
  p.validate();
  if (spec.bins != p.num_bins())
    throw ShapeMismatch("spectrogram bins do not match params");
  if (spec.frames <= 0) throw ShapeMismatch("empty spectrogram");
  if (static_cast<size_t>(spec.frames) * spec.bins != spec.values.size())
    throw ShapeMismatch("spectrogram value count does not match T x F");

  const int fft_size = p.fft_size;
  const int pad = p.centered ? fft_size / 2 : 0;
  std::vector<double> window = hann_window(p.window_len);
  const int win_off = (fft_size - p.window_len) / 2;

  const size_t buf_len =
      static_cast<size_t>(spec.frames - 1) * p.hop + fft_size;
  std::vector<double> num(buf_len, 0.0), den(buf_len, 0.0);
  std::vector<double> frame(fft_size);

  for (int t = 0; t < spec.frames; ++t) {
    fft::irfft(&spec.values[size_t(t) * spec.bins], fft_size, frame.data());
    const size_t start = static_cast<size_t>(t) * p.hop;
    for (int j = 0; j < p.window_len; ++j) {
      double wj = window[j];
      num[start + win_off + j] += wj * frame[win_off + j];
      den[start + win_off + j] += wj * wj;
    }
  }

  Waveform out;
  out.sample_rate_hz = sample_rate_hz;
  out.channels.assign(1, std::vector<double>(out_len, 0.0));
  auto& y = out.channels[0];
  for (size_t i = 0; i < out_len; ++i) {
    size_t j = i + pad;
    if (j < buf_len && den[j] > 1e-11) y[i] = num[j] / den[j];
  }
  return out;
}

Envelope envelope(const Waveform& w) {
  w.validate();
  const auto& x = w.mono();
  const size_t n = x.size();
  Envelope env;
  env.sample_rate_hz = w.sample_rate_hz;
  env.samples.resize(n);
  if (n == 0) return env;
  if (n == 1) {
    env.samples[0] = std::abs(x[0]);
    return env;
  }

  std::vector<std::complex<double>> spec(n), analytic(n);
  std::vector<std::complex<double>> cx(n);
  for (size_t i = 0; i < n; ++i) cx[i] = x[i];
  fft::cfft(cx.data(), n, spec.data(), /*inverse=*/false);

  // Analytic-signal multiplier: keep DC and Nyquist, double positive
  // frequencies, zero negative ones.
  size_t half = n / 2;
  for (size_t k = 1; k < (n + 1) / 2; ++k) spec[k] *= 2.0;
  if (n % 2 == 0) {
    // spec[half] (Nyquist) stays as is.
  }
  for (size_t k = half + 1; k < n; ++k) spec[k] = 0.0;

  fft::cfft(spec.data(), n, analytic.data(), /*inverse=*/true);
  for (size_t i = 0; i < n; ++i) env.samples[i] = std::abs(analytic[i]);
  return env;
}

double rms(const Waveform& w) {
  double acc = 0.0;
  size_t count = 0;
  for (const auto& ch : w.channels) {
    for (double v : ch) acc += v * v;
    count += ch.size();
  }
  return count == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(count));
}

std::pair<Waveform, double> rms_normalize(const Waveform& w,
                                          double target_rms) {
  if (target_rms <= 0) throw InvalidAudio("target RMS must be positive");
  w.validate();
  double level = rms(w);
  if (level < 1e-30) throw SilentSegment("all-zero segment");
  double gain = target_rms / level;
  Waveform out = w;
  for (auto& ch : out.channels) {
    for (double& v : ch) v *= gain;
  }
  return {std::move(out), gain};
}

}  // namespace m2b
