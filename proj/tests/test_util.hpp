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

// Shared helpers for the unit suites: signal generators and independent
// oracles (direct DFT) kept deliberately separate from the library's
// FFT-based implementation paths.

#ifndef M2B_TESTS_TEST_UTIL_HPP_
#define M2B_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "m2b/dsp.hpp"
#include "m2b/rng.hpp"

namespace m2b::testing {

constexpr double kTestPi = 3.14159265358979323846;

inline std::vector<double> sine(double freq_hz, double amp, size_t n,
                                int rate) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * kTestPi * freq_hz * static_cast<double>(i) / rate);
  }
  return x;
}

inline std::vector<double> white_noise(size_t n, Rng& rng, double amp = 0.3) {
  std::vector<double> x(n);
  for (auto& v : x) v = amp * rng.normal();
  return x;
}

inline double snr_db(const std::vector<double>& ref,
                     const std::vector<double>& est) {
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    sig += ref[i] * ref[i];
    double d = ref[i] - est[i];
    err += d * d;
  }
  if (err == 0.0) return 300.0;
  return 10.0 * std::log10(sig / err);
}

// Direct O(n^2) DFT, independent of the library FFT.
inline std::vector<std::complex<double>> naive_dft(
    const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      double ang = -2.0 * kTestPi * static_cast<double>(k) *
                   static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Direct-summation STFT oracle mirroring the documented frame layout:
// centered frames with reflect padding, periodic Hann window of
// window_len zero-padded into fft_size, DFT by naive summation.
inline std::vector<std::vector<std::complex<double>>> naive_stft(
    const std::vector<double>& x, const SpectrogramParams& p) {
  const int pad = p.fft_size / 2;
  const int frames = p.num_frames(x.size());
  const int bins = p.num_bins();
  const int win_off = (p.fft_size - p.window_len) / 2;

  auto sample_at = [&](long long idx) -> double {
    long long n = static_cast<long long>(x.size());
    if (idx >= 0 && idx < n) return x[static_cast<size_t>(idx)];
    long long period = 2 * (n - 1);
    long long m = idx % period;
    if (m < 0) m += period;
    if (m >= n) m = period - m;
    return x[static_cast<size_t>(m)];
  };

  std::vector<std::vector<std::complex<double>>> out(
      static_cast<size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    std::vector<double> frame(static_cast<size_t>(p.fft_size), 0.0);
    for (int j = 0; j < p.window_len; ++j) {
      double w = 0.5 - 0.5 * std::cos(2.0 * kTestPi * j / p.window_len);
      long long idx = static_cast<long long>(t) * p.hop - pad + win_off + j;
      frame[static_cast<size_t>(win_off + j)] = sample_at(idx) * w;
    }
    out[static_cast<size_t>(t)].resize(static_cast<size_t>(bins));
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (int n = 0; n < p.fft_size; ++n) {
        double ang = -2.0 * kTestPi * k * n / p.fft_size;
        acc += frame[static_cast<size_t>(n)] *
               std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out[static_cast<size_t>(t)][static_cast<size_t>(k)] = acc;
    }
  }
  return out;
}

// Unique per-test scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "m2b_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace m2b::testing

#endif  // M2B_TESTS_TEST_UTIL_HPP_
