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

#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <vector>

namespace m2b::fft {

namespace {

// Plan creation is not thread-safe in FFTW; executions on distinct
// arrays are. Plans are created FFTW_UNALIGNED so the new-array execute
// functions accept caller buffers of any alignment, and FFTW_ESTIMATE so
// planning never measures (deterministic across runs).
class PlanCache {
 public:
  fftw_plan get(int kind, size_t n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(kind, n);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;

    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = nullptr;
    std::vector<double> rbuf(n);
    std::vector<fftw_complex> cbuf(n + 1), cbuf2(n + 1);
    switch (kind) {
      case 0:
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), rbuf.data(),
                                    cbuf.data(), flags);
        break;
      case 1:
        plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), cbuf.data(),
                                    rbuf.data(), flags);
        break;
      case 2:
        plan = fftw_plan_dft_1d(static_cast<int>(n), cbuf.data(), cbuf2.data(),
                                FFTW_FORWARD, flags);
        break;
      case 3:
        plan = fftw_plan_dft_1d(static_cast<int>(n), cbuf.data(), cbuf2.data(),
                                FFTW_BACKWARD, flags);
        break;
    }
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mu_;
  std::map<std::pair<int, size_t>, fftw_plan> plans_;
};

PlanCache& cache() {
  static PlanCache* c = new PlanCache();  // leaked intentionally
  return *c;
}

}  // namespace

void rfft(const double* in, size_t n, std::complex<double>* out) {
  fftw_plan plan = cache().get(0, n);
  std::vector<double> tmp(in, in + n);  // r2c destroys its input
  fftw_execute_dft_r2c(plan, tmp.data(),
                       reinterpret_cast<fftw_complex*>(out));
}

void irfft(const std::complex<double>* in, size_t n, double* out) {
  fftw_plan plan = cache().get(1, n);
  std::vector<std::complex<double>> tmp(in, in + n / 2 + 1);
  fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(tmp.data()), out);
  double scale = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) out[i] *= scale;
}

void cfft(const std::complex<double>* in, size_t n, std::complex<double>* out,
          bool inverse) {
  fftw_plan plan = cache().get(inverse ? 3 : 2, n);
  std::vector<std::complex<double>> tmp(in, in + n);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(tmp.data()),
                   reinterpret_cast<fftw_complex*>(out));
  if (inverse) {
    double scale = 1.0 / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) out[i] *= scale;
  }
}

}  // namespace m2b::fft
