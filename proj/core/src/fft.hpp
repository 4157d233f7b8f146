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

// Internal FFT facade over FFTW3 with a mutex-guarded plan cache. All
// entry points are safe for concurrent use on distinct buffers.

#ifndef M2B_SRC_FFT_HPP_
#define M2B_SRC_FFT_HPP_

#include <complex>
#include <cstddef>

namespace m2b::fft {

// Real-to-complex forward transform: n real inputs, n/2+1 complex outputs.
void rfft(const double* in, size_t n, std::complex<double>* out);

// Inverse of rfft, scaled by 1/n so irfft(rfft(x)) == x.
void irfft(const std::complex<double>* in, size_t n, double* out);

// Complex transform of arbitrary length. The inverse is scaled by 1/n.
void cfft(const std::complex<double>* in, size_t n, std::complex<double>* out,
          bool inverse);

}  // namespace m2b::fft

#endif  // M2B_SRC_FFT_HPP_
