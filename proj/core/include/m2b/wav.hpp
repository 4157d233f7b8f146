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

#ifndef M2B_WAV_HPP_
#define M2B_WAV_HPP_

#include <string>

#include "m2b/dsp.hpp"

namespace m2b {

// RIFF/WAVE reader: PCM 16-bit and IEEE float 32-bit, mono or stereo,
// little-endian. Sample rate comes from the header.
Waveform read_wav(const std::string& path);

enum class WavEncoding { kFloat32, kPcm16 };

// Writer; float32 is the default encoding.
void write_wav(const std::string& path, const Waveform& w,
               WavEncoding enc = WavEncoding::kFloat32);

}  // namespace m2b

#endif  // M2B_WAV_HPP_
