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

#ifndef M2B_ERROR_HPP_
#define M2B_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace m2b {

// Error categories map to the CLI exit codes: config errors exit with 2,
// data errors with 3, numeric failures with 4.
enum class ErrorKind { kConfig, kData, kNumeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

#define M2B_DEFINE_ERROR(NAME, KIND)                        \
  class NAME : public Error {                               \
   public:                                                  \
    explicit NAME(const std::string& what)                  \
        : Error(KIND, std::string(#NAME) + ": " + what) {}  \
  }

M2B_DEFINE_ERROR(InvalidAudio, ErrorKind::kData);
M2B_DEFINE_ERROR(ShapeMismatch, ErrorKind::kData);
M2B_DEFINE_ERROR(SilentSegment, ErrorKind::kData);
M2B_DEFINE_ERROR(UnknownSource, ErrorKind::kData);
M2B_DEFINE_ERROR(IoError, ErrorKind::kData);
M2B_DEFINE_ERROR(EmptyDataset, ErrorKind::kData);
M2B_DEFINE_ERROR(ClipTooShort, ErrorKind::kData);
M2B_DEFINE_ERROR(MissingCheckpoint, ErrorKind::kData);
M2B_DEFINE_ERROR(DegenerateBatch, ErrorKind::kData);
M2B_DEFINE_ERROR(DegenerateReferences, ErrorKind::kData);
M2B_DEFINE_ERROR(ConfigError, ErrorKind::kConfig);
M2B_DEFINE_ERROR(NumericError, ErrorKind::kNumeric);

#undef M2B_DEFINE_ERROR

}  // namespace m2b

#endif  // M2B_ERROR_HPP_
