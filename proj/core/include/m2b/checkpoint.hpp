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

// Checkpoint container. Binary layout:
//
//   magic "M2BN" | u32 version | u32 meta_len | meta bytes | u32 count
//   per tensor: u16 name_len | name | u8 rank | u32 dims[rank]
//               | u8 dtype (0 = f32, 1 = f64) | raw little-endian values
//
// The meta block is "key=value" lines and makes a checkpoint
// self-describing: network hyperparameters and flags marking whether
// batch-norm running stats and Adam state are included.

#ifndef M2B_CHECKPOINT_HPP_
#define M2B_CHECKPOINT_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "m2b/error.hpp"

namespace m2b {

enum class Dtype : uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  Dtype dtype = Dtype::kFloat32;
  std::vector<double> values;  // widened on load, narrowed per dtype on save
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<CheckpointTensor> tensors;

  void add(const std::string& name, std::vector<int> shape,
           const std::vector<float>& values);
  void add(const std::string& name, std::vector<int> shape,
           const std::vector<double>& values);
  const CheckpointTensor* find(const std::string& name) const;
  const CheckpointTensor& require(const std::string& name) const;

  std::string meta_or(const std::string& key, const std::string& fallback) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace m2b

#endif  // M2B_CHECKPOINT_HPP_
