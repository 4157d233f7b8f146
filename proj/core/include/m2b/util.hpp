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

#ifndef M2B_UTIL_HPP_
#define M2B_UTIL_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace m2b {

// Runs fn(i) for i in [0, n). Work is split into fixed-size chunks so the
// result of any per-index computation is independent of the worker count.
// num_threads <= 1 runs inline.
void parallel_for(int64_t n, int num_threads,
                  const std::function<void(int64_t)>& fn);

// Global worker bound used by module-internal parallelism (set from the
// CLI --threads flag). Defaults to the hardware concurrency, capped at 8.
int worker_threads();
void set_worker_threads(int n);

// FNV-1a, used for dataset/checkpoint hashes in reproducibility records.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

// Locale-independent float formatting: shortest round-trip decimal form.
std::string format_double(double v);

// Locale-independent strict double parsing; throws ConfigError on any
// trailing garbage or empty input.
double parse_double(const std::string& s);
int64_t parse_int(const std::string& s);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& body);

}  // namespace m2b

#endif  // M2B_UTIL_HPP_
