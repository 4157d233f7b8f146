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

#include "m2b/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace m2b {

namespace {

constexpr char kMagic[4] = {'M', '2', 'B', 'N'};
constexpr uint32_t kVersion = 1;

void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}
void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

struct Reader {
  const unsigned char* p;
  size_t len;
  size_t pos = 0;
  std::string path;

  void need(size_t n) const {
    if (pos + n > len) throw IoError("truncated checkpoint: " + path);
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void Checkpoint::add(const std::string& name, std::vector<int> shape,
                     const std::vector<float>& values) {
  CheckpointTensor t;
  t.name = name;
  t.shape = std::move(shape);
  t.dtype = Dtype::kFloat32;
  t.values.assign(values.begin(), values.end());
  tensors.push_back(std::move(t));
}

void Checkpoint::add(const std::string& name, std::vector<int> shape,
                     const std::vector<double>& values) {
  CheckpointTensor t;
  t.name = name;
  t.shape = std::move(shape);
  t.dtype = Dtype::kFloat64;
  t.values = values;
  tensors.push_back(std::move(t));
}

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const CheckpointTensor& Checkpoint::require(const std::string& name) const {
  const CheckpointTensor* t = find(name);
  if (!t) throw MissingCheckpoint("tensor not found: " + name);
  return *t;
}

std::string Checkpoint::meta_or(const std::string& key,
                                const std::string& fallback) const {
  auto it = meta.find(key);
  return it == meta.end() ? fallback : it->second;
}

void Checkpoint::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);

  std::string meta_block;
  for (const auto& [k, v] : meta) {
    meta_block += k;
    meta_block += '=';
    meta_block += v;
    meta_block += '\n';
  }
  put_u32(out, static_cast<uint32_t>(meta_block.size()));
  out += meta_block;

  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u16(out, static_cast<uint16_t>(t.name.size()));
    out += t.name;
    out.push_back(char(t.shape.size()));
    size_t count = 1;
    for (int d : t.shape) {
      put_u32(out, static_cast<uint32_t>(d));
      count *= static_cast<size_t>(d);
    }
    if (count != t.values.size())
      throw ShapeMismatch("checkpoint tensor " + t.name +
                          ": value count does not match dims");
    out.push_back(char(static_cast<uint8_t>(t.dtype)));
    if (t.dtype == Dtype::kFloat32) {
      for (double v : t.values) {
        float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
      }
    } else {
      for (double v : t.values) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u32(out, static_cast<uint32_t>(bits & 0xffffffffu));
        put_u32(out, static_cast<uint32_t>(bits >> 32));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short checkpoint write: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingCheckpoint("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
           0, path};

  if (r.bytes(4) != std::string(kMagic, 4))
    throw IoError("bad checkpoint magic: " + path);
  uint32_t version = r.u32();
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  ": " + path);

  Checkpoint ckpt;
  uint32_t meta_len = r.u32();
  std::string meta_block = r.bytes(meta_len);
  size_t start = 0;
  while (start < meta_block.size()) {
    size_t nl = meta_block.find('\n', start);
    if (nl == std::string::npos) nl = meta_block.size();
    std::string line = meta_block.substr(start, nl - start);
    size_t eq = line.find('=');
    if (eq != std::string::npos)
      ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
    start = nl + 1;
  }

  uint32_t count = r.u32();
  ckpt.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    uint16_t name_len = r.u16();
    t.name = r.bytes(name_len);
    uint8_t rank = r.u8();
    if (rank == 0 || rank > 4)
      throw IoError("bad tensor rank in checkpoint: " + path);
    size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      uint32_t dim = r.u32();
      t.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    uint8_t dtype = r.u8();
    if (dtype > 1) throw IoError("bad dtype in checkpoint: " + path);
    t.dtype = static_cast<Dtype>(dtype);
    t.values.resize(n);
    if (t.dtype == Dtype::kFloat32) {
      for (size_t j = 0; j < n; ++j) {
        uint32_t bits = r.u32();
        float f;
        std::memcpy(&f, &bits, 4);
        t.values[j] = f;
      }
    } else {
      for (size_t j = 0; j < n; ++j) {
        uint64_t lo = r.u32();
        uint64_t hi = r.u32();
        uint64_t bits = lo | (hi << 32);
        double d;
        std::memcpy(&d, &bits, 8);
        t.values[j] = d;
      }
    }
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace m2b
