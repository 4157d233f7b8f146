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

#include "m2b/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace m2b {

FrameImage FrameImage::flipped_horizontal() const {
  FrameImage out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = at(y, width - 1 - x, c);
      }
    }
  }
  return out;
}

void FrameImage::channel_means(double out[3]) const {
  out[0] = out[1] = out[2] = 0.0;
  size_t n = size_t(height) * width;
  if (n == 0) return;
  for (size_t i = 0; i < n; ++i) {
    out[0] += pixels[i * 3 + 0];
    out[1] += pixels[i * 3 + 1];
    out[2] += pixels[i * 3 + 2];
  }
  out[0] /= double(n);
  out[1] /= double(n);
  out[2] /= double(n);
}

void write_ppm(const std::string& path, const FrameImage& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write PPM: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::string body;
  body.reserve(img.pixels.size());
  for (double v : img.pixels) {
    double clamped = std::clamp(v, 0.0, 1.0);
    body.push_back(static_cast<char>(
        static_cast<unsigned char>(std::lrint(clamped * 255.0))));
  }
  f.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!f) throw IoError("short PPM write: " + path);
}

FrameImage read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open PPM: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw IoError("not a P6 pixmap: " + path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255)
    throw IoError("unsupported PPM header: " + path);
  f.get();  // single whitespace after maxval
  FrameImage img(h, w);
  std::vector<char> raw(size_t(w) * h * 3);
  f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size()))
    throw IoError("truncated PPM body: " + path);
  for (size_t i = 0; i < raw.size(); ++i) {
    img.pixels[i] = static_cast<unsigned char>(raw[i]) / 255.0;
  }
  return img;
}

}  // namespace m2b
