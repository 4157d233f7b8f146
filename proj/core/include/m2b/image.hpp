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

#ifndef M2B_IMAGE_HPP_
#define M2B_IMAGE_HPP_

#include <string>
#include <vector>

#include "m2b/error.hpp"

namespace m2b {

// H x W x 3 image with values in [0, 1], row-major, RGB interleaved.
struct FrameImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // height * width * 3

  FrameImage() = default;
  FrameImage(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(size_t(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return pixels[(size_t(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(size_t(y) * width + x) * 3 + c];
  }

  FrameImage flipped_horizontal() const;
  // Per-channel means.
  void channel_means(double out[3]) const;
};

// Binary portable pixmap (P6), 8 bits per channel.
void write_ppm(const std::string& path, const FrameImage& img);
FrameImage read_ppm(const std::string& path);

}  // namespace m2b

#endif  // M2B_IMAGE_HPP_
