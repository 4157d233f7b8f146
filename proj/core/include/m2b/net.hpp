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

// Mask-predicting networks: a U-Net audio trunk (five stride-2 encoder
// convs, five up-convs, skip connections between encoder layer i and
// decoder layer n-i) with an optional small visual encoder whose
// embedding is tiled across the bottleneck and concatenated along the
// channel dimension. One network kind predicts a bounded complex mask
// for the difference signal; another predicts ratio masks for
// separation.

#ifndef M2B_NET_HPP_
#define M2B_NET_HPP_

#include <array>
#include <string>
#include <vector>

#include "m2b/binaural.hpp"
#include "m2b/checkpoint.hpp"
#include "m2b/dsp.hpp"
#include "m2b/image.hpp"
#include "m2b/tensor.hpp"

namespace m2b::nn {

// Named parameters/buffers in fixed registration order; the order
// defines checkpoint layout and optimizer slot order.
template <typename T>
struct ParamStore {
  std::vector<std::pair<std::string, Tensor<T>>> params;
  std::vector<std::pair<std::string, std::vector<T>*>> buffers;

  void add_param(const std::string& name, const Tensor<T>& t);
  void add_buffer(const std::string& name, std::vector<T>* b);
  Tensor<T> find_param(const std::string& name) const;
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  int stride = 2;
  int pad = 1;

  Conv2d() = default;
  Conv2d(int in_c, int out_c, int k, int stride, int pad, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void register_into(ParamStore<T>& store, const std::string& prefix);
};

template <typename T>
struct ConvTranspose2d {
  Tensor<T> weight;  // [in, out, k, k]
  Tensor<T> bias;    // [out]
  int stride = 2;
  int pad = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_c, int out_c, int k, int stride, int pad, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void register_into(ParamStore<T>& store, const std::string& prefix);
};

template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma;
  Tensor<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  Tensor<T> operator()(const Tensor<T>& x, bool training);
  void register_into(ParamStore<T>& store, const std::string& prefix);
};

struct UNetConfig {
  int in_channels = 2;
  int out_channels = 2;
  std::array<int, 5> widths = {16, 32, 64, 128, 128};
  int visual_dim = 64;        // 0 disables visual conditioning
  bool sigmoid_head = false;  // false: 2*sigmoid-1 in [-1,1]; true: (0,1)
};

template <typename T>
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& cfg, Rng& rng);

  // spec: [N, in_channels, T, F] with T and F divisible by 32.
  // visual: [N, visual_dim] (must be defined iff visual_dim > 0).
  Tensor<T> forward(const Tensor<T>& spec, const Tensor<T>& visual,
                    bool training);

  void register_into(ParamStore<T>& store, const std::string& prefix);
  const UNetConfig& config() const { return cfg_; }

 private:
  UNetConfig cfg_;
  std::vector<Conv2d<T>> enc_;
  std::vector<BatchNorm2d<T>> enc_bn_;
  std::vector<ConvTranspose2d<T>> dec_;
  std::vector<BatchNorm2d<T>> dec_bn_;
};

struct VisualEncoderConfig {
  int in_height = 64;
  int in_width = 128;
  std::array<int, 4> widths = {8, 16, 32, 64};
  int reduced_channels = 2;  // 1x1 conv output before flattening

  int embed_dim() const {
    return reduced_channels * (in_height / 16) * (in_width / 16);
  }
};

template <typename T>
class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(const VisualEncoderConfig& cfg, Rng& rng);

  // frames: [N, 3, H, W] -> [N, embed_dim]
  Tensor<T> forward(const Tensor<T>& frames, bool training);

  void register_into(ParamStore<T>& store, const std::string& prefix);
  const VisualEncoderConfig& config() const { return cfg_; }

 private:
  VisualEncoderConfig cfg_;
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> bns_;
  Conv2d<T> reduce_;
};

// Network kinds, stored in checkpoint meta.
inline constexpr const char* kKindM2b = "m2b";
inline constexpr const char* kKindM2bAudioOnly = "m2b_audio_only";
inline constexpr const char* kKindSeparation = "separation";

struct MaskNetConfig {
  std::string kind = kKindM2b;
  UNetConfig unet;
  VisualEncoderConfig visual;

  bool audio_only() const { return unet.visual_dim == 0; }
};

MaskNetConfig make_m2b_config(bool audio_only = false);
MaskNetConfig make_separation_config(int audio_channels);

template <typename T>
class MaskNet {
 public:
  MaskNet(const MaskNetConfig& cfg, uint64_t seed);

  // spec: [N, C, T, F]; frames: [N, 3, H, W] (ignored for audio-only).
  Tensor<T> forward(const Tensor<T>& spec, const Tensor<T>& frames,
                    bool training);

  std::vector<Tensor<T>> audio_params() const;
  std::vector<Tensor<T>> visual_params() const;
  ParamStore<T>& store() { return store_; }
  const MaskNetConfig& config() const { return cfg_; }

  Checkpoint to_checkpoint() const;
  void load_state(const Checkpoint& ckpt);
  static MaskNetConfig config_from_checkpoint(const Checkpoint& ckpt);

 private:
  MaskNetConfig cfg_;
  UNet<T> unet_;
  VisualEncoder<T> visual_;
  ParamStore<T> store_;
  size_t visual_param_start_ = 0;  // index into store_.params
};

// --- Spectrogram <-> network tensor conversions -------------------------

// Drops the Nyquist bin (F = 257 -> 256) and splits real/imag into two
// channels; values laid out [2, T, F-1].
template <typename T>
std::vector<T> spec_to_net(const ComplexSpectrogram& spec);

// Inverse: restores the Nyquist bin as zero. values must be 2*T*(F-1).
ComplexSpectrogram net_to_spec(const std::vector<float>& values, int frames,
                               const SpectrogramParams& params,
                               size_t source_len);

// log(1 + |X| / eps) magnitude compression used by the separation nets.
constexpr double kLogMagEps = 1e-3;
template <typename T>
std::vector<T> spec_to_logmag(const ComplexSpectrogram& spec);

// [N, 3, H, W] tensor from frame images.
template <typename T>
Tensor<T> frames_to_tensor(const std::vector<FrameImage>& frames);

// --- Gradient-check suite --------------------------------------------

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

// 64-bit central finite-difference checks for every layer type plus the
// composed tiny U-Net; the layer threshold is 1e-4, the composed one 1e-3.
std::vector<GradCheckCase> run_layer_grad_checks();

}  // namespace m2b::nn

#endif  // M2B_NET_HPP_
