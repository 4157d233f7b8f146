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

#include "m2b/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace m2b::nn {

namespace {

constexpr double kInitStddev = 0.02;

std::string widths_to_string(const std::array<int, 5>& w) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%d", w[0], w[1], w[2], w[3], w[4]);
  return buf;
}
std::string widths4_to_string(const std::array<int, 4>& w) {
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d", w[0], w[1], w[2], w[3]);
  return buf;
}

template <size_t N>
std::array<int, N> parse_widths(const std::string& s) {
  std::array<int, N> out{};
  size_t pos = 0;
  for (size_t i = 0; i < N; ++i) {
    size_t comma = s.find(',', pos);
    std::string tok =
        comma == std::string::npos ? s.substr(pos) : s.substr(pos, comma - pos);
    out[i] = std::stoi(tok);
    pos = comma == std::string::npos ? s.size() : comma + 1;
  }
  return out;
}

}  // namespace

// --- ParamStore ---------------------------------------------------------

template <typename T>
void ParamStore<T>::add_param(const std::string& name, const Tensor<T>& t) {
  for (const auto& [n, _] : params) {
    if (n == name) throw ShapeMismatch("duplicate parameter name: " + name);
  }
  params.emplace_back(name, t);
}

template <typename T>
void ParamStore<T>::add_buffer(const std::string& name, std::vector<T>* b) {
  buffers.emplace_back(name, b);
}

template <typename T>
Tensor<T> ParamStore<T>::find_param(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw MissingCheckpoint("parameter not found: " + name);
}

// --- Layers ---------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(int in_c, int out_c, int k, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  weight = Tensor<T>::randn({out_c, in_c, k, k}, rng, T(kInitStddev), true);
  bias = Tensor<T>::zeros({out_c}, true);
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, stride, pad);
}

template <typename T>
void Conv2d<T>::register_into(ParamStore<T>& store, const std::string& prefix) {
  store.add_param(prefix + ".weight", weight);
  store.add_param(prefix + ".bias", bias);
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_c, int out_c, int k, int stride_,
                                    int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  weight = Tensor<T>::randn({in_c, out_c, k, k}, rng, T(kInitStddev), true);
  bias = Tensor<T>::zeros({out_c}, true);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::operator()(const Tensor<T>& x) const {
  return conv_transpose2d(x, weight, bias, stride, pad);
}

template <typename T>
void ConvTranspose2d<T>::register_into(ParamStore<T>& store,
                                       const std::string& prefix) {
  store.add_param(prefix + ".weight", weight);
  store.add_param(prefix + ".bias", bias);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels) {
  gamma = Tensor<T>::full({channels}, T(1), true);
  beta = Tensor<T>::zeros({channels}, true);
  running_mean.assign(channels, T(0));
  running_var.assign(channels, T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, bool training) {
  return batchnorm2d(x, gamma, beta, running_mean, running_var, training);
}

template <typename T>
void BatchNorm2d<T>::register_into(ParamStore<T>& store,
                                   const std::string& prefix) {
  store.add_param(prefix + ".gamma", gamma);
  store.add_param(prefix + ".beta", beta);
  store.add_buffer(prefix + ".running_mean", &running_mean);
  store.add_buffer(prefix + ".running_var", &running_var);
}

// --- UNet -----------------------------------------------------------------

template <typename T>
UNet<T>::UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
  const auto& w = cfg.widths;
  int in_c = cfg.in_channels;
  for (int i = 0; i < 5; ++i) {
    enc_.emplace_back(in_c, w[i], 4, 2, 1, rng);
    enc_bn_.emplace_back(w[i]);
    in_c = w[i];
  }
  // Decoder layer i consumes the previous decoder output concatenated
  // with encoder output n-i; the bottleneck additionally carries the
  // tiled visual embedding.
  const int dec_out[5] = {w[3], w[2], w[1], w[0], cfg.out_channels};
  const int dec_in[5] = {w[4] + cfg.visual_dim, w[3] * 2, w[2] * 2, w[1] * 2,
                         w[0] * 2};
  for (int i = 0; i < 5; ++i) {
    dec_.emplace_back(dec_in[i], dec_out[i], 4, 2, 1, rng);
    if (i < 4) dec_bn_.emplace_back(dec_out[i]);
  }
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& spec, const Tensor<T>& visual,
                           bool training) {
  if (spec.rank() != 4 || spec.dim(1) != cfg_.in_channels)
    throw ShapeMismatch("unet input must be [N," +
                        std::to_string(cfg_.in_channels) + ",T,F], got " +
                        shape_str(spec.shape()));
  if (spec.dim(2) % 32 != 0 || spec.dim(3) % 32 != 0)
    throw ShapeMismatch("unet spatial dims must be divisible by 32, got " +
                        shape_str(spec.shape()));
  if ((cfg_.visual_dim > 0) != visual.defined())
    throw ShapeMismatch("visual embedding presence does not match config");

  std::vector<Tensor<T>> skips;
  Tensor<T> h = spec;
  for (int i = 0; i < 5; ++i) {
    h = enc_[i](h);
    h = enc_bn_[i](h, training);
    h = leaky_relu(h, T(0.2));
    skips.push_back(h);
  }

  if (cfg_.visual_dim > 0) {
    if (visual.rank() != 2 || visual.dim(1) != cfg_.visual_dim)
      throw ShapeMismatch("visual embedding must be [N," +
                          std::to_string(cfg_.visual_dim) + "]");
    Tensor<T> tiled = tile_vector(visual, h.dim(2), h.dim(3));
    h = concat_channels(h, tiled);
  }

  for (int i = 0; i < 5; ++i) {
    if (i > 0) h = concat_channels(h, skips[static_cast<size_t>(4 - i)]);
    h = dec_[i](h);
    if (i < 4) {
      h = dec_bn_[i](h, training);
      h = relu(h);
    }
  }
  return cfg_.sigmoid_head ? sigmoid(h) : scaled_sigmoid(h);
}

template <typename T>
void UNet<T>::register_into(ParamStore<T>& store, const std::string& prefix) {
  for (int i = 0; i < 5; ++i) {
    enc_[i].register_into(store, prefix + ".enc" + std::to_string(i + 1));
    enc_bn_[i].register_into(store, prefix + ".enc_bn" + std::to_string(i + 1));
  }
  for (int i = 0; i < 5; ++i) {
    dec_[i].register_into(store, prefix + ".dec" + std::to_string(i + 1));
    if (i < 4)
      dec_bn_[i].register_into(store, prefix + ".dec_bn" + std::to_string(i + 1));
  }
}

// --- VisualEncoder --------------------------------------------------------

template <typename T>
VisualEncoder<T>::VisualEncoder(const VisualEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.in_height % 16 != 0 || cfg.in_width % 16 != 0)
    throw ShapeMismatch("visual encoder input dims must be divisible by 16");
  int in_c = 3;
  for (int i = 0; i < 4; ++i) {
    convs_.emplace_back(in_c, cfg.widths[i], 4, 2, 1, rng);
    bns_.emplace_back(cfg.widths[i]);
    in_c = cfg.widths[i];
  }
  reduce_ = Conv2d<T>(in_c, cfg.reduced_channels, 1, 1, 0, rng);
}

template <typename T>
Tensor<T> VisualEncoder<T>::forward(const Tensor<T>& frames, bool training) {
  if (frames.rank() != 4 || frames.dim(1) != 3 ||
      frames.dim(2) != cfg_.in_height || frames.dim(3) != cfg_.in_width)
    throw ShapeMismatch("visual encoder expects [N,3," +
                        std::to_string(cfg_.in_height) + "," +
                        std::to_string(cfg_.in_width) + "], got " +
                        shape_str(frames.shape()));
  Tensor<T> h = frames;
  for (int i = 0; i < 4; ++i) {
    h = convs_[i](h);
    h = bns_[i](h, training);
    h = leaky_relu(h, T(0.2));
  }
  h = reduce_(h);
  return flatten_spatial(h);
}

template <typename T>
void VisualEncoder<T>::register_into(ParamStore<T>& store,
                                     const std::string& prefix) {
  for (int i = 0; i < 4; ++i) {
    convs_[i].register_into(store, prefix + ".conv" + std::to_string(i + 1));
    bns_[i].register_into(store, prefix + ".bn" + std::to_string(i + 1));
  }
  reduce_.register_into(store, prefix + ".reduce");
}

// --- MaskNet --------------------------------------------------------------

MaskNetConfig make_m2b_config(bool audio_only) {
  MaskNetConfig cfg;
  cfg.kind = audio_only ? kKindM2bAudioOnly : kKindM2b;
  cfg.unet.in_channels = 2;
  cfg.unet.out_channels = 2;
  cfg.unet.sigmoid_head = false;
  cfg.unet.visual_dim = audio_only ? 0 : cfg.visual.embed_dim();
  return cfg;
}

MaskNetConfig make_separation_config(int audio_channels) {
  if (audio_channels != 1 && audio_channels != 2)
    throw ShapeMismatch("separation net supports 1 or 2 audio channels");
  MaskNetConfig cfg;
  cfg.kind = kKindSeparation;
  cfg.unet.in_channels = audio_channels;
  cfg.unet.out_channels = audio_channels;
  cfg.unet.sigmoid_head = true;
  cfg.unet.visual_dim = cfg.visual.embed_dim();
  return cfg;
}

template <typename T>
MaskNet<T>::MaskNet(const MaskNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (!cfg.audio_only() && cfg.unet.visual_dim != cfg.visual.embed_dim())
    throw ShapeMismatch("unet visual_dim must equal the visual embed dim");
  Rng rng(seed ^ 0xa5c3b1e97d2f4680ULL);
  unet_ = UNet<T>(cfg.unet, rng);
  unet_.register_into(store_, "unet");
  visual_param_start_ = store_.params.size();
  if (!cfg.audio_only()) {
    visual_ = VisualEncoder<T>(cfg.visual, rng);
    visual_.register_into(store_, "visual");
  }
}

template <typename T>
Tensor<T> MaskNet<T>::forward(const Tensor<T>& spec, const Tensor<T>& frames,
                              bool training) {
  if (cfg_.audio_only()) {
    return unet_.forward(spec, Tensor<T>(), training);
  }
  Tensor<T> v = visual_.forward(frames, training);
  return unet_.forward(spec, v, training);
}

template <typename T>
std::vector<Tensor<T>> MaskNet<T>::audio_params() const {
  std::vector<Tensor<T>> out;
  for (size_t i = 0; i < visual_param_start_; ++i)
    out.push_back(store_.params[i].second);
  return out;
}

template <typename T>
std::vector<Tensor<T>> MaskNet<T>::visual_params() const {
  std::vector<Tensor<T>> out;
  for (size_t i = visual_param_start_; i < store_.params.size(); ++i)
    out.push_back(store_.params[i].second);
  return out;
}

template <typename T>
Checkpoint MaskNet<T>::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = cfg_.kind;
  ckpt.meta["unet.in_channels"] = std::to_string(cfg_.unet.in_channels);
  ckpt.meta["unet.out_channels"] = std::to_string(cfg_.unet.out_channels);
  ckpt.meta["unet.widths"] = widths_to_string(cfg_.unet.widths);
  ckpt.meta["unet.visual_dim"] = std::to_string(cfg_.unet.visual_dim);
  ckpt.meta["unet.sigmoid_head"] = cfg_.unet.sigmoid_head ? "1" : "0";
  ckpt.meta["visual.in_height"] = std::to_string(cfg_.visual.in_height);
  ckpt.meta["visual.in_width"] = std::to_string(cfg_.visual.in_width);
  ckpt.meta["visual.widths"] = widths4_to_string(cfg_.visual.widths);
  ckpt.meta["visual.reduced_channels"] =
      std::to_string(cfg_.visual.reduced_channels);
  ckpt.meta["has_running_stats"] = "1";

  for (const auto& [name, t] : store_.params) {
    ckpt.add(name, t.shape(), t.value());
  }
  for (const auto& [name, b] : store_.buffers) {
    ckpt.add(name, {static_cast<int>(b->size())}, *b);
  }
  return ckpt;
}

template <typename T>
void MaskNet<T>::load_state(const Checkpoint& ckpt) {
  for (auto& [name, t] : store_.params) {
    const CheckpointTensor& src = ckpt.require(name);
    if (src.shape != t.shape())
      throw ShapeMismatch("checkpoint tensor " + name + " has shape mismatch");
    auto& dst = t.value();
    for (size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<T>(src.values[i]);
  }
  for (auto& [name, b] : store_.buffers) {
    const CheckpointTensor& src = ckpt.require(name);
    if (src.values.size() != b->size())
      throw ShapeMismatch("checkpoint buffer " + name + " has size mismatch");
    for (size_t i = 0; i < b->size(); ++i)
      (*b)[i] = static_cast<T>(src.values[i]);
  }
}

template <typename T>
MaskNetConfig MaskNet<T>::config_from_checkpoint(const Checkpoint& ckpt) {
  MaskNetConfig cfg;
  cfg.kind = ckpt.meta_or("kind", kKindM2b);
  cfg.unet.in_channels = std::stoi(ckpt.meta_or("unet.in_channels", "2"));
  cfg.unet.out_channels = std::stoi(ckpt.meta_or("unet.out_channels", "2"));
  cfg.unet.widths = parse_widths<5>(ckpt.meta_or("unet.widths", "16,32,64,128,128"));
  cfg.unet.visual_dim = std::stoi(ckpt.meta_or("unet.visual_dim", "64"));
  cfg.unet.sigmoid_head = ckpt.meta_or("unet.sigmoid_head", "0") == "1";
  cfg.visual.in_height = std::stoi(ckpt.meta_or("visual.in_height", "64"));
  cfg.visual.in_width = std::stoi(ckpt.meta_or("visual.in_width", "128"));
  cfg.visual.widths = parse_widths<4>(ckpt.meta_or("visual.widths", "8,16,32,64"));
  cfg.visual.reduced_channels =
      std::stoi(ckpt.meta_or("visual.reduced_channels", "2"));
  return cfg;
}

// --- Conversions ------------------------------------------------------

template <typename T>
std::vector<T> spec_to_net(const ComplexSpectrogram& spec) {
  const int t_dim = spec.frames;
  const int f_net = spec.bins - 1;  // drop the Nyquist bin
  if (f_net <= 0) throw ShapeMismatch("spectrogram too narrow");
  std::vector<T> out(static_cast<size_t>(2) * t_dim * f_net);
  for (int t = 0; t < t_dim; ++t) {
    for (int f = 0; f < f_net; ++f) {
      const auto& v = spec.at(t, f);
      out[static_cast<size_t>(t) * f_net + f] = static_cast<T>(v.real());
      out[static_cast<size_t>(t_dim) * f_net +
          static_cast<size_t>(t) * f_net + f] = static_cast<T>(v.imag());
    }
  }
  return out;
}

ComplexSpectrogram net_to_spec(const std::vector<float>& values, int frames,
                               const SpectrogramParams& params,
                               size_t source_len) {
  const int bins = params.num_bins();
  const int f_net = bins - 1;
  if (values.size() != static_cast<size_t>(2) * frames * f_net)
    throw ShapeMismatch("net values do not match 2 x T x (F-1)");
  ComplexSpectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.params = params;
  spec.source_len = source_len;
  spec.values.assign(static_cast<size_t>(frames) * bins, {0.0, 0.0});
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < f_net; ++f) {
      double re = values[static_cast<size_t>(t) * f_net + f];
      double im = values[static_cast<size_t>(frames) * f_net +
                         static_cast<size_t>(t) * f_net + f];
      spec.at(t, f) = {re, im};
    }
    // Restored Nyquist bin stays zero.
  }
  return spec;
}

template <typename T>
std::vector<T> spec_to_logmag(const ComplexSpectrogram& spec) {
  const int t_dim = spec.frames;
  const int f_net = spec.bins - 1;
  std::vector<T> out(static_cast<size_t>(t_dim) * f_net);
  for (int t = 0; t < t_dim; ++t) {
    for (int f = 0; f < f_net; ++f) {
      double mag = std::abs(spec.at(t, f));
      out[static_cast<size_t>(t) * f_net + f] =
          static_cast<T>(std::log1p(mag / kLogMagEps));
    }
  }
  return out;
}

template <typename T>
Tensor<T> frames_to_tensor(const std::vector<FrameImage>& frames) {
  if (frames.empty()) throw ShapeMismatch("no frames");
  const int n = static_cast<int>(frames.size());
  const int h = frames[0].height, w = frames[0].width;
  Tensor<T> out({n, 3, h, w});
  auto& v = out.value();
  for (int s = 0; s < n; ++s) {
    const FrameImage& img = frames[static_cast<size_t>(s)];
    if (img.height != h || img.width != w)
      throw ShapeMismatch("frame dimensions differ within batch");
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          v[((static_cast<size_t>(s) * 3 + c) * h + y) * w + x] =
              static_cast<T>(img.at(y, x, c));
        }
      }
    }
  }
  return out;
}

// --- Gradient-check suite --------------------------------------------

namespace {

// Keeps finite-difference probes away from the relu/l1 kinks.
Tensor<double> randn_off_zero(std::vector<int> shape, Rng& rng,
                              double margin = 0.1) {
  Tensor<double> t(shape);
  for (auto& v : t.value()) {
    double n = rng.normal();
    v = (n >= 0 ? 1.0 : -1.0) * (margin + std::abs(n));
  }
  return t;
}

std::vector<double> random_weights(size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (auto& v : w) v = rng.normal();
  return w;
}

GradCheckCase run_case(const std::string& name, double threshold,
                       const std::function<Tensor<double>()>& fn,
                       std::vector<Tensor<double>> leaves,
                       int max_coords = 0) {
  GradCheckCase c;
  c.name = name;
  c.threshold = threshold;
  c.max_rel_err = grad_check(fn, leaves, 1e-5, max_coords);
  c.passed = c.max_rel_err < threshold;
  return c;
}

}  // namespace

std::vector<GradCheckCase> run_layer_grad_checks() {
  std::vector<GradCheckCase> cases;
  Rng rng(20260809);

  {
    auto x = Tensor<double>::randn({2, 3, 6, 8}, rng);
    auto w = Tensor<double>::randn({4, 3, 4, 4}, rng, 0.3);
    auto b = Tensor<double>::randn({4}, rng, 0.3);
    auto proj = random_weights(2 * 4 * 3 * 4, rng);
    cases.push_back(run_case(
        "conv2d", 1e-4,
        [&] { return weighted_sum(conv2d(x, w, b, 2, 1), proj); }, {x, w, b}));
  }
  {
    auto x = Tensor<double>::randn({2, 3, 3, 4}, rng);
    auto w = Tensor<double>::randn({3, 4, 4, 4}, rng, 0.3);
    auto b = Tensor<double>::randn({4}, rng, 0.3);
    auto proj = random_weights(2 * 4 * 6 * 8, rng);
    cases.push_back(run_case(
        "conv_transpose2d", 1e-4,
        [&] { return weighted_sum(conv_transpose2d(x, w, b, 2, 1), proj); },
        {x, w, b}));
  }
  {
    auto x = Tensor<double>::randn({2, 5, 3, 4}, rng);
    auto w = Tensor<double>::randn({2, 5, 1, 1}, rng, 0.4);
    auto b = Tensor<double>::randn({2}, rng, 0.3);
    auto proj = random_weights(2 * 2 * 3 * 4, rng);
    cases.push_back(run_case(
        "conv2d_1x1", 1e-4,
        [&] { return weighted_sum(conv2d(x, w, b, 1, 0), proj); }, {x, w, b}));
  }
  {
    auto x = Tensor<double>::randn({3, 4, 2, 3}, rng);
    auto gamma = Tensor<double>::randn({4}, rng, 0.2);
    for (auto& v : gamma.value()) v += 1.0;
    auto beta = Tensor<double>::randn({4}, rng, 0.2);
    std::vector<double> rm(4, 0.0), rv(4, 1.0);
    auto proj = random_weights(3 * 4 * 2 * 3, rng);
    cases.push_back(run_case(
        "batchnorm2d_train", 1e-4,
        [&] {
          return weighted_sum(
              batchnorm2d(x, gamma, beta, rm, rv, /*training=*/true), proj);
        },
        {x, gamma, beta}));
    cases.push_back(run_case(
        "batchnorm2d_eval", 1e-4,
        [&] {
          return weighted_sum(
              batchnorm2d(x, gamma, beta, rm, rv, /*training=*/false), proj);
        },
        {x, gamma, beta}));
  }
  {
    auto x = randn_off_zero({2, 3, 4, 5}, rng);
    auto proj = random_weights(2 * 3 * 4 * 5, rng);
    cases.push_back(run_case(
        "relu", 1e-4, [&] { return weighted_sum(relu(x), proj); }, {x}));
    cases.push_back(run_case(
        "leaky_relu", 1e-4,
        [&] { return weighted_sum(leaky_relu(x, 0.2), proj); }, {x}));
    cases.push_back(run_case(
        "sigmoid", 1e-4, [&] { return weighted_sum(sigmoid(x), proj); }, {x}));
    cases.push_back(run_case(
        "scaled_sigmoid", 1e-4,
        [&] { return weighted_sum(scaled_sigmoid(x), proj); }, {x}));
  }
  {
    auto a = Tensor<double>::randn({2, 2, 3, 3}, rng);
    auto b = Tensor<double>::randn({2, 2, 3, 3}, rng);
    // Keep |a - b| away from the l1 kink.
    for (size_t i = 0; i < b.value().size(); ++i) {
      double d = a.value()[i] - b.value()[i];
      if (std::abs(d) < 0.1)
        b.value()[i] = a.value()[i] - (d >= 0 ? 0.1 : -0.1);
    }
    cases.push_back(
        run_case("mse_loss", 1e-4, [&] { return mse_loss(a, b); }, {a, b}));
    cases.push_back(
        run_case("l1_loss", 1e-4, [&] { return l1_loss(a, b); }, {a, b}));
  }
  {
    auto a = Tensor<double>::randn({2, 3, 2, 4}, rng);
    auto b = Tensor<double>::randn({2, 2, 2, 4}, rng);
    auto proj = random_weights(2 * 5 * 2 * 4, rng);
    cases.push_back(run_case(
        "concat_channels", 1e-4,
        [&] { return weighted_sum(concat_channels(a, b), proj); }, {a, b}));
  }
  {
    auto v = Tensor<double>::randn({2, 3}, rng);
    auto proj = random_weights(2 * 3 * 2 * 8, rng);
    cases.push_back(run_case(
        "tile_vector", 1e-4,
        [&] { return weighted_sum(tile_vector(v, 2, 8), proj); }, {v}));
  }
  {
    auto m = Tensor<double>::randn({2, 2, 3, 4}, rng);
    auto x = Tensor<double>::randn({2, 2, 3, 4}, rng);
    auto proj = random_weights(2 * 2 * 3 * 4, rng);
    cases.push_back(run_case(
        "complex_mul_channels", 1e-4,
        [&] { return weighted_sum(complex_mul_channels(m, x), proj); },
        {m, x}));
  }
  {
    // Composed tiny U-Net with visual conditioning, checked on a random
    // subset of coordinates per tensor.
    UNetConfig cfg;
    cfg.in_channels = 2;
    cfg.out_channels = 2;
    cfg.widths = {2, 2, 2, 2, 2};
    cfg.visual_dim = 4;
    cfg.sigmoid_head = false;
    Rng net_rng(7);
    UNet<double> unet(cfg, net_rng);
    ParamStore<double> store;
    unet.register_into(store, "unet");

    auto x = Tensor<double>::randn({2, 2, 32, 64}, rng);
    auto visual = Tensor<double>::randn({2, 4}, rng);
    std::vector<Tensor<double>> leaves = {x, visual};
    for (auto& [name, t] : store.params) leaves.push_back(t);
    auto proj = random_weights(2 * 2 * 32 * 64, rng);
    cases.push_back(run_case(
        "unet_tiny_composed", 1e-3,
        [&] {
          return weighted_sum(unet.forward(x, visual, /*training=*/true), proj);
        },
        leaves, /*max_coords=*/6));
  }
  return cases;
}

// --- Explicit instantiations -------------------------------------------

#define M2B_NET_INSTANTIATE(T)                                         \
  template struct ParamStore<T>;                                       \
  template struct Conv2d<T>;                                           \
  template struct ConvTranspose2d<T>;                                  \
  template struct BatchNorm2d<T>;                                      \
  template class UNet<T>;                                              \
  template class VisualEncoder<T>;                                     \
  template class MaskNet<T>;                                           \
  template std::vector<T> spec_to_net<T>(const ComplexSpectrogram&);   \
  template std::vector<T> spec_to_logmag<T>(const ComplexSpectrogram&); \
  template Tensor<T> frames_to_tensor<T>(const std::vector<FrameImage>&);

M2B_NET_INSTANTIATE(float)
M2B_NET_INSTANTIATE(double)

#undef M2B_NET_INSTANTIATE

}  // namespace m2b::nn
