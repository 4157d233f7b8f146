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

#include "m2b/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "m2b/rng.hpp"
#include "m2b/util.hpp"
#include "m2b/wav.hpp"

namespace m2b {

namespace {

Waveform make_mono(std::vector<double> samples) {
  return Waveform(std::move(samples), kAudioRateHz);
}

std::vector<double> slice(const std::vector<double>& x, size_t start,
                          size_t len) {
  return std::vector<double>(x.begin() + static_cast<long>(start),
                             x.begin() + static_cast<long>(start + len));
}

double rms_of(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

std::vector<double> scaled(const std::vector<double>& x, double g) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * g;
  return out;
}

void fisher_yates(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i) {
    size_t j =
        static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
}

// Batched eval-mode forward; returns one mask value vector per row.
std::vector<std::vector<float>> forward_masks(
    nn::MaskNet<float>& net, const std::vector<std::vector<float>>& inputs,
    int channels, int t_dim, int f_dim, const std::vector<FrameImage>& frames,
    int chunk) {
  std::vector<std::vector<float>> out(inputs.size());
  const size_t row_len = static_cast<size_t>(channels) * t_dim * f_dim;
  for (size_t base = 0; base < inputs.size();
       base += static_cast<size_t>(chunk)) {
    size_t count = std::min(static_cast<size_t>(chunk), inputs.size() - base);
    std::vector<float> batch(count * row_len);
    std::vector<FrameImage> batch_frames;
    batch_frames.reserve(count);
    for (size_t i = 0; i < count; ++i) {
      std::copy(inputs[base + i].begin(), inputs[base + i].end(),
                batch.begin() + static_cast<long>(i * row_len));
      batch_frames.push_back(frames[base + i]);
    }
    auto spec = nn::Tensor<float>::from_vector(
        {static_cast<int>(count), channels, t_dim, f_dim}, std::move(batch));
    nn::Tensor<float> frame_tensor;
    if (!net.config().audio_only())
      frame_tensor = nn::frames_to_tensor<float>(batch_frames);
    nn::Tensor<float> mask = net.forward(spec, frame_tensor, /*training=*/false);
    const auto& mv = mask.value();
    for (size_t i = 0; i < count; ++i) {
      out[base + i].assign(mv.begin() + static_cast<long>(i * row_len),
                           mv.begin() + static_cast<long>((i + 1) * row_len));
    }
  }
  return out;
}

// ComplexMask over the full bin grid from 2 x T x (F-1) net output; the
// Nyquist column stays zero.
ComplexMask mask_from_net_values(const std::vector<float>& values, int t_dim,
                                 int bins) {
  const int f_net = bins - 1;
  ComplexMask mask;
  mask.frames = t_dim;
  mask.bins = bins;
  mask.values.assign(static_cast<size_t>(t_dim) * bins, {0.0, 0.0});
  for (int t = 0; t < t_dim; ++t) {
    for (int f = 0; f < f_net; ++f) {
      double re = values[static_cast<size_t>(t) * f_net + f];
      double im = values[static_cast<size_t>(t_dim) * f_net +
                         static_cast<size_t>(t) * f_net + f];
      mask.at(t, f) = {re, im};
    }
  }
  return mask;
}

void append_adam_state(Checkpoint& ckpt, nn::Adam<float>& adam,
                       const nn::ParamStore<float>& store) {
  auto& slots = adam.slots();
  for (size_t i = 0; i < slots.size() && i < store.params.size(); ++i) {
    const std::string& name = store.params[i].first;
    ckpt.add("adam.m." + name, store.params[i].second.shape(), slots[i].m);
    ckpt.add("adam.v." + name, store.params[i].second.shape(), slots[i].v);
  }
  ckpt.meta["adam.step"] = std::to_string(adam.step_count());
}

}  // namespace

void TrainConfig::validate() const {
  if (lr <= 0 || weight_decay < 0 || batch_size < 2 || epochs < 1 ||
      segment_len_s <= 0 || target_rms <= 0 || lr_decay_epochs < 1 ||
      lr_decay < 0 || lr_decay >= 1 || visual_lr_multiplier <= 0)
    throw ConfigError("invalid training configuration");
}

double TrainConfig::lr_at_epoch(int epoch) const {
  int k = epoch / lr_decay_epochs;
  return lr * std::pow(1.0 - lr_decay, k);
}

void InferConfig::validate() const {
  if (window_s <= 0 || hop_s <= 0 || hop_s > window_s || batch_windows < 1)
    throw ConfigError("invalid inference configuration (need 0 < hop <= window)");
}

Clip load_clip(const DatasetManifest& manifest, const ManifestEntry& entry) {
  Clip clip;
  clip.id = entry.id;
  Waveform stereo = read_wav(manifest.resolve(entry.binaural_wav));
  if (stereo.sample_rate_hz != kAudioRateHz)
    stereo = resample(stereo, kAudioRateHz);
  clip.binaural = BinauralPair::from_stereo(stereo);
  clip.mono = mix_to_mono(clip.binaural);
  clip.frame = read_ppm(manifest.resolve(entry.frame_image));
  clip.scene = entry.scene;
  return clip;
}

FrameProvider static_frame_provider(FrameImage frame) {
  return [frame = std::move(frame)](double) { return frame; };
}

// --- train_m2b ------------------------------------------------------------

TrainOutput train_m2b(const DatasetManifest& manifest, const TrainConfig& cfg,
                      bool audio_only, const std::array<int, 5>& unet_widths) {
  cfg.validate();
  auto entries = manifest.split("train");
  if (entries.empty()) throw EmptyDataset("manifest has no train entries");

  const size_t seg =
      static_cast<size_t>(std::llround(cfg.segment_len_s * kAudioRateHz));
  std::vector<Clip> clips(entries.size());
  parallel_for(static_cast<int64_t>(entries.size()), worker_threads(),
               [&](int64_t i) {
                 clips[static_cast<size_t>(i)] =
                     load_clip(manifest, entries[static_cast<size_t>(i)]);
               });
  for (const auto& clip : clips) {
    if (clip.mono.length() < seg)
      throw ClipTooShort("clip " + clip.id + " shorter than training segment");
  }

  nn::MaskNetConfig netcfg = nn::make_m2b_config(audio_only);
  netcfg.unet.widths = unet_widths;
  netcfg.visual.in_height = clips[0].frame.height;
  netcfg.visual.in_width = clips[0].frame.width;
  if (!audio_only) netcfg.unet.visual_dim = netcfg.visual.embed_dim();
  nn::MaskNet<float> net(netcfg, cfg.seed);

  nn::Adam<float> adam(static_cast<float>(cfg.lr),
                       static_cast<float>(cfg.weight_decay));
  adam.add_group(net.audio_params(), 1.0f);
  if (!audio_only)
    adam.add_group(net.visual_params(),
                   static_cast<float>(cfg.visual_lr_multiplier));

  const SpectrogramParams sp;
  const int t_dim = sp.num_frames(seg);
  const int f_net = sp.num_bins() - 1;
  const size_t row_len = static_cast<size_t>(2) * t_dim * f_net;

  const int batch =
      std::min<int>(cfg.batch_size, static_cast<int>(clips.size()));
  if (batch < 2) throw DegenerateBatch("training needs at least two clips");
  const int steps_per_epoch = static_cast<int>(clips.size()) / batch;

  Rng rng(cfg.seed ^ 0x6d326274726e0001ULL);
  std::vector<size_t> order(clips.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainOutput out;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_lr(static_cast<float>(cfg.lr_at_epoch(epoch)));
    fisher_yates(order, rng);
    for (int step = 0; step < steps_per_epoch; ++step) {
      // Draw all segment offsets up front so the random stream does not
      // depend on worker scheduling.
      std::vector<size_t> clip_idx(static_cast<size_t>(batch));
      std::vector<size_t> offsets(static_cast<size_t>(batch));
      for (int b = 0; b < batch; ++b) {
        size_t ci = order[static_cast<size_t>(step) * batch + b];
        clip_idx[static_cast<size_t>(b)] = ci;
        const auto& mono = clips[ci].mono.channels[0];
        size_t off = 0;
        bool ok = false;
        for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
          off = static_cast<size_t>(
              rng.uniform_int(0, static_cast<int64_t>(mono.size() - seg)));
          ok = rms_of(slice(mono, off, seg)) > 1e-30;
        }
        if (!ok)
          throw SilentSegment("clip " + clips[ci].id +
                              " has no audible training segment");
        offsets[static_cast<size_t>(b)] = off;
      }

      std::vector<float> input_batch(static_cast<size_t>(batch) * row_len);
      std::vector<float> target_batch(static_cast<size_t>(batch) * row_len);
      std::vector<FrameImage> frames(static_cast<size_t>(batch));
      parallel_for(batch, worker_threads(), [&](int64_t b) {
        const Clip& clip = clips[clip_idx[static_cast<size_t>(b)]];
        size_t off = offsets[static_cast<size_t>(b)];
        std::vector<double> mono_seg = slice(clip.mono.channels[0], off, seg);
        const auto& l = clip.binaural.left.channels[0];
        const auto& r = clip.binaural.right.channels[0];
        std::vector<double> diff_seg(seg);
        for (size_t i = 0; i < seg; ++i) diff_seg[i] = l[off + i] - r[off + i];

        double gain = cfg.target_rms / rms_of(mono_seg);
        ComplexSpectrogram spec_m = stft(make_mono(scaled(mono_seg, gain)), sp);
        ComplexSpectrogram spec_d = stft(make_mono(scaled(diff_seg, gain)), sp);
        std::vector<float> in_vals = nn::spec_to_net<float>(spec_m);
        std::vector<float> tgt_vals = nn::spec_to_net<float>(spec_d);
        std::copy(in_vals.begin(), in_vals.end(),
                  input_batch.begin() + static_cast<long>(b) * row_len);
        std::copy(tgt_vals.begin(), tgt_vals.end(),
                  target_batch.begin() + static_cast<long>(b) * row_len);
        frames[static_cast<size_t>(b)] = clip.frame;
      });

      auto spec_tensor = nn::Tensor<float>::from_vector(
          {batch, 2, t_dim, f_net}, std::move(input_batch));
      auto target_tensor = nn::Tensor<float>::from_vector(
          {batch, 2, t_dim, f_net}, std::move(target_batch));
      nn::Tensor<float> frame_tensor;
      if (!audio_only) frame_tensor = nn::frames_to_tensor<float>(frames);

      nn::Tensor<float> mask = net.forward(spec_tensor, frame_tensor, true);
      nn::Tensor<float> pred = nn::complex_mul_channels(mask, spec_tensor);
      nn::Tensor<float> loss = nn::mse_loss(pred, target_tensor);
      double loss_v = loss.item();
      if (!std::isfinite(loss_v))
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch));
      adam.zero_grad();
      loss.backward();
      adam.step();
      out.losses.push_back(loss_v);
    }
  }

  out.checkpoint = net.to_checkpoint();
  out.checkpoint.meta["target_rms"] = format_double(cfg.target_rms);
  out.checkpoint.meta["seed"] = std::to_string(cfg.seed);
  out.checkpoint.meta["epochs"] = std::to_string(cfg.epochs);
  out.checkpoint.meta["has_adam"] = cfg.save_adam_state ? "1" : "0";
  if (cfg.save_adam_state) append_adam_state(out.checkpoint, adam, net.store());
  return out;
}

nn::MaskNet<float> net_from_checkpoint(const Checkpoint& ckpt) {
  nn::MaskNetConfig cfg = nn::MaskNet<float>::config_from_checkpoint(ckpt);
  nn::MaskNet<float> net(cfg, /*seed=*/0);
  net.load_state(ckpt);
  for (auto& [name, t] : net.store().params) t.set_requires_grad(false);
  return net;
}

// --- binauralize ------------------------------------------------------------

std::vector<size_t> sliding_window_starts(size_t len, size_t window,
                                          size_t hop) {
  if (window == 0 || hop == 0)
    throw ConfigError("window and hop must be positive");
  if (len < window) throw ClipTooShort("clip shorter than the inference window");
  std::vector<size_t> starts;
  for (size_t s = 0; s + window <= len; s += hop) starts.push_back(s);
  if (starts.back() + window < len) starts.push_back(len - window);
  return starts;
}

BinauralPair binauralize(const Waveform& mono, const FrameProvider& frames,
                         nn::MaskNet<float>& net, const InferConfig& infer,
                         double target_rms) {
  infer.validate();
  mono.validate();
  if (!mono.is_mono()) throw ShapeMismatch("binauralize expects mono input");
  if (mono.sample_rate_hz != kAudioRateHz)
    throw InvalidAudio("binauralize expects 16 kHz input");

  const size_t window =
      static_cast<size_t>(std::llround(infer.window_s * kAudioRateHz));
  const size_t hop =
      static_cast<size_t>(std::llround(infer.hop_s * kAudioRateHz));
  const auto& x = mono.channels[0];
  std::vector<size_t> starts = sliding_window_starts(x.size(), window, hop);

  const SpectrogramParams sp;
  const int t_dim = sp.num_frames(window);
  const int f_net = sp.num_bins() - 1;
  const int bins = sp.num_bins();

  std::vector<double> diff_sum(x.size(), 0.0);
  std::vector<double> coverage(x.size(), 0.0);

  const size_t chunk = static_cast<size_t>(infer.batch_windows);
  for (size_t base = 0; base < starts.size(); base += chunk) {
    const size_t count = std::min(chunk, starts.size() - base);

    std::vector<double> gains(count, 1.0);
    std::vector<ComplexSpectrogram> specs(count);
    std::vector<std::vector<float>> inputs(count);
    std::vector<FrameImage> window_frames(count);
    // Frame providers may touch shared state; call them serially.
    for (size_t i = 0; i < count; ++i) {
      double center_s =
          (static_cast<double>(starts[base + i]) + window / 2.0) / kAudioRateHz;
      window_frames[i] = frames(center_s);
    }
    parallel_for(static_cast<int64_t>(count), worker_threads(), [&](int64_t i) {
      size_t s = starts[base + static_cast<size_t>(i)];
      std::vector<double> seg = slice(x, s, window);
      double level = rms_of(seg);
      double g = level > 1e-30 ? target_rms / level : 1.0;
      gains[static_cast<size_t>(i)] = g;
      specs[static_cast<size_t>(i)] = stft(make_mono(scaled(seg, g)), sp);
      inputs[static_cast<size_t>(i)] =
          nn::spec_to_net<float>(specs[static_cast<size_t>(i)]);
    });

    auto masks = forward_masks(net, inputs, 2, t_dim, f_net, window_frames,
                               infer.batch_windows);

    std::vector<std::vector<double>> diffs(count);
    parallel_for(static_cast<int64_t>(count), worker_threads(), [&](int64_t i) {
      ComplexMask mask =
          mask_from_net_values(masks[static_cast<size_t>(i)], t_dim, bins);
      ComplexSpectrogram masked =
          apply_complex_mask(specs[static_cast<size_t>(i)], mask);
      Waveform d = istft(masked, sp, window, kAudioRateHz);
      diffs[static_cast<size_t>(i)] =
          scaled(d.channels[0], 1.0 / gains[static_cast<size_t>(i)]);
    });

    for (size_t i = 0; i < count; ++i) {
      size_t s = starts[base + i];
      for (size_t j = 0; j < window; ++j) {
        diff_sum[s + j] += diffs[i][j];
        coverage[s + j] += 1.0;
      }
    }
  }

  std::vector<double> diff(x.size());
  for (size_t i = 0; i < x.size(); ++i) diff[i] = diff_sum[i] / coverage[i];
  return reconstruct_channels(mono, make_mono(std::move(diff)));
}

// --- localize_by_occlusion ---------------------------------------------

void OcclusionHeatmap::argmax(int* r, int* c) const {
  size_t best = 0;
  for (size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] > losses[best]) best = i;
  }
  *r = static_cast<int>(best) / cols;
  *c = static_cast<int>(best) % cols;
}

OcclusionHeatmap localize_by_occlusion(nn::MaskNet<float>& net,
                                       const Clip& clip, int mask_px,
                                       int stride_px, double target_rms) {
  if (net.config().audio_only())
    throw ShapeMismatch("occlusion localization needs a visual network");
  const FrameImage& frame = clip.frame;
  if (frame.height < mask_px || frame.width < mask_px)
    throw ShapeMismatch("occluder larger than the frame");

  const SpectrogramParams sp;
  const size_t window = static_cast<size_t>(std::llround(0.63 * kAudioRateHz));
  const auto& mono = clip.mono.channels[0];
  if (mono.size() < window)
    throw ClipTooShort("clip shorter than one analysis window");
  const int t_dim = sp.num_frames(window);
  const int f_net = sp.num_bins() - 1;
  const size_t row_len = static_cast<size_t>(2) * t_dim * f_net;

  // Non-overlapping windows over the clip.
  std::vector<size_t> starts;
  for (size_t s = 0; s + window <= mono.size(); s += window) starts.push_back(s);

  std::vector<std::vector<float>> inputs(starts.size()), targets(starts.size());
  parallel_for(static_cast<int64_t>(starts.size()), worker_threads(),
               [&](int64_t i) {
                 size_t s = starts[static_cast<size_t>(i)];
                 std::vector<double> mono_seg = slice(mono, s, window);
                 const auto& l = clip.binaural.left.channels[0];
                 const auto& r = clip.binaural.right.channels[0];
                 std::vector<double> diff_seg(window);
                 for (size_t j = 0; j < window; ++j)
                   diff_seg[j] = l[s + j] - r[s + j];
                 double level = rms_of(mono_seg);
                 double g = level > 1e-30 ? target_rms / level : 1.0;
                 inputs[static_cast<size_t>(i)] = nn::spec_to_net<float>(
                     stft(make_mono(scaled(mono_seg, g)), sp));
                 targets[static_cast<size_t>(i)] = nn::spec_to_net<float>(
                     stft(make_mono(scaled(diff_seg, g)), sp));
               });

  OcclusionHeatmap heat;
  heat.mask_px = mask_px;
  heat.stride_px = stride_px;
  heat.rows = 1 + (frame.height - mask_px) / stride_px;
  heat.cols = 1 + (frame.width - mask_px) / stride_px;

  double mean[3];
  frame.channel_means(mean);

  // Average spectrogram loss over windows for each frame variant.
  auto losses_for = [&](const std::vector<FrameImage>& variant_frames) {
    std::vector<std::vector<float>> batch_inputs;
    std::vector<FrameImage> batch_frames;
    std::vector<std::pair<size_t, size_t>> keys;  // (variant, window)
    for (size_t v = 0; v < variant_frames.size(); ++v) {
      for (size_t wdx = 0; wdx < starts.size(); ++wdx) {
        batch_inputs.push_back(inputs[wdx]);
        batch_frames.push_back(variant_frames[v]);
        keys.emplace_back(v, wdx);
      }
    }
    auto masks =
        forward_masks(net, batch_inputs, 2, t_dim, f_net, batch_frames, 16);
    std::vector<double> out(variant_frames.size(), 0.0);
    for (size_t k = 0; k < keys.size(); ++k) {
      auto [v, wdx] = keys[k];
      const auto& m = masks[k];
      const auto& in = inputs[wdx];
      const auto& tg = targets[wdx];
      const size_t half = static_cast<size_t>(t_dim) * f_net;
      double acc = 0.0;
      for (size_t i = 0; i < half; ++i) {
        double mr = m[i], mi = m[half + i];
        double xr = in[i], xi = in[half + i];
        double dr = mr * xr - mi * xi - tg[i];
        double di = mr * xi + mi * xr - tg[half + i];
        acc += dr * dr + di * di;
      }
      out[v] += acc / static_cast<double>(row_len);
    }
    for (double& v : out) v /= static_cast<double>(starts.size());
    return out;
  };

  heat.baseline_loss = losses_for({frame})[0];

  std::vector<FrameImage> occluded;
  occluded.reserve(static_cast<size_t>(heat.rows) * heat.cols);
  for (int r = 0; r < heat.rows; ++r) {
    for (int c = 0; c < heat.cols; ++c) {
      FrameImage f = frame;
      for (int y = r * stride_px; y < r * stride_px + mask_px; ++y) {
        for (int x = c * stride_px; x < c * stride_px + mask_px; ++x) {
          f.at(y, x, 0) = mean[0];
          f.at(y, x, 1) = mean[1];
          f.at(y, x, 2) = mean[2];
        }
      }
      occluded.push_back(std::move(f));
    }
  }
  heat.losses = losses_for(occluded);

  double lo = heat.losses[0], hi = heat.losses[0];
  for (double v : heat.losses) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  heat.normalized.resize(heat.losses.size());
  for (size_t i = 0; i < heat.losses.size(); ++i) {
    heat.normalized[i] = hi > lo ? (heat.losses[i] - lo) / (hi - lo) : 0.0;
  }
  return heat;
}

// --- Separation ------------------------------------------------------------

const char* to_string(SeparationAudioMode mode) {
  switch (mode) {
    case SeparationAudioMode::kMono:
      return "mono";
    case SeparationAudioMode::kPredictedBinaural:
      return "predicted";
    case SeparationAudioMode::kGtBinaural:
      return "gt";
  }
  return "?";
}

SeparationAudioMode separation_mode_from_string(const std::string& s) {
  if (s == "mono") return SeparationAudioMode::kMono;
  if (s == "predicted") return SeparationAudioMode::kPredictedBinaural;
  if (s == "gt") return SeparationAudioMode::kGtBinaural;
  throw ConfigError("unknown separation audio mode: " + s);
}

size_t separation_segment_samples() {
  return static_cast<size_t>(std::llround(2.55 * kAudioRateHz));
}

std::vector<float> ratio_mask_target(const ComplexSpectrogram& target,
                                     const ComplexSpectrogram& mix) {
  if (target.frames != mix.frames || target.bins != mix.bins)
    throw ShapeMismatch("ratio mask: grid mismatch");
  const int f_net = mix.bins - 1;
  std::vector<float> out(static_cast<size_t>(target.frames) * f_net);
  for (int t = 0; t < target.frames; ++t) {
    for (int f = 0; f < f_net; ++f) {
      double ratio =
          std::abs(target.at(t, f)) / (std::abs(mix.at(t, f)) + 1e-12);
      out[static_cast<size_t>(t) * f_net + f] =
          static_cast<float>(std::clamp(ratio, 0.0, 1.0));
    }
  }
  return out;
}

Waveform apply_ratio_mask(const ComplexSpectrogram& mix_spec,
                          const std::vector<float>& mask, size_t out_len) {
  const int f_net = mix_spec.bins - 1;
  if (mask.size() != static_cast<size_t>(mix_spec.frames) * f_net)
    throw ShapeMismatch("ratio mask: value count mismatch");
  ComplexSpectrogram est = mix_spec;
  for (int t = 0; t < mix_spec.frames; ++t) {
    for (int f = 0; f < f_net; ++f) {
      est.at(t, f) *= mask[static_cast<size_t>(t) * f_net + f];
    }
    est.at(t, f_net) = 0.0;
  }
  return istft(est, mix_spec.params, out_len, kAudioRateHz);
}

TrainOutput train_separation(const DatasetManifest& manifest,
                             const TrainConfig& cfg, SeparationAudioMode mode,
                             const Checkpoint* m2b_checkpoint,
                             const std::array<int, 5>& unet_widths) {
  cfg.validate();
  auto entries = manifest.split("train");
  if (entries.size() < 2)
    throw EmptyDataset("separation training needs at least two train clips");

  const size_t seg = separation_segment_samples();
  std::vector<Clip> clips(entries.size());
  parallel_for(static_cast<int64_t>(entries.size()), worker_threads(),
               [&](int64_t i) {
                 clips[static_cast<size_t>(i)] =
                     load_clip(manifest, entries[static_cast<size_t>(i)]);
               });
  for (const auto& clip : clips) {
    if (clip.mono.length() < seg)
      throw ClipTooShort("clip " + clip.id + " shorter than 2.55 s segment");
  }

  const int channels = mode == SeparationAudioMode::kMono ? 1 : 2;

  // Audio tracks per clip for the chosen mode; predicted binaural is
  // rendered once per clip with the frozen conversion network.
  std::vector<std::vector<std::vector<double>>> tracks(clips.size());
  if (mode == SeparationAudioMode::kPredictedBinaural) {
    if (!m2b_checkpoint)
      throw MissingCheckpoint(
          "predicted-binaural separation needs a trained m2b checkpoint");
    nn::MaskNet<float> m2b_net = net_from_checkpoint(*m2b_checkpoint);
    double m2b_rms = parse_double(m2b_checkpoint->meta_or("target_rms", "0.1"));
    InferConfig infer;
    for (size_t i = 0; i < clips.size(); ++i) {
      BinauralPair pred =
          binauralize(clips[i].mono, static_frame_provider(clips[i].frame),
                      m2b_net, infer, m2b_rms);
      tracks[i] = {pred.left.channels[0], pred.right.channels[0]};
    }
  } else if (mode == SeparationAudioMode::kGtBinaural) {
    for (size_t i = 0; i < clips.size(); ++i) {
      tracks[i] = {clips[i].binaural.left.channels[0],
                   clips[i].binaural.right.channels[0]};
    }
  } else {
    for (size_t i = 0; i < clips.size(); ++i) {
      tracks[i] = {clips[i].mono.channels[0]};
    }
  }

  nn::MaskNetConfig netcfg = nn::make_separation_config(channels);
  netcfg.unet.widths = unet_widths;
  netcfg.visual.in_height = clips[0].frame.height;
  netcfg.visual.in_width = clips[0].frame.width;
  netcfg.unet.visual_dim = netcfg.visual.embed_dim();
  nn::MaskNet<float> net(netcfg, cfg.seed);

  nn::Adam<float> adam(static_cast<float>(cfg.lr),
                       static_cast<float>(cfg.weight_decay));
  adam.add_group(net.audio_params(), 1.0f);
  adam.add_group(net.visual_params(),
                 static_cast<float>(cfg.visual_lr_multiplier));

  const SpectrogramParams sp;
  const int t_dim = sp.num_frames(seg);
  const int f_net = sp.num_bins() - 1;
  const size_t plane = static_cast<size_t>(t_dim) * f_net;
  const size_t row_len = static_cast<size_t>(channels) * plane;

  const int pairs_per_step = std::max<int>(
      1, std::min<int>(cfg.batch_size / 2, static_cast<int>(clips.size()) / 2));
  const int pairs_per_epoch = static_cast<int>(clips.size()) / 2;
  const int steps_per_epoch = std::max(1, pairs_per_epoch / pairs_per_step);

  Rng rng(cfg.seed ^ 0x7365706172617465ULL);
  std::vector<size_t> order(clips.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainOutput out;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_lr(static_cast<float>(cfg.lr_at_epoch(epoch)));
    fisher_yates(order, rng);
    for (int step = 0; step < steps_per_epoch; ++step) {
      struct PairSpec {
        size_t a, b;
        size_t off_a, off_b;
      };
      std::vector<PairSpec> pairs(static_cast<size_t>(pairs_per_step));
      for (int p = 0; p < pairs_per_step; ++p) {
        size_t a = order[(static_cast<size_t>(step) * pairs_per_step + p) * 2];
        size_t b =
            order[(static_cast<size_t>(step) * pairs_per_step + p) * 2 + 1];
        size_t off_a = static_cast<size_t>(rng.uniform_int(
            0, static_cast<int64_t>(tracks[a][0].size() - seg)));
        size_t off_b = static_cast<size_t>(rng.uniform_int(
            0, static_cast<int64_t>(tracks[b][0].size() - seg)));
        pairs[static_cast<size_t>(p)] = {a, b, off_a, off_b};
      }

      const int rows = pairs_per_step * 2;
      std::vector<float> input_batch(static_cast<size_t>(rows) * row_len);
      std::vector<float> target_batch(static_cast<size_t>(rows) * row_len);
      std::vector<FrameImage> frames(static_cast<size_t>(rows));

      parallel_for(pairs_per_step, worker_threads(), [&](int64_t p) {
        const PairSpec& pr = pairs[static_cast<size_t>(p)];
        std::vector<std::vector<double>> seg_a(static_cast<size_t>(channels)),
            seg_b(static_cast<size_t>(channels)),
            mix(static_cast<size_t>(channels));
        double energy = 0.0;
        for (int c = 0; c < channels; ++c) {
          seg_a[c] = slice(tracks[pr.a][static_cast<size_t>(c)], pr.off_a, seg);
          seg_b[c] = slice(tracks[pr.b][static_cast<size_t>(c)], pr.off_b, seg);
          mix[c].resize(seg);
          for (size_t i = 0; i < seg; ++i) mix[c][i] = seg_a[c][i] + seg_b[c][i];
          for (double v : mix[c]) energy += v * v;
        }
        double level = std::sqrt(
            energy / static_cast<double>(seg * static_cast<size_t>(channels)));
        double g = level > 1e-30 ? cfg.target_rms / level : 1.0;

        for (int c = 0; c < channels; ++c) {
          ComplexSpectrogram spec_mix = stft(make_mono(scaled(mix[c], g)), sp);
          ComplexSpectrogram spec_a = stft(make_mono(scaled(seg_a[c], g)), sp);
          ComplexSpectrogram spec_b = stft(make_mono(scaled(seg_b[c], g)), sp);
          std::vector<float> logmag = nn::spec_to_logmag<float>(spec_mix);

          float* in_a = input_batch.data() +
                        (static_cast<size_t>(p) * 2) * row_len + c * plane;
          float* in_b = input_batch.data() +
                        (static_cast<size_t>(p) * 2 + 1) * row_len + c * plane;
          std::copy(logmag.begin(), logmag.end(), in_a);
          std::copy(logmag.begin(), logmag.end(), in_b);

          std::vector<float> mask_a = ratio_mask_target(spec_a, spec_mix);
          std::vector<float> mask_b = ratio_mask_target(spec_b, spec_mix);
          std::copy(mask_a.begin(), mask_a.end(),
                    target_batch.data() +
                        (static_cast<size_t>(p) * 2) * row_len + c * plane);
          std::copy(mask_b.begin(), mask_b.end(),
                    target_batch.data() +
                        (static_cast<size_t>(p) * 2 + 1) * row_len + c * plane);
        }
        frames[static_cast<size_t>(p) * 2] = clips[pr.a].frame;
        frames[static_cast<size_t>(p) * 2 + 1] = clips[pr.b].frame;
      });

      auto input_tensor = nn::Tensor<float>::from_vector(
          {rows, channels, t_dim, f_net}, std::move(input_batch));
      auto target_tensor = nn::Tensor<float>::from_vector(
          {rows, channels, t_dim, f_net}, std::move(target_batch));
      auto frame_tensor = nn::frames_to_tensor<float>(frames);

      nn::Tensor<float> masks = net.forward(input_tensor, frame_tensor, true);
      nn::Tensor<float> loss = nn::l1_loss(masks, target_tensor);
      double loss_v = loss.item();
      if (!std::isfinite(loss_v))
        throw NumericError("non-finite separation loss at epoch " +
                           std::to_string(epoch));
      adam.zero_grad();
      loss.backward();
      adam.step();
      out.losses.push_back(loss_v);
    }
  }

  out.checkpoint = net.to_checkpoint();
  out.checkpoint.meta["audio_mode"] = to_string(mode);
  out.checkpoint.meta["target_rms"] = format_double(cfg.target_rms);
  out.checkpoint.meta["seed"] = std::to_string(cfg.seed);
  out.checkpoint.meta["epochs"] = std::to_string(cfg.epochs);
  out.checkpoint.meta["has_adam"] = cfg.save_adam_state ? "1" : "0";
  if (cfg.save_adam_state) append_adam_state(out.checkpoint, adam, net.store());
  return out;
}

std::vector<Waveform> separate(const Waveform& mixture,
                               const std::vector<FrameImage>& frames,
                               nn::MaskNet<float>& net, double target_rms) {
  mixture.validate();
  if (frames.empty()) throw ShapeMismatch("separate needs at least one frame");
  const int channels = mixture.num_channels();
  if (net.config().unet.in_channels != channels)
    throw ShapeMismatch("network expects " +
                        std::to_string(net.config().unet.in_channels) +
                        " channels, mixture has " + std::to_string(channels));

  const size_t seg = separation_segment_samples();
  const size_t len = mixture.length();
  std::vector<size_t> starts = sliding_window_starts(len, seg, seg / 2);

  const SpectrogramParams sp;
  const int t_dim = sp.num_frames(seg);
  const int f_net = sp.num_bins() - 1;
  const size_t plane = static_cast<size_t>(t_dim) * f_net;
  const size_t row_len = static_cast<size_t>(channels) * plane;
  const size_t n_videos = frames.size();

  std::vector<std::vector<std::vector<double>>> sums(
      n_videos, std::vector<std::vector<double>>(
                    static_cast<size_t>(channels), std::vector<double>(len, 0.0)));
  std::vector<double> coverage(len, 0.0);

  for (size_t s : starts) {
    double energy = 0.0;
    for (int c = 0; c < channels; ++c) {
      for (size_t j = 0; j < seg; ++j) {
        double v = mixture.channels[static_cast<size_t>(c)][s + j];
        energy += v * v;
      }
    }
    double level = std::sqrt(
        energy / static_cast<double>(seg * static_cast<size_t>(channels)));
    double g = level > 1e-30 ? target_rms / level : 1.0;

    std::vector<ComplexSpectrogram> mix_specs(static_cast<size_t>(channels));
    std::vector<float> input_row(row_len);
    for (int c = 0; c < channels; ++c) {
      std::vector<double> segment =
          slice(mixture.channels[static_cast<size_t>(c)], s, seg);
      mix_specs[static_cast<size_t>(c)] = stft(make_mono(scaled(segment, g)), sp);
      std::vector<float> logmag =
          nn::spec_to_logmag<float>(mix_specs[static_cast<size_t>(c)]);
      std::copy(logmag.begin(), logmag.end(),
                input_row.begin() + static_cast<long>(c) * plane);
    }

    std::vector<std::vector<float>> inputs(n_videos, input_row);
    auto masks = forward_masks(net, inputs, channels, t_dim, f_net, frames, 16);

    for (size_t v = 0; v < n_videos; ++v) {
      for (int c = 0; c < channels; ++c) {
        std::vector<float> channel_mask(
            masks[v].begin() + static_cast<long>(c * plane),
            masks[v].begin() + static_cast<long>((c + 1) * plane));
        Waveform w =
            apply_ratio_mask(mix_specs[static_cast<size_t>(c)], channel_mask, seg);
        for (size_t j = 0; j < seg; ++j)
          sums[v][static_cast<size_t>(c)][s + j] += w.channels[0][j] / g;
      }
    }
    for (size_t j = 0; j < seg; ++j) coverage[s + j] += 1.0;
  }

  std::vector<Waveform> out;
  for (size_t v = 0; v < n_videos; ++v) {
    Waveform w;
    w.sample_rate_hz = kAudioRateHz;
    w.channels.resize(static_cast<size_t>(channels));
    for (int c = 0; c < channels; ++c) {
      auto& ch = w.channels[static_cast<size_t>(c)];
      ch.resize(len);
      for (size_t j = 0; j < len; ++j)
        ch[j] = sums[v][static_cast<size_t>(c)][j] / coverage[j];
    }
    out.push_back(std::move(w));
  }
  return out;
}

// --- CSV / records ---------------------------------------------------------

void write_loss_csv(const std::string& path,
                    const std::vector<double>& losses) {
  std::string body = "step,loss\n";
  for (size_t i = 0; i < losses.size(); ++i) {
    body += std::to_string(i);
    body += ",";
    body += format_double(losses[i]);
    body += "\n";
  }
  write_text_file(path, body);
}

void write_repro_record(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& fields) {
  nlohmann::ordered_json js;
  for (const auto& [k, v] : fields) js[k] = v;
  write_text_file(path, js.dump(2) + "\n");
}

}  // namespace m2b
