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

// Training loops and inference: difference-signal mask training on
// random 0.63 s segments, sliding-window binauralization (0.05 s hop,
// right-aligned tail window, time-domain averaging of overlaps),
// occlusion-based localization, and mix-and-separate training on 2.55 s
// segment pairs.

#ifndef M2B_PIPELINE_HPP_
#define M2B_PIPELINE_HPP_

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "m2b/binaural.hpp"
#include "m2b/checkpoint.hpp"
#include "m2b/dsp.hpp"
#include "m2b/image.hpp"
#include "m2b/net.hpp"
#include "m2b/scene.hpp"

namespace m2b {

struct TrainConfig {
  double lr = 1e-3;
  double visual_lr_multiplier = 0.1;
  double weight_decay = 5e-4;
  int batch_size = 16;
  double lr_decay = 0.06;   // fraction removed every lr_decay_epochs
  int lr_decay_epochs = 10;
  int epochs = 60;
  double segment_len_s = 0.63;
  double target_rms = 0.1;
  bool save_adam_state = false;
  uint64_t seed = 0;

  void validate() const;
  // lr0 * (1 - lr_decay)^floor(epoch / lr_decay_epochs)
  double lr_at_epoch(int epoch) const;
};

struct InferConfig {
  double window_s = 0.63;
  double hop_s = 0.05;
  int batch_windows = 16;

  void validate() const;
};

struct TrainOutput {
  std::vector<double> losses;  // one entry per optimizer step
  Checkpoint checkpoint;
};

// Ground-truth clip with mono derived from the binaural channels.
struct Clip {
  std::string id;
  BinauralPair binaural;
  Waveform mono;
  FrameImage frame;
  SceneDescriptor scene;
};

Clip load_clip(const DatasetManifest& manifest, const ManifestEntry& entry);

// Per-window frame source; receives the window's center time.
using FrameProvider = std::function<FrameImage(double center_time_s)>;
FrameProvider static_frame_provider(FrameImage frame);

// Trains the difference-signal mask network. audio_only omits the visual
// branch entirely (the ablation baseline).
TrainOutput train_m2b(const DatasetManifest& manifest, const TrainConfig& cfg,
                      bool audio_only = false,
                      const std::array<int, 5>& unet_widths =
                          nn::UNetConfig{}.widths);

// Builds an inference network (float, eval mode) from a checkpoint.
nn::MaskNet<float> net_from_checkpoint(const Checkpoint& ckpt);

// Sliding-window mono-to-binaural conversion. Output length equals the
// input length and L + R equals the input mono samplewise.
BinauralPair binauralize(const Waveform& mono, const FrameProvider& frames,
                         nn::MaskNet<float>& net, const InferConfig& infer,
                         double target_rms = 0.1);

// Positions of the sliding windows for a clip of the given length:
// regular starts every hop plus a right-aligned tail window.
std::vector<size_t> sliding_window_starts(size_t len, size_t window,
                                          size_t hop);

struct OcclusionHeatmap {
  int rows = 0;
  int cols = 0;
  int mask_px = 32;
  int stride_px = 16;
  double baseline_loss = 0.0;
  std::vector<double> losses;      // rows * cols, row-major
  std::vector<double> normalized;  // min-max scaled to [0, 1]

  double at(int r, int c) const { return losses[size_t(r) * cols + c]; }
  void argmax(int* r, int* c) const;
};

// Slides a mask_px x mask_px occluder (filled with the frame's channel
// means) over the frame and records the spectrogram loss per placement.
OcclusionHeatmap localize_by_occlusion(nn::MaskNet<float>& net,
                                       const Clip& clip, int mask_px = 32,
                                       int stride_px = 16,
                                       double target_rms = 0.1);

enum class SeparationAudioMode { kMono, kPredictedBinaural, kGtBinaural };

const char* to_string(SeparationAudioMode mode);
SeparationAudioMode separation_mode_from_string(const std::string& s);

// Mix-and-separate training: pairs of clips are mixed (mono waveforms or
// binaural channels depending on the mode) and the network learns the
// per-video ratio masks with an L1 loss. predicted_binaural requires a
// trained m2b checkpoint, applied frozen.
TrainOutput train_separation(const DatasetManifest& manifest,
                             const TrainConfig& cfg, SeparationAudioMode mode,
                             const Checkpoint* m2b_checkpoint = nullptr,
                             const std::array<int, 5>& unet_widths =
                                 nn::UNetConfig{}.widths);

// Applies the separation network to a mixture: predicted ratio mask
// times the mixture magnitude, mixture phase reused, per channel. One
// estimate per conditioning frame.
std::vector<Waveform> separate(const Waveform& mixture,
                               const std::vector<FrameImage>& frames,
                               nn::MaskNet<float>& net,
                               double target_rms = 0.1);

// Segment length used by the separation pipeline (2.55 s).
size_t separation_segment_samples();

// Ground-truth ratio mask |target| / |mix| over the T x (F-1) grid used
// by the network (Nyquist bin dropped), clamped to [0, 1]; bins where
// phase cancellation makes the target exceed the mixture clamp to 1.
std::vector<float> ratio_mask_target(const ComplexSpectrogram& target,
                                     const ComplexSpectrogram& mix);

// Masked-magnitude resynthesis: per-bin mask times the mixture
// magnitude with the mixture phase reused; the Nyquist bin is zeroed.
Waveform apply_ratio_mask(const ComplexSpectrogram& mix_spec,
                          const std::vector<float>& mask, size_t out_len);

// CSV/report helpers -------------------------------------------------------

void write_loss_csv(const std::string& path, const std::vector<double>& losses);

// Reproducibility record: seed, config text hash, dataset hash,
// checkpoint hash, free-form fields.
void write_repro_record(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& fields);

}  // namespace m2b

#endif  // M2B_PIPELINE_HPP_
