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

// Evaluation: spectrogram and envelope distances, reference baselines,
// BSS source-separation metrics (least-squares projection onto 512-tap
// delayed reference subspaces, permutation resolved by mean SIR), and
// the benchmark drivers that produce the report tables.

#ifndef M2B_METRICS_HPP_
#define M2B_METRICS_HPP_

#include <string>
#include <vector>

#include "m2b/binaural.hpp"
#include "m2b/checkpoint.hpp"
#include "m2b/pipeline.hpp"
#include "m2b/scene.hpp"

namespace m2b {

// ||X_L - X~_L||_F + ||X_R - X~_R||_F over complex STFT grids.
double stft_distance(const BinauralPair& gt, const BinauralPair& pred,
                     const SpectrogramParams& params = SpectrogramParams());

// Same form over Hilbert envelopes of each channel.
double env_distance(const BinauralPair& gt, const BinauralPair& pred);

enum class BaselineKind { kMonoMono, kAudioOnly, kFlippedVisual };

// mono_mono: L = R = mono/2 (no model). audio_only: binauralize with the
// no-visual network. flipped_visual: binauralize with the horizontally
// mirrored frame through the main network.
BinauralPair make_baseline(BaselineKind kind, const Waveform& mono,
                           const FrameImage& frame, nn::MaskNet<float>* net,
                           const InferConfig& infer, double target_rms = 0.1);

// --- BSS evaluation -----------------------------------------------------

struct BssResult {
  // Per estimate, after permutation resolution.
  std::vector<double> sdr_db;
  std::vector<double> sir_db;
  std::vector<double> sar_db;
  std::vector<int> permutation;  // estimate i is scored against reference
                                 // permutation[i]
};

// references/estimates: J equal-length signals each. Distortion filters
// of filter_len taps are allowed; metrics capped at +-100 dB.
BssResult bss_eval(const std::vector<std::vector<double>>& references,
                   const std::vector<std::vector<double>>& estimates,
                   int filter_len = 512);

// --- Benchmark reports ------------------------------------------------

struct MetricSummaryRow {
  std::string method;
  std::string metric;
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  int n = 0;
};

struct PerClipRow {
  std::string clip_id;
  std::string method;
  std::string metric;
  double value = 0.0;
};

struct BenchmarkReport {
  std::vector<MetricSummaryRow> summary;
  std::vector<PerClipRow> per_clip;

  std::string summary_csv() const;
  std::string per_clip_csv() const;
  double mean_of(const std::string& method, const std::string& metric) const;
};

// Binaural generation benchmark over the given split: methods ours,
// audio_only, flipped_visual, mono_mono; metrics stft_distance,
// env_distance, plus per-clip left/right RMS rows (rms_left, rms_right)
// used by the spatial-correctness checks.
BenchmarkReport run_binaural_benchmark(const DatasetManifest& manifest,
                                       const Checkpoint& main_ckpt,
                                       const Checkpoint& audio_only_ckpt,
                                       const InferConfig& infer,
                                       const std::string& split = "test");

// Separation benchmark on two-source mixtures built from clip pairs of
// the split. Estimates are downmixed to mono so the three audio modes
// share one reference set; methods mixture, mono, predicted, gt with
// metrics sdr, sir, sar.
BenchmarkReport run_separation_benchmark(
    const DatasetManifest& manifest, const Checkpoint& sep_mono,
    const Checkpoint& sep_predicted, const Checkpoint& sep_gt,
    const Checkpoint& m2b_ckpt, int max_mixtures,
    const std::string& split = "test");

}  // namespace m2b

#endif  // M2B_METRICS_HPP_
