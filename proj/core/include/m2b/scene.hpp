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

// Parametric binaural scene renderer and dataset generator. Sources are
// placed on the horizontal plane; interaural time differences follow the
// Woodworth model and level differences a sine law, with a one-pole
// low-pass head shadow on the far ear. The renderer doubles as the
// ground-truth oracle for training and evaluation.

#ifndef M2B_SCENE_HPP_
#define M2B_SCENE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "m2b/binaural.hpp"
#include "m2b/dsp.hpp"
#include "m2b/image.hpp"

namespace m2b {

constexpr int kAudioRateHz = 16000;

struct SceneSource {
  double azimuth_deg = 0.0;  // 0 = front, positive = right, range [-90, 90]
  int class_id = 0;
  double gain = 1.0;
  std::string waveform_ref;
};

struct SceneDescriptor {
  std::vector<SceneSource> sources;
  double duration_s = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

struct HeadModel {
  double head_radius_m = 0.0875;
  double speed_of_sound_mps = 343.0;
  double ild_max_db = 10.0;
  // One-pole low-pass cutoff on the far ear at a fully lateral source;
  // the effective cutoff is shadow_cutoff_hz / sin|azimuth|, so the
  // filter fades to identity toward the front.
  double shadow_cutoff_hz = 800.0;
  bool shadow_enabled = true;
};

// Woodworth interaural time difference (a/c) * (theta + sin theta) with
// theta in radians. Positive means the right ear leads.
double itd_seconds(double theta_deg, const HeadModel& head);

// Resolves waveform references to 16 kHz mono waveforms.
class SourceBank {
 public:
  virtual ~SourceBank() = default;
  virtual Waveform get(const std::string& ref) const = 0;
};

// Synthesizes band-limited harmonic tone sequences. Each class id draws
// its fundamentals from a distinct range, so classes are separable by
// timbre. References look like "tone:c=2;s=12345;n=48000" and fully
// determine the waveform.
class SynthSourceBank : public SourceBank {
 public:
  Waveform get(const std::string& ref) const override;
  static std::string make_ref(int class_id, uint64_t seed, size_t samples);
};

// Sums per-source contributions: fractional delay per ear (windowed-sinc
// interpolation), per-ear gains 10^(+-ild_max_db * sin|theta| / 40), and
// the head-shadow low-pass on the far ear. Linear over sources.
BinauralPair render_binaural(const SceneDescriptor& scene,
                             const HeadModel& head, const SourceBank& bank);

// One filled disk per source at horizontal position W * (theta + 90)/180,
// radius W/16, color keyed by class id.
FrameImage render_frame(const SceneDescriptor& scene, int height = 64,
                        int width = 128);

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
};

struct GenerationConfig {
  std::string out_dir;
  SplitCounts counts;
  double duration_s = 3.0;
  int num_classes = 4;
  int min_sources = 1;
  int max_sources = 1;
  double azimuth_min_deg = -90.0;
  double azimuth_max_deg = 90.0;
  int frame_height = 64;
  int frame_width = 128;
  uint64_t seed = 0;
  HeadModel head;
};

struct ManifestEntry {
  std::string id;
  std::string split;
  std::string mono_wav;      // paths relative to the manifest directory
  std::string binaural_wav;
  std::string frame_image;
  SceneDescriptor scene;
};

struct DatasetManifest {
  std::string base_dir;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(const std::string& name) const;
  std::string resolve(const std::string& rel_path) const;
};

// Renders all clips (in parallel), writes WAV pairs, frame images, and
// the JSONL manifest. Fully deterministic for a given config.
DatasetManifest generate_dataset(const GenerationConfig& cfg);

DatasetManifest read_manifest(const std::string& manifest_path);
std::string default_manifest_path(const std::string& dataset_dir);

}  // namespace m2b

#endif  // M2B_SCENE_HPP_
