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

#include "m2b/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>

#include <nlohmann/json.hpp>

#include "m2b/rng.hpp"
#include "m2b/util.hpp"
#include "m2b/wav.hpp"

namespace m2b {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  double px = kPi * x;
  return std::sin(px) / px;
}

const double kPalette[8][3] = {
    {0.85, 0.20, 0.20}, {0.20, 0.80, 0.25}, {0.25, 0.35, 0.90},
    {0.90, 0.85, 0.20}, {0.80, 0.25, 0.80}, {0.25, 0.80, 0.80},
    {0.90, 0.55, 0.15}, {0.92, 0.92, 0.92},
};

// Fractional delay via a 64-tap windowed-sinc kernel. delay >= 0 is in
// samples; the kernel phase is constant so it is computed once. A zero
// delay reduces to the identity exactly.
std::vector<double> delayed(const std::vector<double>& x, double delay) {
  const int kHalf = 32;
  long long int_delay = static_cast<long long>(std::floor(delay));
  double frac = delay - static_cast<double>(int_delay);

  // Tap j reads x[i - int_delay - (kHalf - 1) + j - 1]; its offset from
  // the interpolation point i - delay is t = (kHalf - j) - frac.
  std::vector<double> taps(2 * kHalf);
  double norm = 0.0;
  for (int j = 0; j < 2 * kHalf; ++j) {
    double t = static_cast<double>(kHalf - j) - frac;
    double win = 0.5 + 0.5 * std::cos(kPi * t / kHalf);
    if (std::abs(t) >= kHalf) win = 0.0;
    taps[j] = sinc(t) * win;
    norm += taps[j];
  }
  if (norm != 0.0) {
    for (double& v : taps) v /= norm;
  }

  std::vector<double> y(x.size(), 0.0);
  const long long n = static_cast<long long>(x.size());
  for (long long i = 0; i < n; ++i) {
    // y[i] = sum_j x[i - int_delay - kHalf + 1 + j] * taps'[...]
    double acc = 0.0;
    for (int j = 0; j < 2 * kHalf; ++j) {
      long long src = i - int_delay - (kHalf - 1) + j - 1;
      if (src >= 0 && src < n) acc += x[static_cast<size_t>(src)] * taps[j];
    }
    y[static_cast<size_t>(i)] = acc;
  }
  return y;
}

// One-pole low-pass, DC gain 1.
void one_pole_lowpass(std::vector<double>& x, double cutoff_hz, int rate_hz) {
  double a = std::exp(-2.0 * kPi * cutoff_hz / rate_hz);
  double state = 0.0;
  for (double& v : x) {
    state = (1.0 - a) * v + a * state;
    v = state;
  }
}

struct ParsedRef {
  int class_id = 0;
  uint64_t seed = 0;
  size_t samples = 0;
};

ParsedRef parse_tone_ref(const std::string& ref) {
  ParsedRef out;
  unsigned long long s = 0, n = 0;
  int c = 0;
  if (std::sscanf(ref.c_str(), "tone:c=%d;s=%llu;n=%llu", &c, &s, &n) != 3)
    throw UnknownSource(ref);
  out.class_id = c;
  out.seed = s;
  out.samples = static_cast<size_t>(n);
  return out;
}

// Harmonic tone sequence: a few notes with attack/release ramps, slight
// vibrato, fundamentals from the class band, 1/k^alpha partials kept
// below 6.5 kHz.
Waveform synth_tone(const ParsedRef& ref) {
  Rng rng(ref.seed ^ (0x51ed2701ULL + static_cast<uint64_t>(ref.class_id) * 0x9e3779b9ULL));
  const size_t n = ref.samples;
  const double fs = kAudioRateHz;
  std::vector<double> x(n, 0.0);

  double band_lo = 110.0 * std::pow(2.0, 0.5 * ref.class_id);
  double band_hi = band_lo * std::sqrt(2.0);
  double base_f0 = rng.uniform(band_lo, band_hi);
  double alpha = rng.uniform(0.9, 1.6);
  double vib_rate = rng.uniform(4.0, 6.5);
  double vib_phase = rng.uniform(0.0, 2.0 * kPi);

  size_t pos = 0;
  while (pos < n) {
    double note_len_s = rng.uniform(0.25, 0.6);
    double gap_s = rng.uniform(0.02, 0.12);
    int semitones = static_cast<int>(rng.uniform_int(-3, 3));
    double f0 = base_f0 * std::pow(2.0, semitones / 12.0);

    size_t note_len = static_cast<size_t>(note_len_s * fs);
    size_t note_end = std::min(n, pos + note_len);
    size_t attack = static_cast<size_t>(0.02 * fs);
    size_t release = static_cast<size_t>(0.05 * fs);

    int max_harmonics = std::max(1, static_cast<int>(6500.0 / f0));
    max_harmonics = std::min(max_harmonics, 12);
    std::vector<double> amp(max_harmonics), phase(max_harmonics);
    for (int k = 0; k < max_harmonics; ++k) {
      amp[k] = std::pow(k + 1.0, -alpha);
      phase[k] = rng.uniform(0.0, 2.0 * kPi);
    }

    for (size_t i = pos; i < note_end; ++i) {
      double t = static_cast<double>(i) / fs;
      double vib = 1.0 + 0.003 * std::sin(2.0 * kPi * vib_rate * t + vib_phase);
      double env = 1.0;
      if (i - pos < attack) env = static_cast<double>(i - pos) / attack;
      if (note_end - i < release)
        env = std::min(env, static_cast<double>(note_end - i) / release);
      double s = 0.0;
      for (int k = 0; k < max_harmonics; ++k) {
        s += amp[k] * std::sin(2.0 * kPi * f0 * (k + 1) * vib * t + phase[k]);
      }
      x[i] += 0.25 * env * s;
    }
    pos = note_end + static_cast<size_t>(gap_s * fs);
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : x) v *= 0.5 / peak;
  }
  return Waveform(std::move(x), kAudioRateHz);
}

std::vector<double> fit_length(const std::vector<double>& x, size_t n) {
  std::vector<double> out(n, 0.0);
  if (x.empty()) return out;
  for (size_t i = 0; i < n; ++i) out[i] = x[i % x.size()];
  return out;
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

}  // namespace

void SceneDescriptor::validate() const {
  if (sources.empty() || sources.size() > 4)
    throw InvalidAudio("scene must have 1 to 4 sources");
  for (const auto& s : sources) {
    if (s.azimuth_deg < -90.0 || s.azimuth_deg > 90.0)
      throw InvalidAudio("azimuth out of [-90, 90]");
    if (s.gain <= 0.0) throw InvalidAudio("source gain must be positive");
  }
  if (duration_s <= 0.0) throw InvalidAudio("duration must be positive");
}

double itd_seconds(double theta_deg, const HeadModel& head) {
  double theta = theta_deg * kDegToRad;
  return head.head_radius_m / head.speed_of_sound_mps *
         (theta + std::sin(theta));
}

std::string SynthSourceBank::make_ref(int class_id, uint64_t seed,
                                      size_t samples) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "tone:c=%d;s=%llu;n=%llu", class_id,
                static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(samples));
  return buf;
}

Waveform SynthSourceBank::get(const std::string& ref) const {
  if (ref.rfind("tone:", 0) != 0) throw UnknownSource(ref);
  static std::mutex mu;
  static std::map<std::string, Waveform> cache;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(ref);
    if (it != cache.end()) return it->second;
  }
  Waveform w = synth_tone(parse_tone_ref(ref));
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(ref, w);
  return w;
}

BinauralPair render_binaural(const SceneDescriptor& scene,
                             const HeadModel& head, const SourceBank& bank) {
  scene.validate();
  const size_t n =
      static_cast<size_t>(std::llround(scene.duration_s * kAudioRateHz));
  std::vector<double> left(n, 0.0), right(n, 0.0);

  for (const auto& src : scene.sources) {
    Waveform w = bank.get(src.waveform_ref);
    if (w.sample_rate_hz != kAudioRateHz)
      w = resample(w, kAudioRateHz);
    std::vector<double> x = fit_length(w.mono(), n);
    for (double& v : x) v *= src.gain;

    double theta = src.azimuth_deg;
    double sin_abs = std::sin(std::abs(theta) * kDegToRad);
    double itd = itd_seconds(theta, head);
    double delay_samples = std::abs(itd) * kAudioRateHz;
    double near_gain = std::pow(10.0, head.ild_max_db * sin_abs / 40.0);
    double far_gain = std::pow(10.0, -head.ild_max_db * sin_abs / 40.0);

    std::vector<double> near = delayed(x, 0.0);
    std::vector<double> far = delayed(x, delay_samples);
    for (double& v : near) v *= near_gain;
    for (double& v : far) v *= far_gain;
    if (head.shadow_enabled && sin_abs > 1e-9) {
      one_pole_lowpass(far, head.shadow_cutoff_hz / sin_abs, kAudioRateHz);
    }

    auto& near_ear = theta >= 0.0 ? right : left;
    auto& far_ear = theta >= 0.0 ? left : right;
    for (size_t i = 0; i < n; ++i) {
      near_ear[i] += near[i];
      far_ear[i] += far[i];
    }
  }

  BinauralPair out;
  out.left = Waveform(std::move(left), kAudioRateHz);
  out.right = Waveform(std::move(right), kAudioRateHz);
  return out;
}

FrameImage render_frame(const SceneDescriptor& scene, int height, int width) {
  scene.validate();
  FrameImage img(height, width, 0.12);
  double radius = width / 16.0;
  for (const auto& src : scene.sources) {
    double cx = width * (src.azimuth_deg + 90.0) / 180.0;
    double cy = height / 2.0;
    const double* color = kPalette[((src.class_id % 8) + 8) % 8];
    int x_lo = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    int x_hi = std::min(width - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    int y_lo = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    int y_hi = std::min(height - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        double dx = (x + 0.5) - cx;
        double dy = (y + 0.5) - cy;
        if (dx * dx + dy * dy <= radius * radius) {
          img.at(y, x, 0) = color[0];
          img.at(y, x, 1) = color[1];
          img.at(y, x, 2) = color[2];
        }
      }
    }
  }
  return img;
}

std::vector<ManifestEntry> DatasetManifest::split(const std::string& name) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

std::string DatasetManifest::resolve(const std::string& rel_path) const {
  return (std::filesystem::path(base_dir) / rel_path).string();
}

std::string default_manifest_path(const std::string& dataset_dir) {
  return (std::filesystem::path(dataset_dir) / "manifest.jsonl").string();
}

namespace {

nlohmann::ordered_json scene_to_json(const SceneDescriptor& scene) {
  nlohmann::ordered_json js;
  js["duration_s"] = scene.duration_s;
  js["seed"] = scene.seed;
  js["sources"] = nlohmann::ordered_json::array();
  for (const auto& s : scene.sources) {
    nlohmann::ordered_json sj;
    sj["azimuth_deg"] = s.azimuth_deg;
    sj["class_id"] = s.class_id;
    sj["gain"] = s.gain;
    sj["waveform_ref"] = s.waveform_ref;
    js["sources"].push_back(sj);
  }
  return js;
}

SceneDescriptor scene_from_json(const nlohmann::json& js) {
  SceneDescriptor scene;
  scene.duration_s = js.at("duration_s").get<double>();
  scene.seed = js.at("seed").get<uint64_t>();
  for (const auto& sj : js.at("sources")) {
    SceneSource s;
    s.azimuth_deg = sj.at("azimuth_deg").get<double>();
    s.class_id = sj.at("class_id").get<int>();
    s.gain = sj.at("gain").get<double>();
    s.waveform_ref = sj.at("waveform_ref").get<std::string>();
    scene.sources.push_back(std::move(s));
  }
  return scene;
}

}  // namespace

DatasetManifest generate_dataset(const GenerationConfig& cfg) {
  if (cfg.counts.train <= 0 && cfg.counts.val <= 0 && cfg.counts.test <= 0)
    throw ConfigError("dataset counts must be positive");
  if (cfg.min_sources < 1 || cfg.max_sources > 4 ||
      cfg.min_sources > cfg.max_sources)
    throw ConfigError("source count bounds must satisfy 1 <= min <= max <= 4");

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(cfg.out_dir) / "wav", ec);
  fs::create_directories(fs::path(cfg.out_dir) / "frames", ec);
  if (ec) throw IoError("cannot create dataset directories under " + cfg.out_dir);

  struct SplitSpec {
    const char* name;
    int count;
  };
  const SplitSpec splits[] = {{"train", cfg.counts.train},
                              {"val", cfg.counts.val},
                              {"test", cfg.counts.test}};

  DatasetManifest manifest;
  manifest.base_dir = cfg.out_dir;

  Rng root = Rng(cfg.seed);
  const size_t samples =
      static_cast<size_t>(std::llround(cfg.duration_s * kAudioRateHz));

  // Sample all scene descriptors up front (cheap and strictly ordered),
  // then render clips in parallel.
  uint64_t clip_index = 0;
  for (const auto& split : splits) {
    for (int i = 0; i < split.count; ++i, ++clip_index) {
      Rng rng = root.fork(clip_index);
      SceneDescriptor scene;
      scene.duration_s = cfg.duration_s;
      scene.seed = rng.next_u64();
      int n_src = static_cast<int>(
          rng.uniform_int(cfg.min_sources, cfg.max_sources));
      for (int s = 0; s < n_src; ++s) {
        SceneSource src;
        // Rounded so the manifest text stays short and readable.
        src.azimuth_deg =
            round4(rng.uniform(cfg.azimuth_min_deg, cfg.azimuth_max_deg));
        src.class_id = static_cast<int>(rng.uniform_int(0, cfg.num_classes - 1));
        src.gain = round4(rng.uniform(0.6, 1.0));
        src.waveform_ref =
            SynthSourceBank::make_ref(src.class_id, rng.next_u64(), samples);
        scene.sources.push_back(std::move(src));
      }

      char id[32];
      std::snprintf(id, sizeof(id), "%s%04d", split.name, i);
      ManifestEntry entry;
      entry.id = id;
      entry.split = split.name;
      entry.mono_wav = std::string("wav/") + id + "_mono.wav";
      entry.binaural_wav = std::string("wav/") + id + "_binaural.wav";
      entry.frame_image = std::string("frames/") + id + ".ppm";
      entry.scene = std::move(scene);
      manifest.entries.push_back(std::move(entry));
    }
  }

  SynthSourceBank bank;
  parallel_for(
      static_cast<int64_t>(manifest.entries.size()), worker_threads(),
      [&](int64_t i) {
        const ManifestEntry& e = manifest.entries[static_cast<size_t>(i)];
        BinauralPair pair = render_binaural(e.scene, cfg.head, bank);
        write_wav(manifest.resolve(e.binaural_wav), pair.as_stereo());

        // The stored mono is the float32 sum of the float32-quantized
        // channels, so mixing the binaural file reproduces it exactly.
        size_t n = pair.length();
        std::vector<double> mono(n);
        for (size_t j = 0; j < n; ++j) {
          double l = static_cast<float>(pair.left.channels[0][j]);
          double r = static_cast<float>(pair.right.channels[0][j]);
          mono[j] = l + r;
        }
        write_wav(manifest.resolve(e.mono_wav),
                  Waveform(std::move(mono), kAudioRateHz));

        write_ppm(manifest.resolve(e.frame_image),
                  render_frame(e.scene, cfg.frame_height, cfg.frame_width));
      });

  std::string path = default_manifest_path(cfg.out_dir);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json js;
    js["id"] = e.id;
    js["split"] = e.split;
    js["mono_wav"] = e.mono_wav;
    js["binaural_wav"] = e.binaural_wav;
    js["frame_image"] = e.frame_image;
    js["scene"] = scene_to_json(e.scene);
    out << js.dump() << "\n";
  }
  if (!out) throw IoError("short manifest write: " + path);
  return manifest;
}

DatasetManifest read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  DatasetManifest manifest;
  manifest.base_dir =
      std::filesystem::path(manifest_path).parent_path().string();
  if (manifest.base_dir.empty()) manifest.base_dir = ".";
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json js;
    try {
      js = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    ManifestEntry entry;
    entry.id = js.at("id").get<std::string>();
    entry.split = js.at("split").get<std::string>();
    entry.mono_wav = js.at("mono_wav").get<std::string>();
    entry.binaural_wav = js.at("binaural_wav").get<std::string>();
    entry.frame_image = js.at("frame_image").get<std::string>();
    entry.scene = scene_from_json(js.at("scene"));
    manifest.entries.push_back(std::move(entry));
  }
  if (manifest.entries.empty())
    throw EmptyDataset("manifest has no entries: " + manifest_path);
  return manifest;
}

}  // namespace m2b
