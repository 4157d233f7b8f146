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

// Command line operator surface: dataset synthesis, training, inference,
// localization, separation, evaluation, and gradient verification.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "m2b/config.hpp"
#include "m2b/metrics.hpp"
#include "m2b/net.hpp"
#include "m2b/pipeline.hpp"
#include "m2b/scene.hpp"
#include "m2b/util.hpp"
#include "m2b/wav.hpp"

namespace {

namespace fs = std::filesystem;
using namespace m2b;

std::string output_root(const RunConfig& cfg) {
  if (const char* env = std::getenv("M2B_OUT_ROOT")) return env;
  return cfg.get("paths", "out_dir", "runs");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory: " + dir);
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig::parse_text("", "<empty>");
  return RunConfig::parse_file(path);
}

std::string manifest_path_for(const RunConfig& cfg, const std::string& flag) {
  std::string dir = !flag.empty() ? flag : cfg.get("paths", "data_dir", "");
  if (dir.empty())
    throw ConfigError("no dataset directory: pass --data or set [paths] data_dir");
  return default_manifest_path(dir);
}

Waveform load_audio_16k(const std::string& path) {
  Waveform w = read_wav(path);
  if (w.sample_rate_hz != kAudioRateHz) w = resample(w, kAudioRateHz);
  return w;
}

// Frame source from a single image or a directory of images, picked by
// window center position within the clip.
FrameProvider frames_from_path(const std::string& path, double clip_dur_s) {
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".ppm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .ppm frames in " + path);
    std::vector<FrameImage> frames;
    frames.reserve(files.size());
    for (const auto& f : files) frames.push_back(read_ppm(f));
    return [frames = std::move(frames), clip_dur_s](double center_s) {
      double pos = clip_dur_s > 0 ? center_s / clip_dur_s : 0.0;
      auto idx = static_cast<long>(pos * static_cast<double>(frames.size()));
      idx = std::clamp<long>(idx, 0, static_cast<long>(frames.size()) - 1);
      return frames[static_cast<size_t>(idx)];
    };
  }
  return static_frame_provider(read_ppm(path));
}

void save_run_outputs(const std::string& out_dir, const TrainOutput& result,
                      const RunConfig& cfg, const std::string& manifest_file,
                      const std::string& command) {
  ensure_dir(out_dir);
  std::string ckpt_path = (fs::path(out_dir) / "checkpoint.m2bn").string();
  result.checkpoint.save(ckpt_path);
  write_loss_csv((fs::path(out_dir) / "loss.csv").string(), result.losses);
  write_repro_record(
      (fs::path(out_dir) / "repro.json").string(),
      {{"command", command},
       {"seed", result.checkpoint.meta_or("seed", "0")},
       {"config_hash", hex64(cfg.hash())},
       {"dataset_hash", hex64(fnv1a64_file(manifest_file))},
       {"checkpoint_hash", hex64(fnv1a64_file(ckpt_path))}});
  std::printf("checkpoint: %s\n", ckpt_path.c_str());
  if (!result.losses.empty()) {
    std::printf("steps: %zu  first loss: %.6f  last loss: %.6f\n",
                result.losses.size(), result.losses.front(),
                result.losses.back());
  }
}

int cmd_synth(const std::string& config_path, const std::string& out_flag,
              int64_t seed_flag) {
  RunConfig cfg = load_config(config_path);
  GenerationConfig gen = generation_config_from(cfg);
  if (!out_flag.empty()) gen.out_dir = out_flag;
  if (seed_flag >= 0) gen.seed = static_cast<uint64_t>(seed_flag);
  if (gen.out_dir.empty())
    throw ConfigError("no output directory: pass --out or set [dataset] out_dir");

  DatasetManifest manifest = generate_dataset(gen);
  std::string mpath = default_manifest_path(gen.out_dir);
  write_repro_record(
      (fs::path(gen.out_dir) / "repro.json").string(),
      {{"command", "synth"},
       {"seed", std::to_string(gen.seed)},
       {"config_hash", hex64(cfg.hash())},
       {"dataset_hash", hex64(fnv1a64_file(mpath))}});
  std::printf("dataset: %s (%zu clips)\n", gen.out_dir.c_str(),
              manifest.entries.size());
  std::printf("manifest hash: %s\n", hex64(fnv1a64_file(mpath)).c_str());
  return 0;
}

int cmd_train_m2b(const std::string& config_path, const std::string& variant,
                  const std::string& data_flag, const std::string& out_flag,
                  int64_t seed_flag, int64_t epochs_flag) {
  RunConfig cfg = load_config(config_path);
  TrainConfig train_cfg = train_config_from(cfg);
  if (seed_flag >= 0) train_cfg.seed = static_cast<uint64_t>(seed_flag);
  if (epochs_flag > 0) train_cfg.epochs = static_cast<int>(epochs_flag);
  bool audio_only;
  if (variant == "full") {
    audio_only = false;
  } else if (variant == "audio-only") {
    audio_only = true;
  } else {
    throw ConfigError("--variant must be full or audio-only, got " + variant);
  }

  std::string manifest_file = manifest_path_for(cfg, data_flag);
  DatasetManifest manifest = read_manifest(manifest_file);
  TrainOutput result =
      train_m2b(manifest, train_cfg, audio_only, unet_widths_from(cfg));

  std::string out_dir = !out_flag.empty()
                            ? out_flag
                            : (fs::path(output_root(cfg)) /
                               (audio_only ? "m2b_audio_only" : "m2b"))
                                  .string();
  save_run_outputs(out_dir, result, cfg, manifest_file, "train-m2b");
  return 0;
}

int cmd_binauralize(const std::string& input, const std::string& frames_path,
                    const std::string& ckpt_path, const std::string& out_path) {
  Waveform audio = load_audio_16k(input);
  if (audio.num_channels() != 1)
    throw InvalidAudio("binauralize expects a mono input WAV");
  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  nn::MaskNet<float> net = net_from_checkpoint(ckpt);
  double target_rms = parse_double(ckpt.meta_or("target_rms", "0.1"));

  InferConfig infer;
  FrameProvider frames = frames_from_path(frames_path, audio.duration_s());
  BinauralPair pair = binauralize(audio, frames, net, infer, target_rms);
  write_wav(out_path, pair.as_stereo());
  std::printf("wrote %s (%zu samples, %d Hz)\n", out_path.c_str(),
              pair.length(), pair.sample_rate_hz());
  return 0;
}

int cmd_localize(const std::string& data_flag, const std::string& clip_id,
                 const std::string& ckpt_path, const std::string& out_prefix,
                 int mask_px, int stride_px) {
  RunConfig cfg = RunConfig::parse_text("", "<none>");
  std::string manifest_file = manifest_path_for(cfg, data_flag);
  DatasetManifest manifest = read_manifest(manifest_file);
  const ManifestEntry* entry = nullptr;
  for (const auto& e : manifest.entries) {
    if (e.id == clip_id) entry = &e;
  }
  if (!entry) throw EmptyDataset("clip id not found in manifest: " + clip_id);

  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  nn::MaskNet<float> net = net_from_checkpoint(ckpt);
  double target_rms = parse_double(ckpt.meta_or("target_rms", "0.1"));
  Clip clip = load_clip(manifest, *entry);
  OcclusionHeatmap heat =
      localize_by_occlusion(net, clip, mask_px, stride_px, target_rms);

  std::string body = "row,col,loss,normalized\n";
  for (int r = 0; r < heat.rows; ++r) {
    for (int c = 0; c < heat.cols; ++c) {
      body += std::to_string(r) + "," + std::to_string(c) + "," +
              format_double(heat.at(r, c)) + "," +
              format_double(heat.normalized[size_t(r) * heat.cols + c]) + "\n";
    }
  }
  write_text_file(out_prefix + ".csv", body);

  // Nearest-neighbor upscaled grayscale heatmap.
  const int cell = 16;
  FrameImage img(heat.rows * cell, heat.cols * cell);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double v = heat.normalized[size_t(y / cell) * heat.cols + (x / cell)];
      img.at(y, x, 0) = v;
      img.at(y, x, 1) = v;
      img.at(y, x, 2) = v;
    }
  }
  write_ppm(out_prefix + ".ppm", img);

  int r = 0, c = 0;
  heat.argmax(&r, &c);
  std::printf("heatmap %dx%d written to %s.{csv,ppm}; argmax cell (%d,%d)\n",
              heat.rows, heat.cols, out_prefix.c_str(), r, c);
  return 0;
}

int cmd_train_sep(const std::string& config_path, const std::string& mode_str,
                  const std::string& m2b_ckpt_path, const std::string& data_flag,
                  const std::string& out_flag, int64_t seed_flag,
                  int64_t epochs_flag) {
  RunConfig cfg = load_config(config_path);
  TrainConfig train_cfg = train_config_from(cfg);
  if (seed_flag >= 0) train_cfg.seed = static_cast<uint64_t>(seed_flag);
  if (epochs_flag > 0) train_cfg.epochs = static_cast<int>(epochs_flag);
  SeparationAudioMode mode = separation_mode_from_string(
      !mode_str.empty() ? mode_str : cfg.get("separation", "audio_mode", "mono"));

  std::string manifest_file = manifest_path_for(cfg, data_flag);
  DatasetManifest manifest = read_manifest(manifest_file);

  Checkpoint m2b_ckpt;
  const Checkpoint* m2b_ptr = nullptr;
  if (mode == SeparationAudioMode::kPredictedBinaural) {
    if (m2b_ckpt_path.empty())
      throw MissingCheckpoint("--m2b-ckpt is required for --audio-mode predicted");
    m2b_ckpt = Checkpoint::load(m2b_ckpt_path);
    m2b_ptr = &m2b_ckpt;
  }

  TrainOutput result = train_separation(manifest, train_cfg, mode, m2b_ptr,
                                        unet_widths_from(cfg));
  std::string out_dir =
      !out_flag.empty()
          ? out_flag
          : (fs::path(output_root(cfg)) / (std::string("sep_") + to_string(mode)))
                .string();
  save_run_outputs(out_dir, result, cfg, manifest_file, "train-sep");
  return 0;
}

int cmd_separate(const std::string& mixture_path,
                 const std::vector<std::string>& frame_paths,
                 const std::string& ckpt_path, const std::string& out_dir) {
  Waveform mixture = load_audio_16k(mixture_path);
  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  nn::MaskNet<float> net = net_from_checkpoint(ckpt);
  double target_rms = parse_double(ckpt.meta_or("target_rms", "0.1"));

  std::vector<FrameImage> frames;
  for (const auto& p : frame_paths) frames.push_back(read_ppm(p));
  std::vector<Waveform> estimates = separate(mixture, frames, net, target_rms);

  ensure_dir(out_dir);
  for (size_t i = 0; i < estimates.size(); ++i) {
    std::string path =
        (fs::path(out_dir) / ("source" + std::to_string(i + 1) + ".wav"))
            .string();
    write_wav(path, estimates[i]);
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& data_flag,
                 const std::string& m2b_path, const std::string& audio_only_path,
                 const std::string& sep_mono_path,
                 const std::string& sep_pred_path,
                 const std::string& sep_gt_path, const std::string& out_flag) {
  RunConfig cfg = load_config(config_path);
  std::string manifest_file = manifest_path_for(cfg, data_flag);
  DatasetManifest manifest = read_manifest(manifest_file);
  InferConfig infer = infer_config_from(cfg);
  std::string split = cfg.get("eval", "split", "test");

  std::string out_dir = !out_flag.empty()
                            ? out_flag
                            : (fs::path(output_root(cfg)) / "eval").string();
  ensure_dir(out_dir);

  std::vector<std::pair<std::string, std::string>> record = {
      {"command", "evaluate"},
      {"config_hash", hex64(cfg.hash())},
      {"dataset_hash", hex64(fnv1a64_file(manifest_file))}};

  if (!m2b_path.empty() && !audio_only_path.empty()) {
    Checkpoint main_ckpt = Checkpoint::load(m2b_path);
    Checkpoint audio_ckpt = Checkpoint::load(audio_only_path);
    BenchmarkReport report =
        run_binaural_benchmark(manifest, main_ckpt, audio_ckpt, infer, split);
    write_text_file((fs::path(out_dir) / "binaural_summary.csv").string(),
                    report.summary_csv());
    write_text_file((fs::path(out_dir) / "binaural_per_clip.csv").string(),
                    report.per_clip_csv());
    record.emplace_back("m2b_checkpoint_hash", hex64(fnv1a64_file(m2b_path)));
    record.emplace_back("audio_only_checkpoint_hash",
                        hex64(fnv1a64_file(audio_only_path)));
    std::printf("binaural generation (split %s):\n%s", split.c_str(),
                report.summary_csv().c_str());
  }

  if (!sep_mono_path.empty() && !sep_pred_path.empty() && !sep_gt_path.empty()) {
    if (m2b_path.empty())
      throw MissingCheckpoint("separation evaluation also needs --m2b");
    Checkpoint m2b_ckpt = Checkpoint::load(m2b_path);
    int max_mix = static_cast<int>(cfg.get_int("eval", "max_mixtures", 45));
    BenchmarkReport report = run_separation_benchmark(
        manifest, Checkpoint::load(sep_mono_path),
        Checkpoint::load(sep_pred_path), Checkpoint::load(sep_gt_path),
        m2b_ckpt, max_mix, split);
    write_text_file((fs::path(out_dir) / "separation_summary.csv").string(),
                    report.summary_csv());
    write_text_file((fs::path(out_dir) / "separation_per_clip.csv").string(),
                    report.per_clip_csv());
    std::printf("separation (split %s):\n%s", split.c_str(),
                report.summary_csv().c_str());
  }

  write_repro_record((fs::path(out_dir) / "repro.json").string(), record);
  return 0;
}

int cmd_gradcheck() {
  auto cases = nn::run_layer_grad_checks();
  bool all_ok = true;
  std::printf("%-24s %-12s %-10s %s\n", "layer", "max_rel_err", "threshold",
              "status");
  for (const auto& c : cases) {
    std::printf("%-24s %-12.3e %-10.0e %s\n", c.name.c_str(), c.max_rel_err,
                c.threshold, c.passed ? "pass" : "FAIL");
    all_ok &= c.passed;
  }
  if (!all_ok) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mono-to-binaural conversion and audio-visual separation"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "bound on worker threads");

  std::string config_path, out_path, data_dir, variant = "full";
  std::string input_path, frames_path, ckpt_path, clip_id, mode_str;
  std::string m2b_path, audio_only_path, sep_mono_path, sep_pred_path,
      sep_gt_path, mixture_path;
  std::vector<std::string> frame_list;
  int64_t seed_flag = -1, epochs_flag = 0;
  int mask_px = 32, stride_px = 16;

  auto* synth = app.add_subcommand("synth", "render a synthetic dataset");
  synth->add_option("--config", config_path, "run configuration file");
  synth->add_option("--out", out_path, "dataset output directory");
  synth->add_option("--seed", seed_flag, "generation seed override");

  auto* train = app.add_subcommand("train-m2b", "train the conversion network");
  train->add_option("--config", config_path, "run configuration file");
  train->add_option("--variant", variant, "full | audio-only");
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--out", out_path, "run output directory");
  train->add_option("--seed", seed_flag, "training seed override");
  train->add_option("--epochs", epochs_flag, "epoch count override");

  auto* binaural = app.add_subcommand("binauralize",
                                      "convert a mono WAV to binaural");
  binaural->add_option("--input", input_path, "mono input WAV")->required();
  binaural->add_option("--frames", frames_path,
                       "frame image (.ppm) or directory of frames")
      ->required();
  binaural->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  binaural->add_option("--out", out_path, "stereo output WAV")->required();

  auto* localize = app.add_subcommand("localize",
                                      "occlusion-based source localization");
  localize->add_option("--data", data_dir, "dataset directory")->required();
  localize->add_option("--clip", clip_id, "manifest clip id")->required();
  localize->add_option("--ckpt", ckpt_path, "trained checkpoint")->required();
  localize->add_option("--out", out_path, "output prefix (.csv/.ppm)")
      ->required();
  localize->add_option("--mask-px", mask_px, "occluder size in pixels");
  localize->add_option("--stride-px", stride_px, "occluder stride in pixels");

  auto* train_sep = app.add_subcommand("train-sep",
                                       "train the separation network");
  train_sep->add_option("--config", config_path, "run configuration file");
  train_sep->add_option("--audio-mode", mode_str, "mono | predicted | gt");
  train_sep->add_option("--m2b-ckpt", m2b_path,
                        "m2b checkpoint (predicted mode)");
  train_sep->add_option("--data", data_dir, "dataset directory");
  train_sep->add_option("--out", out_path, "run output directory");
  train_sep->add_option("--seed", seed_flag, "training seed override");
  train_sep->add_option("--epochs", epochs_flag, "epoch count override");

  auto* separate_cmd = app.add_subcommand("separate",
                                          "separate a two-source mixture");
  separate_cmd->add_option("--mixture", mixture_path, "mixture WAV")->required();
  separate_cmd->add_option("--frames", frame_list,
                           "one frame image per video")
      ->required();
  separate_cmd->add_option("--ckpt", ckpt_path, "separation checkpoint")
      ->required();
  separate_cmd->add_option("--out", out_path, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "run the benchmark tables");
  evaluate->add_option("--config", config_path, "run configuration file");
  evaluate->add_option("--data", data_dir, "dataset directory");
  evaluate->add_option("--m2b", m2b_path, "main conversion checkpoint");
  evaluate->add_option("--audio-only", audio_only_path,
                       "audio-only ablation checkpoint");
  evaluate->add_option("--sep-mono", sep_mono_path, "mono separation checkpoint");
  evaluate->add_option("--sep-predicted", sep_pred_path,
                       "predicted-binaural separation checkpoint");
  evaluate->add_option("--sep-gt", sep_gt_path,
                       "ground-truth binaural separation checkpoint");
  evaluate->add_option("--out", out_path, "report output directory");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks over all layer types");
  (void)gradcheck;

  CLI11_PARSE(app, argc, argv);

  try {
    if (threads > 0) set_worker_threads(threads);
    if (synth->parsed()) return cmd_synth(config_path, out_path, seed_flag);
    if (train->parsed())
      return cmd_train_m2b(config_path, variant, data_dir, out_path, seed_flag,
                           epochs_flag);
    if (binaural->parsed())
      return cmd_binauralize(input_path, frames_path, ckpt_path, out_path);
    if (localize->parsed())
      return cmd_localize(data_dir, clip_id, ckpt_path, out_path, mask_px,
                          stride_px);
    if (train_sep->parsed())
      return cmd_train_sep(config_path, mode_str, m2b_path, data_dir, out_path,
                           seed_flag, epochs_flag);
    if (separate_cmd->parsed())
      return cmd_separate(mixture_path, frame_list, ckpt_path, out_path);
    if (evaluate->parsed())
      return cmd_evaluate(config_path, data_dir, m2b_path, audio_only_path,
                          sep_mono_path, sep_pred_path, sep_gt_path, out_path);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case ErrorKind::kConfig:
        return 2;
      case ErrorKind::kData:
        return 3;
      case ErrorKind::kNumeric:
        return 4;
    }
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
