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

#include "m2b/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "fft.hpp"
#include "m2b/util.hpp"

namespace m2b {

namespace {

double frobenius_distance(const ComplexSpectrogram& a,
                          const ComplexSpectrogram& b) {
  if (a.frames != b.frames || a.bins != b.bins)
    throw ShapeMismatch("spectrogram grids differ");
  double acc = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    acc += std::norm(a.values[i] - b.values[i]);
  return std::sqrt(acc);
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeMismatch("sequence lengths differ");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double ratio_db(double num, double den) {
  if (num <= 0.0) return -100.0;
  if (den <= 0.0) return 100.0;
  return std::clamp(10.0 * std::log10(num / den), -100.0, 100.0);
}

double energy(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

double mean_of_vec(const std::vector<double>& v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

double stderr_of_vec(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of_vec(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  double var = acc / static_cast<double>(v.size() - 1);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

double stft_distance(const BinauralPair& gt, const BinauralPair& pred,
                     const SpectrogramParams& params) {
  gt.validate();
  pred.validate();
  if (gt.length() != pred.length() ||
      gt.sample_rate_hz() != pred.sample_rate_hz())
    throw ShapeMismatch("binaural pairs differ in length or rate");
  double left = frobenius_distance(stft(gt.left, params), stft(pred.left, params));
  double right =
      frobenius_distance(stft(gt.right, params), stft(pred.right, params));
  return left + right;
}

double env_distance(const BinauralPair& gt, const BinauralPair& pred) {
  gt.validate();
  pred.validate();
  if (gt.length() != pred.length() ||
      gt.sample_rate_hz() != pred.sample_rate_hz())
    throw ShapeMismatch("binaural pairs differ in length or rate");
  double left = l2_distance(envelope(gt.left).samples, envelope(pred.left).samples);
  double right =
      l2_distance(envelope(gt.right).samples, envelope(pred.right).samples);
  return left + right;
}

BinauralPair make_baseline(BaselineKind kind, const Waveform& mono,
                           const FrameImage& frame, nn::MaskNet<float>* net,
                           const InferConfig& infer, double target_rms) {
  switch (kind) {
    case BaselineKind::kMonoMono: {
      Waveform zeros(std::vector<double>(mono.length(), 0.0),
                     mono.sample_rate_hz);
      return reconstruct_channels(mono, zeros);
    }
    case BaselineKind::kAudioOnly: {
      if (!net) throw MissingCheckpoint("audio-only baseline needs its network");
      if (!net->config().audio_only())
        throw MissingCheckpoint("audio-only baseline given a visual network");
      return binauralize(mono, static_frame_provider(frame), *net, infer,
                         target_rms);
    }
    case BaselineKind::kFlippedVisual: {
      if (!net) throw MissingCheckpoint("flipped-visual baseline needs a network");
      return binauralize(mono, static_frame_provider(frame.flipped_horizontal()),
                         *net, infer, target_rms);
    }
  }
  throw ConfigError("unknown baseline kind");
}

// --- BSS evaluation -----------------------------------------------------

namespace {

// Linear cross-correlations via FFT: corr(a, b)[d] = sum_u a[u] * b[u+d]
// for d in (-maxlag, maxlag), returned as a function handle over the
// padded circular buffer.
struct CorrTable {
  std::vector<double> buf;  // circular, length fftn
  size_t fftn;

  double at(long long d) const {
    long long idx = d >= 0 ? d : static_cast<long long>(fftn) + d;
    return buf[static_cast<size_t>(idx)];
  }
};

CorrTable correlate(const std::vector<std::complex<double>>& fa,
                    const std::vector<std::complex<double>>& fb, size_t fftn) {
  std::vector<std::complex<double>> prod(fftn);
  for (size_t i = 0; i < fftn; ++i) prod[i] = std::conj(fa[i]) * fb[i];
  std::vector<std::complex<double>> res(fftn);
  fft::cfft(prod.data(), fftn, res.data(), /*inverse=*/true);
  CorrTable table;
  table.fftn = fftn;
  table.buf.resize(fftn);
  for (size_t i = 0; i < fftn; ++i) table.buf[i] = res[i].real();
  return table;
}

std::vector<std::complex<double>> padded_fft(const std::vector<double>& x,
                                             size_t fftn) {
  std::vector<std::complex<double>> cx(fftn, {0.0, 0.0});
  for (size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  std::vector<std::complex<double>> out(fftn);
  fft::cfft(cx.data(), fftn, out.data(), /*inverse=*/false);
  return out;
}

// y[t] += sum_a w[a] * s[t - a], t < out_len.
void add_filtered(const std::vector<double>& s, const double* w, int taps,
                  std::vector<double>& y) {
  const long long n = static_cast<long long>(s.size());
  for (int a = 0; a < taps; ++a) {
    double wa = w[a];
    if (wa == 0.0) continue;
    long long lo = a;
    long long hi = std::min<long long>(static_cast<long long>(y.size()),
                                       n + a);
    for (long long t = lo; t < hi; ++t)
      y[static_cast<size_t>(t)] += wa * s[static_cast<size_t>(t - a)];
  }
}

}  // namespace

BssResult bss_eval(const std::vector<std::vector<double>>& references,
                   const std::vector<std::vector<double>>& estimates,
                   int filter_len) {
  const int j_count = static_cast<int>(references.size());
  if (j_count < 1 || estimates.size() != references.size())
    throw ShapeMismatch("bss_eval needs matching reference/estimate counts");
  const size_t n = references[0].size();
  for (const auto& r : references) {
    if (r.size() != n) throw ShapeMismatch("reference lengths differ");
  }
  for (const auto& e : estimates) {
    if (e.size() != n) throw ShapeMismatch("estimate lengths differ");
  }
  const int L = filter_len;
  if (n <= static_cast<size_t>(L))
    throw ShapeMismatch("signals must be longer than the distortion filter");

  const size_t out_len = n + static_cast<size_t>(L) - 1;
  size_t fftn = 1;
  while (fftn < n + static_cast<size_t>(L)) fftn <<= 1;

  std::vector<std::vector<std::complex<double>>> ref_f(j_count);
  for (int j = 0; j < j_count; ++j) ref_f[j] = padded_fft(references[j], fftn);

  // Gram matrix of delayed references, block (i, j) Toeplitz in (a - b).
  const int dim = j_count * L;
  Eigen::MatrixXd gram(dim, dim);
  for (int i = 0; i < j_count; ++i) {
    for (int j = 0; j < j_count; ++j) {
      CorrTable r = correlate(ref_f[i], ref_f[j], fftn);
      for (int a = 0; a < L; ++a) {
        for (int b = 0; b < L; ++b) {
          gram(i * L + a, j * L + b) = r.at(a - b);
        }
      }
    }
  }

  Eigen::LDLT<Eigen::MatrixXd> full_ldlt(gram);
  {
    Eigen::VectorXd d = full_ldlt.vectorD();
    double dmax = d.cwiseAbs().maxCoeff();
    double dmin = d.minCoeff();
    if (!(dmax > 0.0) || dmin <= dmax * 1e-12)
      throw DegenerateReferences("reference Gram matrix is rank deficient");
  }

  std::vector<Eigen::LDLT<Eigen::MatrixXd>> block_ldlt;
  block_ldlt.reserve(static_cast<size_t>(j_count));
  for (int j = 0; j < j_count; ++j) {
    block_ldlt.emplace_back(
        gram.block(j * L, j * L, L, L));
  }

  // Metric matrix over (estimate, reference) pairings.
  std::vector<std::vector<double>> sdr(estimates.size()),
      sir(estimates.size()), sar(estimates.size());
  for (size_t e = 0; e < estimates.size(); ++e) {
    auto est_f = padded_fft(estimates[e], fftn);
    Eigen::VectorXd rhs(dim);
    for (int j = 0; j < j_count; ++j) {
      CorrTable r = correlate(ref_f[j], est_f, fftn);
      for (int b = 0; b < L; ++b) rhs(j * L + b) = r.at(b);
    }
    Eigen::VectorXd w_all = full_ldlt.solve(rhs);

    std::vector<double> p_all(out_len, 0.0);
    for (int j = 0; j < j_count; ++j)
      add_filtered(references[j], w_all.data() + j * L, L, p_all);

    std::vector<double> e_pad(out_len, 0.0);
    std::copy(estimates[e].begin(), estimates[e].end(), e_pad.begin());

    std::vector<double> artif(out_len);
    for (size_t t = 0; t < out_len; ++t) artif[t] = e_pad[t] - p_all[t];
    const double artif_energy = energy(artif);
    const double p_all_energy = energy(p_all);

    sdr[e].resize(static_cast<size_t>(j_count));
    sir[e].resize(static_cast<size_t>(j_count));
    sar[e].resize(static_cast<size_t>(j_count));
    for (int j = 0; j < j_count; ++j) {
      Eigen::VectorXd w_j =
          block_ldlt[static_cast<size_t>(j)].solve(rhs.segment(j * L, L));
      std::vector<double> s_target(out_len, 0.0);
      add_filtered(references[j], w_j.data(), L, s_target);

      std::vector<double> interf(out_len);
      for (size_t t = 0; t < out_len; ++t) interf[t] = p_all[t] - s_target[t];

      double st_energy = energy(s_target);
      double interf_energy = energy(interf);
      std::vector<double> distortion(out_len);
      for (size_t t = 0; t < out_len; ++t)
        distortion[t] = interf[t] + artif[t];

      sdr[e][static_cast<size_t>(j)] = ratio_db(st_energy, energy(distortion));
      sir[e][static_cast<size_t>(j)] = ratio_db(st_energy, interf_energy);
      sar[e][static_cast<size_t>(j)] = ratio_db(p_all_energy, artif_energy);
    }
  }

  // Assignment maximizing mean SIR; identity for a single source.
  std::vector<int> perm(static_cast<size_t>(j_count));
  for (int j = 0; j < j_count; ++j) perm[static_cast<size_t>(j)] = j;
  std::vector<int> best = perm;
  double best_score = -1e300;
  std::sort(perm.begin(), perm.end());
  do {
    double score = 0.0;
    for (int e = 0; e < j_count; ++e)
      score += sir[static_cast<size_t>(e)][static_cast<size_t>(perm[e])];
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  BssResult out;
  out.permutation = best;
  for (int e = 0; e < j_count; ++e) {
    out.sdr_db.push_back(sdr[static_cast<size_t>(e)][static_cast<size_t>(best[e])]);
    out.sir_db.push_back(sir[static_cast<size_t>(e)][static_cast<size_t>(best[e])]);
    out.sar_db.push_back(sar[static_cast<size_t>(e)][static_cast<size_t>(best[e])]);
  }
  return out;
}

// --- Benchmark reports ------------------------------------------------

std::string BenchmarkReport::summary_csv() const {
  std::string body = "method,metric,mean,stderr,n\n";
  for (const auto& row : summary) {
    body += row.method + "," + row.metric + "," + format_double(row.mean) +
            "," + format_double(row.stderr_of_mean) + "," +
            std::to_string(row.n) + "\n";
  }
  return body;
}

std::string BenchmarkReport::per_clip_csv() const {
  std::string body = "clip_id,method,metric,value\n";
  for (const auto& row : per_clip) {
    body += row.clip_id + "," + row.method + "," + row.metric + "," +
            format_double(row.value) + "\n";
  }
  return body;
}

double BenchmarkReport::mean_of(const std::string& method,
                                const std::string& metric) const {
  for (const auto& row : summary) {
    if (row.method == method && row.metric == metric) return row.mean;
  }
  throw ConfigError("no summary row for " + method + "/" + metric);
}

namespace {

void summarize(BenchmarkReport& report, const std::string& method,
               const std::string& metric, const std::vector<double>& values) {
  MetricSummaryRow row;
  row.method = method;
  row.metric = metric;
  row.mean = mean_of_vec(values);
  row.stderr_of_mean = stderr_of_vec(values);
  row.n = static_cast<int>(values.size());
  report.summary.push_back(row);
}

double channel_rms(const Waveform& w, int c) {
  const auto& x = w.channels[static_cast<size_t>(c)];
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace

BenchmarkReport run_binaural_benchmark(const DatasetManifest& manifest,
                                       const Checkpoint& main_ckpt,
                                       const Checkpoint& audio_only_ckpt,
                                       const InferConfig& infer,
                                       const std::string& split) {
  auto entries = manifest.split(split);
  if (entries.empty())
    throw EmptyDataset("no entries in split \"" + split + "\"");

  nn::MaskNet<float> main_net = net_from_checkpoint(main_ckpt);
  nn::MaskNet<float> audio_net = net_from_checkpoint(audio_only_ckpt);
  const double main_rms = parse_double(main_ckpt.meta_or("target_rms", "0.1"));
  const double audio_rms =
      parse_double(audio_only_ckpt.meta_or("target_rms", "0.1"));

  const char* kMethods[] = {"ours", "audio_only", "flipped_visual",
                            "mono_mono"};
  std::vector<std::vector<double>> stft_vals(4), env_vals(4);

  BenchmarkReport report;
  for (const auto& entry : entries) {
    Clip clip = load_clip(manifest, entry);
    BinauralPair outputs[4] = {
        binauralize(clip.mono, static_frame_provider(clip.frame), main_net,
                    infer, main_rms),
        make_baseline(BaselineKind::kAudioOnly, clip.mono, clip.frame,
                      &audio_net, infer, audio_rms),
        make_baseline(BaselineKind::kFlippedVisual, clip.mono, clip.frame,
                      &main_net, infer, main_rms),
        make_baseline(BaselineKind::kMonoMono, clip.mono, clip.frame, nullptr,
                      infer),
    };
    for (int m = 0; m < 4; ++m) {
      double ds = stft_distance(clip.binaural, outputs[m]);
      double de = env_distance(clip.binaural, outputs[m]);
      stft_vals[static_cast<size_t>(m)].push_back(ds);
      env_vals[static_cast<size_t>(m)].push_back(de);
      report.per_clip.push_back({clip.id, kMethods[m], "stft_distance", ds});
      report.per_clip.push_back({clip.id, kMethods[m], "env_distance", de});
      report.per_clip.push_back(
          {clip.id, kMethods[m], "rms_left", channel_rms(outputs[m].left, 0)});
      report.per_clip.push_back(
          {clip.id, kMethods[m], "rms_right", channel_rms(outputs[m].right, 0)});
    }
  }

  for (int m = 0; m < 4; ++m) {
    summarize(report, kMethods[m], "stft_distance", stft_vals[static_cast<size_t>(m)]);
    summarize(report, kMethods[m], "env_distance", env_vals[static_cast<size_t>(m)]);
  }
  return report;
}

BenchmarkReport run_separation_benchmark(
    const DatasetManifest& manifest, const Checkpoint& sep_mono,
    const Checkpoint& sep_predicted, const Checkpoint& sep_gt,
    const Checkpoint& m2b_ckpt, int max_mixtures, const std::string& split) {
  auto entries = manifest.split(split);
  if (entries.size() < 2)
    throw EmptyDataset("separation benchmark needs at least two clips");

  nn::MaskNet<float> mono_net = net_from_checkpoint(sep_mono);
  nn::MaskNet<float> pred_net = net_from_checkpoint(sep_predicted);
  nn::MaskNet<float> gt_net = net_from_checkpoint(sep_gt);
  nn::MaskNet<float> m2b_net = net_from_checkpoint(m2b_ckpt);
  const double m2b_rms = parse_double(m2b_ckpt.meta_or("target_rms", "0.1"));
  const double mono_rms = parse_double(sep_mono.meta_or("target_rms", "0.1"));
  const double pred_rms = parse_double(sep_predicted.meta_or("target_rms", "0.1"));
  const double gt_rms = parse_double(sep_gt.meta_or("target_rms", "0.1"));
  InferConfig m2b_infer;

  const size_t seg = separation_segment_samples();

  struct Mixture {
    size_t a, b;
  };
  std::vector<Mixture> mixtures;
  for (size_t i = 0; i < entries.size() &&
                     static_cast<int>(mixtures.size()) < max_mixtures;
       ++i) {
    for (size_t j = i + 1; j < entries.size() &&
                           static_cast<int>(mixtures.size()) < max_mixtures;
         ++j) {
      mixtures.push_back({i, j});
    }
  }

  const char* kMethods[] = {"mixture", "mono", "predicted", "gt"};
  std::vector<std::vector<double>> sdr_vals(4), sir_vals(4), sar_vals(4);

  BenchmarkReport report;
  std::vector<Clip> clips(entries.size());
  std::vector<bool> loaded(entries.size(), false);
  auto clip_at = [&](size_t i) -> Clip& {
    if (!loaded[i]) {
      clips[i] = load_clip(manifest, entries[i]);
      loaded[i] = true;
    }
    return clips[i];
  };

  for (const auto& mix : mixtures) {
    Clip& a = clip_at(mix.a);
    Clip& b = clip_at(mix.b);
    if (a.mono.length() < seg || b.mono.length() < seg)
      throw ClipTooShort("clip shorter than the separation segment");
    const size_t off_a = (a.mono.length() - seg) / 2;
    const size_t off_b = (b.mono.length() - seg) / 2;

    auto segment = [&](const std::vector<double>& x, size_t off) {
      return std::vector<double>(x.begin() + static_cast<long>(off),
                                 x.begin() + static_cast<long>(off + seg));
    };

    std::vector<double> mono_a = segment(a.mono.channels[0], off_a);
    std::vector<double> mono_b = segment(b.mono.channels[0], off_b);
    std::vector<std::vector<double>> refs = {mono_a, mono_b};

    const std::string mix_id = a.id + "+" + b.id;

    auto record = [&](int m, const BssResult& r) {
      double mean_sdr = mean_of_vec(r.sdr_db);
      double mean_sir = mean_of_vec(r.sir_db);
      double mean_sar = mean_of_vec(r.sar_db);
      sdr_vals[static_cast<size_t>(m)].push_back(mean_sdr);
      sir_vals[static_cast<size_t>(m)].push_back(mean_sir);
      sar_vals[static_cast<size_t>(m)].push_back(mean_sar);
      report.per_clip.push_back({mix_id, kMethods[m], "sdr", mean_sdr});
      report.per_clip.push_back({mix_id, kMethods[m], "sir", mean_sir});
      report.per_clip.push_back({mix_id, kMethods[m], "sar", mean_sar});
    };

    // Mixture-as-estimate baseline.
    {
      std::vector<double> mix_mono(seg);
      for (size_t t = 0; t < seg; ++t) mix_mono[t] = mono_a[t] + mono_b[t];
      record(0, bss_eval(refs, {mix_mono, mix_mono}));
    }

    // Mono-input separation.
    {
      Waveform mixture(std::vector<double>(seg), kAudioRateHz);
      for (size_t t = 0; t < seg; ++t)
        mixture.channels[0][t] = mono_a[t] + mono_b[t];
      auto ests = separate(mixture, {a.frame, b.frame}, mono_net, mono_rms);
      record(1, bss_eval(refs, {ests[0].channels[0], ests[1].channels[0]}));
    }

    // Predicted-binaural separation: binauralize each clip's mono
    // segment, mix the stereo signals, separate, downmix estimates.
    {
      Waveform wave_a(mono_a, kAudioRateHz);
      Waveform wave_b(mono_b, kAudioRateHz);
      BinauralPair pa = binauralize(wave_a, static_frame_provider(a.frame),
                                    m2b_net, m2b_infer, m2b_rms);
      BinauralPair pb = binauralize(wave_b, static_frame_provider(b.frame),
                                    m2b_net, m2b_infer, m2b_rms);
      Waveform mixture;
      mixture.sample_rate_hz = kAudioRateHz;
      mixture.channels.assign(2, std::vector<double>(seg));
      for (size_t t = 0; t < seg; ++t) {
        mixture.channels[0][t] =
            pa.left.channels[0][t] + pb.left.channels[0][t];
        mixture.channels[1][t] =
            pa.right.channels[0][t] + pb.right.channels[0][t];
      }
      auto ests = separate(mixture, {a.frame, b.frame}, pred_net, pred_rms);
      std::vector<double> est_a(seg), est_b(seg);
      for (size_t t = 0; t < seg; ++t) {
        est_a[t] = ests[0].channels[0][t] + ests[0].channels[1][t];
        est_b[t] = ests[1].channels[0][t] + ests[1].channels[1][t];
      }
      record(2, bss_eval(refs, {est_a, est_b}));
    }

    // Ground-truth binaural separation.
    {
      Waveform mixture;
      mixture.sample_rate_hz = kAudioRateHz;
      mixture.channels.assign(2, std::vector<double>(seg));
      std::vector<double> la = segment(a.binaural.left.channels[0], off_a);
      std::vector<double> ra = segment(a.binaural.right.channels[0], off_a);
      std::vector<double> lb = segment(b.binaural.left.channels[0], off_b);
      std::vector<double> rb = segment(b.binaural.right.channels[0], off_b);
      for (size_t t = 0; t < seg; ++t) {
        mixture.channels[0][t] = la[t] + lb[t];
        mixture.channels[1][t] = ra[t] + rb[t];
      }
      auto ests = separate(mixture, {a.frame, b.frame}, gt_net, gt_rms);
      std::vector<double> est_a(seg), est_b(seg);
      for (size_t t = 0; t < seg; ++t) {
        est_a[t] = ests[0].channels[0][t] + ests[0].channels[1][t];
        est_b[t] = ests[1].channels[0][t] + ests[1].channels[1][t];
      }
      record(3, bss_eval(refs, {est_a, est_b}));
    }
  }

  for (int m = 0; m < 4; ++m) {
    summarize(report, kMethods[m], "sdr", sdr_vals[static_cast<size_t>(m)]);
    summarize(report, kMethods[m], "sir", sir_vals[static_cast<size_t>(m)]);
    summarize(report, kMethods[m], "sar", sar_vals[static_cast<size_t>(m)]);
  }
  return report;
}

}  // namespace m2b
