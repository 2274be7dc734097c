// Acceptance suite: runs every gate criterion and prints one line per
// criterion. Exit code is the number of failed criteria.
//
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "ssmradnet/bench.hpp"
#include "ssmradnet/metrics.hpp"
#include "ssmradnet/model.hpp"
#include "ssmradnet/rng.hpp"
#include "ssmradnet/sim.hpp"
#include "ssmradnet/streaming.hpp"
#include "ssmradnet/train.hpp"

using namespace ssmr;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int num, const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << num << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared generators.
// ---------------------------------------------------------------------------

Scene random_scene(const ModelConfig& cfg, Rng& rng, int min_targets, int max_targets,
                   double snr_db) {
  Scene sc;
  sc.chirps = cfg.chirps_per_frame;
  sc.samples = cfg.s_per_chirp;
  sc.n_rx = cfg.n_rx;
  sc.snr_db = snr_db;
  sc.seed = rng.next_u64();
  const int n = min_targets + (max_targets > min_targets
                                   ? rng.uniform_int(max_targets - min_targets + 1)
                                   : 0);
  for (int t = 0; t < n; ++t)
    sc.targets.push_back({rng.uniform(0.05, 0.95), rng.uniform(-55.0, 55.0),
                          rng.uniform(-0.4, 0.4), rng.uniform(0.7, 1.3)});
  return sc;
}

std::vector<DatasetEntry> make_set(const ModelConfig& cfg, int frames, std::uint64_t seed,
                                   int min_targets, int max_targets, double snr_db) {
  std::vector<DatasetEntry> out;
  out.reserve(static_cast<std::size_t>(frames));
  Rng rng(seed);
  for (int i = 0; i < frames; ++i) {
    Scene sc = random_scene(cfg, rng, min_targets, max_targets, snr_db);
    out.push_back({synthesize_frame(sc), rasterize_labels(sc, cfg.out_h(), cfg.out_w())});
  }
  return out;
}

template <class S>
BevOutput<S> stream_frame(StreamSession<S>& session, const AdcFrame& frame) {
  std::vector<std::complex<float>> tick(static_cast<std::size_t>(frame.n_rx));
  BevOutput<S> out;
  for (int c = 0; c < frame.chirps; ++c)
    for (int s = 0; s < frame.samples; ++s) {
      for (int rx = 0; rx < frame.n_rx; ++rx)
        tick[static_cast<std::size_t>(rx)] = frame.at(c, s, rx);
      auto ev = session.ingest(tick.data(), frame.n_rx);
      if (ev.kind == StreamSession<S>::EventKind::FrameOutput) out = ev.output;
    }
  return out;
}

template <class T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(static_cast<double>(a[i])),
                                   std::abs(static_cast<double>(b[i])), 1e-12});
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]) / scale);
  }
  return worst;
}

// The criterion-6 training protocol (shared with criteria 9 and 10).
ModelConfig learning_config() {
  ModelConfig c;
  c.n_rx = 8;
  c.s_per_chirp = 128;
  c.chirps_per_frame = 32;
  c.d_conv = 4;
  c.d_state = 32;
  c.d_state_chirp = 32;
  c.h0 = 8;
  c.w0 = 8;
  c.c_dec = 16;
  c.seed = 1;
  return c;
}

struct LearningData {
  std::vector<DatasetEntry> train_set;
  std::vector<DatasetEntry> val_set;
};

const LearningData& learning_data() {
  static LearningData d = [] {
    LearningData out;
    const ModelConfig cfg = learning_config();
    out.train_set = make_set(cfg, 256, 101, 1, 4, 10.0);
    out.val_set = make_set(cfg, 64, 202, 1, 4, 10.0);
    return out;
  }();
  return d;
}

// Effective schedule used for the ablation and retention studies (their
// criteria pin the dataset, not the optimizer settings).
Model<float> train_ablation_model(ModelConfig cfg, int epochs = 60) {
  Model<float> m(cfg);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  tc.weight_decay = 5e-6;
  tc.eval_every = 0;
  tc.seed = 1;
  train(m, learning_data().train_set, {}, tc);
  return m;
}

// ---------------------------------------------------------------------------

void criterion1() {
  auto t0 = clock_type::now();
  ModelConfig cfg;
  cfg.n_rx = 4;
  cfg.s_per_chirp = 64;
  cfg.chirps_per_frame = 16;
  cfg.seed = 5;
  Model<double> model(cfg);
  StreamSession<double> session(model);
  Rng rng(12345);

  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    Scene sc = random_scene(cfg, rng, i % 3 == 0 ? 0 : 1, 3, 10.0);
    AdcFrame frame = synthesize_frame(sc);
    auto streamed = stream_frame(session, frame);
    auto batch = model.forward_maps(frame);
    worst = std::max(worst, max_rel_diff(streamed.seg, batch.seg));
    worst = std::max(worst, max_rel_diff(streamed.det, batch.det));
  }
  const double secs = seconds_since(t0);
  std::ostringstream detail;
  detail << "20 frames, max rel diff " << worst << ", " << secs << " s";
  report(1, "streaming == batch at 1e-9 (fp64)", worst < 1e-9 && secs < 60.0, detail.str());
}

void criterion2() {
  auto t0 = clock_type::now();
  ModelConfig cfg;
  cfg.n_rx = 2;
  cfg.s_per_chirp = 8;
  cfg.chirps_per_frame = 2;
  cfg.d_state = 4;
  cfg.d_state_chirp = 4;
  cfg.h0 = 2;
  cfg.w0 = 2;  // 8x8 output grid
  cfg.seed = 3;
  Model<double> m(cfg);

  Rng rng(777);
  Scene sc = random_scene(cfg, rng, 1, 2, 15.0);
  AdcFrame frame = synthesize_frame(sc);
  Labels labels = rasterize_labels(sc, cfg.out_h(), cfg.out_w());
  TrainConfig tc;

  // Reference gradients from one taped backward pass.
  m.set_requires_grad();
  m.zero_grad();
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto loss = frame_loss(m.forward(frame), labels, tc);
    backward(loss, tape);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, t] : m.parameters()) analytic.push_back(t.grad());

  auto loss_value = [&] {
    auto out = m.forward(frame);
    return frame_loss(out, labels, tc).item();
  };

  bool all_ok = true;
  std::string first_bad;
  std::size_t pi = 0;
  for (auto& [name, t] : m.mutable_parameters()) {
    bool group_ok = true;
    for (std::int64_t i = 0; i < t.numel(); ++i) {
      const double theta = t.data()[i];
      const double h = 1e-4 * std::max(1.0, std::abs(theta));
      t.data()[i] = theta + h;
      const double lp = loss_value();
      t.data()[i] = theta - h;
      const double lm = loss_value();
      t.data()[i] = theta;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = analytic[pi][static_cast<std::size_t>(i)];
      const double diff = std::abs(fd - an);
      const double rel = diff / std::max({std::abs(fd), std::abs(an), 1e-12});
      if (diff > 1e-6 && rel > 1e-4) group_ok = false;
    }
    if (!group_ok) {
      all_ok = false;
      if (first_bad.empty()) first_bad = name;
    }
    ++pi;
  }
  const double secs = seconds_since(t0);
  std::ostringstream detail;
  detail << m.parameter_count() << " params audited in " << secs << " s";
  if (!first_bad.empty()) detail << ", first failing group " << first_bad;
  report(2, "finite-difference gradient audit (rel < 1e-4, fp64)", all_ok && secs < 300.0,
         detail.str());
}

void criterion3() {
  ModelConfig base;
  base.n_rx = 8;
  base.s_per_chirp = 512;
  base.chirps_per_frame = 16;
  base.d_state = 16;
  base.d_state_chirp = 16;
  base.h0 = 4;
  base.w0 = 4;
  base.c_dec = 8;
  base.seed = 9;
  ModelConfig doubled = base;
  doubled.s_per_chirp *= 2;

  const MacReport m1 = count_macs(base);
  const MacReport m2 = count_macs(doubled);
  const bool exact = (m2.embed == 2 * m1.embed) && (m2.sample_ssm == 2 * m1.sample_ssm);

  Model<float> model1(base);
  Model<float> model2(doubled);
  const auto lat1 = measure_latency(model1, 100, BenchMode::Batch, 10);
  const auto lat2 = measure_latency(model2, 100, BenchMode::Batch, 10);
  const double ratio = lat2.p50_ms / lat1.p50_ms;

  std::ostringstream detail;
  detail << "sample-path MAC ratio exact 2.0: " << (exact ? "yes" : "no") << ", latency ratio "
         << ratio;
  report(3, "linear scaling in S (analytic exact, measured in [1.5, 2.5])",
         exact && ratio >= 1.5 && ratio <= 2.5, detail.str());
}

void criterion4() {
  const ModelConfig radial;  // defaults: C=256, S=512, N_Rx=16, d_state=32, expand=true
  const std::int64_t analytic = count_params(radial);
  Model<float> m(radial);
  const std::string path = "acceptance_ckpt.ssmc";
  save_checkpoint(m, path);

  // Count serialized elements directly from the file.
  std::int64_t file_elems = 0;
  bool parsed = true;
  {
    std::ifstream in(path, std::ios::binary);
    char magic[4];
    in.read(magic, 4);
    auto rd_u32 = [&in] {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      return static_cast<std::uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
             (static_cast<std::uint32_t>(b[3]) << 24);
    };
    const std::uint32_t version = rd_u32();
    const std::uint32_t cfg_len = rd_u32();
    in.seekg(cfg_len, std::ios::cur);
    const std::uint32_t entries = rd_u32();
    parsed = version == 1;
    for (std::uint32_t e = 0; e < entries && parsed; ++e) {
      unsigned char nlen_b[2];
      in.read(reinterpret_cast<char*>(nlen_b), 2);
      const std::uint16_t nlen = static_cast<std::uint16_t>(nlen_b[0] | (nlen_b[1] << 8));
      in.seekg(nlen, std::ios::cur);
      unsigned char rank;
      in.read(reinterpret_cast<char*>(&rank), 1);
      std::int64_t numel = 1;
      for (int d = 0; d < rank; ++d) numel *= rd_u32();
      file_elems += numel;
      in.seekg(numel * 4, std::ios::cur);
      if (!in) parsed = false;
    }
  }
  std::remove(path.c_str());

  std::ostringstream detail;
  detail << "count_params " << analytic << ", registry " << m.parameter_count()
         << ", checkpoint elements " << file_elems;
  report(4, "default RADIal config under 1M parameters, checkpoint count exact",
         parsed && analytic < 1000000 && analytic == m.parameter_count() &&
             file_elems == analytic,
         detail.str());
}

void criterion5() {
  // Resident state identical for S=512 vs S=1024 at the RADIal defaults.
  ModelConfig cfg512;  // defaults: S=512
  ModelConfig cfg1024;
  cfg1024.s_per_chirp = 1024;
  Model<float> m512(cfg512);
  Model<float> m1024(cfg1024);
  StreamSession<float> s512(m512);
  StreamSession<float> s1024(m1024);
  const auto r512 = s512.memory_report();
  const auto r1024 = s1024.memory_report();
  const bool equal = r512.resident_floats == r1024.resident_floats;

  // Peak while streaming a full frame stays below the cube bound, for both
  // named default configurations.
  auto peak_ok = [&](ModelConfig cfg) {
    Model<float> m(cfg);
    StreamSession<float> session(m);
    Scene sc;
    sc.chirps = cfg.chirps_per_frame;
    sc.samples = cfg.s_per_chirp;
    sc.n_rx = cfg.n_rx;
    sc.seed = 4;
    AdcFrame frame = synthesize_frame(sc);
    stream_frame(session, frame);
    const auto rep = session.memory_report();
    const std::int64_t bound = static_cast<std::int64_t>(cfg.chirps_per_frame) *
                               cfg.s_per_chirp * cfg.n_rx * 2;
    return std::pair<bool, std::int64_t>(rep.peak_floats < bound, rep.peak_floats);
  };
  ModelConfig radical;
  radical.n_rx = 8;
  radical.s_per_chirp = 192;
  radical.chirps_per_frame = 64;
  const auto [ok_radial, peak_radial] = peak_ok(cfg512);
  const auto [ok_radical, peak_radical] = peak_ok(radical);

  std::ostringstream detail;
  detail << "resident " << r512.resident_floats << " (S=512) vs " << r1024.resident_floats
         << " (S=1024); peak RADIal " << peak_radial << " < " << 256 * 512 * 16 * 2
         << ", peak RaDICaL " << peak_radical << " < " << 64 * 192 * 8 * 2;
  report(5, "streaming memory independent of S and below the ADC cube",
         equal && ok_radial && ok_radical, detail.str());
}

Model<float>* g_c6_model = nullptr;

void criterion6(int epochs) {
  auto t0 = clock_type::now();
  const ModelConfig cfg = learning_config();
  const auto& data = learning_data();

  static Model<float> model(cfg);
  TrainConfig tc;  // Table-2 settings: Adam, lr 1e-4, L2 5e-6, batch 8
  tc.epochs = epochs;
  tc.batch_size = 8;
  tc.lr = 1e-4;
  tc.weight_decay = 5e-6;
  tc.eval_every = 1;
  tc.seed = 1;
  auto result = train(model, data.train_set, data.val_set, tc);
  g_c6_model = &model;

  double best_dice = 0, best_miou = 0;
  bool reached = false;
  int reached_epoch = -1;
  for (const auto& log : result.log) {
    if (!log.evaluated) continue;
    best_dice = std::max(best_dice, log.val.dice);
    best_miou = std::max(best_miou, log.val.miou);
    if (!reached && log.val.dice >= 0.85 && log.val.miou >= 0.70) {
      reached = true;
      reached_epoch = log.epoch;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream detail;
  detail << "val dice " << best_dice << " (>=0.85), val miou " << best_miou
         << " (>=0.70), reached at epoch " << reached_epoch << ", " << secs << " s";
  report(6, "synthetic learning with Table-2 hyperparameters", reached && secs < 3600.0,
         detail.str());
}

void criterion7() {
  Rng rng(2024);
  bool ok = true;
  std::string why;

  auto chamfer_brute = [](const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b,
                          int h, int w) {
    auto directed = [&](const std::vector<std::uint8_t>& from,
                        const std::vector<std::uint8_t>& to) {
      double acc = 0;
      int n = 0;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          if (!from[static_cast<std::size_t>(r) * w + c]) continue;
          double best = 1e30;
          for (int r2 = 0; r2 < h; ++r2)
            for (int c2 = 0; c2 < w; ++c2) {
              if (!to[static_cast<std::size_t>(r2) * w + c2]) continue;
              const double d2 = static_cast<double>((r - r2) * (r - r2) + (c - c2) * (c - c2));
              if (d2 < best) best = d2;
            }
          acc += std::sqrt(best);
          ++n;
        }
      return n ? acc / n : 0.0;
    };
    bool ae = true, be = true;
    for (auto v : a) ae &= v == 0;
    for (auto v : b) be &= v == 0;
    if (ae && be) return 0.0;
    if (ae || be) return std::sqrt(static_cast<double>(h * h + w * w));
    return 0.5 * (directed(a, b) + directed(b, a));
  };

  for (int trial = 0; trial < 200 && ok; ++trial) {
    std::vector<std::uint8_t> a(256), b(256);
    const double p = 0.05 + 0.5 * rng.uniform();
    for (auto& v : a) v = rng.uniform() < p ? 1 : 0;
    for (auto& v : b) v = rng.uniform() < p ? 1 : 0;
    int inter = 0, uni = 0, na = 0, nb = 0, same = 0;
    for (int i = 0; i < 256; ++i) {
      inter += a[static_cast<std::size_t>(i)] && b[static_cast<std::size_t>(i)];
      uni += a[static_cast<std::size_t>(i)] || b[static_cast<std::size_t>(i)];
      na += a[static_cast<std::size_t>(i)];
      nb += b[static_cast<std::size_t>(i)];
      same += a[static_cast<std::size_t>(i)] == b[static_cast<std::size_t>(i)];
    }
    if (metric_iou(a, b) != (uni ? static_cast<double>(inter) / uni : 1.0)) { ok = false; why = "iou"; }
    if (metric_dice(a, b) != ((na + nb) ? 2.0 * inter / (na + nb) : 1.0)) { ok = false; why = "dice"; }
    if (metric_accuracy(a, b) != same / 256.0) { ok = false; why = "accuracy"; }
    if (metric_chamfer(a, b, 16, 16) != chamfer_brute(a, b, 16, 16)) { ok = false; why = "chamfer"; }
  }

  // Hand-enumerated detection fixture.
  {
    std::vector<float> det(16 * 16 * 3, 0.0f);
    det[(4 * 16 + 4) * 3] = 0.9f;
    std::vector<GtPoint> gt = {{4.5, 4.5}};
    auto s = metric_detection(det, 16, 16, gt);
    if (s.f1 != 1.0) { ok = false; why = "det exact match"; }

    std::vector<float> none(16 * 16 * 3, 0.0f);
    s = metric_detection(none, 16, 16, gt);
    if (!(s.precision == 1.0 && s.recall == 0.0 && s.f1 == 0.0)) { ok = false; why = "det empty"; }

    std::vector<float> mixed(16 * 16 * 3, 0.0f);
    mixed[(4 * 16 + 4) * 3] = 0.9f;
    mixed[(12 * 16 + 12) * 3] = 0.8f;
    std::vector<GtPoint> gt2 = {{4.5, 4.5}, {8.5, 2.5}};
    s = metric_detection(mixed, 16, 16, gt2);
    if (std::abs(s.f1 - 0.5) > 1e-12) { ok = false; why = "det 3-case"; }
  }

  report(7, "metric oracles exact on 200 masks + detection fixture", ok, why);
}

void criterion8() {
  Rng rng(888);
  const int C = 16, S = 64, R = 8;
  bool ok = true;
  std::string why;

  auto frac_guard = [](double x) {
    const double f = x - std::floor(x);
    return std::abs(f - 0.5) > 0.05;
  };

  for (int trial = 0; trial < 50 && ok; ++trial) {
    Target t;
    do {
      t.range_norm = rng.uniform(0.05, 0.95);
    } while (!frac_guard(t.range_norm * 0.5 * S));
    do {
      t.doppler_norm = rng.uniform(-0.4, 0.4);
    } while (!frac_guard(t.doppler_norm * C) || std::abs(t.doppler_norm * C) < 0.55);
    t.azimuth_deg = rng.uniform(-55.0, 55.0);
    t.amplitude = 1.0;

    Scene sc;
    sc.targets = {t};
    sc.snr_db = std::numeric_limits<double>::infinity();
    sc.seed = 1;
    sc.chirps = C;
    sc.samples = S;
    sc.n_rx = R;
    AdcFrame frame = synthesize_frame(sc);

    const int expect_r = static_cast<int>(std::lround(t.range_norm * 0.5 * S));
    // fast-time DFT peak for every chirp and every receiver
    std::vector<std::vector<std::complex<double>>> spectra(static_cast<std::size_t>(C));
    for (int c = 0; c < C && ok; ++c) {
      for (int rx = 0; rx < R && ok; ++rx) {
        std::vector<std::complex<double>> spec(static_cast<std::size_t>(S), {0, 0});
        for (int k = 0; k < S; ++k)
          for (int s = 0; s < S; ++s) {
            const double ph = -2.0 * M_PI * k * s / S;
            const auto v = frame.at(c, s, rx);
            spec[static_cast<std::size_t>(k)] +=
                std::complex<double>(v.real(), v.imag()) *
                std::complex<double>(std::cos(ph), std::sin(ph));
          }
        int peak = 0;
        for (int k = 1; k < S; ++k)
          if (std::abs(spec[static_cast<std::size_t>(k)]) > std::abs(spec[static_cast<std::size_t>(peak)]))
            peak = k;
        if (peak != expect_r) { ok = false; why = "range bin"; }
        if (rx == 0) spectra[static_cast<std::size_t>(c)] = spec;
      }
    }
    if (!ok) break;

    // slow-time DFT at the range bin
    std::vector<std::complex<double>> slow(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) slow[static_cast<std::size_t>(c)] = spectra[static_cast<std::size_t>(c)][static_cast<std::size_t>(expect_r)];
    std::vector<std::complex<double>> dspec(static_cast<std::size_t>(C), {0, 0});
    for (int k = 0; k < C; ++k)
      for (int c = 0; c < C; ++c) {
        const double ph = -2.0 * M_PI * k * c / C;
        dspec[static_cast<std::size_t>(k)] += slow[static_cast<std::size_t>(c)] *
                                              std::complex<double>(std::cos(ph), std::sin(ph));
      }
    int dpeak = 0;
    for (int k = 1; k < C; ++k)
      if (std::abs(dspec[static_cast<std::size_t>(k)]) > std::abs(dspec[static_cast<std::size_t>(dpeak)])) dpeak = k;
    int expect_d = static_cast<int>(std::lround(t.doppler_norm * C));
    expect_d = ((expect_d % C) + C) % C;
    if (dpeak != expect_d) { ok = false; why = "doppler bin"; break; }

    // array phase slope at the (range, doppler) peak
    std::vector<std::complex<double>> v(static_cast<std::size_t>(R), {0, 0});
    for (int rx = 0; rx < R; ++rx)
      for (int c = 0; c < C; ++c)
        for (int s = 0; s < S; ++s) {
          const double ph = -2.0 * M_PI * (static_cast<double>(expect_r) * s / S +
                                           static_cast<double>(expect_d) * c / C);
          const auto x = frame.at(c, s, rx);
          v[static_cast<std::size_t>(rx)] += std::complex<double>(x.real(), x.imag()) *
                                             std::complex<double>(std::cos(ph), std::sin(ph));
        }
    const double want = 2.0 * M_PI * 0.5 * std::sin(t.azimuth_deg * M_PI / 180.0);
    for (int rx = 0; rx + 1 < R; ++rx) {
      const double slope = std::arg(v[static_cast<std::size_t>(rx + 1)] *
                                    std::conj(v[static_cast<std::size_t>(rx)]));
      if (std::abs(slope - want) >= 1e-6) { ok = false; why = "phase slope"; }
    }
  }
  report(8, "simulator physics oracles on 50 random targets", ok, why);
}

Model<float>* g_default_ablation = nullptr;

void criterion9() {
  const ModelConfig base = learning_config();

  static Model<float> m_default = train_ablation_model(base);
  g_default_ablation = &m_default;

  ModelConfig final_cfg = base;
  final_cfg.chirp_aggregation = ChirpAggregation::FinalState;
  Model<float> m_final = train_ablation_model(final_cfg);

  ModelConfig noexp_cfg = base;
  noexp_cfg.slow_time_expand = false;
  Model<float> m_noexp = train_ablation_model(noexp_cfg);

  const auto& val = learning_data().val_set;
  const double miou_default = evaluate(m_default, val).miou;
  const double miou_final = evaluate(m_final, val).miou;
  const double miou_noexp = evaluate(m_noexp, val).miou;

  std::ostringstream detail;
  detail << "avg_pool " << miou_default << " vs final_state " << miou_final
         << "; expand " << miou_default << " vs no-expand " << miou_noexp;
  report(9, "ablation direction: avg_pool >= final_state, expand >= no-expand",
         miou_default >= miou_final && miou_default >= miou_noexp, detail.str());
}

void criterion10() {
  const ModelConfig cfg = learning_config();
  if (!g_default_ablation) {
    static Model<float> m = train_ablation_model(cfg);
    g_default_ablation = &m;
  }
  Model<float>& model = *g_default_ablation;

  // Smooth 10-frame sequence: targets drift slowly; then a hard scene change.
  auto scene_at = [&](double t, bool after_jump, std::uint64_t noise_seed) {
    Scene sc;
    sc.chirps = cfg.chirps_per_frame;
    sc.samples = cfg.s_per_chirp;
    sc.n_rx = cfg.n_rx;
    sc.snr_db = 20.0;
    sc.seed = noise_seed;
    if (!after_jump) {
      sc.targets = {{0.25 + 0.008 * t, -30.0 + 0.8 * t, 0.10, 1.2},
                    {0.55 + 0.006 * t, 10.0 + 0.5 * t, -0.15, 1.0},
                    {0.75 - 0.005 * t, 40.0 - 0.6 * t, 0.20, 1.1}};
    } else {
      sc.targets = {{0.85, -50.0, -0.3, 0.8}, {0.40, 55.0, 0.35, 1.3}};
    }
    return sc;
  };

  const int n_smooth = 10, n_after = 10;
  auto run_policy = [&](StatePolicy policy) {
    StreamSession<float> session(model, policy);
    std::vector<std::vector<float>> smooth_segs;
    std::vector<double> post_miou;
    for (int t = 0; t < n_smooth; ++t) {
      Scene sc = scene_at(t, false, 9000 + static_cast<std::uint64_t>(t));
      auto out = stream_frame(session, synthesize_frame(sc));
      smooth_segs.push_back(std::vector<float>(out.seg.begin(), out.seg.end()));
    }
    for (int t = 0; t < n_after; ++t) {
      Scene sc = scene_at(t, true, 9100 + static_cast<std::uint64_t>(t));
      auto out = stream_frame(session, synthesize_frame(sc));
      std::vector<float> probs(out.seg.begin(), out.seg.end());
      auto lab = rasterize_labels(sc, cfg.out_h(), cfg.out_w());
      post_miou.push_back(metric_iou(binarize(probs), lab.seg));
    }
    double var = 0;
    for (int t = 1; t < n_smooth; ++t) {
      double acc = 0;
      for (std::size_t i = 0; i < smooth_segs[static_cast<std::size_t>(t)].size(); ++i) {
        const double d = smooth_segs[static_cast<std::size_t>(t)][i] -
                         smooth_segs[static_cast<std::size_t>(t - 1)][i];
        acc += d * d;
      }
      var += acc / static_cast<double>(smooth_segs[static_cast<std::size_t>(t)].size());
    }
    var /= (n_smooth - 1);
    return std::pair<double, std::vector<double>>(var, post_miou);
  };

  const auto [var_reset, miou_reset] = run_policy(StatePolicy::ResetPerFrame);
  const auto [var_retain, miou_retain] = run_policy(StatePolicy::RetainAcrossFrames);

  auto recovery_frames = [](const std::vector<double>& miou) {
    // steady level = mean of the last three post-jump frames
    double steady = 0;
    for (std::size_t i = miou.size() - 3; i < miou.size(); ++i) steady += miou[i];
    steady /= 3.0;
    for (std::size_t i = 0; i < miou.size(); ++i)
      if (miou[i] >= 0.95 * steady) return static_cast<int>(i) + 1;
    return static_cast<int>(miou.size()) + 1;
  };
  const int rec_reset = recovery_frames(miou_reset);
  const int rec_retain = recovery_frames(miou_retain);

  std::ostringstream detail;
  detail << "smooth variance retain " << var_retain << " <= reset " << var_reset
         << "; recovery frames reset " << rec_reset << " < retain " << rec_retain;
  report(10, "state retention: smoother when steady, slower to recover after a jump",
         var_retain <= var_reset && rec_reset < rec_retain, detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto want = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  const int c6_epochs = 30;

  if (want(1)) criterion1();
  if (want(2)) criterion2();
  if (want(3)) criterion3();
  if (want(4)) criterion4();
  if (want(5)) criterion5();
  if (want(7)) criterion7();
  if (want(8)) criterion8();
  if (want(6)) criterion6(c6_epochs);
  if (want(9)) criterion9();
  if (want(10)) criterion10();

  std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: " + std::to_string(g_failures))
            << std::endl;
  return g_failures;
}
