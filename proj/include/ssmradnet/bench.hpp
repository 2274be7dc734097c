#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "ssmradnet/model.hpp"
#include "ssmradnet/sim.hpp"
#include "ssmradnet/streaming.hpp"

namespace ssmr {

// ---------------------------------------------------------------------------
// Analytic counters. MACs follow the implementation's convention exactly: one
// count per scalar multiply in matmuls, convolutions and SSM state updates;
// activations, pooling, and pure additions count zero. The parity of these
// formulas with an instrumented forward pass is enforced by tests.
// ---------------------------------------------------------------------------

struct MacReport {
  std::uint64_t embed = 0;
  std::uint64_t sample_ssm = 0;
  std::uint64_t chirp_ssm = 0;
  std::uint64_t decoder = 0;
  std::uint64_t total() const { return embed + sample_ssm + chirp_ssm + decoder; }
};

inline std::int64_t count_params(const ModelConfig& cfg) {
  const std::int64_t n = cfg.n_rx, K = cfg.d_conv, D = cfg.d_state, Dc = cfg.d_state_chirp;
  const std::int64_t W = cfg.token_width(), M = static_cast<std::int64_t>(cfg.h0) * cfg.w0;
  const std::int64_t c = cfg.c_dec;

  std::int64_t total = 0;
  total += 4 * n * n + 2 * n + 2 * n * n + n;           // embed MLP
  total += n * K + n;                                   // sample conv
  total += n * 3 * D + D + D + D * n;                   // sample proj, dt bias, a_log, d_skip
  if (cfg.chirp_aggregation == ChirpAggregation::Conv1d) total += 3 * n + n;
  total += n * n + n + n * W + W;                       // expansion MLP
  total += W * K + W;                                   // chirp conv
  total += W * 3 * Dc + Dc + Dc + Dc * W;               // chirp proj, dt bias, a_log, d_skip
  total += 3 * W * M + M;                               // decoder conv1d
  total += 9 * 1 * c + c;                               // decoder conv2d stage 1
  total += 9 * c * c + c;                               // decoder conv2d stage 2
  if (cfg.head_segmentation) total += c + 1;
  if (cfg.head_detection) total += 3 * c + 3;
  return total;
}

inline MacReport count_macs(const ModelConfig& cfg) {
  const std::uint64_t n = static_cast<std::uint64_t>(cfg.n_rx);
  const std::uint64_t S = static_cast<std::uint64_t>(cfg.s_per_chirp);
  const std::uint64_t C = static_cast<std::uint64_t>(cfg.chirps_per_frame);
  const std::uint64_t K = static_cast<std::uint64_t>(cfg.d_conv);
  const std::uint64_t D = static_cast<std::uint64_t>(cfg.d_state);
  const std::uint64_t Dc = static_cast<std::uint64_t>(cfg.d_state_chirp);
  const std::uint64_t W = static_cast<std::uint64_t>(cfg.token_width());
  const std::uint64_t M = static_cast<std::uint64_t>(cfg.h0) * cfg.w0;
  const std::uint64_t c = static_cast<std::uint64_t>(cfg.c_dec);
  const std::uint64_t H = static_cast<std::uint64_t>(cfg.out_h());
  const std::uint64_t Wo = static_cast<std::uint64_t>(cfg.out_w());

  MacReport r;
  // per tick: two dense layers of the embedding MLP
  r.embed = C * S * 6 * n * n;
  // per tick: grouped conv, modulation projection, scan update
  std::uint64_t per_tick = n * K + n * 3 * D + 2 * D + n * (3 * D + 1);
  if (cfg.chirp_aggregation == ChirpAggregation::Conv1d) per_tick += 3 * n;
  r.sample_ssm = C * S * per_tick;
  // per chirp: expansion MLP, then the chirp-level block over C steps
  r.chirp_ssm = C * (n * n + n * W) + C * W * K + C * W * 3 * Dc + C * (2 * Dc + W * (3 * Dc + 1));
  // decoder: dimension-expansion conv over chirps, pooled 2-D tail
  r.decoder = (3 * C - 2) * W * M;
  r.decoder += (6 * static_cast<std::uint64_t>(cfg.h0) - 2) * (6 * static_cast<std::uint64_t>(cfg.w0) - 2) * c;
  r.decoder += (12 * static_cast<std::uint64_t>(cfg.h0) - 2) * (12 * static_cast<std::uint64_t>(cfg.w0) - 2) * c * c;
  if (cfg.head_segmentation) r.decoder += H * Wo * c;
  if (cfg.head_detection) r.decoder += H * Wo * c * 3;
  return r;
}

// ---------------------------------------------------------------------------
// Wall-clock latency harness.
// ---------------------------------------------------------------------------

enum class BenchMode { Batch, Streaming };

struct LatencyStats {
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double tick_p99_us = 0.0;  // streaming mode only
  int frames = 0;
};

namespace bench_detail {

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t idx = static_cast<std::size_t>(q * (v.size() - 1) + 0.5);
  return v[std::min(idx, v.size() - 1)];
}

// Fixed-resolution histogram for per-tick times (0.1 us bins up to 10 ms).
class TickHistogram {
 public:
  TickHistogram() : bins_(100000, 0) {}
  void add(double us) {
    std::size_t b = static_cast<std::size_t>(us * 10.0);
    if (b >= bins_.size()) b = bins_.size() - 1;
    ++bins_[b];
    ++count_;
  }
  double p99_us() const {
    if (count_ == 0) return 0.0;
    const std::uint64_t target = static_cast<std::uint64_t>(0.99 * count_);
    std::uint64_t seen = 0;
    for (std::size_t b = 0; b < bins_.size(); ++b) {
      seen += bins_[b];
      if (seen >= target) return (b + 0.5) / 10.0;
    }
    return 0.0;
  }

 private:
  std::vector<std::uint64_t> bins_;
  std::uint64_t count_ = 0;
};

}  // namespace bench_detail

template <class S>
LatencyStats measure_latency(const Model<S>& model, int frames, BenchMode mode, int warmup = 10,
                             std::uint64_t seed = 42) {
  using clock = std::chrono::steady_clock;
  const ModelConfig& cfg = model.config();

  Scene scene;
  scene.chirps = cfg.chirps_per_frame;
  scene.samples = cfg.s_per_chirp;
  scene.n_rx = cfg.n_rx;
  scene.snr_db = 10.0;
  scene.targets = {{0.4, 10.0, 0.1, 1.0}};
  scene.seed = seed;
  const AdcFrame frame = synthesize_frame(scene);

  LatencyStats stats;
  std::vector<double> frame_ms;
  frame_ms.reserve(static_cast<std::size_t>(frames));

  if (mode == BenchMode::Batch) {
    for (int i = 0; i < warmup; ++i) (void)model.forward_maps(frame);
    for (int i = 0; i < frames; ++i) {
      auto t0 = clock::now();
      (void)model.forward_maps(frame);
      auto t1 = clock::now();
      frame_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  } else {
    StreamSession<S> session(model);
    std::vector<std::complex<float>> tick(static_cast<std::size_t>(cfg.n_rx));
    auto run_frame = [&](bool measure, bench_detail::TickHistogram* hist) {
      auto f0 = clock::now();
      for (int c = 0; c < cfg.chirps_per_frame; ++c)
        for (int s = 0; s < cfg.s_per_chirp; ++s) {
          for (int rx = 0; rx < cfg.n_rx; ++rx) tick[static_cast<std::size_t>(rx)] = frame.at(c, s, rx);
          if (hist) {
            auto t0 = clock::now();
            (void)session.ingest(tick.data(), cfg.n_rx);
            auto t1 = clock::now();
            hist->add(std::chrono::duration<double, std::micro>(t1 - t0).count());
          } else {
            (void)session.ingest(tick.data(), cfg.n_rx);
          }
        }
      auto f1 = clock::now();
      if (measure)
        frame_ms.push_back(std::chrono::duration<double, std::milli>(f1 - f0).count());
    };
    for (int i = 0; i < warmup; ++i) run_frame(false, nullptr);
    bench_detail::TickHistogram hist;
    for (int i = 0; i < frames; ++i) run_frame(true, &hist);
    stats.tick_p99_us = hist.p99_us();
  }

  stats.p50_ms = bench_detail::percentile(frame_ms, 0.50);
  stats.p95_ms = bench_detail::percentile(frame_ms, 0.95);
  stats.frames = frames;
  return stats;
}

struct ComputeReport {
  std::int64_t params_total = 0;
  MacReport macs;
  LatencyStats latency;
  BenchMode mode = BenchMode::Batch;
  std::int64_t resident_state_floats = 0;
};

template <class S>
ComputeReport run_bench(const Model<S>& model, int frames, int warmup, BenchMode mode) {
  ComputeReport r;
  r.params_total = count_params(model.config());
  r.macs = count_macs(model.config());
  r.mode = mode;
  r.latency = measure_latency(model, frames, mode, warmup);
  StreamSession<S> session(model);
  r.resident_state_floats = session.memory_report().resident_floats;
  return r;
}

inline std::string report_human(const ComputeReport& r) {
  std::ostringstream os;
  os << "SSMRadNet compute report\n";
  os << "  params total        " << r.params_total << "\n";
  os << "  MACs/frame          " << r.macs.total() << "\n";
  os << "    embed             " << r.macs.embed << "\n";
  os << "    sample_ssm        " << r.macs.sample_ssm << "\n";
  os << "    chirp_ssm         " << r.macs.chirp_ssm << "\n";
  os << "    decoder           " << r.macs.decoder << "\n";
  os << "  latency p50 (ms)    " << r.latency.p50_ms << "\n";
  os << "  latency p95 (ms)    " << r.latency.p95_ms << "\n";
  if (r.mode == BenchMode::Streaming)
    os << "  tick p99 (us)       " << r.latency.tick_p99_us << "\n";
  os << "  resident state      " << r.resident_state_floats << " floats\n";
  return os.str();
}

inline std::string report_kv(const ComputeReport& r) {
  std::ostringstream os;
  os << "params_total=" << r.params_total << "\n";
  os << "macs_total=" << r.macs.total() << "\n";
  os << "macs_embed=" << r.macs.embed << "\n";
  os << "macs_sample_ssm=" << r.macs.sample_ssm << "\n";
  os << "macs_chirp_ssm=" << r.macs.chirp_ssm << "\n";
  os << "macs_decoder=" << r.macs.decoder << "\n";
  os << "latency_p50_ms=" << r.latency.p50_ms << "\n";
  os << "latency_p95_ms=" << r.latency.p95_ms << "\n";
  os << "tick_p99_us=" << r.latency.tick_p99_us << "\n";
  os << "resident_state_floats=" << r.resident_state_floats << "\n";
  os << "latency_frames=" << r.latency.frames << "\n";
  return os.str();
}

}  // namespace ssmr
