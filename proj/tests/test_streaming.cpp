#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssmradnet/streaming.hpp"

using namespace ssmr;

namespace {

ModelConfig stream_config() {
  ModelConfig c;
  c.n_rx = 4;
  c.s_per_chirp = 32;
  c.chirps_per_frame = 8;
  c.d_conv = 4;
  c.d_state = 8;
  c.d_state_chirp = 8;
  c.h0 = 4;
  c.w0 = 4;
  c.c_dec = 4;
  c.seed = 3;
  return c;
}

AdcFrame make_frame(const ModelConfig& cfg, std::uint64_t seed, double range = 0.4) {
  Scene sc;
  sc.chirps = cfg.chirps_per_frame;
  sc.samples = cfg.s_per_chirp;
  sc.n_rx = cfg.n_rx;
  sc.seed = seed;
  sc.snr_db = 10.0;
  sc.targets = {{range, 10.0, 0.1, 1.0}};
  return synthesize_frame(sc);
}

template <class S>
BevOutput<S> stream_frame(StreamSession<S>& session, const AdcFrame& frame) {
  const int C = frame.chirps, T = frame.samples, n = frame.n_rx;
  std::vector<std::complex<float>> tick(static_cast<std::size_t>(n));
  BevOutput<S> out;
  for (int c = 0; c < C; ++c)
    for (int s = 0; s < T; ++s) {
      for (int rx = 0; rx < n; ++rx) tick[static_cast<std::size_t>(rx)] = frame.at(c, s, rx);
      auto ev = session.ingest(tick.data(), n);
      if (ev.kind == StreamSession<S>::EventKind::FrameOutput) out = ev.output;
    }
  return out;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-12});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("event cadence: none until S, token at S, frame at C*S") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  StreamSession<double> session(m);
  auto frame = make_frame(cfg, 1);
  std::vector<std::complex<float>> tick(4);

  int tokens = 0, frames = 0;
  for (int c = 0; c < cfg.chirps_per_frame; ++c)
    for (int s = 0; s < cfg.s_per_chirp; ++s) {
      for (int rx = 0; rx < 4; ++rx) tick[static_cast<std::size_t>(rx)] = frame.at(c, s, rx);
      auto ev = session.ingest(tick.data(), 4);
      if (s < cfg.s_per_chirp - 1) {
        CHECK(ev.kind == StreamSession<double>::EventKind::None);
      } else if (c < cfg.chirps_per_frame - 1) {
        CHECK(ev.kind == StreamSession<double>::EventKind::ChirpToken);
        ++tokens;
      } else {
        ++frames;
        CHECK(ev.kind == StreamSession<double>::EventKind::FrameOutput);
      }
    }
  CHECK(tokens == cfg.chirps_per_frame - 1);
  CHECK(frames == 1);
}

TEST_CASE("streaming equals batch at fp64 within 1e-9") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  StreamSession<double> session(m);
  for (int rep = 0; rep < 3; ++rep) {
    auto frame = make_frame(cfg, 10 + static_cast<std::uint64_t>(rep));
    auto streamed = stream_frame(session, frame);
    auto batch = m.forward_maps(frame);
    REQUIRE(streamed.seg.size() == batch.seg.size());
    CHECK(max_rel_diff(streamed.seg, batch.seg) < 1e-9);
    CHECK(max_rel_diff(streamed.det, batch.det) < 1e-9);
  }
}

TEST_CASE("streaming equals batch for every aggregation mode") {
  for (auto agg : {ChirpAggregation::AvgPool, ChirpAggregation::FinalState,
                   ChirpAggregation::Conv1d}) {
    auto cfg = stream_config();
    cfg.chirp_aggregation = agg;
    Model<double> m(cfg);
    StreamSession<double> session(m);
    auto frame = make_frame(cfg, 21);
    auto streamed = stream_frame(session, frame);
    auto batch = m.forward_maps(frame);
    CHECK(max_rel_diff(streamed.seg, batch.seg) < 1e-9);
    CHECK(max_rel_diff(streamed.det, batch.det) < 1e-9);
  }
}

TEST_CASE("streaming equals batch without slow-time expansion") {
  auto cfg = stream_config();
  cfg.slow_time_expand = false;
  Model<double> m(cfg);
  StreamSession<double> session(m);
  auto frame = make_frame(cfg, 33);
  auto streamed = stream_frame(session, frame);
  auto batch = m.forward_maps(frame);
  CHECK(max_rel_diff(streamed.seg, batch.seg) < 1e-9);
}

TEST_CASE("tick algebra matches closed forms") {
  auto cfg = stream_config();
  cfg.s_per_chirp = 5;
  cfg.chirps_per_frame = 3;
  Model<double> m(cfg);
  StreamSession<double> session(m);
  auto frame = make_frame(cfg, 2);
  std::vector<std::complex<float>> tick(4);

  std::uint64_t t = 0;
  for (int c = 0; c < 3; ++c)
    for (int s = 0; s < 5; ++s) {
      for (int rx = 0; rx < 4; ++rx) tick[static_cast<std::size_t>(rx)] = frame.at(c, s, rx);
      session.ingest(tick.data(), 4);
      ++t;
      if (t < 15) {  // after the final tick the counters roll to the next frame
        CHECK(session.tick() == t);
        const int expect_c = static_cast<int>((t + 4) / 5);
        const int expect_s = static_cast<int>(t - static_cast<std::uint64_t>(expect_c - 1) * 5);
        CHECK(session.derived_chirp() == expect_c);
        CHECK(session.derived_sample() == expect_s);
        CHECK(session.current_chirp() == expect_c);
        CHECK(session.current_sample() == expect_s);
      }
    }
  CHECK(session.frames_emitted() == 1);
}

TEST_CASE("wrong channel count rejected") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  StreamSession<double> session(m);
  std::vector<std::complex<float>> bad(3);
  CHECK_THROWS_AS(session.ingest(bad.data(), 3), ContractError);
}

TEST_CASE("reset policy reproduces identical outputs on identical frames") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  StreamSession<double> session(m, StatePolicy::ResetPerFrame);
  auto frame = make_frame(cfg, 7);
  auto out1 = stream_frame(session, frame);
  auto out2 = stream_frame(session, frame);
  CHECK(out1.seg == out2.seg);
  CHECK(out1.det == out2.det);
}

TEST_CASE("retain policy differs then recovers after switching to reset") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  auto frame = make_frame(cfg, 7);

  StreamSession<double> fresh(m, StatePolicy::ResetPerFrame);
  auto fresh_out = stream_frame(fresh, frame);

  StreamSession<double> session(m, StatePolicy::RetainAcrossFrames);
  auto out1 = stream_frame(session, frame);
  auto out2 = stream_frame(session, frame);
  CHECK(out1.seg == fresh_out.seg);  // first frame starts from zero state
  CHECK(out1.seg != out2.seg);       // carried state changes the second frame

  session.set_policy(StatePolicy::ResetPerFrame);
  auto out3 = stream_frame(session, frame);
  CHECK(out3.seg == fresh_out.seg);
  CHECK(out3.det == fresh_out.det);
}

TEST_CASE("set_policy mid-frame is a contract error") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  StreamSession<double> session(m);
  auto frame = make_frame(cfg, 9);
  std::vector<std::complex<float>> tick(4);
  for (int rx = 0; rx < 4; ++rx) tick[static_cast<std::size_t>(rx)] = frame.at(0, 0, rx);
  session.ingest(tick.data(), 4);
  CHECK_THROWS_AS(session.set_policy(StatePolicy::RetainAcrossFrames), ContractError);
}

TEST_CASE("double reset equals single reset") {
  auto cfg = stream_config();
  Model<double> m(cfg);
  StreamSession<double> a(m), b(m);
  auto frame = make_frame(cfg, 11);
  stream_frame(a, frame);
  stream_frame(b, frame);
  a.reset_state();
  b.reset_state();
  b.reset_state();
  auto out_a = stream_frame(a, frame);
  auto out_b = stream_frame(b, frame);
  CHECK(out_a.seg == out_b.seg);
}

TEST_CASE("resident state independent of S and far below the cube") {
  auto cfg = stream_config();
  cfg.n_rx = 4;
  cfg.chirps_per_frame = 16;

  cfg.s_per_chirp = 512;
  Model<double> m512(cfg);
  StreamSession<double> s512(m512);

  cfg.s_per_chirp = 1024;
  Model<double> m1024(cfg);
  StreamSession<double> s1024(m1024);

  const auto r512 = s512.memory_report();
  const auto r1024 = s1024.memory_report();
  CHECK(r512.resident_floats == r1024.resident_floats);

  // stream one frame; the high-water mark stays far below the ADC cube
  auto frame = make_frame(cfg, 13);
  stream_frame(s1024, frame);
  const auto after = s1024.memory_report();
  const std::int64_t cube = static_cast<std::int64_t>(cfg.chirps_per_frame) * cfg.s_per_chirp *
                            cfg.n_rx * 2;
  CHECK(after.peak_floats < cube);
  CHECK(after.resident_floats == r1024.resident_floats);
}
