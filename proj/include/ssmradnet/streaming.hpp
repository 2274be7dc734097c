#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "ssmradnet/model.hpp"

namespace ssmr {

enum class StatePolicy { ResetPerFrame, RetainAcrossFrames };

// Sample-by-sample ingestion engine. Drives the model one tick at a time with
// O(d_conv + d_state*n_rx + C*token_width) live state; the raw cube is never
// buffered. The sample-level state resets at every chirp boundary regardless
// of policy; the chirp-level state follows the retention policy at frame
// boundaries.
template <class S>
class StreamSession {
 public:
  enum class EventKind { None, ChirpToken, FrameOutput };

  struct Event {
    EventKind kind = EventKind::None;
    std::vector<S> token;      // set for ChirpToken and FrameOutput
    BevOutput<S> output;       // set for FrameOutput
  };

  struct MemoryReport {
    std::int64_t resident_floats = 0;
    std::int64_t peak_floats = 0;
  };

  explicit StreamSession(const Model<S>& model, StatePolicy policy = StatePolicy::ResetPerFrame)
      : model_(&model), cfg_(model.config()), policy_(policy) {
    const int n = cfg_.n_rx, W = cfg_.token_width();
    const int D = cfg_.d_state, Dc = cfg_.d_state_chirp, K = cfg_.d_conv;

    sample_fifo_.assign(static_cast<std::size_t>(K - 1) * n, S(0));
    sample_h_.assign(static_cast<std::size_t>(n) * D, S(0));
    pool_sum_.assign(static_cast<std::size_t>(n), S(0));
    pool_first_.assign(static_cast<std::size_t>(n), S(0));
    pool_last_.assign(static_cast<std::size_t>(n), S(0));
    chirp_fifo_.assign(static_cast<std::size_t>(K - 1) * W, S(0));
    chirp_h_.assign(static_cast<std::size_t>(W) * Dc, S(0));
    u_rows_.assign(static_cast<std::size_t>(cfg_.chirps_per_frame) * W, S(0));

    a_sample_ = neg_exp(model.sample_block().a_log);
    a_chirp_ = neg_exp(model.chirp_block().a_log);
    dsum_sample_ = col_sums(model.sample_block().d_skip);
    dsum_chirp_ = col_sums(model.chirp_block().d_skip);

    embed_in_.assign(static_cast<std::size_t>(2 * n), S(0));
    embed_hidden_.assign(static_cast<std::size_t>(2 * n), S(0));
    z_.assign(static_cast<std::size_t>(n), S(0));
    scratch_dt_.assign(static_cast<std::size_t>(std::max(D, Dc)), S(0));
    scratch_decay_.assign(static_cast<std::size_t>(std::max(D, Dc)), S(0));
    scratch_dtb_.assign(static_cast<std::size_t>(std::max(D, Dc)), S(0));
    proj_.assign(static_cast<std::size_t>(3 * std::max(D, Dc)), S(0));
    xconv_.assign(static_cast<std::size_t>(std::max(n, W)), S(0));
    token_.assign(static_cast<std::size_t>(W), S(0));
    pooled_.assign(static_cast<std::size_t>(n), S(0));
  }

  // One tick: the simultaneous complex samples of all receivers.
  Event ingest(const std::complex<float>* x, int n_values) {
    if (n_values != cfg_.n_rx)
      throw ContractError("ingest: expected " + std::to_string(cfg_.n_rx) + " channels, got " +
                          std::to_string(n_values));
    if (tick_ == 0 && chirp_index_ == 0) begin_frame();

    const int n = cfg_.n_rx;
    ++tick_;
    ++sample_index_;

    for (int rx = 0; rx < n; ++rx) {
      embed_in_[static_cast<std::size_t>(rx)] = static_cast<S>(x[rx].real());
      embed_in_[static_cast<std::size_t>(n + rx)] = static_cast<S>(x[rx].imag());
    }
    embed_tick();
    ssm_tick(model_->sample_block(), a_sample_, dsum_sample_, sample_fifo_, sample_h_, z_.data(),
             n, cfg_.d_state, sample_index_, xconv_.data(), y_sample_);
    pool_tick();

    Event ev;
    if (sample_index_ == cfg_.s_per_chirp) {
      finish_chirp();
      ev.kind = EventKind::ChirpToken;
      ev.token = token_;
      if (chirp_index_ == cfg_.chirps_per_frame) {
        ev.kind = EventKind::FrameOutput;
        ev.output = decode_frame();
        finish_frame();
      }
    }
    return ev;
  }

  Event ingest(const std::vector<std::complex<float>>& x) {
    return ingest(x.data(), static_cast<int>(x.size()));
  }

  void set_policy(StatePolicy p) {
    if (tick_ != 0 || chirp_index_ != 0)
      throw ContractError("set_policy: only allowed between frames");
    policy_ = p;
  }
  StatePolicy policy() const { return policy_; }

  // Clears all state, as if freshly constructed (frame counter kept).
  void reset_state() {
    std::fill(sample_fifo_.begin(), sample_fifo_.end(), S(0));
    std::fill(sample_h_.begin(), sample_h_.end(), S(0));
    reset_pool();
    std::fill(chirp_fifo_.begin(), chirp_fifo_.end(), S(0));
    std::fill(chirp_h_.begin(), chirp_h_.end(), S(0));
    std::fill(u_rows_.begin(), u_rows_.end(), S(0));
    tick_ = 0;
    sample_index_ = 0;
    chirp_index_ = 0;
  }

  MemoryReport memory_report() const {
    MemoryReport r;
    r.resident_floats = static_cast<std::int64_t>(
        sample_fifo_.size() + sample_h_.size() + pool_sum_.size() + pool_first_.size() +
        pool_last_.size() + chirp_fifo_.size() + chirp_h_.size() + u_rows_.size());
    r.peak_floats = r.resident_floats + decode_peak_;
    return r;
  }

  std::uint64_t tick() const { return tick_frame_local(); }
  std::uint64_t frames_emitted() const { return frames_emitted_; }

  // Closed-form indices from the frame-local tick t = 1..C*S.
  int derived_chirp() const {
    const std::uint64_t t = tick_frame_local();
    return t == 0 ? 0 : static_cast<int>((t + cfg_.s_per_chirp - 1) / cfg_.s_per_chirp);
  }
  int derived_sample() const {
    const std::uint64_t t = tick_frame_local();
    return t == 0 ? 0 : static_cast<int>(t - static_cast<std::uint64_t>(derived_chirp() - 1) *
                                                 cfg_.s_per_chirp);
  }
  int current_chirp() const { return derived_chirp(); }
  int current_sample() const { return derived_sample(); }

 private:
  std::uint64_t tick_frame_local() const { return tick_; }

  static std::vector<S> neg_exp(const Tensor<S>& a_log) {
    std::vector<S> out(static_cast<std::size_t>(a_log.numel()));
    for (std::int64_t i = 0; i < a_log.numel(); ++i)
      out[static_cast<std::size_t>(i)] = -detail::exp_c(a_log.data()[i]);
    return out;
  }

  static std::vector<S> col_sums(const Tensor<S>& m) {
    const int rows = m.dim(0), cols = m.dim(1);
    std::vector<S> out(static_cast<std::size_t>(cols), S(0));
    for (int j = 0; j < rows; ++j)
      for (int g = 0; g < cols; ++g)
        out[static_cast<std::size_t>(g)] += m.data()[static_cast<std::size_t>(j) * cols + g];
    return out;
  }

  void begin_frame() {
    if (policy_ == StatePolicy::ResetPerFrame) {
      std::fill(chirp_fifo_.begin(), chirp_fifo_.end(), S(0));
      std::fill(chirp_h_.begin(), chirp_h_.end(), S(0));
    }
  }

  void embed_tick() {
    const int n = cfg_.n_rx;
    const Tensor<S>& w1 = model_->embed_w1();
    const Tensor<S>& b1 = model_->embed_b1();
    const Tensor<S>& w2 = model_->embed_w2();
    const Tensor<S>& b2 = model_->embed_b2();
    for (int o = 0; o < 2 * n; ++o) {
      S acc = 0;
      for (int i = 0; i < 2 * n; ++i)
        acc += embed_in_[static_cast<std::size_t>(i)] *
               w1.data()[static_cast<std::size_t>(i) * 2 * n + o];
      acc += b1.data()[o];
      const S sig = detail::sigmoid_c(acc);
      embed_hidden_[static_cast<std::size_t>(o)] = acc * sig;
    }
    for (int o = 0; o < n; ++o) {
      S acc = 0;
      for (int i = 0; i < 2 * n; ++i)
        acc += embed_hidden_[static_cast<std::size_t>(i)] *
               w2.data()[static_cast<std::size_t>(i) * n + o];
      z_[static_cast<std::size_t>(o)] = acc + b2.data()[o];
    }
  }

  // One recurrence step of an SSM block: conv FIFO advance, modulation
  // projection, decay, state update, per-group output.
  void ssm_tick(const SsmBlockParams<S>& blk, const std::vector<S>& a, const std::vector<S>& dsum,
                std::vector<S>& fifo, std::vector<S>& h, const S* input, int width, int d_state,
                int step_in_seq, S* xconv, std::vector<S>& y_out) {
    const int K = cfg_.d_conv;
    // causal conv with zero padding at sequence start
    for (int g = 0; g < width; ++g) {
      S acc = blk.conv_b.data()[g];
      for (int k = 0; k < K && k < step_in_seq; ++k) {
        const S xv = k == 0 ? input[g] : fifo[static_cast<std::size_t>(k - 1) * width + g];
        acc += blk.conv_w.data()[static_cast<std::size_t>(g) * K + k] * xv;
      }
      xconv[g] = acc;
    }
    // advance FIFO (newest at slot 0)
    for (int k = K - 2; k >= 1; --k)
      for (int g = 0; g < width; ++g)
        fifo[static_cast<std::size_t>(k) * width + g] =
            fifo[static_cast<std::size_t>(k - 1) * width + g];
    if (K > 1)
      for (int g = 0; g < width; ++g) fifo[static_cast<std::size_t>(g)] = input[g];

    // modulation projection p = W_p^T x_conv, then dt via softplus
    const int P = 3 * d_state;
    for (int o = 0; o < P; ++o) {
      S acc = 0;
      for (int g = 0; g < width; ++g)
        acc += xconv[g] * blk.w_p.data()[static_cast<std::size_t>(g) * P + o];
      proj_[static_cast<std::size_t>(o)] = acc;
    }
    for (int j = 0; j < d_state; ++j) {
      const S dt = detail::softplus_c(proj_[static_cast<std::size_t>(j)] + blk.dt_bias.data()[j]);
      scratch_dt_[static_cast<std::size_t>(j)] = dt;
      scratch_decay_[static_cast<std::size_t>(j)] = detail::exp_c(dt * a[static_cast<std::size_t>(j)]);
      scratch_dtb_[static_cast<std::size_t>(j)] = dt * proj_[static_cast<std::size_t>(d_state + j)];
    }
    const S* cmod = proj_.data() + 2 * d_state;
    y_out.resize(static_cast<std::size_t>(width));
    for (int g = 0; g < width; ++g) {
      S* hg = h.data() + static_cast<std::size_t>(g) * d_state;
      const S xv = xconv[g];
      S acc = 0;
      for (int j = 0; j < d_state; ++j) {
        const S hv = hg[j] * scratch_decay_[static_cast<std::size_t>(j)] +
                     xv * scratch_dtb_[static_cast<std::size_t>(j)];
        hg[j] = hv;
        acc += hv * cmod[j];
      }
      y_out[static_cast<std::size_t>(g)] = acc + xv * dsum[static_cast<std::size_t>(g)];
    }
  }

  void pool_tick() {
    const int n = cfg_.n_rx;
    switch (cfg_.chirp_aggregation) {
      case ChirpAggregation::AvgPool:
        for (int g = 0; g < n; ++g) pool_sum_[static_cast<std::size_t>(g)] += y_sample_[static_cast<std::size_t>(g)];
        break;
      case ChirpAggregation::FinalState:
        pool_last_ = y_sample_;
        break;
      case ChirpAggregation::Conv1d:
        if (sample_index_ == 1) pool_first_ = y_sample_;
        for (int g = 0; g < n; ++g) pool_sum_[static_cast<std::size_t>(g)] += y_sample_[static_cast<std::size_t>(g)];
        pool_last_ = y_sample_;
        break;
    }
  }

  void reset_pool() {
    std::fill(pool_sum_.begin(), pool_sum_.end(), S(0));
    std::fill(pool_first_.begin(), pool_first_.end(), S(0));
    std::fill(pool_last_.begin(), pool_last_.end(), S(0));
  }

  // Chirp complete: summarize, expand, run the chirp-SSM one step.
  void finish_chirp() {
    const int n = cfg_.n_rx, W = cfg_.token_width();
    const int T = cfg_.s_per_chirp;
    switch (cfg_.chirp_aggregation) {
      case ChirpAggregation::AvgPool:
        for (int g = 0; g < n; ++g)
          pooled_[static_cast<std::size_t>(g)] = pool_sum_[static_cast<std::size_t>(g)] / static_cast<S>(T);
        break;
      case ChirpAggregation::FinalState:
        pooled_ = pool_last_;
        break;
      case ChirpAggregation::Conv1d: {
        // mean over t of (same-padded width-3 depthwise conv) reduces to
        // tap-weighted totals of the running sum and the edge samples
        const Tensor<S>& w = model_->agg_w();
        const Tensor<S>& b = model_->agg_b();
        for (int g = 0; g < n; ++g) {
          const S tsum = pool_sum_[static_cast<std::size_t>(g)];
          const S acc = w.data()[static_cast<std::size_t>(g) * 3 + 0] *
                            (tsum - pool_last_[static_cast<std::size_t>(g)]) +
                        w.data()[static_cast<std::size_t>(g) * 3 + 1] * tsum +
                        w.data()[static_cast<std::size_t>(g) * 3 + 2] *
                            (tsum - pool_first_[static_cast<std::size_t>(g)]);
          pooled_[static_cast<std::size_t>(g)] = acc / static_cast<S>(T) + b.data()[g];
        }
        break;
      }
    }

    // expansion MLP
    const Tensor<S>& w1 = model_->expand_w1();
    const Tensor<S>& b1 = model_->expand_b1();
    const Tensor<S>& w2 = model_->expand_w2();
    const Tensor<S>& b2 = model_->expand_b2();
    std::vector<S> hidden(static_cast<std::size_t>(n));
    for (int o = 0; o < n; ++o) {
      S acc = 0;
      for (int i = 0; i < n; ++i)
        acc += pooled_[static_cast<std::size_t>(i)] * w1.data()[static_cast<std::size_t>(i) * n + o];
      acc += b1.data()[o];
      hidden[static_cast<std::size_t>(o)] = acc * detail::sigmoid_c(acc);
    }
    for (int o = 0; o < W; ++o) {
      S acc = 0;
      for (int i = 0; i < n; ++i)
        acc += hidden[static_cast<std::size_t>(i)] * w2.data()[static_cast<std::size_t>(i) * W + o];
      token_[static_cast<std::size_t>(o)] = acc + b2.data()[o];
    }

    // chirp-SSM step
    ++chirp_index_;
    ssm_tick(model_->chirp_block(), a_chirp_, dsum_chirp_, chirp_fifo_, chirp_h_, token_.data(), W,
             cfg_.d_state_chirp, chirp_index_, xconv_.data(), y_chirp_);
    S* urow = u_rows_.data() + static_cast<std::size_t>(chirp_index_ - 1) * W;
    for (int g = 0; g < W; ++g) urow[g] = y_chirp_[static_cast<std::size_t>(g)];

    // fast-time state resets at every chirp boundary
    std::fill(sample_h_.begin(), sample_h_.end(), S(0));
    std::fill(sample_fifo_.begin(), sample_fifo_.end(), S(0));
    reset_pool();
    sample_index_ = 0;
  }

  BevOutput<S> decode_frame() {
    MemTracker& mt = mem_tracker();
    const bool was_enabled = mt.enabled;
    mt.enabled = true;
    mt.current = 0;
    mt.peak = 0;
    BevOutput<S> out;
    {
      Tensor<S> u({cfg_.chirps_per_frame, cfg_.token_width()}, std::vector<S>(u_rows_));
      out = model_->to_output(model_->decode(u));
    }
    if (mt.peak > decode_peak_) decode_peak_ = mt.peak;
    mt.enabled = was_enabled;
    mt.current = 0;
    mt.peak = 0;
    return out;
  }

  void finish_frame() {
    ++frames_emitted_;
    tick_ = 0;
    chirp_index_ = 0;
    sample_index_ = 0;
    // chirp state carry-over is decided at the next frame start
  }

  const Model<S>* model_;
  ModelConfig cfg_;
  StatePolicy policy_;

  std::uint64_t tick_ = 0;  // frame-local, 1..C*S
  int sample_index_ = 0;    // 1..S within the current chirp
  int chirp_index_ = 0;     // completed chirps in the current frame
  std::uint64_t frames_emitted_ = 0;

  std::vector<S> sample_fifo_, sample_h_;
  std::vector<S> pool_sum_, pool_first_, pool_last_;
  std::vector<S> chirp_fifo_, chirp_h_;
  std::vector<S> u_rows_;

  std::vector<S> a_sample_, a_chirp_, dsum_sample_, dsum_chirp_;

  std::vector<S> embed_in_, embed_hidden_, z_;
  std::vector<S> scratch_dt_, scratch_decay_, scratch_dtb_, proj_, xconv_;
  std::vector<S> token_, pooled_, y_sample_, y_chirp_;

  std::int64_t decode_peak_ = 0;
};

}  // namespace ssmr
