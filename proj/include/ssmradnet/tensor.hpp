#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ssmr {

// Error taxonomy shared across the library. The CLI maps these to exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Multiply-accumulate counter. Enabled only by benchmarks and the analytic
// parity test; matmul/conv/scan kernels report one count per scalar multiply,
// activations and pooling report nothing.
struct MacCounter {
  bool enabled = false;
  std::uint64_t macs = 0;
};

inline MacCounter& mac_counter() {
  thread_local MacCounter c;
  return c;
}

inline void mac_add(std::uint64_t n) {
  MacCounter& c = mac_counter();
  if (c.enabled) c.macs += n;
}

// Live-scalar tracker used by the streaming runtime to measure activation
// memory. Counts value buffers only, not gradients or parameters (callers
// enable it around non-parameter allocations).
struct MemTracker {
  bool enabled = false;
  std::int64_t current = 0;
  std::int64_t peak = 0;
};

inline MemTracker& mem_tracker() {
  thread_local MemTracker t;
  return t;
}

template <class S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // sized iff requires_grad
  bool requires_grad = false;
  bool tracked = false;  // counted by the MemTracker

  Node(Shape sh, std::vector<S> v) : shape(std::move(sh)), value(std::move(v)) {
    MemTracker& t = mem_tracker();
    if (t.enabled) {
      tracked = true;
      t.current += static_cast<std::int64_t>(value.size());
      if (t.current > t.peak) t.peak = t.current;
    }
  }

  ~Node() {
    if (tracked) mem_tracker().current -= static_cast<std::int64_t>(value.size());
  }

  void ensure_grad() {
    if (!requires_grad) {
      requires_grad = true;
      grad.assign(value.size(), S(0));
    }
  }
};

// Tape of recorded primitives. Creation order is topological by construction;
// the backward pass walks records exactly once, in reverse. Each record's
// output gradient is consumed (zeroed) after its pull so that leaf gradients
// accumulate correctly across repeated backward calls.
template <class S>
class Tape {
 public:
  struct Record {
    std::shared_ptr<Node<S>> out;
    std::function<void()> pull;
  };

  void record(std::shared_ptr<Node<S>> out, std::function<void()> pull) {
    records_.push_back({std::move(out), std::move(pull)});
  }

  void backward() {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      it->pull();
      std::fill(it->out->grad.begin(), it->out->grad.end(), S(0));
    }
  }

  void clear() { records_.clear(); }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<Record> records_;
};

template <class S>
inline Tape<S>*& active_tape() {
  thread_local Tape<S>* t = nullptr;
  return t;
}

// Scopes the thread-local active tape. Ops record onto it only while a scope
// is alive; outside any scope the engine runs gradient-free.
template <class S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& t) : prev_(active_tape<S>()) { active_tape<S>() = &t; }
  ~TapeScope() { active_tape<S>() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

// Dense array handle. Copies are shallow (shared node); pass by value freely.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : n_(std::make_shared<Node<S>>(std::move(shape), std::vector<S>())) {
    n_->value.assign(static_cast<std::size_t>(shape_numel(n_->shape)), S(0));
  }

  Tensor(Shape shape, std::vector<S> data)
      : n_(std::make_shared<Node<S>>(std::move(shape), std::move(data))) {
    if (shape_numel(n_->shape) != static_cast<std::int64_t>(n_->value.size()))
      throw DimensionError("tensor data size " + std::to_string(n_->value.size()) +
                           " does not match shape " + shape_str(n_->shape));
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(n_->value.size()); }

  S* data() { return n_->value.data(); }
  const S* data() const { return n_->value.data(); }
  std::vector<S>& values() { return n_->value; }
  const std::vector<S>& values() const { return n_->value; }

  S item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return n_->value[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad() { n_->ensure_grad(); }
  S* grad_data() { return n_->grad.data(); }
  const S* grad_data() const { return n_->grad.data(); }
  std::vector<S>& grad() { return n_->grad; }
  const std::vector<S>& grad() const { return n_->grad; }
  void zero_grad() {
    if (n_->requires_grad) std::fill(n_->grad.begin(), n_->grad.end(), S(0));
  }

  std::shared_ptr<Node<S>> node() const { return n_; }

 private:
  std::shared_ptr<Node<S>> n_;
};

namespace detail {

template <class S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class S>
inline bool grad_mode(std::initializer_list<const Tensor<S>*> inputs) {
  if (!active_tape<S>()) return false;
  for (const Tensor<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <class S>
inline void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

constexpr double kExpClamp = 30.0;

template <class S>
inline S clamp_exp_arg(S x) {
  if (x > S(kExpClamp)) return S(kExpClamp);
  if (x < S(-kExpClamp)) return S(-kExpClamp);
  return x;
}

template <class S>
inline S exp_c(S x) {
  return std::exp(clamp_exp_arg(x));
}

template <class S>
inline S sigmoid_c(S x) {
  x = clamp_exp_arg(x);
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  S e = std::exp(x);
  return e / (S(1) + e);
}

template <class S>
inline S softplus_c(S x) {
  return std::log1p(std::exp(clamp_exp_arg(x)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise ops. Supported broadcasting: equal shapes, or one operand
// a scalar (numel 1).
// ---------------------------------------------------------------------------

enum class BinOp { Add, Sub, Mul, Div };

template <class S>
Tensor<S> binary_op(BinOp op, const Tensor<S>& a, const Tensor<S>& b, const char* name) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape())
    throw DimensionError(std::string(name) + ": shapes not broadcast-compatible " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));

  const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
  Tensor<S> out(out_shape);
  const std::int64_t n = out.numel();
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    S av = pa[a_scalar ? 0 : i];
    S bv = pb[b_scalar ? 0 : i];
    switch (op) {
      case BinOp::Add: po[i] = av + bv; break;
      case BinOp::Sub: po[i] = av - bv; break;
      case BinOp::Mul: po[i] = av * bv; break;
      case BinOp::Div: po[i] = av / bv; break;
    }
  }

  if (detail::grad_mode<S>({&a, &b})) {
    out.set_requires_grad();
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    active_tape<S>()->record(on, [op, an, bn, on, a_scalar, b_scalar, n] {
      const S* g = on->grad.data();
      for (std::int64_t i = 0; i < n; ++i) {
        S av = an->value[a_scalar ? 0 : static_cast<std::size_t>(i)];
        S bv = bn->value[b_scalar ? 0 : static_cast<std::size_t>(i)];
        S da = 0, db = 0;
        switch (op) {
          case BinOp::Add: da = g[i]; db = g[i]; break;
          case BinOp::Sub: da = g[i]; db = -g[i]; break;
          case BinOp::Mul: da = g[i] * bv; db = g[i] * av; break;
          case BinOp::Div:
            da = g[i] / bv;
            db = -g[i] * av / (bv * bv);
            break;
        }
        if (an->requires_grad) an->grad[a_scalar ? 0 : static_cast<std::size_t>(i)] += da;
        if (bn->requires_grad) bn->grad[b_scalar ? 0 : static_cast<std::size_t>(i)] += db;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(BinOp::Add, a, b, "add");
}
template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(BinOp::Sub, a, b, "sub");
}
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(BinOp::Mul, a, b, "mul");
}
template <class S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(BinOp::Div, a, b, "div");
}

// ---------------------------------------------------------------------------
// Unary elementwise ops. Exponential-family inputs are clamped to +-30 before
// exponentiation so outputs stay finite for any finite input.
// ---------------------------------------------------------------------------

enum class UnOp { Exp, Log, Sigmoid, Silu, Softplus };

template <class S>
Tensor<S> unary_op(UnOp op, const Tensor<S>& x) {
  Tensor<S> out(x.shape());
  const std::int64_t n = x.numel();
  const S* px = x.data();
  S* po = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    S v = px[i];
    switch (op) {
      case UnOp::Exp: po[i] = detail::exp_c(v); break;
      case UnOp::Log: po[i] = std::log(v < S(1e-30) ? S(1e-30) : v); break;
      case UnOp::Sigmoid: po[i] = detail::sigmoid_c(v); break;
      case UnOp::Silu: po[i] = v * detail::sigmoid_c(v); break;
      case UnOp::Softplus: po[i] = detail::softplus_c(v); break;
    }
  }

  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [op, xn, on, n] {
      if (!xn->requires_grad) return;
      const S* g = on->grad.data();
      for (std::int64_t i = 0; i < n; ++i) {
        S v = xn->value[static_cast<std::size_t>(i)];
        S d = 0;
        switch (op) {
          case UnOp::Exp:
            d = (std::abs(v) > S(detail::kExpClamp)) ? S(0)
                                                     : on->value[static_cast<std::size_t>(i)];
            break;
          case UnOp::Log: d = S(1) / (v < S(1e-30) ? S(1e-30) : v); break;
          case UnOp::Sigmoid: {
            S s = on->value[static_cast<std::size_t>(i)];
            d = s * (S(1) - s);
            break;
          }
          case UnOp::Silu: {
            S s = detail::sigmoid_c(v);
            d = s + v * s * (S(1) - s);
            break;
          }
          case UnOp::Softplus:
            d = (std::abs(v) > S(detail::kExpClamp)) ? S(0) : detail::sigmoid_c(v);
            break;
        }
        xn->grad[static_cast<std::size_t>(i)] += g[i] * d;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> exp(const Tensor<S>& x) {
  return unary_op(UnOp::Exp, x);
}
template <class S>
Tensor<S> log(const Tensor<S>& x) {
  return unary_op(UnOp::Log, x);
}
template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary_op(UnOp::Sigmoid, x);
}
template <class S>
Tensor<S> silu(const Tensor<S>& x) {
  return unary_op(UnOp::Silu, x);
}
template <class S>
Tensor<S> softplus(const Tensor<S>& x) {
  return unary_op(UnOp::Softplus, x);
}

// affine(x, k, c) = k*x + c with compile-time-constant k, c (no grad to them).
template <class S>
Tensor<S> affine(const Tensor<S>& x, S k, S c) {
  Tensor<S> out(x.shape());
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = k * x.data()[i] + c;
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, k, n] {
      if (!xn->requires_grad) return;
      for (std::int64_t i = 0; i < n; ++i)
        xn->grad[static_cast<std::size_t>(i)] += k * on->grad[static_cast<std::size_t>(i)];
    });
  }
  return out;
}

template <class S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  Tensor<S> out(x.shape());
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    S v = x.data()[i];
    out.data()[i] = v < lo ? lo : (v > hi ? hi : v);
  }
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, lo, hi, n] {
      if (!xn->requires_grad) return;
      for (std::int64_t i = 0; i < n; ++i) {
        S v = xn->value[static_cast<std::size_t>(i)];
        if (v > lo && v < hi) xn->grad[static_cast<std::size_t>(i)] += on->grad[static_cast<std::size_t>(i)];
      }
    });
  }
  return out;
}

// Smooth-L1 kernel, quadratic inside |x| < beta, linear outside.
template <class S>
Tensor<S> huber(const Tensor<S>& x, S beta) {
  Tensor<S> out(x.shape());
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    S v = x.data()[i];
    S a = std::abs(v);
    out.data()[i] = a < beta ? S(0.5) * v * v / beta : a - S(0.5) * beta;
  }
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, beta, n] {
      if (!xn->requires_grad) return;
      for (std::int64_t i = 0; i < n; ++i) {
        S v = xn->value[static_cast<std::size_t>(i)];
        S d = std::abs(v) < beta ? v / beta : (v > S(0) ? S(1) : S(-1));
        xn->grad[static_cast<std::size_t>(i)] += d * on->grad[static_cast<std::size_t>(i)];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  S acc = 0;
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += x.data()[i];
  Tensor<S> out = Tensor<S>::scalar(acc);
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, n] {
      if (!xn->requires_grad) return;
      S g = on->grad[0];
      for (std::int64_t i = 0; i < n; ++i) xn->grad[static_cast<std::size_t>(i)] += g;
    });
  }
  return out;
}

template <class S>
Tensor<S> mean(const Tensor<S>& x) {
  const std::int64_t n = x.numel();
  S acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += x.data()[i];
  Tensor<S> out = Tensor<S>::scalar(acc / static_cast<S>(n));
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, n] {
      if (!xn->requires_grad) return;
      S g = on->grad[0] / static_cast<S>(n);
      for (std::int64_t i = 0; i < n; ++i) xn->grad[static_cast<std::size_t>(i)] += g;
    });
  }
  return out;
}

// Column means of an m x n matrix -> 1 x n.
template <class S>
Tensor<S> mean_rows(const Tensor<S>& x) {
  if (x.rank() != 2) throw DimensionError("mean_rows expects rank-2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  Tensor<S> out({1, n});
  for (int j = 0; j < n; ++j) {
    S acc = 0;
    for (int i = 0; i < m; ++i) acc += x.data()[static_cast<std::size_t>(i) * n + j];
    out.data()[j] = acc / static_cast<S>(m);
  }
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, m, n] {
      if (!xn->requires_grad) return;
      for (int j = 0; j < n; ++j) {
        S g = on->grad[static_cast<std::size_t>(j)] / static_cast<S>(m);
        for (int i = 0; i < m; ++i) xn->grad[static_cast<std::size_t>(i) * n + j] += g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
  Tensor<S> out(std::move(shape), std::vector<S>(x.values()));
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on] {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_rows(const Tensor<S>& x, int r0, int nrows) {
  if (x.rank() != 2) throw DimensionError("slice_rows expects rank-2");
  const int m = x.dim(0), n = x.dim(1);
  if (r0 < 0 || r0 + nrows > m) throw DimensionError("slice_rows out of range");
  Tensor<S> out({nrows, n});
  std::copy(x.data() + static_cast<std::size_t>(r0) * n,
            x.data() + static_cast<std::size_t>(r0 + nrows) * n, out.data());
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, r0, nrows, n] {
      if (!xn->requires_grad) return;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(nrows) * n; ++i)
        xn->grad[static_cast<std::size_t>(r0) * n + i] += on->grad[static_cast<std::size_t>(i)];
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& x, int c0, int ncols) {
  if (x.rank() != 2) throw DimensionError("slice_cols expects rank-2");
  const int m = x.dim(0), n = x.dim(1);
  if (c0 < 0 || c0 + ncols > n) throw DimensionError("slice_cols out of range");
  Tensor<S> out({m, ncols});
  for (int i = 0; i < m; ++i)
    std::copy(x.data() + static_cast<std::size_t>(i) * n + c0,
              x.data() + static_cast<std::size_t>(i) * n + c0 + ncols,
              out.data() + static_cast<std::size_t>(i) * ncols);
  if (detail::grad_mode<S>({&x})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, on, m, n, c0, ncols] {
      if (!xn->requires_grad) return;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < ncols; ++j)
          xn->grad[static_cast<std::size_t>(i) * n + c0 + j] +=
              on->grad[static_cast<std::size_t>(i) * ncols + j];
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: empty input");
  const int n = parts[0].dim(1);
  int m = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != n) throw DimensionError("concat_rows: column mismatch");
    m += p.dim(0);
  }
  Tensor<S> out({m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), out.data() + off);
    off += static_cast<std::size_t>(p.numel());
  }
  bool any_grad = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (active_tape<S>() && any_grad) {
    out.set_requires_grad();
    std::vector<std::shared_ptr<Node<S>>> pn;
    pn.reserve(parts.size());
    for (const auto& p : parts) pn.push_back(p.node());
    auto on = out.node();
    active_tape<S>()->record(on, [pn, on] {
      std::size_t off = 0;
      for (const auto& node : pn) {
        if (node->requires_grad)
          for (std::size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += on->grad[off + i];
        off += node->value.size();
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty input");
  const int m = parts[0].dim(0);
  int n = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) throw DimensionError("concat_cols: row mismatch");
    n += p.dim(1);
  }
  Tensor<S> out({m, n});
  int c0 = 0;
  for (const auto& p : parts) {
    const int pc = p.dim(1);
    for (int i = 0; i < m; ++i)
      std::copy(p.data() + static_cast<std::size_t>(i) * pc,
                p.data() + static_cast<std::size_t>(i + 1) * pc,
                out.data() + static_cast<std::size_t>(i) * n + c0);
    c0 += pc;
  }
  bool any_grad = false;
  for (const auto& p : parts)
    if (p.requires_grad()) any_grad = true;
  if (active_tape<S>() && any_grad) {
    out.set_requires_grad();
    std::vector<std::shared_ptr<Node<S>>> pn;
    pn.reserve(parts.size());
    for (const auto& p : parts) pn.push_back(p.node());
    auto on = out.node();
    active_tape<S>()->record(on, [pn, on, m, n] {
      int c0 = 0;
      for (const auto& node : pn) {
        const int pc = node->shape[1];
        if (node->requires_grad)
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < pc; ++j)
              node->grad[static_cast<std::size_t>(i) * pc + j] +=
                  on->grad[static_cast<std::size_t>(i) * n + c0 + j];
        c0 += pc;
      }
    });
  }
  return out;
}

// Adds a length-n row vector to every row of an m x n matrix.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& v) {
  if (x.rank() != 2) throw DimensionError("add_rowvec expects rank-2 lhs");
  const int m = x.dim(0), n = x.dim(1);
  if (v.numel() != n)
    throw DimensionError("add_rowvec: vector length " + std::to_string(v.numel()) +
                         " vs columns " + std::to_string(n));
  Tensor<S> out({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data()[static_cast<std::size_t>(i) * n + j] =
          x.data()[static_cast<std::size_t>(i) * n + j] + v.data()[j];
  if (detail::grad_mode<S>({&x, &v})) {
    out.set_requires_grad();
    auto xn = x.node();
    auto vn = v.node();
    auto on = out.node();
    active_tape<S>()->record(on, [xn, vn, on, m, n] {
      if (xn->requires_grad)
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
      if (vn->requires_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            vn->grad[static_cast<std::size_t>(j)] += on->grad[static_cast<std::size_t>(i) * n + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix product (Eigen-backed).
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> out({m, n});
  {
    detail::CMatMap<S> am(a.data(), m, k);
    detail::CMatMap<S> bm(b.data(), k, n);
    detail::MatMap<S> om(out.data(), m, n);
    om.noalias() = am * bm;
  }
  mac_add(static_cast<std::uint64_t>(m) * k * n);

  if (detail::grad_mode<S>({&a, &b})) {
    out.set_requires_grad();
    auto an = a.node();
    auto bn = b.node();
    auto on = out.node();
    active_tape<S>()->record(on, [an, bn, on, m, k, n] {
      detail::CMatMap<S> g(on->grad.data(), m, n);
      if (an->requires_grad) {
        detail::CMatMap<S> bm(bn->value.data(), k, n);
        detail::MatMap<S> ga(an->grad.data(), m, k);
        ga.noalias() += g * bm.transpose();
      }
      if (bn->requires_grad) {
        detail::CMatMap<S> am(an->value.data(), m, k);
        detail::MatMap<S> gb(bn->grad.data(), k, n);
        gb.noalias() += am.transpose() * g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// backward: seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
// Repeated calls accumulate gradients unless they are zeroed in between.
// ---------------------------------------------------------------------------

template <class S>
void backward(Tensor<S>& loss, Tape<S>& tape) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  loss.set_requires_grad();
  loss.grad()[0] += S(1);
  tape.backward();
}

// ---------------------------------------------------------------------------
// Adam with classic (non-decoupled) L2: g += weight_decay * theta before the
// moment updates.
// ---------------------------------------------------------------------------

template <class S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>> params, S lr, S beta1 = S(0.9), S beta2 = S(0.999),
       S eps = S(1e-8), S weight_decay = S(0))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        weight_decay_(weight_decay) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i].numel()), S(0));
      v_[i].assign(static_cast<std::size_t>(params_[i].numel()), S(0));
    }
  }

  void step() {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& p = params_[i];
      if (!p.requires_grad())
        throw ContractError("adam_step: parameter " + std::to_string(i) + " has no grad buffer");
      S* th = p.data();
      const S* g = p.grad_data();
      const std::int64_t n = p.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        S gj = g[j] + weight_decay_ * th[j];
        m_[i][static_cast<std::size_t>(j)] =
            beta1_ * m_[i][static_cast<std::size_t>(j)] + (S(1) - beta1_) * gj;
        v_[i][static_cast<std::size_t>(j)] =
            beta2_ * v_[i][static_cast<std::size_t>(j)] + (S(1) - beta2_) * gj * gj;
        S mhat = m_[i][static_cast<std::size_t>(j)] / bc1;
        S vhat = v_[i][static_cast<std::size_t>(j)] / bc2;
        th[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  int step_count() const { return t_; }
  S lr() const { return lr_; }
  void set_lr(S lr) { lr_ = lr; }

 private:
  std::vector<Tensor<S>> params_;
  std::vector<std::vector<S>> m_, v_;
  S lr_, beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
};

}  // namespace ssmr
