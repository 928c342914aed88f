#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "poembert/error.hpp"
#include "poembert/rng.hpp"

namespace poembert {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a handle: copies share the same storage, like parameters in
/// most deep learning frameworks. Use `clone()` for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : s_(std::make_shared<Storage>()) {
    if (shape_numel(shape) != data.size()) {
      throw Error(Errc::ShapeMismatch, "shape " + shape_str(shape) + " vs " +
                                           std::to_string(data.size()) + " values");
    }
    s_->shape = std::move(shape);
    s_->data = std::move(data);
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t numel() const { return s_->data.size(); }
  std::size_t last_dim() const { return s_->shape.back(); }

  std::span<double> data() { return s_->data; }
  std::span<const double> data() const { return s_->data; }
  std::vector<double>& values() { return s_->data; }
  const std::vector<double>& values() const { return s_->data; }
  double item() const { return s_->data.at(0); }
  double operator[](std::size_t i) const { return s_->data[i]; }

  bool requires_grad() const noexcept { return s_ && s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  bool has_grad() const noexcept { return s_ && !s_->grad.empty(); }

  /// Gradient buffer, allocated as zeros on first access. The buffer belongs
  /// to the shared storage, so it is writable through const handles.
  std::span<double> grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
    return s_->grad;
  }
  void zero_grad() {
    if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
  }

  Tensor clone() const {
    Tensor t(s_->shape, s_->data, s_->requires_grad);
    return t;
  }

  bool same_storage(const Tensor& o) const noexcept { return s_ == o.s_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    mutable std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> s_;
};

inline constexpr int kIgnoreIndex = -100;

/// Records the backward closures of operations applied through it.
///
/// Every op is a member so the recording context is explicit. Outputs
/// require a gradient iff the tape is enabled and some input requires one.
/// `backward` runs the closures in reverse order and then clears the tape.
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const noexcept { return enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Seeds d(loss)/d(loss) = 1, propagates, and frees the recorded graph.
  void backward(Tensor loss) {
    if (loss.numel() != 1) {
      throw Error(Errc::ShapeMismatch, "backward needs a scalar, got " +
                                           shape_str(loss.shape()));
    }
    if (loss.requires_grad()) {
      loss.grad()[0] += 1.0;
      for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }
    nodes_.clear();
  }

  // -- Linear algebra ------------------------------------------------------

  /// a[..., k] x b[k, m] -> [..., m], or batched a[B, n, k] x b[B, k, m].
  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (b.rank() == 2) {
      const std::size_t k = b.dim(0), m = b.dim(1);
      if (a.last_dim() != k) mismatch("matmul", a, b);
      const std::size_t rows = a.numel() / k;
      Shape out_shape = a.shape();
      out_shape.back() = m;
      Tensor out = make(std::move(out_shape), a, b);
      gemm(a.data().data(), b.data().data(), out.data().data(), rows, k, m);
      if (out.requires_grad()) {
        record([a, b, out, rows, k, m]() mutable {
          const double* g = out.grad().data();
          if (a.requires_grad()) gemm_bt(g, b.data().data(), a.grad().data(), rows, m, k);
          if (b.requires_grad()) gemm_at(a.data().data(), g, b.grad().data(), rows, k, m);
        });
      }
      return out;
    }
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
      mismatch("matmul", a, b);
    }
    const std::size_t batch = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
    Tensor out = make({batch, n, m}, a, b);
    for (std::size_t i = 0; i < batch; ++i) {
      gemm(a.data().data() + i * n * k, b.data().data() + i * k * m,
           out.data().data() + i * n * m, n, k, m);
    }
    if (out.requires_grad()) {
      record([a, b, out, batch, n, k, m]() mutable {
        const double* g = out.grad().data();
        for (std::size_t i = 0; i < batch; ++i) {
          if (a.requires_grad()) {
            gemm_bt(g + i * n * m, b.data().data() + i * k * m,
                    a.grad().data() + i * n * k, n, m, k);
          }
          if (b.requires_grad()) {
            gemm_at(a.data().data() + i * n * k, g + i * n * m,
                    b.grad().data() + i * k * m, n, k, m);
          }
        }
      });
    }
    return out;
  }

  /// Swaps the last two axes of a rank-2 or rank-3 tensor.
  Tensor transpose(const Tensor& a) {
    if (a.rank() != 2 && a.rank() != 3) mismatch("transpose", a);
    const std::size_t r = a.dim(a.rank() - 2), c = a.dim(a.rank() - 1);
    const std::size_t batch = a.numel() / (r * c);
    Shape s = a.shape();
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    Tensor out = make(std::move(s), a);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) y[b * r * c + j * r + i] = x[b * r * c + i * c + j];
      }
    }
    if (out.requires_grad()) {
      record([a, out, batch, r, c]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ga[b * r * c + i * c + j] += g[b * r * c + j * r + i];
          }
        }
      });
    }
    return out;
  }

  // -- Elementwise -----------------------------------------------------------

  /// a + b where b has a's shape or a trailing sub-shape of it (broadcast).
  Tensor add(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
      mismatch("add", a, b);
    }
    const std::size_t nb = b.numel();
    Tensor out = make(sa, a, b);
    auto x = a.data();
    auto y = b.data();
    auto z = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i % nb];
    if (out.requires_grad()) {
      record([a, b, out, nb]() mutable {
        auto g = out.grad();
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i];
        }
      });
    }
    return out;
  }

  Tensor scale(const Tensor& a, double s) {
    Tensor out = make(a.shape(), a);
    auto x = a.data();
    auto z = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * s;
    if (out.requires_grad()) {
      record([a, out, s]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
      });
    }
    return out;
  }

  /// GELU, tanh approximation.
  Tensor gelu(const Tensor& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Tensor out = make(a.shape(), a);
    auto x = a.data();
    auto z = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double v = x[i];
      z[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
    }
    if (out.requires_grad()) {
      record([a, out]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = x[i];
          const double t = std::tanh(kC * (v + kA * v * v * v));
          const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
          ga[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
      });
    }
    return out;
  }

  /// Inverted dropout: zeroes each element with probability `rate` and scales
  /// survivors by 1/(1-rate). Identity when `train` is false or rate is 0.
  Tensor dropout(const Tensor& a, double rate, bool train, Rng& rng) {
    if (!train || rate <= 0.0) return a;
    if (rate >= 1.0) throw Error(Errc::InvalidConfig, "dropout rate must be < 1");
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(a.numel());
    for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
    Tensor out = make(a.shape(), a);
    auto x = a.data();
    auto z = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * mask[i];
    if (out.requires_grad()) {
      record([a, out, mask = std::move(mask)]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
      });
    }
    return out;
  }

  // -- Row-wise (last axis) --------------------------------------------------

  Tensor softmax_rows(const Tensor& a) {
    const std::size_t c = a.last_dim();
    const std::size_t rows = a.numel() / c;
    Tensor out = make(a.shape(), a);
    auto x = a.data();
    auto y = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x.data() + r * c;
      double* yr = y.data() + r * c;
      const double mx = *std::max_element(xr, xr + c);
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += (yr[j] = std::exp(xr[j] - mx));
      for (std::size_t j = 0; j < c; ++j) yr[j] /= sum;
    }
    if (out.requires_grad()) {
      record([a, out, rows, c]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        auto y = out.data();
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            ga[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
          }
        }
      });
    }
    return out;
  }

  /// Normalises each row to zero mean / unit variance, then applies
  /// gain * x + bias. `gain` and `bias` have the row length.
  Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-12) {
    const std::size_t c = a.last_dim();
    if (gain.numel() != c || bias.numel() != c) mismatch("layer_norm", a, gain);
    const std::size_t rows = a.numel() / c;
    Tensor out = make(a.shape(), a, gain, bias);
    std::vector<double> xhat(a.numel());
    std::vector<double> inv_std(rows);
    auto x = a.data();
    auto z = out.data();
    auto gm = gain.data();
    auto bt = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double mean = 0.0;
      for (std::size_t j = 0; j < c; ++j) mean += x[r * c + j];
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x[r * c + j] - mean;
        var += d * d;
      }
      var /= static_cast<double>(c);
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < c; ++j) {
        xhat[r * c + j] = (x[r * c + j] - mean) * inv_std[r];
        z[r * c + j] = gm[j] * xhat[r * c + j] + bt[j];
      }
    }
    if (out.requires_grad()) {
      record([a, gain, bias, out, rows, c, xhat = std::move(xhat),
              inv_std = std::move(inv_std)]() mutable {
        auto g = out.grad();
        auto gm = gain.data();
        if (gain.requires_grad()) {
          auto gg = gain.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % c] += g[i] * xhat[i];
        }
        if (bias.requires_grad()) {
          auto gb = bias.grad();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
        }
        if (a.requires_grad()) {
          auto ga = a.grad();
          const double n = static_cast<double>(c);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[r * c + j] * gm[j];
              sum_d += d;
              sum_dx += d * xhat[r * c + j];
            }
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[r * c + j] * gm[j];
              ga[r * c + j] +=
                  inv_std[r] / n * (n * d - sum_d - xhat[r * c + j] * sum_dx);
            }
          }
        }
      });
    }
    return out;
  }

  // -- Indexing and layout ---------------------------------------------------

  /// Rows of `table` [V, d] selected by ids -> [ids.size(), d].
  Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) mismatch("embedding_lookup", table);
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= v) {
        throw Error(Errc::IdOutOfRange, "embedding id " + std::to_string(id));
      }
    }
    Tensor out = make({ids.size(), d}, table);
    auto t = table.data();
    auto z = out.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(t.data() + static_cast<std::size_t>(ids[i]) * d, d, z.data() + i * d);
    }
    if (out.requires_grad()) {
      record([table, out, d, ids = std::vector<int>(ids.begin(), ids.end())]() mutable {
        auto g = out.grad();
        auto gt = table.grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
          double* row = gt.data() + static_cast<std::size_t>(ids[i]) * d;
          for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
        }
      });
    }
    return out;
  }

  /// Rows of `a` viewed as [N, last_dim] -> [rows.size(), last_dim].
  Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    const std::size_t d = a.last_dim();
    const std::size_t n = a.numel() / d;
    for (auto r : rows) {
      if (r >= n) throw Error(Errc::ShapeMismatch, "gather row " + std::to_string(r));
    }
    Tensor out = make({rows.size(), d}, a);
    auto x = a.data();
    auto z = out.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(x.data() + rows[i] * d, d, z.data() + i * d);
    }
    if (out.requires_grad()) {
      record([a, out, d, rows = std::vector<std::size_t>(rows.begin(), rows.end())]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (std::size_t j = 0; j < d; ++j) ga[rows[i] * d + j] += g[i * d + j];
        }
      });
    }
    return out;
  }

  Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) mismatch("reshape", a);
    Tensor out = make(std::move(shape), a);
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    if (out.requires_grad()) {
      record([a, out]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      });
    }
    return out;
  }

  /// Columns [start, start+len) of the last axis.
  Tensor slice_last(const Tensor& a, std::size_t start, std::size_t len) {
    const std::size_t c = a.last_dim();
    if (start + len > c) mismatch("slice_last", a);
    const std::size_t rows = a.numel() / c;
    Shape s = a.shape();
    s.back() = len;
    Tensor out = make(std::move(s), a);
    auto x = a.data();
    auto z = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.data() + r * c + start, len, z.data() + r * len);
    }
    if (out.requires_grad()) {
      record([a, out, rows, c, start, len]() mutable {
        auto g = out.grad();
        auto ga = a.grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < len; ++j) ga[r * c + start + j] += g[r * len + j];
        }
      });
    }
    return out;
  }

  /// Concatenates along the last axis; leading shapes must agree.
  Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of nothing");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    std::size_t total = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
      if (!std::equal(lead.begin(), lead.end(), p.shape().begin()) ||
          p.rank() != lead.size() + 1) {
        mismatch("concat_last", parts[0], p);
      }
      total += p.last_dim();
      any_grad = any_grad || p.requires_grad();
    }
    Shape s = lead;
    s.push_back(total);
    Tensor out = Tensor::zeros(std::move(s), enabled_ && any_grad);
    const std::size_t rows = out.numel() / total;
    auto z = out.data();
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.last_dim();
      auto x = p.data();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(x.data() + r * w, w, z.data() + r * total + off);
      }
      off += w;
    }
    if (out.requires_grad()) {
      record([parts, out, rows, total]() mutable {
        auto g = out.grad();
        std::size_t off = 0;
        for (auto& p : parts) {
          const std::size_t w = p.last_dim();
          if (p.requires_grad()) {
            auto gp = p.grad();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * total + off + j];
            }
          }
          off += w;
        }
      });
    }
    return out;
  }

  // -- Reductions ------------------------------------------------------------

  Tensor sum(const Tensor& a) {
    Tensor out = make({1}, a);
    out.data()[0] = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    if (out.requires_grad()) {
      record([a, out]() mutable {
        const double g = out.grad()[0];
        for (auto& v : a.grad()) v += g;
      });
    }
    return out;
  }

  /// Mean negative log-likelihood of `targets` under softmax(logits) over
  /// rows of logits [N, C]. Rows whose target is `ignore_index` are skipped.
  Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                       int ignore_index = kIgnoreIndex) {
    const std::size_t c = logits.last_dim();
    const std::size_t n = logits.numel() / c;
    if (targets.size() != n) {
      throw Error(Errc::ShapeMismatch, "cross_entropy: " + std::to_string(targets.size()) +
                                           " targets for " + std::to_string(n) + " rows");
    }
    std::size_t counted = 0;
    for (int t : targets) {
      if (t == ignore_index) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= c) {
        throw Error(Errc::LabelOutOfRange, "target " + std::to_string(t) + " with " +
                                               std::to_string(c) + " classes");
      }
      ++counted;
    }
    if (counted == 0) throw Error(Errc::EmptyReduction, "every target is ignored");

    std::vector<double> probs(logits.numel());
    auto x = logits.data();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double* xr = x.data() + r * c;
      double* pr = probs.data() + r * c;
      const double mx = *std::max_element(xr, xr + c);
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += (pr[j] = std::exp(xr[j] - mx));
      for (std::size_t j = 0; j < c; ++j) pr[j] /= s;
      if (targets[r] != ignore_index) {
        total -= xr[targets[r]] - mx - std::log(s);
      }
    }
    Tensor out = make({1}, logits);
    out.data()[0] = total / static_cast<double>(counted);
    if (out.requires_grad()) {
      record([logits, out, n, c, counted, ignore_index, probs = std::move(probs),
              targets = std::vector<int>(targets.begin(), targets.end())]() mutable {
        const double g = out.grad()[0] / static_cast<double>(counted);
        auto gl = logits.grad();
        for (std::size_t r = 0; r < n; ++r) {
          if (targets[r] == ignore_index) continue;
          for (std::size_t j = 0; j < c; ++j) gl[r * c + j] += g * probs[r * c + j];
          gl[r * c + static_cast<std::size_t>(targets[r])] -= g;
        }
      });
    }
    return out;
  }

 private:
  template <typename... Ts>
  Tensor make(Shape shape, const Ts&... inputs) {
    const bool rg = enabled_ && (inputs.requires_grad() || ...);
    return Tensor::zeros(std::move(shape), rg);
  }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  [[noreturn]] static void mismatch(const char* op, const Tensor& a) {
    throw Error(Errc::ShapeMismatch, std::string(op) + " " + shape_str(a.shape()));
  }
  [[noreturn]] static void mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw Error(Errc::ShapeMismatch,
                std::string(op) + " " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }

  // c[n,m] = a[n,k] * b[k,m]
  static void gemm(const double* a, const double* b, double* c, std::size_t n,
                   std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
      double* ci = c + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        const double* bp = b + p * m;
        for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
      }
    }
  }
  // c[n,k] += g[n,m] * b[k,m]^T
  static void gemm_bt(const double* g, const double* b, double* c, std::size_t n,
                      std::size_t m, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * m;
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += gi[j] * bp[j];
        c[i * k + p] += s;
      }
    }
  }
  // c[k,m] += a[n,k]^T * g[n,m]
  static void gemm_at(const double* a, const double* g, double* c, std::size_t n,
                      std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* gi = g + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        double* cp = c + p * m;
        for (std::size_t j = 0; j < m; ++j) cp[j] += av * gi[j];
      }
    }
  }

  bool enabled_;
  std::vector<std::function<void()>> nodes_;
};

}  // namespace poembert
