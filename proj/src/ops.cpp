// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "simbal/error.hpp"
#include "simbal/kernels.hpp"

namespace simbal::ops {

namespace {

void check_finite(std::string_view op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
}

bool tracked(const Graph& g, std::initializer_list<const Tensor*> inputs) {
  if (!g.recording()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor output(std::string_view op, Shape shape, std::vector<double> values, bool track) {
  check_finite(op, values);
  return Tensor(std::move(shape), std::move(values), track);
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

void require_same(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

std::size_t resolve_axis(std::string_view op, const Tensor& x, int axis) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for " + shape_string(x.shape()));
  }
  return static_cast<std::size_t>(a);
}

// (outer, extent, inner) decomposition of a shape around an axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename Fwd, typename Deriv>
Tensor unary(Graph& g, std::string_view op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  const bool track = tracked(g, {&x});
  Tensor y = output(op, x.shape(), std::move(out), track);
  if (track) {
    g.record(op, [x, y, deriv]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      auto xv = x.data();
      auto yv = y.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
    });
  }
  return y;
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::omp::gemm(m, k, n, a.data(), b.data(), out, false);
  const bool track = tracked(g, {&a, &b});
  Tensor c = output("matmul", {m, n}, std::move(out), track);
  if (track) {
    g.record("matmul", [a, b, c, m, k, n]() mutable {
      if (a.requires_grad()) kernels::omp::gemm_nt(m, n, k, c.grad(), b.data(), a.mutable_grad(), true);
      if (b.requires_grad()) kernels::omp::gemm_tn(k, m, n, a.data(), c.grad(), b.mutable_grad(), true);
    });
  }
  return c;
}

Tensor transpose(Graph& g, const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  auto in = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  const bool track = tracked(g, {&a});
  Tensor y = output("transpose", {c, r}, std::move(out), track);
  if (track) {
    g.record("transpose", [a, y, r, c]() mutable {
      auto gy = y.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gy[j * r + i];
    });
  }
  return y;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  const bool track = tracked(g, {&a, &b});
  Tensor y = output("add", a.shape(), std::move(out), track);
  if (track) {
    g.record("add", [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  const bool track = tracked(g, {&a, &b});
  Tensor y = output("sub", a.shape(), std::move(out), track);
  if (track) {
    g.record("sub", [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      }
    });
  }
  return y;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  const bool track = tracked(g, {&a, &b});
  Tensor y = output("mul", a.shape(), std::move(out), track);
  if (track) {
    g.record("mul", [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        auto bv = b.data();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        auto av = a.data();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
      }
    });
  }
  return y;
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  return unary(
      g, "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  require_rank("add_bias", bias, 1);
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (bias.dim(0) != m) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.data()[i * m + j] + bias.data()[j];
  const bool track = tracked(g, {&x, &bias});
  Tensor y = output("add_bias", x.shape(), std::move(out), track);
  if (track) {
    g.record("add_bias", [x, bias, y, n, m]() mutable {
      auto gy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gb[j] += gy[i * m + j];
      }
    });
  }
  return y;
}

Tensor scale_rows(Graph& g, const Tensor& x, const Tensor& w) {
  require_rank("scale_rows", x, 2);
  require_rank("scale_rows", w, 1);
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (w.dim(0) != n) {
    throw DimensionError("scale_rows: weights " + shape_string(w.shape()) + " do not match " +
                         shape_string(x.shape()));
  }
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.data()[i * m + j] * w.data()[i];
  const bool track = tracked(g, {&x, &w});
  Tensor y = output("scale_rows", x.shape(), std::move(out), track);
  if (track) {
    g.record("scale_rows", [x, w, y, n, m]() mutable {
      auto gy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += gy[i * m + j] * w.data()[i];
      }
      if (w.requires_grad()) {
        auto gw = w.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += gy[i * m + j] * x.data()[i * m + j];
          gw[i] += acc;
        }
      }
    });
  }
  return y;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  return unary(
      g, "sigmoid", x,
      [](double v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(Graph& g, const Tensor& x) {
  auto sig = [](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  };
  return unary(
      g, "silu", x, [sig](double v) { return v * sig(v); },
      [sig](double v, double) {
        const double s = sig(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor exp(Graph& g, const Tensor& x) {
  return unary(
      g, "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(Graph& g, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      g, "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor rsqrt(Graph& g, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("rsqrt: non-positive input " + std::to_string(v));
  }
  return unary(
      g, "rsqrt", x, [](double v) { return 1.0 / std::sqrt(v); },
      [](double v, double y) { return -0.5 * y / v; });
}

Tensor abs(Graph& g, const Tensor& x) {
  return unary(
      g, "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = tracked(g, {&x});
  Tensor y = output("sum", {}, {total}, track);
  if (track) {
    g.record("sum", [x, y]() mutable {
      const double gy = y.grad()[0];
      for (double& v : x.mutable_grad()) v += gy;
    });
  }
  return y;
}

Tensor mean(Graph& g, const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean: empty tensor");
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = tracked(g, {&x});
  Tensor y = output("mean", {}, {total / n}, track);
  if (track) {
    g.record("mean", [x, y, n]() mutable {
      const double gy = y.grad()[0] / n;
      for (double& v : x.mutable_grad()) v += gy;
    });
  }
  return y;
}

Tensor softmax(Graph& g, const Tensor& x, int axis) {
  check_finite("softmax", x.data());
  const std::size_t ax = resolve_axis("softmax", x, axis);
  const AxisSplit s = split_at(x.shape(), ax);
  std::vector<double> out(x.size());
  if (s.inner == 1) {
    kernels::omp::softmax_rows(s.outer, s.extent, x.data(), out);
  } else {
    auto in = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        double mx = -INFINITY;
        for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, in[base + e * s.inner]);
        double total = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          out[base + e * s.inner] = std::exp(in[base + e * s.inner] - mx);
          total += out[base + e * s.inner];
        }
        for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
      }
    }
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("softmax", x.shape(), std::move(out), track);
  if (track) {
    g.record("softmax", [x, y, s]() mutable {
      auto gy = y.grad();
      auto yv = y.data();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          double dot = 0.0;
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t at = base + e * s.inner;
            dot += gy[at] * yv[at];
          }
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t at = base + e * s.inner;
            gx[at] += yv[at] * (gy[at] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor normalize_rows(Graph& g, const Tensor& x) {
  require_rank("normalize_rows", x, 2);
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> sums(n, 0.0);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) sums[i] += x.data()[i * m + j];
    if (!(sums[i] > 0.0)) throw NumericError("normalize_rows: row sum is not positive");
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.data()[i * m + j] / sums[i];
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("normalize_rows", x.shape(), std::move(out), track);
  if (track) {
    g.record("normalize_rows", [x, y, sums, n, m]() mutable {
      auto gy = y.grad();
      auto yv = y.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += gy[i * m + j] * yv[i * m + j];
        for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += (gy[i * m + j] - dot) / sums[i];
      }
    });
  }
  return y;
}

Tensor logsumexp_rows(Graph& g, const Tensor& x) {
  require_rank("logsumexp_rows", x, 2);
  check_finite("logsumexp_rows", x.data());
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += std::exp(row[j] - mx);
    out[i] = mx + std::log(total);
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("logsumexp_rows", {n}, std::move(out), track);
  if (track) {
    g.record("logsumexp_rows", [x, y, n, m]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      auto xv = x.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double lse = y.data()[i];
        for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += gy[i] * std::exp(xv[i * m + j] - lse);
      }
    });
  }
  return y;
}

Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const std::uint32_t> targets) {
  require_rank("cross_entropy", logits, 2);
  check_finite("cross_entropy", logits.data());
  const std::size_t n = logits.dim(0), m = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(logits.shape()));
  }
  if (n == 0) throw DimensionError("cross_entropy: no rows");
  std::vector<double> lse(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= m) throw DataError("cross_entropy: target id out of range");
    const double* row = logits.data().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(row[j] - mx);
    lse[i] = mx + std::log(s);
    total += lse[i] - row[targets[i]];
  }
  const bool track = tracked(g, {&logits});
  Tensor y = output("cross_entropy", {}, {total / static_cast<double>(n)}, track);
  if (track) {
    std::vector<std::uint32_t> tgt(targets.begin(), targets.end());
    g.record("cross_entropy", [logits, y, lse = std::move(lse), tgt = std::move(tgt), n, m]() mutable {
      const double gy = y.grad()[0] / static_cast<double>(n);
      auto gx = logits.mutable_grad();
      auto xv = logits.data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += gy * std::exp(xv[i * m + j] - lse[i]);
        gx[i * m + tgt[i]] -= gy;
      }
    });
  }
  return y;
}

Tensor concat(Graph& g, std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t ax = resolve_axis("concat", parts[0], axis);
  Shape shape = parts[0].shape();
  std::size_t extent = 0;
  for (const Tensor& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) throw DimensionError("concat: rank mismatch");
    a[ax] = b[ax] = 0;
    if (a != b) {
      throw DimensionError("concat: incompatible " + shape_string(p.shape()) + " vs " +
                           shape_string(shape));
    }
    extent += p.dim(ax);
  }
  shape[ax] = extent;
  const AxisSplit s = split_at(shape, ax);
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    const std::size_t pe = p.dim(ax);
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(p.data().data() + o * pe * s.inner, pe * s.inner,
                  out.data() + (o * extent + off) * s.inner);
    }
    off += pe;
  }
  bool track = false;
  for (const Tensor& p : parts) track = track || tracked(g, {&p});
  Tensor y = output("concat", shape, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    g.record("concat", [inputs, offsets, y, s, ax, extent]() mutable {
      auto gy = y.grad();
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor& p = inputs[k];
        if (!p.requires_grad()) continue;
        const std::size_t pe = p.dim(ax);
        auto gp = p.mutable_grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
          const double* src = gy.data() + (o * extent + offsets[k]) * s.inner;
          double* dst = gp.data() + o * pe * s.inner;
          for (std::size_t i = 0; i < pe * s.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return y;
}

Tensor slice(Graph& g, const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = resolve_axis("slice", x, axis);
  if (begin > end || end > x.dim(ax)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = end - begin;
  const std::size_t len = (end - begin) * s.inner;
  std::vector<double> out(numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.data().data() + (o * s.extent + begin) * s.inner, len, out.data() + o * len);
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("slice", shape, std::move(out), track);
  if (track) {
    g.record("slice", [x, y, s, begin, len]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = gx.data() + (o * s.extent + begin) * s.inner;
        for (std::size_t i = 0; i < len; ++i) dst[i] += gy[o * len + i];
      }
    });
  }
  return y;
}

Tensor embedding(Graph& g, const Tensor& table, std::span<const std::uint32_t> ids) {
  require_rank("embedding", table, 2);
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw DataError("embedding: token id " + std::to_string(ids[i]) + " >= vocab size " +
                      std::to_string(vocab));
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  const bool track = tracked(g, {&table});
  Tensor y = output("embedding", {ids.size(), d}, std::move(out), track);
  if (track) {
    std::vector<std::uint32_t> rows(ids.begin(), ids.end());
    g.record("embedding", [table, y, rows = std::move(rows), d]() mutable {
      auto gy = y.grad();
      auto gt = table.mutable_grad();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gt[rows[i] * d + j] += gy[i * d + j];
    });
  }
  return y;
}

Tensor gather_rows(Graph& g, const Tensor& x, std::span<const std::size_t> rows) {
  require_rank("gather_rows", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(x.data().data() + rows[i] * d, d, out.data() + i * d);
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("gather_rows", {rows.size(), d}, std::move(out), track);
  if (track) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    g.record("gather_rows", [x, y, idx = std::move(idx), d]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) gx[idx[i] * d + j] += gy[i * d + j];
    });
  }
  return y;
}

Tensor take(Graph& g, const Tensor& x, std::span<const std::size_t> indices) {
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= x.size()) throw DimensionError("take: index out of range");
    out[i] = x.data()[indices[i]];
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("take", {indices.size()}, std::move(out), track);
  if (track) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    g.record("take", [x, y, idx = std::move(idx)]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += gy[i];
    });
  }
  return y;
}

Tensor scatter_add_rows(Graph& g, std::size_t rows, std::size_t cols,
                        std::span<const Tensor> parts,
                        std::span<const std::vector<std::size_t>> indices) {
  if (parts.size() != indices.size()) {
    throw DimensionError("scatter_add_rows: parts and index lists differ in count");
  }
  std::vector<double> out(rows * cols, 0.0);
  bool track = false;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& p = parts[k];
    require_rank("scatter_add_rows", p, 2);
    if (p.dim(1) != cols || p.dim(0) != indices[k].size()) {
      throw DimensionError("scatter_add_rows: part " + shape_string(p.shape()) +
                           " does not match its index list");
    }
    for (std::size_t i = 0; i < indices[k].size(); ++i) {
      const std::size_t r = indices[k][i];
      if (r >= rows) throw DimensionError("scatter_add_rows: row index out of range");
      for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] += p.data()[i * cols + j];
    }
    track = track || tracked(g, {&p});
  }
  Tensor y = output("scatter_add_rows", {rows, cols}, std::move(out), track);
  if (track) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<std::vector<std::size_t>> idx(indices.begin(), indices.end());
    g.record("scatter_add_rows", [inputs, idx, y, cols]() mutable {
      auto gy = y.grad();
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (!inputs[k].requires_grad()) continue;
        auto gp = inputs[k].mutable_grad();
        for (std::size_t i = 0; i < idx[k].size(); ++i)
          for (std::size_t j = 0; j < cols; ++j) gp[i * cols + j] += gy[idx[k][i] * cols + j];
      }
    });
  }
  return y;
}

Tensor rms_norm(Graph& g, const Tensor& x, const Tensor& gain, double eps) {
  require_rank("rms_norm", x, 2);
  require_rank("rms_norm", gain, 1);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gain.dim(0) != d) throw DimensionError("rms_norm: gain does not match feature width");
  std::vector<double> inv(n);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * d;
    double ms = 0.0;
    for (std::size_t j = 0; j < d; ++j) ms += row[j] * row[j];
    inv[i] = 1.0 / std::sqrt(ms / static_cast<double>(d) + eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = row[j] * inv[i] * gain.data()[j];
  }
  const bool track = tracked(g, {&x, &gain});
  Tensor y = output("rms_norm", x.shape(), std::move(out), track);
  if (track) {
    g.record("rms_norm", [x, gain, y, inv, n, d]() mutable {
      auto gy = y.grad();
      auto xv = x.data();
      auto gv = gain.data();
      if (gain.requires_grad()) {
        auto gg = gain.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gg[j] += gy[i * d + j] * xv[i * d + j] * inv[i];
      }
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += gy[i * d + j] * gv[j] * xv[i * d + j] * inv[i];
          dot /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double xhat = xv[i * d + j] * inv[i];
            gx[i * d + j] += inv[i] * (gy[i * d + j] * gv[j] - xhat * dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor rope(Graph& g, const Tensor& x, std::size_t heads, std::size_t seq_len, double theta) {
  require_rank("rope", x, 2);
  const std::size_t n = x.dim(0), width = x.dim(1);
  if (heads == 0 || width % heads != 0 || (width / heads) % 2 != 0) {
    throw DimensionError("rope: width " + std::to_string(width) +
                         " must split into heads of even size");
  }
  if (seq_len == 0 || n % seq_len != 0) {
    throw DimensionError("rope: rows must be a multiple of seq_len");
  }
  const std::size_t dh = width / heads, half = dh / 2;
  // Angle table [seq_len, half].
  std::vector<double> cosv(seq_len * half), sinv(seq_len * half);
  for (std::size_t t = 0; t < seq_len; ++t) {
    for (std::size_t i = 0; i < half; ++i) {
      const double freq =
          std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(dh));
      const double ang = static_cast<double>(t) * freq;
      cosv[t * half + i] = std::cos(ang);
      sinv[t * half + i] = std::sin(ang);
    }
  }
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t t = r % seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = r * width + h * dh;
      for (std::size_t i = 0; i < half; ++i) {
        const double c = cosv[t * half + i], s = sinv[t * half + i];
        const double a = xv[base + i], b = xv[base + i + half];
        out[base + i] = a * c - b * s;
        out[base + i + half] = a * s + b * c;
      }
    }
  }
  const bool track = tracked(g, {&x});
  Tensor y = output("rope", x.shape(), std::move(out), track);
  if (track) {
    g.record("rope", [x, y, cosv, sinv, n, width, heads, dh, half, seq_len]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t t = r % seq_len;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t base = r * width + h * dh;
          for (std::size_t i = 0; i < half; ++i) {
            const double c = cosv[t * half + i], s = sinv[t * half + i];
            const double ga = gy[base + i], gb = gy[base + i + half];
            gx[base + i] += ga * c + gb * s;
            gx[base + i + half] += -ga * s + gb * c;
          }
        }
      }
    });
  }
  return y;
}

Tensor causal_attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                        std::size_t batch, std::size_t seq_len, std::size_t heads) {
  require_rank("causal_attention", q, 2);
  require_same("causal_attention", q, k);
  require_same("causal_attention", q, v);
  if (heads == 0 || q.dim(1) % heads != 0 || q.dim(0) != batch * seq_len) {
    throw DimensionError("causal_attention: " + shape_string(q.shape()) +
                         " incompatible with batch/seq_len/heads");
  }
  const kernels::AttentionDims dims{batch, seq_len, heads, q.dim(1) / heads};
  const double sc = 1.0 / std::sqrt(static_cast<double>(dims.head_dim));
  auto probs = std::make_shared<std::vector<double>>(dims.prob_size());
  std::vector<double> out(q.size());
  kernels::omp::causal_attention_forward(dims, sc, q.data(), k.data(), v.data(), *probs, out);
  const bool track = tracked(g, {&q, &k, &v});
  Tensor y = output("causal_attention", q.shape(), std::move(out), track);
  if (track) {
    g.record("causal_attention", [q, k, v, y, probs, dims, sc]() mutable {
      // Inputs that do not need a gradient still need somewhere to write.
      std::vector<double> dq_buf, dk_buf, dv_buf;
      auto target = [](const Tensor& t, std::vector<double>& buf) -> std::span<double> {
        if (t.requires_grad()) return t.mutable_grad();
        buf.assign(t.size(), 0.0);
        return buf;
      };
      std::span<double> dq = target(q, dq_buf);
      std::span<double> dk = target(k, dk_buf);
      std::span<double> dv = target(v, dv_buf);
      kernels::omp::causal_attention_backward(dims, sc, q.data(), k.data(), v.data(), *probs,
                                              y.grad(), dq, dk, dv);
    });
  }
  return y;
}

}  // namespace simbal::ops
