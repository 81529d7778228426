#include "mgt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "mgt/error.hpp"

namespace mgt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::atomic<bool> g_arccos_fault{false};

std::size_t norm_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ConfigError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                      std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

std::vector<double> copy_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Flat index into an operand of `in` shape for every element of `out` shape.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - in.size();
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    in_stride[i + offset] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t cur = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    index[flat] = cur;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      cur += in_stride[d];
      if (counter[d] < out[d]) break;
      cur -= in_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return index;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ConfigError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                        " are not broadcast-compatible");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

struct BinaryPlan {
  Shape out;
  std::size_t n = 0;
  // Empty when the operand already has the output shape.
  std::shared_ptr<std::vector<std::size_t>> ia, ib;

  std::size_t a(std::size_t i) const { return ia ? (*ia)[i] : i; }
  std::size_t b(std::size_t i) const { return ib ? (*ib)[i] : i; }
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* op) {
  BinaryPlan p;
  p.out = broadcast_shape(a.shape(), b.shape(), op);
  p.n = shape_numel(p.out);
  if (a.shape() != p.out) p.ia = std::make_shared<std::vector<std::size_t>>(broadcast_index(a.shape(), p.out));
  if (b.shape() != p.out) p.ib = std::make_shared<std::vector<std::size_t>>(broadcast_index(b.shape(), p.out));
  return p;
}

double guard(double d) {
  if (std::abs(d) < kGradGuard) return d < 0 ? -kGradGuard : kGradGuard;
  return d;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  return record_op(name, x.shape(), std::move(out), {&x},
                   [x, deriv](std::span<const double> g, std::span<const double> y, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     auto xd = x.data();
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * deriv(xd[i], y[i]);
                   });
}

// View of an axis reduction as [outer, n, inner].
struct AxisView {
  std::size_t outer = 1, n = 1, inner = 1;
  Shape reduced;
};

AxisView axis_view(const Shape& shape, std::size_t axis, bool keepdim) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i == axis) {
      if (keepdim) v.reduced.push_back(1);
    } else {
      v.reduced.push_back(shape[i]);
    }
  }
  if (v.reduced.empty()) v.reduced.push_back(1);
  return v;
}

}  // namespace

namespace fault {
void set_arccos_backward_fault(bool enabled) { g_arccos_fault = enabled; }
bool arccos_backward_fault() { return g_arccos_fault; }
}  // namespace fault

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 && bs.size() == 2) {
    throw ConfigError("matmul: left operand must have rank >= 2, got " + shape_str(as));
  }
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  if (bs.size() == 2) {
    k = bs[0];
    n = bs[1];
    if (as.size() < 2 || as.back() != k) {
      throw ConfigError("matmul: shapes " + shape_str(as) + " and " + shape_str(bs) + " do not align");
    }
    m = a.numel() / k;
    out_shape = as;
    out_shape.back() = n;
  } else if (bs.size() == 3 && as.size() == 3 && as[0] == bs[0] && as[2] == bs[1]) {
    batch = as[0];
    m = as[1];
    k = as[2];
    n = bs[2];
    out_shape = {batch, m, n};
  } else {
    throw ConfigError("matmul: shapes " + shape_str(as) + " and " + shape_str(bs) + " do not align");
  }

  std::vector<double> out(batch * m * n);
  for (std::size_t t = 0; t < batch; ++t) {
    MutMap(out.data() + t * m * n, m, n).noalias() =
        ConstMap(a.data().data() + t * m * k, m, k) * ConstMap(b.data().data() + t * k * n, k, n);
  }
  return record_op("matmul", std::move(out_shape), std::move(out), {&a, &b},
                   [a, b, batch, m, k, n](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto ga = tape.grad_buffer(a);
                     auto gb = tape.grad_buffer(b);
                     for (std::size_t t = 0; t < batch; ++t) {
                       ConstMap go(g.data() + t * m * n, m, n);
                       if (!ga.empty()) {
                         MutMap(ga.data() + t * m * k, m, k).noalias() +=
                             go * ConstMap(b.data().data() + t * k * n, k, n).transpose();
                       }
                       if (!gb.empty()) {
                         MutMap(gb.data() + t * k * n, k, n).noalias() +=
                             ConstMap(a.data().data() + t * m * k, m, k).transpose() * go;
                       }
                     }
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto p = plan_binary(a, b, "add");
  std::vector<double> out(p.n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = ad[p.a(i)] + bd[p.b(i)];
  return record_op("add", p.out, std::move(out), {&a, &b},
                   [a, b, p](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto ga = tape.grad_buffer(a);
                     auto gb = tape.grad_buffer(b);
                     for (std::size_t i = 0; i < p.n; ++i) {
                       if (!ga.empty()) ga[p.a(i)] += g[i];
                       if (!gb.empty()) gb[p.b(i)] += g[i];
                     }
                   });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto p = plan_binary(a, b, "sub");
  std::vector<double> out(p.n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = ad[p.a(i)] - bd[p.b(i)];
  return record_op("sub", p.out, std::move(out), {&a, &b},
                   [a, b, p](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto ga = tape.grad_buffer(a);
                     auto gb = tape.grad_buffer(b);
                     for (std::size_t i = 0; i < p.n; ++i) {
                       if (!ga.empty()) ga[p.a(i)] += g[i];
                       if (!gb.empty()) gb[p.b(i)] -= g[i];
                     }
                   });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto p = plan_binary(a, b, "mul");
  std::vector<double> out(p.n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = ad[p.a(i)] * bd[p.b(i)];
  return record_op("mul", p.out, std::move(out), {&a, &b},
                   [a, b, p](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto ga = tape.grad_buffer(a);
                     auto gb = tape.grad_buffer(b);
                     auto ad = a.data();
                     auto bd = b.data();
                     for (std::size_t i = 0; i < p.n; ++i) {
                       if (!ga.empty()) ga[p.a(i)] += g[i] * bd[p.b(i)];
                       if (!gb.empty()) gb[p.b(i)] += g[i] * ad[p.a(i)];
                     }
                   });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto p = plan_binary(a, b, "div");
  std::vector<double> out(p.n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = ad[p.a(i)] / bd[p.b(i)];
  return record_op("div", p.out, std::move(out), {&a, &b},
                   [a, b, p](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto ga = tape.grad_buffer(a);
                     auto gb = tape.grad_buffer(b);
                     auto ad = a.data();
                     auto bd = b.data();
                     for (std::size_t i = 0; i < p.n; ++i) {
                       const double den = guard(bd[p.b(i)]);
                       if (!ga.empty()) ga[p.a(i)] += g[i] / den;
                       if (!gb.empty()) gb[p.b(i)] -= g[i] * ad[p.a(i)] / (den * den);
                     }
                   });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary("mul_scalar", x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("primitive 'log' received a non-positive input");
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / guard(v); });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.data()) {
    if (v < 0.0) throw NumericError("primitive 'sqrt' received a negative input");
  }
  return unary("sqrt", x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return 0.5 / std::max(y, kGradGuard); });
}

Tensor arccos(const Tensor& x) {
  return unary(
      "arccos", x, [](double v) { return std::acos(std::clamp(v, -1.0, 1.0)); },
      [](double v, double) {
        const double c = std::clamp(v, -1.0 + kArccosClamp, 1.0 - kArccosClamp);
        const double d = -1.0 / std::sqrt(1.0 - c * c);
        return g_arccos_fault.load(std::memory_order_relaxed) ? -d : d;
      });
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor max_reduce(const Tensor& x, int axis, bool keepdim) {
  const auto ax = norm_axis(axis, x.rank(), "max_reduce");
  const auto v = axis_view(x.shape(), ax, keepdim);
  auto xd = x.data();
  std::vector<double> out(v.outer * v.inner);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      std::size_t best = o * v.n * v.inner + in;
      for (std::size_t j = 1; j < v.n; ++j) {
        const std::size_t idx = (o * v.n + j) * v.inner + in;
        if (xd[idx] > xd[best]) best = idx;
      }
      out[o * v.inner + in] = xd[best];
      (*arg)[o * v.inner + in] = best;
    }
  }
  return record_op("max_reduce", v.reduced, std::move(out), {&x},
                   [x, arg](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t i = 0; i < arg->size(); ++i) gx[(*arg)[i]] += g[i];
                   });
}

Tensor sum_reduce(const Tensor& x, int axis, bool keepdim) {
  const auto ax = norm_axis(axis, x.rank(), "sum_reduce");
  const auto v = axis_view(x.shape(), ax, keepdim);
  auto xd = x.data();
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < v.n; ++j) {
      const double* row = xd.data() + (o * v.n + j) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (std::size_t in = 0; in < v.inner; ++in) dst[in] += row[in];
    }
  }
  return record_op("sum_reduce", v.reduced, std::move(out), {&x},
                   [x, v](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t o = 0; o < v.outer; ++o) {
                       for (std::size_t j = 0; j < v.n; ++j) {
                         double* dst = gx.data() + (o * v.n + j) * v.inner;
                         const double* src = g.data() + o * v.inner;
                         for (std::size_t in = 0; in < v.inner; ++in) dst[in] += src[in];
                       }
                     }
                   });
}

Tensor mean_reduce(const Tensor& x, int axis, bool keepdim) {
  const auto ax = norm_axis(axis, x.rank(), "mean_reduce");
  const auto v = axis_view(x.shape(), ax, keepdim);
  auto xd = x.data();
  const double inv = 1.0 / static_cast<double>(v.n);
  std::vector<double> out(v.outer * v.inner, 0.0);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < v.n; ++j) {
      const double* row = xd.data() + (o * v.n + j) * v.inner;
      double* dst = out.data() + o * v.inner;
      for (std::size_t in = 0; in < v.inner; ++in) dst[in] += row[in];
    }
  }
  for (double& d : out) d *= inv;
  return record_op("mean_reduce", v.reduced, std::move(out), {&x},
                   [x, v, inv](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t o = 0; o < v.outer; ++o) {
                       for (std::size_t j = 0; j < v.n; ++j) {
                         double* dst = gx.data() + (o * v.n + j) * v.inner;
                         const double* src = g.data() + o * v.inner;
                         for (std::size_t in = 0; in < v.inner; ++in) dst[in] += src[in] * inv;
                       }
                     }
                   });
}

Tensor sum_all(const Tensor& x) {
  auto xd = x.data();
  const double total = std::accumulate(xd.begin(), xd.end(), 0.0);
  return record_op("sum_all", {1}, {total}, {&x},
                   [x](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     for (double& d : gx) d += g[0];
                   });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t cols = x.dim(-1);
  const std::size_t rows = x.numel() / cols;
  auto xd = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - mx);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return record_op("softmax_rows", x.shape(), std::move(out), {&x},
                   [x, rows, cols](std::span<const double> g, std::span<const double> y, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t r = 0; r < rows; ++r) {
                       const std::size_t base = r * cols;
                       double dot = 0.0;
                       for (std::size_t c = 0; c < cols; ++c) dot += g[base + c] * y[base + c];
                       for (std::size_t c = 0; c < cols; ++c) gx[base + c] += y[base + c] * (g[base + c] - dot);
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset) {
  const std::size_t cols = x.dim(-1);
  if (gain.numel() != cols || offset.numel() != cols) {
    throw ConfigError("layer_norm: affine parameters of width " + std::to_string(gain.numel()) +
                      " for features of width " + std::to_string(cols));
  }
  const std::size_t rows = x.numel() / cols;
  auto xd = x.data();
  auto gd = gain.data();
  auto od = offset.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (in[c] - mean) * rs;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = gd[c] * h + od[c];
    }
  }
  return record_op("layer_norm", x.shape(), std::move(out), {&x, &gain, &offset},
                   [x, gain, offset, xhat, rstd, rows, cols](std::span<const double> g, std::span<const double>,
                                                              Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     auto gg = tape.grad_buffer(gain);
                     auto go = tape.grad_buffer(offset);
                     auto gd = gain.data();
                     const double inv_n = 1.0 / static_cast<double>(cols);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const std::size_t base = r * cols;
                       double mean_gh = 0.0, mean_ghh = 0.0;
                       for (std::size_t c = 0; c < cols; ++c) {
                         const double gh = g[base + c] * gd[c];
                         mean_gh += gh;
                         mean_ghh += gh * (*xhat)[base + c];
                         if (!gg.empty()) gg[c] += g[base + c] * (*xhat)[base + c];
                         if (!go.empty()) go[c] += g[base + c];
                       }
                       if (gx.empty()) continue;
                       mean_gh *= inv_n;
                       mean_ghh *= inv_n;
                       for (std::size_t c = 0; c < cols; ++c) {
                         const double gh = g[base + c] * gd[c];
                         gx[base + c] += (*rstd)[r] * (gh - mean_gh - (*xhat)[base + c] * mean_ghh);
                       }
                     }
                   });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const auto& first = parts.front().shape();
  const auto ax = norm_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
    if (!ok) throw ConfigError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    out_shape[ax] += s[ax];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
  for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[ax] * inner;

  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[ax] * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.data() + o * w, w, out.data() + o * out_row + col);
    }
    widths.push_back(w);
    col += w;
  }
  std::vector<const Tensor*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return record_op("concat", std::move(out_shape), std::move(out), inputs,
                   [parts, widths, outer, out_row](std::span<const double> g, std::span<const double>, Tape& tape) {
                     std::size_t col = 0;
                     for (std::size_t k = 0; k < parts.size(); ++k) {
                       auto gp = tape.grad_buffer(parts[k]);
                       const std::size_t w = widths[k];
                       if (!gp.empty()) {
                         for (std::size_t o = 0; o < outer; ++o) {
                           for (std::size_t c = 0; c < w; ++c) gp[o * w + c] += g[o * out_row + col + c];
                         }
                       }
                       col += w;
                     }
                   });
}

Tensor gather(const Tensor& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("gather: empty index list");
  const std::size_t rows = x.dim(0);
  const std::size_t width = x.numel() / rows;
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  std::vector<double> out(indices.size() * width);
  auto xd = x.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw ConfigError("gather: index " + std::to_string(indices[i]) + " out of range " + std::to_string(rows));
    }
    std::copy_n(xd.data() + indices[i] * width, width, out.data() + i * width);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  return record_op("gather", std::move(out_shape), std::move(out), {&x},
                   [x, idx, width](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t i = 0; i < idx->size(); ++i) {
                       for (std::size_t c = 0; c < width; ++c) gx[(*idx)[i] * width + c] += g[i * width + c];
                     }
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ConfigError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return record_op("reshape", std::move(shape), copy_of(x), {&x},
                   [x](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                   });
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  const auto& s = x.shape();
  const auto a0 = norm_axis(axis0, s.size(), "transpose");
  const auto a1 = norm_axis(axis1, s.size(), "transpose");
  Shape out_shape = s;
  std::swap(out_shape[a0], out_shape[a1]);

  // Source flat index for every destination element.
  const std::size_t rank = s.size();
  std::vector<std::size_t> src_stride(rank);
  std::size_t stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    src_stride[i] = stride;
    stride *= s[i];
  }
  std::vector<std::size_t> perm_stride = src_stride;
  std::swap(perm_stride[a0], perm_stride[a1]);
  auto src = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t cur = 0;
  for (std::size_t flat = 0; flat < src->size(); ++flat) {
    (*src)[flat] = cur;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      cur += perm_stride[d];
      if (counter[d] < out_shape[d]) break;
      cur -= perm_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[(*src)[i]];
  return record_op("transpose", std::move(out_shape), std::move(out), {&x},
                   [x, src](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t i = 0; i < src->size(); ++i) gx[(*src)[i]] += g[i];
                   });
}

Tensor broadcast_to(const Tensor& x, Shape shape) {
  if (broadcast_shape(x.shape(), shape, "broadcast_to") != shape) {
    throw ConfigError("broadcast_to: cannot expand " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(broadcast_index(x.shape(), shape));
  std::vector<double> out(idx->size());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[(*idx)[i]];
  return record_op("broadcast_to", std::move(shape), std::move(out), {&x},
                   [x, idx](std::span<const double> g, std::span<const double>, Tape& tape) {
                     auto gx = tape.grad_buffer(x);
                     if (gx.empty()) return;
                     for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += g[i];
                   });
}

}  // namespace mgt
