// SPDX-License-Identifier: Apache-2.0
#include "moodpipe/nn/tape.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace moodpipe::nn {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(Tensor& t) {
  return MapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
ConstMapMat as_mat(const Tensor& t) {
  return ConstMapMat(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

std::string pair_str(const Tensor& a, const Tensor& b) {
  return to_string(a.shape()) + " vs " + to_string(b.shape());
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  return std::any_of(vs.begin(), vs.end(),
                     [&](Var v) { return t.requires_grad(v); });
}

// Shared implementation for element-wise unary ops whose derivative is a
// function of the input and output values.
template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Tape& t = *a.tape;
  const Tensor& x = t.value(a);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const bool rg = t.requires_grad(a);
  return t.push(std::move(y), rg,
                [a, df](Tape& tp, std::uint32_t self) {
                  if (!tp.requires_grad(a)) return;
                  const Tensor& xv = tp.value(a);
                  const Tensor& yv = tp.value(self);
                  const Tensor& gy = tp.grad(self);
                  Tensor& gx = tp.grad(a.id);
                  for (std::size_t i = 0; i < gx.size(); ++i) {
                    gx[i] += gy[i] * df(xv[i], yv[i]);
                  }
                });
}

}  // namespace

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var{this, it->second};
  }
  Var v = push(p.value, p.trainable, {});
  nodes_[v.id].param = &p;
  param_nodes_.emplace(&p, v.id);
  return v;
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::backward(Var loss) {
  require(nodes_[loss.id].value.size() == 1, "backward",
          "loss must be a single element, got " +
              to_string(nodes_[loss.id].value.shape()));
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id)[0] = 1.0;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr && n.param->trainable) {
      Tensor& pg = n.param->grad;
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.cols() == bv.rows(), "matmul", pair_str(av, bv));
  Tensor y(matrix_shape(av.rows(), bv.cols()));
  as_mat(y).noalias() = as_mat(av) * as_mat(bv);
  return t.push(std::move(y), any_grad(t, {a, b}),
                [a, b](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  if (tp.requires_grad(a)) {
                    as_mat(tp.grad(a.id)).noalias() +=
                        as_mat(gy) * as_mat(tp.value(b)).transpose();
                  }
                  if (tp.requires_grad(b)) {
                    as_mat(tp.grad(b.id)).noalias() +=
                        as_mat(tp.value(a)).transpose() * as_mat(gy);
                  }
                });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.size() == bv.size() && av.cols() == bv.cols(), "add",
          pair_str(av, bv));
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return t.push(std::move(y), any_grad(t, {a, b}),
                [a, b](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  for (Var in : {a, b}) {
                    if (!tp.requires_grad(in)) continue;
                    Tensor& g = tp.grad(in.id);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
                  }
                });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.size() == bv.size() && av.cols() == bv.cols(), "sub",
          pair_str(av, bv));
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return t.push(std::move(y), any_grad(t, {a, b}),
                [a, b](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  if (tp.requires_grad(a)) {
                    Tensor& g = tp.grad(a.id);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
                  }
                  if (tp.requires_grad(b)) {
                    Tensor& g = tp.grad(b.id);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
                  }
                });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.size() == bv.size() && av.cols() == bv.cols(), "mul",
          pair_str(av, bv));
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return t.push(std::move(y), any_grad(t, {a, b}),
                [a, b](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  const Tensor& avv = tp.value(a);
                  const Tensor& bvv = tp.value(b);
                  if (tp.requires_grad(a)) {
                    Tensor& g = tp.grad(a.id);
                    for (std::size_t i = 0; i < g.size(); ++i)
                      g[i] += gy[i] * bvv[i];
                  }
                  if (tp.requires_grad(b)) {
                    Tensor& g = tp.grad(b.id);
                    for (std::size_t i = 0; i < g.size(); ++i)
                      g[i] += gy[i] * avv[i];
                  }
                });
}

Var add_row(Var a, Var bias) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(bias);
  require(bv.size() == av.cols(), "add_row", pair_str(av, bv));
  Tensor y = av;
  const std::size_t n = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += bv[c];
  }
  return t.push(std::move(y), any_grad(t, {a, bias}),
                [a, bias](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  const std::size_t cols = gy.cols();
                  if (tp.requires_grad(a)) {
                    Tensor& g = tp.grad(a.id);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
                  }
                  if (tp.requires_grad(bias)) {
                    Tensor& g = tp.grad(bias.id);
                    for (std::size_t r = 0; r < gy.rows(); ++r)
                      for (std::size_t c = 0; c < cols; ++c)
                        g[c] += gy[r * cols + c];
                  }
                });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var scale_by(Var a, Var s) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& sv = t.value(s);
  require(sv.size() == 1, "scale_by", "scale must be a single element, got " +
                                          to_string(sv.shape()));
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * sv[0];
  return t.push(std::move(y), any_grad(t, {a, s}),
                [a, s](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  const Tensor& avv = tp.value(a);
                  const double sc = tp.value(s)[0];
                  if (tp.requires_grad(a)) {
                    Tensor& g = tp.grad(a.id);
                    for (std::size_t i = 0; i < g.size(); ++i)
                      g[i] += gy[i] * sc;
                  }
                  if (tp.requires_grad(s)) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < gy.size(); ++i)
                      acc += gy[i] * avv[i];
                    tp.grad(s.id)[0] += acc;
                  }
                });
}

Var scale_rows(Var a, Var s) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& sv = t.value(s);
  require(sv.size() == av.rows(), "scale_rows", pair_str(av, sv));
  Tensor y(av.shape());
  const std::size_t n = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] = av[r * n + c] * sv[r];
  return t.push(std::move(y), any_grad(t, {a, s}),
                [a, s](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  const Tensor& avv = tp.value(a);
                  const Tensor& svv = tp.value(s);
                  const std::size_t cols = avv.cols();
                  if (tp.requires_grad(a)) {
                    Tensor& g = tp.grad(a.id);
                    for (std::size_t r = 0; r < avv.rows(); ++r)
                      for (std::size_t c = 0; c < cols; ++c)
                        g[r * cols + c] += gy[r * cols + c] * svv[r];
                  }
                  if (tp.requires_grad(s)) {
                    Tensor& g = tp.grad(s.id);
                    for (std::size_t r = 0; r < avv.rows(); ++r) {
                      double acc = 0.0;
                      for (std::size_t c = 0; c < cols; ++c)
                        acc += gy[r * cols + c] * avv[r * cols + c];
                      g[r] += acc;
                    }
                  }
                });
}

Var one_minus(Var a) {
  return unary(
      a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor y(av.shape());
  const std::size_t n = av.cols();
  for (std::size_t r = 0; r < av.rows(); ++r) {
    const double* x = av.data() + r * n;
    double* out = y.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = std::exp(x[c] - mx);
      z += out[c];
    }
    for (std::size_t c = 0; c < n; ++c) out[c] /= z;
  }
  return t.push(std::move(y), t.requires_grad(a),
                [a](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  const Tensor& yv = tp.value(self);
                  Tensor& g = tp.grad(a.id);
                  const std::size_t cols = yv.cols();
                  for (std::size_t r = 0; r < yv.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < cols; ++c)
                      dot += gy[r * cols + c] * yv[r * cols + c];
                    for (std::size_t c = 0; c < cols; ++c)
                      g[r * cols + c] +=
                          yv[r * cols + c] * (gy[r * cols + c] - dot);
                  }
                });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor y(matrix_shape(av.cols(), av.rows()));
  as_mat(y) = as_mat(av).transpose();
  return t.push(std::move(y), t.requires_grad(a),
                [a](Tape& tp, std::uint32_t self) {
                  as_mat(tp.grad(a.id)) += as_mat(tp.grad(self)).transpose();
                });
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require(element_count(shape) == av.size(), "reshape",
          to_string(av.shape()) + " -> " + to_string(shape));
  return t.push(av.reshaped(std::move(shape)), t.requires_grad(a),
                [a](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  Tensor& g = tp.grad(a.id);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
                });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require(start + count <= av.cols(), "slice_cols",
          "columns [" + std::to_string(start) + ", " +
              std::to_string(start + count) + ") of " + to_string(av.shape()));
  const std::size_t rows = av.rows();
  const std::size_t n = av.cols();
  Tensor y(matrix_shape(rows, count));
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(av.data() + r * n + start, count, y.data() + r * count);
  return t.push(std::move(y), t.requires_grad(a),
                [a, start, count](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  Tensor& g = tp.grad(a.id);
                  const std::size_t cols = g.cols();
                  for (std::size_t r = 0; r < gy.rows(); ++r)
                    for (std::size_t c = 0; c < count; ++c)
                      g[r * cols + start + c] += gy[r * count + c];
                });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require(start + count <= av.rows(), "slice_rows",
          "rows [" + std::to_string(start) + ", " +
              std::to_string(start + count) + ") of " + to_string(av.shape()));
  const std::size_t n = av.cols();
  Tensor y(matrix_shape(count, n));
  std::copy_n(av.data() + start * n, count * n, y.data());
  return t.push(std::move(y), t.requires_grad(a),
                [a, start](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  Tensor& g = tp.grad(a.id);
                  const std::size_t off = start * g.cols();
                  for (std::size_t i = 0; i < gy.size(); ++i)
                    g[off + i] += gy[i];
                });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require(t.value(p).rows() == rows, "concat_cols",
            pair_str(t.value(parts[0]), t.value(p)));
    total += t.value(p).cols();
    rg = rg || t.requires_grad(p);
  }
  Tensor y(matrix_shape(rows, total));
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    const std::size_t c = pv.cols();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.data() + r * c, c, y.data() + r * total + off);
    off += c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(y), rg,
                [inputs = std::move(inputs)](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  const std::size_t width = gy.cols();
                  std::size_t offset = 0;
                  for (Var p : inputs) {
                    const std::size_t c = tp.value(p).cols();
                    if (tp.requires_grad(p)) {
                      Tensor& g = tp.grad(p.id);
                      for (std::size_t r = 0; r < gy.rows(); ++r)
                        for (std::size_t k = 0; k < c; ++k)
                          g[r * c + k] += gy[r * width + offset + k];
                    }
                    offset += c;
                  }
                });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t cols = t.value(parts[0]).cols();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require(t.value(p).cols() == cols, "concat_rows",
            pair_str(t.value(parts[0]), t.value(p)));
    total += t.value(p).rows();
    rg = rg || t.requires_grad(p);
  }
  Tensor y(matrix_shape(total, cols));
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = t.value(p);
    std::copy_n(pv.data(), pv.size(), y.data() + off);
    off += pv.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(std::move(y), rg,
                [inputs = std::move(inputs)](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  std::size_t offset = 0;
                  for (Var p : inputs) {
                    const std::size_t n = tp.value(p).size();
                    if (tp.requires_grad(p)) {
                      Tensor& g = tp.grad(p.id);
                      for (std::size_t i = 0; i < n; ++i)
                        g[i] += gy[offset + i];
                    }
                    offset += n;
                  }
                });
}

Var col_sum(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor y(matrix_shape(1, av.cols()));
  as_mat(y) = as_mat(av).colwise().sum();
  return t.push(std::move(y), t.requires_grad(a),
                [a](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  Tensor& g = tp.grad(a.id);
                  const std::size_t n = g.cols();
                  for (std::size_t r = 0; r < g.rows(); ++r)
                    for (std::size_t c = 0; c < n; ++c) g[r * n + c] += gy[c];
                });
}

Var l2_normalize_rows(Var a, double eps) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const std::size_t n = av.cols();
  Tensor y(av.shape());
  std::vector<double> norms(av.rows());
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n; ++c) ss += av[r * n + c] * av[r * n + c];
    norms[r] = std::sqrt(ss);
    const double d = std::max(norms[r], eps);
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] = av[r * n + c] / d;
  }
  return t.push(
      std::move(y), t.requires_grad(a),
      [a, eps, norms = std::move(norms)](Tape& tp, std::uint32_t self) {
        const Tensor& gy = tp.grad(self);
        const Tensor& yv = tp.value(self);
        Tensor& g = tp.grad(a.id);
        const std::size_t cols = yv.cols();
        for (std::size_t r = 0; r < yv.rows(); ++r) {
          const double* gr = gy.data() + r * cols;
          const double* yr = yv.data() + r * cols;
          double* out = g.data() + r * cols;
          if (norms[r] > eps) {
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * yr[c];
            for (std::size_t c = 0; c < cols; ++c)
              out[c] += (gr[c] - yr[c] * dot) / norms[r];
          } else {
            for (std::size_t c = 0; c < cols; ++c) out[c] += gr[c] / eps;
          }
        }
      });
}

Var sum_scalars(std::span<const Var> parts) {
  require(!parts.empty(), "sum_scalars", "no inputs");
  Tape& t = *parts[0].tape;
  double total = 0.0;
  bool rg = false;
  for (Var p : parts) {
    require(t.value(p).size() == 1, "sum_scalars",
            "non-scalar input " + to_string(t.value(p).shape()));
    total += t.value(p)[0];
    rg = rg || t.requires_grad(p);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.push(Tensor(matrix_shape(1, 1), total), rg,
                [inputs = std::move(inputs)](Tape& tp, std::uint32_t self) {
                  const double gy = tp.grad(self)[0];
                  for (Var p : inputs)
                    if (tp.requires_grad(p)) tp.grad(p.id)[0] += gy;
                });
}

Var dropout(Var a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return a;
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(av.size());
  for (double& m : mask) m = rng.uniform() >= p ? keep_scale : 0.0;
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * mask[i];
  return t.push(std::move(y), t.requires_grad(a),
                [a, mask = std::move(mask)](Tape& tp, std::uint32_t self) {
                  const Tensor& gy = tp.grad(self);
                  Tensor& g = tp.grad(a.id);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += gy[i] * mask[i];
                });
}

Var binary_cross_entropy(Var p, std::span<const int> labels) {
  Tape& t = *p.tape;
  const Tensor& pv = t.value(p);
  require(pv.size() == labels.size(), "binary_cross_entropy",
          to_string(pv.shape()) + " probabilities for " +
              std::to_string(labels.size()) + " labels");
  require(!labels.empty(), "binary_cross_entropy", "empty batch");
  const double n = static_cast<double>(labels.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double x = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    loss -= labels[i] ? std::log(x) : std::log(1.0 - x);
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return t.push(Tensor(matrix_shape(1, 1), loss / n), t.requires_grad(p),
                [p, n, ys = std::move(ys)](Tape& tp, std::uint32_t self) {
                  const double gy = tp.grad(self)[0];
                  const Tensor& pvv = tp.value(p);
                  Tensor& g = tp.grad(p.id);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double x = pvv[i];
                    if (x < kProbClamp || x > 1.0 - kProbClamp) continue;
                    const double d = ys[i] ? -1.0 / x : 1.0 / (1.0 - x);
                    g[i] += gy * d / n;
                  }
                });
}

}  // namespace moodpipe::nn
