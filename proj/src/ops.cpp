#include "pat/ops.hpp"

#include <algorithm>
#include <cmath>

#include "pat/error.hpp"
#include "pat/kernels.hpp"
#include "pat/rng.hpp"

namespace pat {

using detail::make_result;
using detail::Node;

namespace {

// Gradient buffer of input i, or nullptr when that input needs no gradient.
double* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.grad_buffer().data() : nullptr;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& forward,
             std::function<double(double x, double y)> derivative) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return make_result(op, x.shape(), std::move(out), {&x}, [derivative](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xs = self.inputs[0]->data;
    for (std::size_t i = 0; i < xs.size(); ++i)
      gx[i] += self.grad[i] * derivative(xs[i], self.data[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner extents disagree, " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  std::vector<double> out(m * n);
  kernels::gemm({m, k, n}, a.data(), b.data(), out);
  return make_result("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    std::vector<double> tmp;
    if (double* ga = grad_of(self, 0)) {
      tmp.resize(m * k);
      kernels::gemm({m, n, k, kernels::Trans::none, kernels::Trans::transpose}, self.grad, bv,
                    tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) ga[i] += tmp[i];
    }
    if (double* gb = grad_of(self, 1)) {
      tmp.resize(k * n);
      kernels::gemm({k, m, n, kernels::Trans::transpose, kernels::Trans::none}, av, self.grad,
                    tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) gb[i] += tmp[i];
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  const auto in = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {&x}, [r, c](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  const auto in = x.data();
  return make_result("reshape", std::move(shape), {in.begin(), in.end()}, {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t in = 0; in < 2; ++in)
      if (double* g = grad_of(self, in))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    if (double* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += self.grad[i] * bv[i];
    if (double* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < bv.size(); ++i) gb[i] += self.grad[i] * av[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  if (x.rank() == 0 || x.shape().back() != bias.numel())
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match last axis of " + shape_string(x.shape()));
  const std::size_t n = bias.numel();
  const auto xv = x.data(), bv = bias.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % n];
  return make_result("add_bias", x.shape(), std::move(out), {&x, &bias}, [n](Node& self) {
    if (double* gx = grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    if (double* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % n] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size() && !(s.empty() && axis == 0))
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_string(s));
  kernels::SoftmaxShape ks{1, 1, 1};
  if (!s.empty()) {
    for (std::size_t i = 0; i < axis; ++i) ks.outer *= s[i];
    ks.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) ks.inner *= s[i];
  }
  if (ks.len == 0) throw DimensionError("softmax: empty axis");
  std::vector<double> out(x.numel());
  kernels::softmax(ks, x.data(), out);
  return make_result("softmax", s, std::move(out), {&x}, [ks](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& y = self.data;
    const auto& gy = self.grad;
    for (std::size_t o = 0; o < ks.outer; ++o)
      for (std::size_t in = 0; in < ks.inner; ++in) {
        const std::size_t base = o * ks.len * ks.inner + in;
        double dot = 0.0;
        for (std::size_t t = 0; t < ks.len; ++t) {
          const std::size_t idx = base + t * ks.inner;
          dot += gy[idx] * y[idx];
        }
        for (std::size_t t = 0; t < ks.len; ++t) {
          const std::size_t idx = base + t * ks.inner;
          gx[idx] += y[idx] * (gy[idx] - dot);
        }
      }
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  kernels::gelu(x.data(), out);
  return make_result("gelu", x.shape(), std::move(out), {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xs = self.inputs[0]->data;
    for (std::size_t i = 0; i < xs.size(); ++i)
      gx[i] += self.grad[i] * kernels::gelu_grad_scalar(xs[i]);
  });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t padding) {
  require_rank(x, 2, "conv1d");
  require_rank(kernels, 3, "conv1d");
  const std::size_t seq = x.dim(0), d_in = x.dim(1);
  const std::size_t k = kernels.dim(0), d_out = kernels.dim(2);
  if (kernels.dim(1) != d_in)
    throw DimensionError("conv1d: kernels " + shape_string(kernels.shape()) +
                         " do not match input " + shape_string(x.shape()));
  if (k > seq + padding)
    throw DimensionError("conv1d: kernel width " + std::to_string(k) +
                         " exceeds padded length " + std::to_string(seq + padding));
  const kernels::Conv1dShape cs{seq, d_in, d_out, k, padding};
  std::vector<double> out(cs.out_len() * d_out);
  kernels::conv1d(cs, x.data(), kernels.data(), out);
  return make_result("conv1d", {cs.out_len(), d_out}, std::move(out), {&x, &kernels},
                     [cs](Node& self) {
                       double* gx = grad_of(self, 0);
                       double* gw = grad_of(self, 1);
                       if (!gx && !gw) return;
                       const auto& xv = self.inputs[0]->data;
                       const auto& wv = self.inputs[1]->data;
                       std::vector<double> dx(xv.size()), dw(wv.size());
                       kernels::conv1d_backward(cs, xv, wv, self.grad, dx, dw);
                       if (gx)
                         for (std::size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
                       if (gw)
                         for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layer_norm: gamma/beta " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " vs input " + shape_string(x.shape()));
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  auto normalized = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  kernels::layer_norm(rows, d, eps, x.data(), gamma.data(), beta.data(), out,
                      {*normalized, *inv_std});
  return make_result(
      "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [rows, d, normalized, inv_std](Node& self) {
        const auto& gy = self.grad;
        const auto& gam = self.inputs[1]->data;
        const auto& xhat = *normalized;
        if (double* gg = grad_of(self, 1))
          for (std::size_t i = 0; i < gy.size(); ++i) gg[i % d] += gy[i] * xhat[i];
        if (double* gb = grad_of(self, 2))
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i % d] += gy[i];
        double* gx = grad_of(self, 0);
        if (!gx) return;
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double g = gy[r * d + j] * gam[j];
            mean_g += g;
            mean_gx += g * xhat[r * d + j];
          }
          mean_g *= inv_d;
          mean_gx *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double g = gy[r * d + j] * gam[j];
            gx[r * d + j] += (*inv_std)[r] * (g - mean_g - xhat[r * d + j] * mean_gx);
          }
        }
      });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (count == 0 || start + count > c)
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_string(x.shape()));
  const auto in = x.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(i * c + start), count,
                out.begin() + static_cast<std::ptrdiff_t>(i * count));
  return make_result("slice_cols", {r, count}, std::move(out), {&x},
                     [r, c, start, count](Node& self) {
                       double* gx = grad_of(self, 0);
                       if (!gx) return;
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           gx[i * c + start + j] += self.grad[i * count + j];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t r = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != r)
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto in = parts[k].data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j)
        out[i * total + offset + j] = in[i * widths[k] + j];
    offset += widths[k];
  }
  return make_result("concat_cols", {r, total}, std::move(out), parts,
                     [r, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (double* g = grad_of(self, k))
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               g[i * widths[k] + j] += self.grad[i * total + off + j];
                         off += widths[k];
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].dim(1);
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != c)
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    sizes.push_back(p.numel());
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result("concat_rows", {rows, c}, std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (double* g = grad_of(self, k))
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      off += sizes[k];
    }
  });
}

Tensor row(const Tensor& x, std::size_t index) {
  require_rank(x, 2, "row");
  const std::size_t c = x.dim(1);
  if (index >= x.dim(0))
    throw DimensionError("row: index " + std::to_string(index) + " out of " +
                         shape_string(x.shape()));
  const auto in = x.data().subspan(index * c, c);
  return make_result("row", {1, c}, {in.begin(), in.end()}, {&x}, [index, c](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t j = 0; j < c; ++j) gx[index * c + j] += self.grad[j];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.dim(0), c = table.dim(1);
  if (ids.empty()) throw DimensionError("gather_rows: empty id sequence");
  const auto tv = table.data();
  std::vector<double> out(ids.size() * c);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= rows)
      throw LookupError("token id " + std::to_string(ids[t]) + " at position " +
                        std::to_string(t) + " is outside vocabulary of size " +
                        std::to_string(rows));
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[t]) * static_cast<std::ptrdiff_t>(c),
                c, out.begin() + static_cast<std::ptrdiff_t>(t * c));
  }
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return make_result("gather_rows", {ids.size(), c}, std::move(out), {&table},
                     [idv = std::move(idv), c](Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t t = 0; t < idv.size(); ++t)
                         for (std::size_t j = 0; j < c; ++j)
                           g[static_cast<std::size_t>(idv[t]) * c + j] += self.grad[t * c + j];
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result("sum", {}, {total}, {&x}, [](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    const std::size_t n = self.inputs[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
  });
}

Tensor cross_entropy(const Tensor& scores, std::span<const std::int32_t> targets) {
  require_rank(scores, 2, "cross_entropy");
  const std::size_t b = scores.dim(0), c = scores.dim(1);
  if (targets.size() != b)
    throw ContractError("cross_entropy: " + std::to_string(targets.size()) +
                        " targets for batch of " + std::to_string(b));
  for (std::size_t i = 0; i < b; ++i)
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c)
      throw ContractError("cross_entropy: target " + std::to_string(targets[i]) + " at row " +
                          std::to_string(i) + " outside [0, " + std::to_string(c) + ")");
  const auto sv = scores.data();
  auto probs = std::make_shared<std::vector<double>>(b * c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* srow = sv.data() + i * c;
    const double mx = *std::max_element(srow, srow + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(srow[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(srow[j] - lse);
    total += lse - srow[targets[i]];
  }
  std::vector<std::int32_t> tv(targets.begin(), targets.end());
  return make_result("cross_entropy", {}, {total / static_cast<double>(b)}, {&scores},
                     [probs, tv = std::move(tv), b, c](Node& self) {
                       double* g = grad_of(self, 0);
                       if (!g) return;
                       const double w = self.grad[0] / static_cast<double>(b);
                       for (std::size_t i = 0; i < b; ++i)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<std::int32_t>(j) == tv[i] ? 1.0 : 0.0;
                           g[i * c + j] += w * ((*probs)[i * c + j] - onehot);
                         }
                     });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (auto& m : *mask) m = rng.uniform() >= p ? keep : 0.0;
  const auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * (*mask)[i];
  return make_result("dropout", x.shape(), std::move(out), {&x}, [mask](Node& self) {
    double* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < mask->size(); ++i) gx[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor vecmat(const Tensor& v, const Tensor& w) {
  require_rank(v, 1, "vecmat");
  require_rank(w, 2, "vecmat");
  return reshape(matmul(reshape(v, {1, v.numel()}), w), {w.dim(1)});
}

}  // namespace pat
