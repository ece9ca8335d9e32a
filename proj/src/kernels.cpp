#include "pat/kernels.hpp"

#include <algorithm>
#include <vector>
#include <cmath>
#include <numbers>

namespace pat::kernels {
namespace {

// Row kernels shared by both paths. The parallel variants only change which
// thread runs which row, never the per-element accumulation order.

void gemm_row(const GemmShape& s, std::span<const double> a, std::span<const double> b,
              std::span<double> c, std::size_t i) {
  const std::size_t m = s.m, k = s.k, n = s.n;
  double* crow = c.data() + i * n;
  const double* arow = a.data() + i * k;
  const bool ta = s.trans_a == Trans::transpose;
  if (s.trans_b == Trans::none) {
    const auto a_at = [&](std::size_t p) { return ta ? a[p * m + i] : arow[p]; };
    std::fill(crow, crow + n, 0.0);
    std::size_t p = 0;
    // Four rows of b per sweep; the sum per element stays in p order.
    for (; p + 4 <= k; p += 4) {
      const double a0 = a_at(p), a1 = a_at(p + 1), a2 = a_at(p + 2), a3 = a_at(p + 3);
      const double* b0 = b.data() + p * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j)
        crow[j] = crow[j] + a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) {
      const double aip = a_at(p);
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
    return;
  }
  std::vector<double> gathered;
  if (ta) {
    gathered.resize(k);
    for (std::size_t p = 0; p < k; ++p) gathered[p] = a[p * m + i];
    arow = gathered.data();
  }
  // Four interleaved partial sums, combined in a fixed order.
  for (std::size_t j = 0; j < n; ++j) {
    const double* bcol = b.data() + j * k;
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4)
      for (std::size_t r = 0; r < 4; ++r) acc[r] += arow[p + r] * bcol[p + r];
    for (; p < k; ++p) acc[0] += arow[p] * bcol[p];
    crow[j] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  }
}

void softmax_slice(const SoftmaxShape& s, std::span<const double> x, std::span<double> y,
                   std::size_t slice) {
  const std::size_t o = slice / s.inner, in = slice % s.inner;
  const std::size_t base = o * s.len * s.inner + in;
  double mx = x[base];
  for (std::size_t t = 1; t < s.len; ++t) mx = std::max(mx, x[base + t * s.inner]);
  double sum = 0.0;
  for (std::size_t t = 0; t < s.len; ++t) {
    const double e = std::exp(x[base + t * s.inner] - mx);
    y[base + t * s.inner] = e;
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (std::size_t t = 0; t < s.len; ++t) y[base + t * s.inner] *= inv;
}

void layer_norm_row(std::size_t d, double eps, std::span<const double> x,
                    std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> y, const LayerNormCache& cache, std::size_t r) {
  const double* xr = x.data() + r * d;
  double mean = 0.0;
  for (std::size_t j = 0; j < d; ++j) mean += xr[j];
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double dv = xr[j] - mean;
    var += dv * dv;
  }
  var /= static_cast<double>(d);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  cache.inv_std[r] = inv_std;
  for (std::size_t j = 0; j < d; ++j) {
    const double xhat = (xr[j] - mean) * inv_std;
    cache.normalized[r * d + j] = xhat;
    y[r * d + j] = gamma[j] * xhat + beta[j];
  }
}

void conv1d_row(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
                std::span<double> y, std::size_t t) {
  double* yrow = y.data() + t * s.d_out;
  std::fill(yrow, yrow + s.d_out, 0.0);
  for (std::size_t j = 0; j < s.k; ++j) {
    if (t + j < s.pad) continue;  // zero padding row
    const std::size_t src = t + j - s.pad;
    if (src >= s.seq) continue;
    for (std::size_t c = 0; c < s.d_in; ++c) {
      const double xv = x[src * s.d_in + c];
      const double* wrow = w.data() + (j * s.d_in + c) * s.d_out;
      for (std::size_t o = 0; o < s.d_out; ++o) yrow[o] += xv * wrow[o];
    }
  }
}

void conv1d_dx_row(const Conv1dShape& s, std::span<const double> w, std::span<const double> dy,
                   std::span<double> dx, std::size_t src) {
  double* dxrow = dx.data() + src * s.d_in;
  std::fill(dxrow, dxrow + s.d_in, 0.0);
  for (std::size_t j = 0; j < s.k; ++j) {
    // src = t + j - pad  =>  t = src + pad - j
    if (src + s.pad < j) continue;
    const std::size_t t = src + s.pad - j;
    if (t >= s.out_len()) continue;
    const double* dyrow = dy.data() + t * s.d_out;
    for (std::size_t c = 0; c < s.d_in; ++c) {
      const double* wrow = w.data() + (j * s.d_in + c) * s.d_out;
      double acc = 0.0;
      for (std::size_t o = 0; o < s.d_out; ++o) acc += dyrow[o] * wrow[o];
      dxrow[c] += acc;
    }
  }
}

void conv1d_dw_row(const Conv1dShape& s, std::span<const double> x, std::span<const double> dy,
                   std::span<double> dw, std::size_t jc) {
  const std::size_t j = jc / s.d_in, c = jc % s.d_in;
  double* dwrow = dw.data() + jc * s.d_out;
  std::fill(dwrow, dwrow + s.d_out, 0.0);
  for (std::size_t t = 0; t < s.out_len(); ++t) {
    if (t + j < s.pad) continue;
    const std::size_t src = t + j - s.pad;
    if (src >= s.seq) continue;
    const double xv = x[src * s.d_in + c];
    const double* dyrow = dy.data() + t * s.d_out;
    for (std::size_t o = 0; o < s.d_out; ++o) dwrow[o] += xv * dyrow[o];
  }
}

long as_long(std::size_t v) { return static_cast<long>(v); }

}  // namespace

double gelu_scalar(double x) noexcept {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double gelu_grad_scalar(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

namespace serial {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(s, a, b, c, i);
}

void softmax(const SoftmaxShape& s, std::span<const double> x, std::span<double> y) {
  for (std::size_t sl = 0; sl < s.outer * s.inner; ++sl) softmax_slice(s, x, y, sl);
}

void layer_norm(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                std::span<const double> gamma, std::span<const double> beta,
                std::span<double> y, const LayerNormCache& cache) {
  for (std::size_t r = 0; r < rows; ++r) layer_norm_row(d, eps, x, gamma, beta, y, cache, r);
}

void conv1d(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
            std::span<double> y) {
  for (std::size_t t = 0; t < s.out_len(); ++t) conv1d_row(s, x, w, y, t);
}

void conv1d_backward(const Conv1dShape& s, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy,
                     std::span<double> dx, std::span<double> dw) {
  for (std::size_t src = 0; src < s.seq; ++src) conv1d_dx_row(s, w, dy, dx, src);
  for (std::size_t jc = 0; jc < s.k * s.d_in; ++jc) conv1d_dw_row(s, x, dy, dw, jc);
}

void gelu(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace serial

namespace parallel {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < as_long(s.m); ++i) gemm_row(s, a, b, c, static_cast<std::size_t>(i));
}

void softmax(const SoftmaxShape& s, std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (long sl = 0; sl < as_long(s.outer * s.inner); ++sl)
    softmax_slice(s, x, y, static_cast<std::size_t>(sl));
}

void layer_norm(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                std::span<const double> gamma, std::span<const double> beta,
                std::span<double> y, const LayerNormCache& cache) {
#pragma omp parallel for schedule(static)
  for (long r = 0; r < as_long(rows); ++r)
    layer_norm_row(d, eps, x, gamma, beta, y, cache, static_cast<std::size_t>(r));
}

void conv1d(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
            std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (long t = 0; t < as_long(s.out_len()); ++t) conv1d_row(s, x, w, y, static_cast<std::size_t>(t));
}

void conv1d_backward(const Conv1dShape& s, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy,
                     std::span<double> dx, std::span<double> dw) {
#pragma omp parallel
  {
#pragma omp for schedule(static) nowait
    for (long src = 0; src < as_long(s.seq); ++src)
      conv1d_dx_row(s, w, dy, dx, static_cast<std::size_t>(src));
#pragma omp for schedule(static)
    for (long jc = 0; jc < as_long(s.k * s.d_in); ++jc)
      conv1d_dw_row(s, x, dy, dw, static_cast<std::size_t>(jc));
  }
}

void gelu(std::span<const double> x, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < as_long(x.size()); ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace parallel

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  if (s.m * s.k * s.n >= kParallelThreshold && s.m > 1)
    parallel::gemm(s, a, b, c);
  else
    serial::gemm(s, a, b, c);
}

void softmax(const SoftmaxShape& s, std::span<const double> x, std::span<double> y) {
  if (s.outer * s.len * s.inner * 8 >= kParallelThreshold)
    parallel::softmax(s, x, y);
  else
    serial::softmax(s, x, y);
}

void layer_norm(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                std::span<const double> gamma, std::span<const double> beta,
                std::span<double> y, const LayerNormCache& cache) {
  if (rows * d * 4 >= kParallelThreshold)
    parallel::layer_norm(rows, d, eps, x, gamma, beta, y, cache);
  else
    serial::layer_norm(rows, d, eps, x, gamma, beta, y, cache);
}

void conv1d(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
            std::span<double> y) {
  if (s.seq * s.k * s.d_in * s.d_out >= kParallelThreshold)
    parallel::conv1d(s, x, w, y);
  else
    serial::conv1d(s, x, w, y);
}

void conv1d_backward(const Conv1dShape& s, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy,
                     std::span<double> dx, std::span<double> dw) {
  if (s.seq * s.k * s.d_in * s.d_out >= kParallelThreshold)
    parallel::conv1d_backward(s, x, w, dy, dx, dw);
  else
    serial::conv1d_backward(s, x, w, dy, dx, dw);
}

void gelu(std::span<const double> x, std::span<double> y) {
  if (x.size() * 32 >= kParallelThreshold)
    parallel::gelu(x, y);
  else
    serial::gelu(x, y);
}

}  // namespace pat::kernels
