#pragma once

#include <cstddef>
#include <span>

// Dense float64 kernels behind the differentiable ops.
//
// Each kernel exists twice: kernels::serial is the plain reference loop nest
// and kernels::parallel distributes the outermost independent loop with
// OpenMP. Both accumulate every output element in the same order, so their
// results are bit-identical; tests assert that. The dispatching functions in
// kernels:: pick the parallel path once the work is large enough to amortise
// a thread team.
namespace pat::kernels {

enum class Trans { none, transpose };

// c[m x n] = op(a) * op(b), with op(a) m x k and op(b) k x n. Storage of a is
// m x k (k x m when transposed); likewise b is k x n (n x k when transposed).
struct GemmShape {
  std::size_t m, k, n;
  Trans trans_a = Trans::none;
  Trans trans_b = Trans::none;
};

// Softmax over the middle extent of an [outer x len x inner] block.
struct SoftmaxShape {
  std::size_t outer, len, inner;
};

// Row-wise normalisation statistics cached for the backward pass.
struct LayerNormCache {
  std::span<double> normalized;  // rows x d
  std::span<double> inv_std;     // rows
};

// 1D convolution over a left-zero-padded sequence: x is seq x d_in, w is
// k x d_in x d_out and y is out_len x d_out with out_len = seq + pad - k + 1.
// pad = k - 1 gives the causal same-length case.
struct Conv1dShape {
  std::size_t seq, d_in, d_out, k, pad;
  std::size_t out_len() const { return seq + pad + 1 - k; }
};

namespace serial {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax(const SoftmaxShape& s, std::span<const double> x, std::span<double> y);
void layer_norm(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                std::span<const double> gamma, std::span<const double> beta,
                std::span<double> y, const LayerNormCache& cache);
void conv1d(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
            std::span<double> y);
void conv1d_backward(const Conv1dShape& s, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy,
                     std::span<double> dx, std::span<double> dw);
void gelu(std::span<const double> x, std::span<double> y);
}  // namespace serial

namespace parallel {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax(const SoftmaxShape& s, std::span<const double> x, std::span<double> y);
void layer_norm(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                std::span<const double> gamma, std::span<const double> beta,
                std::span<double> y, const LayerNormCache& cache);
void conv1d(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
            std::span<double> y);
void conv1d_backward(const Conv1dShape& s, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy,
                     std::span<double> dx, std::span<double> dw);
void gelu(std::span<const double> x, std::span<double> y);
}  // namespace parallel

// Work (multiply-adds) above which dispatch switches to the OpenMP path.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 16;

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax(const SoftmaxShape& s, std::span<const double> x, std::span<double> y);
void layer_norm(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                std::span<const double> gamma, std::span<const double> beta,
                std::span<double> y, const LayerNormCache& cache);
void conv1d(const Conv1dShape& s, std::span<const double> x, std::span<const double> w,
            std::span<double> y);
void conv1d_backward(const Conv1dShape& s, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy,
                     std::span<double> dx, std::span<double> dw);
void gelu(std::span<const double> x, std::span<double> y);

double gelu_scalar(double x) noexcept;
// d/dx of x * Phi(x).
double gelu_grad_scalar(double x) noexcept;

}  // namespace pat::kernels
