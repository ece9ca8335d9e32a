#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

class Rng;

// Differentiable primitives. Shapes are checked eagerly and mismatches raise
// DimensionError naming both operands. Broadcasting is limited to the
// row-bias case PAT needs.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m x k] * [k x n]
Tensor transpose(const Tensor& x);                // 2-D only
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);  // identical shapes
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, identical shapes
Tensor scale(const Tensor& x, double factor);
// x[..., n] + bias[n], repeated over every leading index.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor gelu(const Tensor& x);  // exact x * Phi(x)
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// Causal same-length convolution. x is [seq x d_in], kernels [k x d_in x d_out];
// `padding` zero rows are prepended and must equal k - 1 for a same-length
// output.
Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t padding);

// Normalises over the last axis, then gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor row(const Tensor& x, std::size_t index);  // [1 x n]

// out[t] = table[ids[t]]; backward scatters into the referenced rows.
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);

Tensor sum(const Tensor& x);  // scalar

// Mean over rows of -log softmax(scores[b])[targets[b]].
Tensor cross_entropy(const Tensor& scores, std::span<const std::int32_t> targets);

// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// v[k] * W[k x n] -> [n]
Tensor vecmat(const Tensor& v, const Tensor& w);

}  // namespace pat
