#pragma once

#include <cstdint>

#include "pat/attention.hpp"
#include "pat/tensor.hpp"

namespace pat {

class Rng;

// Per-position scalar scorer, gelu(x W1 + b1) W2 + b2.
struct ReducerParams {
  Tensor w1, b1;  // [hidden x hidden/2], [hidden/2]
  Tensor w2, b2;  // [hidden/2 x 1], [1]

  static ReducerParams init(std::size_t hidden, Rng& rng);
};

struct FusionParams {
  Tensor w_v, w_l;         // [hidden x fused]
  Tensor b_fused;          // [fused]; undefined when fusion_bias is off
  Tensor norm_gamma, norm_beta;  // undefined when fuse_norm is off
  Tensor w_vocab, b_vocab;  // [fused x n_answers], [n_answers]

  static FusionParams init(std::size_t hidden, std::size_t fused, std::size_t n_answers,
                           bool fusion_bias, bool fuse_norm, Rng& rng);
  std::size_t n_answers() const { return w_vocab.dim(1); }
};

struct SelectorParams {
  ReducerParams reduce_v, reduce_l;
  FusionParams fusion;
};

// Softmax over valid positions of the per-position MLP logits, then the
// weighted sum of rows. Returns [hidden].
Tensor attribute_reduce(const Tensor& x, const SeqMask& mask, const ReducerParams& p);

// x_v W_v + x_l W_l (+ b), then layer_norm when configured. Returns [fused].
Tensor fuse(const Tensor& x_v, const Tensor& x_l, const FusionParams& p, double eps = 1e-5);

// x_f W_vocab + b_vocab. Returns [n_answers].
Tensor answer_scores(const Tensor& x_f, const FusionParams& p);

// Lowest index among the maxima.
std::int32_t argmax(const Tensor& scores);

struct Selection {
  std::int32_t answer_id = 0;
  Tensor scores;
};

Selection select_candidate(const Tensor& x_f, const FusionParams& p);

}  // namespace pat
