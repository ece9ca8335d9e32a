#include "pat/answer_selector.hpp"

#include <algorithm>

#include "pat/error.hpp"
#include "pat/init.hpp"
#include "pat/ops.hpp"

namespace pat {

ReducerParams ReducerParams::init(std::size_t hidden, Rng& rng) {
  const std::size_t mid = std::max<std::size_t>(1, hidden / 2);
  return {xavier_uniform({hidden, mid}, hidden, mid, rng), zeros_param({mid}),
          xavier_uniform({mid, 1}, mid, 1, rng), zeros_param({1})};
}

FusionParams FusionParams::init(std::size_t hidden, std::size_t fused, std::size_t n_answers,
                                bool fusion_bias, bool fuse_norm, Rng& rng) {
  if (n_answers < 2) throw ConfigError("answer selector needs at least 2 answers");
  FusionParams p;
  p.w_v = xavier_uniform({hidden, fused}, hidden, fused, rng);
  p.w_l = xavier_uniform({hidden, fused}, hidden, fused, rng);
  if (fusion_bias) p.b_fused = zeros_param({fused});
  if (fuse_norm) {
    p.norm_gamma = ones_param({fused});
    p.norm_beta = zeros_param({fused});
  }
  p.w_vocab = xavier_uniform({fused, n_answers}, fused, n_answers, rng);
  p.b_vocab = zeros_param({n_answers});
  return p;
}

Tensor attribute_reduce(const Tensor& x, const SeqMask& mask, const ReducerParams& p) {
  if (x.rank() != 2 || mask.size() != x.dim(0))
    throw DimensionError("attribute_reduce: mask of " + std::to_string(mask.size()) +
                         " for features " + shape_string(x.shape()));
  if (mask.count_valid() == 0) throw ContractError("attribute_reduce: every position is masked");
  const std::size_t n = x.dim(0);
  const Tensor hidden = gelu(add_bias(matmul(x, p.w1), p.b1));
  const Tensor logits = reshape(add_bias(matmul(hidden, p.w2), p.b2), {n});
  const Tensor attr = softmax(add(logits, mask.bias()), 0);
  return reshape(matmul(reshape(attr, {1, n}), x), {x.dim(1)});
}

Tensor fuse(const Tensor& x_v, const Tensor& x_l, const FusionParams& p, double eps) {
  Tensor f = add(vecmat(x_v, p.w_v), vecmat(x_l, p.w_l));
  if (p.b_fused.defined()) f = add(f, p.b_fused);
  if (p.norm_gamma.defined()) f = layer_norm(f, p.norm_gamma, p.norm_beta, eps);
  return f;
}

Tensor answer_scores(const Tensor& x_f, const FusionParams& p) {
  return add(vecmat(x_f, p.w_vocab), p.b_vocab);
}

std::int32_t argmax(const Tensor& scores) {
  const auto s = scores.data();
  // max_element returns the first maximum.
  return static_cast<std::int32_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

Selection select_candidate(const Tensor& x_f, const FusionParams& p) {
  Tensor s = answer_scores(x_f, p);
  return {argmax(s), std::move(s)};
}

}  // namespace pat
