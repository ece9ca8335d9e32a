#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "pat/context.hpp"
#include "pat/tensor.hpp"

namespace pat {

class Rng;

// Additive score bias applied to padded keys.
inline constexpr double kMaskBias = -1e9;

// Per-position validity of a padded sequence (question tokens or regions).
struct SeqMask {
  std::vector<std::uint8_t> valid;

  static SeqMask all(std::size_t n) { return {std::vector<std::uint8_t>(n, 1)}; }
  static SeqMask prefix(std::size_t n, std::size_t valid_len);

  std::size_t size() const { return valid.size(); }
  std::size_t count_valid() const;
  // [n] tensor holding 0 at valid positions and kMaskBias elsewhere.
  Tensor bias() const;
};

struct AttentionParams {
  std::size_t n_heads = 1;
  std::size_t head_dim = 1;
  Tensor wq, wk, wv, wo;  // [hidden x hidden]
  Tensor bq, bk, bv, bo;  // [hidden]

  static AttentionParams init(std::size_t hidden, std::size_t n_heads, Rng& rng);
};

struct FfnParams {
  Tensor w1, b1;  // [hidden x ffn], [ffn]
  Tensor w2, b2;  // [ffn x hidden], [hidden]

  static FfnParams init(std::size_t hidden, std::size_t ffn, Rng& rng);
};

struct LayerNormParams {
  Tensor gamma, beta;

  static LayerNormParams init(std::size_t d);
};

// One attention component with its feed-forward sublayer.
struct AttentionBlock {
  AttentionParams attn;
  FfnParams ffn;
  LayerNormParams norm_attn;
  LayerNormParams norm_ffn;

  static AttentionBlock init(std::size_t hidden, std::size_t n_heads, std::size_t ffn,
                             Rng& rng);
};

// The four independent components of one encoder layer.
struct ParallelLayer {
  AttentionBlock cross_v_over_l;  // vision queries language
  AttentionBlock cross_l_over_v;  // language queries vision
  AttentionBlock self_v;
  AttentionBlock self_l;

  static ParallelLayer init(std::size_t hidden, std::size_t n_heads, std::size_t ffn, Rng& rng);
};

struct EncoderOptions {
  bool use_residual = true;
  double eps = 1e-5;
};

// Multi-head scaled dot-product attention of q_in over kv_in. Padded keys
// get kMaskBias before the softmax. When `maps` is given, the per-head
// [n_q x n_kv] attention weights are appended to it.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const SeqMask& kv_mask,
                            const AttentionParams& p, std::vector<Tensor>* maps = nullptr);

// gelu(x W1 + b1) W2 + b2, per position.
Tensor ffn(const Tensor& x, const FfnParams& p);

// Attention of x over kv followed by the FFN, each wrapped in
// residual + layer_norm (or layer_norm only without residuals).
Tensor attention_block(const Tensor& x, const Tensor& kv, const SeqMask& kv_mask,
                       const AttentionBlock& block, const EncoderOptions& options,
                       ForwardContext& ctx, std::string_view component = {},
                       std::size_t layer_index = 0);

// Stage 1 runs both cross components on the layer inputs; stage 2 runs each
// modality's self component on its stage-1 output.
std::pair<Tensor, Tensor> parallel_layer_forward(const Tensor& x_v, const Tensor& x_l,
                                                 const SeqMask& v_mask, const SeqMask& l_mask,
                                                 const ParallelLayer& layer,
                                                 const EncoderOptions& options,
                                                 ForwardContext& ctx,
                                                 std::size_t layer_index = 0);

std::pair<Tensor, Tensor> encoder_forward(const Tensor& x_v, const Tensor& x_l,
                                          const SeqMask& v_mask, const SeqMask& l_mask,
                                          const std::vector<ParallelLayer>& layers,
                                          const EncoderOptions& options, ForwardContext& ctx);

}  // namespace pat
