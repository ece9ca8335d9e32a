#include "pat/attention.hpp"

#include <cmath>

#include "pat/error.hpp"
#include "pat/init.hpp"
#include "pat/ops.hpp"

namespace pat {

SeqMask SeqMask::prefix(std::size_t n, std::size_t valid_len) {
  SeqMask m{std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < std::min(n, valid_len); ++i) m.valid[i] = 1;
  return m;
}

std::size_t SeqMask::count_valid() const {
  std::size_t n = 0;
  for (auto v : valid) n += v ? 1 : 0;
  return n;
}

Tensor SeqMask::bias() const {
  std::vector<double> b(valid.size());
  for (std::size_t i = 0; i < valid.size(); ++i) b[i] = valid[i] ? 0.0 : kMaskBias;
  return Tensor::from({valid.size()}, std::move(b));
}

AttentionParams AttentionParams::init(std::size_t hidden, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || hidden % n_heads != 0)
    throw ConfigError("n_heads must divide hidden_dim");
  AttentionParams p;
  p.n_heads = n_heads;
  p.head_dim = hidden / n_heads;
  p.wq = xavier_uniform({hidden, hidden}, hidden, hidden, rng);
  p.wk = xavier_uniform({hidden, hidden}, hidden, hidden, rng);
  p.wv = xavier_uniform({hidden, hidden}, hidden, hidden, rng);
  p.wo = xavier_uniform({hidden, hidden}, hidden, hidden, rng);
  p.bq = zeros_param({hidden});
  p.bk = zeros_param({hidden});
  p.bv = zeros_param({hidden});
  p.bo = zeros_param({hidden});
  return p;
}

FfnParams FfnParams::init(std::size_t hidden, std::size_t ffn_dim, Rng& rng) {
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  return {xavier_uniform({hidden, ffn_dim}, hidden, ffn_dim, rng), zeros_param({ffn_dim}),
          xavier_uniform({ffn_dim, hidden}, ffn_dim, hidden, rng), zeros_param({hidden})};
}

LayerNormParams LayerNormParams::init(std::size_t d) { return {ones_param({d}), zeros_param({d})}; }

AttentionBlock AttentionBlock::init(std::size_t hidden, std::size_t n_heads, std::size_t ffn_dim,
                                    Rng& rng) {
  AttentionBlock b;
  b.attn = AttentionParams::init(hidden, n_heads, rng);
  b.ffn = FfnParams::init(hidden, ffn_dim, rng);
  b.norm_attn = LayerNormParams::init(hidden);
  b.norm_ffn = LayerNormParams::init(hidden);
  return b;
}

ParallelLayer ParallelLayer::init(std::size_t hidden, std::size_t n_heads, std::size_t ffn_dim,
                                  Rng& rng) {
  ParallelLayer l;
  l.cross_v_over_l = AttentionBlock::init(hidden, n_heads, ffn_dim, rng);
  l.cross_l_over_v = AttentionBlock::init(hidden, n_heads, ffn_dim, rng);
  l.self_v = AttentionBlock::init(hidden, n_heads, ffn_dim, rng);
  l.self_l = AttentionBlock::init(hidden, n_heads, ffn_dim, rng);
  return l;
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const SeqMask& kv_mask,
                            const AttentionParams& p, std::vector<Tensor>* maps) {
  if (kv_mask.size() != kv_in.dim(0))
    throw DimensionError("attention mask has " + std::to_string(kv_mask.size()) +
                         " entries for " + std::to_string(kv_in.dim(0)) + " keys");
  if (kv_mask.count_valid() == 0) throw ContractError("attention mask has no valid key");

  const Tensor q = add_bias(matmul(q_in, p.wq), p.bq);
  const Tensor k = add_bias(matmul(kv_in, p.wk), p.bk);
  const Tensor v = add_bias(matmul(kv_in, p.wv), p.bv);
  const Tensor mask_bias = kv_mask.bias();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(p.head_dim));

  std::vector<Tensor> heads;
  heads.reserve(p.n_heads);
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    const std::size_t c0 = h * p.head_dim;
    const Tensor qh = slice_cols(q, c0, p.head_dim);
    const Tensor kh = slice_cols(k, c0, p.head_dim);
    const Tensor vh = slice_cols(v, c0, p.head_dim);
    const Tensor scores = add_bias(scale(matmul(qh, transpose(kh)), inv_sqrt_d), mask_bias);
    const Tensor weights = softmax(scores, 1);
    if (maps) maps->push_back(weights);
    heads.push_back(matmul(weights, vh));
  }
  const Tensor y = heads.size() == 1 ? heads[0] : concat_cols(heads);
  return add_bias(matmul(y, p.wo), p.bo);
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
  return add_bias(matmul(gelu(add_bias(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

Tensor attention_block(const Tensor& x, const Tensor& kv, const SeqMask& kv_mask,
                       const AttentionBlock& block, const EncoderOptions& options,
                       ForwardContext& ctx, std::string_view component,
                       std::size_t layer_index) {
  std::vector<Tensor> maps;
  Tensor y = multi_head_attention(x, kv, kv_mask, block.attn, ctx.trace ? &maps : nullptr);
  if (ctx.trace) {
    for (std::size_t h = 0; h < maps.size(); ++h)
      ctx.trace->records.push_back(
          {std::string(component), layer_index, h, maps[h], kv_mask.valid});
  }
  if (ctx.dropout_active()) y = dropout(y, ctx.dropout, *ctx.rng);
  const Tensor h = layer_norm(options.use_residual ? add(x, y) : y, block.norm_attn.gamma,
                              block.norm_attn.beta, options.eps);
  Tensor f = ffn(h, block.ffn);
  if (ctx.dropout_active()) f = dropout(f, ctx.dropout, *ctx.rng);
  return layer_norm(options.use_residual ? add(h, f) : f, block.norm_ffn.gamma,
                    block.norm_ffn.beta, options.eps);
}

std::pair<Tensor, Tensor> parallel_layer_forward(const Tensor& x_v, const Tensor& x_l,
                                                 const SeqMask& v_mask, const SeqMask& l_mask,
                                                 const ParallelLayer& layer,
                                                 const EncoderOptions& options,
                                                 ForwardContext& ctx, std::size_t layer_index) {
  if (v_mask.size() != x_v.dim(0) || l_mask.size() != x_l.dim(0))
    throw DimensionError("parallel layer: masks do not match sequence lengths");
  const Tensor v1 =
      attention_block(x_v, x_l, l_mask, layer.cross_v_over_l, options, ctx, "cross_v", layer_index);
  const Tensor l1 =
      attention_block(x_l, x_v, v_mask, layer.cross_l_over_v, options, ctx, "cross_l", layer_index);
  Tensor v2 = attention_block(v1, v1, v_mask, layer.self_v, options, ctx, "self_v", layer_index);
  Tensor l2 = attention_block(l1, l1, l_mask, layer.self_l, options, ctx, "self_l", layer_index);
  return {std::move(v2), std::move(l2)};
}

std::pair<Tensor, Tensor> encoder_forward(const Tensor& x_v, const Tensor& x_l,
                                          const SeqMask& v_mask, const SeqMask& l_mask,
                                          const std::vector<ParallelLayer>& layers,
                                          const EncoderOptions& options, ForwardContext& ctx) {
  if (layers.empty()) throw ConfigError("encoder needs at least one parallel layer");
  std::pair<Tensor, Tensor> state{x_v, x_l};
  for (std::size_t i = 0; i < layers.size(); ++i)
    state = parallel_layer_forward(state.first, state.second, v_mask, l_mask, layers[i], options,
                                   ctx, i);
  return state;
}

}  // namespace pat
