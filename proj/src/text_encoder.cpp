#include "pat/text_encoder.hpp"

#include <algorithm>

#include "pat/error.hpp"
#include "pat/init.hpp"
#include "pat/ops.hpp"
#include "pat/rng.hpp"

namespace pat {

TextEncoderParams TextEncoderParams::init(const TextEncoderConfig& config,
                                          std::size_t vocab_size, Rng& rng) {
  config.validate();
  if (vocab_size < 3) throw ConfigError("vocab_size must be >= 3 (PAD, UNK, one token)");
  const std::size_t e = config.embed_dim, h = config.hidden_dim;

  TextEncoderParams p;
  p.config = config;
  p.embedding.weights = unit_uniform({vocab_size, e}, rng);
  auto w = p.embedding.weights.mutable_data();
  std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(e), 0.0);

  switch (config.mode) {
    case TextMode::hierarchical:
      for (std::size_t k : config.kernel_sizes) {
        ConvBranch b;
        b.width = k;
        if (k == 1 && !config.use_unigram_projection) {
          b.identity = true;
        } else {
          b.kernels = xavier_uniform({k, e, h}, k * e, h, rng);
          b.bias = zeros_param({h});
        }
        p.branches.push_back(std::move(b));
      }
      break;
    case TextMode::embedding_only:
      p.proj_w = xavier_uniform({e, h}, e, h, rng);
      p.proj_b = zeros_param({h});
      break;
    case TextMode::recurrent:
      p.lstm.w_input = xavier_uniform({e, 4 * h}, e, h, rng);
      p.lstm.w_hidden = xavier_uniform({h, 4 * h}, h, h, rng);
      p.lstm.bias = zeros_param({4 * h});
      break;
  }
  return p;
}

Tensor embed(std::span<const std::int32_t> tokens, const EmbeddingTable& table) {
  return gather_rows(table.weights, tokens);
}

Tensor hierarchical_extract(const Tensor& e, const TextEncoderParams& params) {
  const auto& cfg = params.config;
  if (cfg.mode != TextMode::hierarchical)
    throw ConfigError("hierarchical_extract called with text mode " +
                      std::string(to_string(cfg.mode)));
  if (e.rank() != 2 || e.dim(1) != cfg.embed_dim)
    throw DimensionError("hierarchical_extract: embeddings " + shape_string(e.shape()) +
                         " do not have embed_dim " + std::to_string(cfg.embed_dim));
  Tensor out;
  for (const auto& b : params.branches) {
    Tensor feature;
    if (b.identity) {
      if (e.dim(1) != cfg.hidden_dim)
        throw ConfigError("identity unigram branch needs embed_dim == hidden_dim");
      feature = e;
    } else {
      feature = add_bias(conv1d(e, b.kernels, b.width - 1), b.bias);
    }
    out = out.defined() ? add(out, feature) : feature;
  }
  return out;
}

Tensor lstm_forward(const Tensor& e, const LstmParams& params, std::size_t hidden_dim) {
  const std::size_t seq = e.dim(0), h = hidden_dim;
  // Input contributions for every step at once.
  const Tensor xw = add_bias(matmul(e, params.w_input), params.bias);
  Tensor hidden = Tensor::zeros({1, h});
  Tensor cell = Tensor::zeros({1, h});
  std::vector<Tensor> states;
  states.reserve(seq);
  for (std::size_t t = 0; t < seq; ++t) {
    const Tensor gates = add(row(xw, t), matmul(hidden, params.w_hidden));
    const Tensor i = sigmoid(slice_cols(gates, 0, h));
    const Tensor f = sigmoid(slice_cols(gates, h, h));
    const Tensor g = tanh(slice_cols(gates, 2 * h, h));
    const Tensor o = sigmoid(slice_cols(gates, 3 * h, h));
    cell = add(mul(f, cell), mul(i, g));
    hidden = mul(o, tanh(cell));
    states.push_back(hidden);
  }
  return concat_rows(states);
}

Tensor encode_question(std::span<const std::int32_t> tokens, const TextEncoderParams& params) {
  const Tensor e = embed(tokens, params.embedding);
  switch (params.config.mode) {
    case TextMode::hierarchical: return hierarchical_extract(e, params);
    case TextMode::embedding_only: return add_bias(matmul(e, params.proj_w), params.proj_b);
    case TextMode::recurrent: return lstm_forward(e, params.lstm, params.config.hidden_dim);
  }
  throw ConfigError("unknown text encoder mode");
}

}  // namespace pat
