#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pat/config.hpp"
#include "pat/tensor.hpp"

namespace pat {

class Rng;

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

// Token embedding table. Row kPadId is held at zero and never updated.
struct EmbeddingTable {
  Tensor weights;  // [vocab_size x embed_dim]
  bool frozen = false;

  std::size_t vocab_size() const { return weights.dim(0); }
  std::size_t embed_dim() const { return weights.dim(1); }
};

struct ConvBranch {
  std::size_t width = 0;
  Tensor kernels;  // [width x embed_dim x hidden_dim]
  Tensor bias;     // [hidden_dim]
  bool identity = false;  // width-1 branch without projection
};

struct LstmParams {
  Tensor w_input;   // [embed_dim x 4*hidden], gate order i, f, g, o
  Tensor w_hidden;  // [hidden x 4*hidden]
  Tensor bias;      // [4*hidden]
};

struct TextEncoderParams {
  TextEncoderConfig config;
  EmbeddingTable embedding;
  std::vector<ConvBranch> branches;  // hierarchical
  Tensor proj_w, proj_b;             // embedding_only
  LstmParams lstm;                   // recurrent

  static TextEncoderParams init(const TextEncoderConfig& config, std::size_t vocab_size,
                                Rng& rng);
};

// Row t is the table row of tokens[t]. Throws LookupError on a bad id.
Tensor embed(std::span<const std::int32_t> tokens, const EmbeddingTable& table);

// Sum of causal n-gram convolutions over e ([seq x embed_dim]).
Tensor hierarchical_extract(const Tensor& e, const TextEncoderParams& params);

Tensor lstm_forward(const Tensor& e, const LstmParams& params, std::size_t hidden_dim);

// Mode dispatch: embedding followed by the configured extractor. Output is
// [seq x hidden_dim].
Tensor encode_question(std::span<const std::int32_t> tokens, const TextEncoderParams& params);

}  // namespace pat
