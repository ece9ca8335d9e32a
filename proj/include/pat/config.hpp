#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pat {

enum class TextMode { hierarchical, embedding_only, recurrent };

std::string_view to_string(TextMode mode);
TextMode parse_text_mode(std::string_view text);

struct TextEncoderConfig {
  TextMode mode = TextMode::hierarchical;
  std::vector<std::size_t> kernel_sizes{1, 2, 3, 4};
  // When false the width-1 branch is an identity pass of the raw embeddings.
  bool use_unigram_projection = true;
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 512;

  void validate() const;
};

// Architecture hyperparameters. Zero-valued sizes marked "derived" are filled
// in from the data (vocabularies, feature files) before model construction.
struct ModelConfig {
  std::size_t vocab_size = 0;   // derived
  std::size_t n_answers = 0;    // derived
  std::size_t feature_dim = 0;  // derived when 0
  std::size_t embed_dim = 0;    // 0: same as hidden_dim
  std::size_t hidden_dim = 512;
  std::size_t n_layers = 4;
  std::size_t n_heads = 8;
  std::size_t ffn_dim = 0;    // 0: 4 * hidden_dim
  std::size_t fused_dim = 0;  // 0: hidden_dim
  std::size_t max_regions = 50;
  std::size_t max_question_len = 32;

  TextMode text_mode = TextMode::hierarchical;
  std::vector<std::size_t> kernel_sizes{1, 2, 3, 4};
  bool use_unigram_projection = true;

  bool use_residual = true;
  bool normalize_visual = true;
  bool fuse_norm = true;
  bool fusion_bias = true;
  double layer_norm_eps = 1e-5;

  std::size_t resolved_embed_dim() const { return embed_dim ? embed_dim : hidden_dim; }
  std::size_t resolved_ffn_dim() const { return ffn_dim ? ffn_dim : 4 * hidden_dim; }
  std::size_t resolved_fused_dim() const { return fused_dim ? fused_dim : hidden_dim; }
  std::size_t head_dim() const { return hidden_dim / n_heads; }
  TextEncoderConfig text() const;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double dropout = 0.1;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 5.0;
  bool shuffle = true;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  // Optional word-vector text file used to initialise embeddings.
  std::string pretrained_vectors;
  bool freeze_embeddings = false;
};

// Flat sectioned key = value text:
//
//   [model]
//   hidden_dim = 64
//   [text]
//   mode = hierarchical
//   kernel_sizes = 1,2,3,4
//   [train]
//   learning_rate = 0.001
//
// '#' starts a comment. Unknown sections or keys are rejected with the line
// number. Keys not mentioned keep their defaults.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& config);

// Model-only subset, used inside checkpoints.
std::string format_model_config(const ModelConfig& config);
ModelConfig parse_model_config(std::string_view text);

}  // namespace pat
