#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pat/answer_selector.hpp"
#include "pat/attention.hpp"
#include "pat/config.hpp"
#include "pat/context.hpp"
#include "pat/text_encoder.hpp"
#include "pat/vision_embed.hpp"

namespace pat {

// One question/image pair as the model consumes it. Empty masks mean every
// position is valid.
struct ModelInput {
  std::span<const std::int32_t> tokens;
  SeqMask text_mask;
  Tensor regions;  // [n_regions x feature_dim]
  SeqMask region_mask;
};

// The assembled parameter set: text encoder, region projector, the parallel
// attention stack and the answer selector.
class PatModel {
 public:
  PatModel(ModelConfig config, std::uint64_t seed, bool freeze_embeddings = false);

  PatModel(PatModel&&) = default;
  PatModel& operator=(PatModel&&) = default;
  PatModel(const PatModel&) = delete;
  PatModel& operator=(const PatModel&) = delete;

  const ModelConfig& config() const { return config_; }

  // Named views onto every trainable tensor, in a fixed order. Names are
  // "<module>.<path>", module one of text, vision, encoder, selector.
  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  std::size_t parameter_count() const;

  // Answer scores, [n_answers].
  Tensor forward(const ModelInput& input, ForwardContext& ctx) const;
  // Forward without recording and without dropout.
  std::int32_t predict(const ModelInput& input) const;

  EncoderOptions encoder_options() const { return {config_.use_residual, config_.layer_norm_eps}; }

  TextEncoderParams text;
  VisionProjector vision;
  std::vector<ParallelLayer> layers;
  SelectorParams selector;

 private:
  void collect_parameters(bool freeze_embeddings);

  ModelConfig config_;
  std::vector<Parameter> params_;
};

std::string_view parameter_module(std::string_view name);

}  // namespace pat
