#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pat/data.hpp"

namespace pat {

// Parameters of the synthetic multimodal task.
//
// Each image carries kSynthAttributes latent attributes, each taking one of
// n_answers values and visible only through the region features (one
// prototype per attribute value, plus noise; the remaining regions are
// distractors). Each question names one attribute through a keyword token
// placed among filler tokens. The answer is the named attribute's value, so
// neither modality alone determines it. Answer labels are balanced exactly
// per split. train holds n_examples records; dev and test each hold
// max(1, n_examples / 4).
inline constexpr std::size_t kSynthAttributes = 2;

struct SynthSpec {
  std::size_t n_examples = 200;
  std::size_t n_images = 20;
  std::size_t vocab_size = 50;  // including PAD and UNK
  std::size_t n_answers = 8;
  std::size_t n_regions = 10;
  std::size_t feature_dim = 32;
  std::uint64_t seed = 7;

  void validate() const;  // ConfigError
};

struct SyntheticData {
  std::vector<VqaExample> train, dev, test;
  std::map<std::string, Tensor> features;  // image_id -> [n_regions x feature_dim]
  // Ground-truth attribute values per image, for diagnostics and tests.
  std::map<std::string, std::array<std::size_t, kSynthAttributes>> image_attributes;
};

// Pure function of the spec.
SyntheticData generate_synthetic(const SynthSpec& spec);

// Writes <root>/data/{train,dev,test}.tsv and <root>/features/<image>.patf.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& root);

std::string describe(const SynthSpec& spec);

}  // namespace pat
