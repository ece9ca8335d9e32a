#pragma once

#include <filesystem>

#include "pat/model.hpp"
#include "pat/trainer.hpp"

namespace pat {

// Binary checkpoint:
//   "PATCKPT1"
//   u64 length + model config text (format_model_config)
//   u64 length + answer vocabulary, one per line
//   u64 length + question tokens (without PAD/UNK), one per line
//   u32 parameter count, then per parameter:
//     u32 name length, name, u32 rank, u32 extents..., float64 payload
//   "PATEND\0\0"
// Integers and floats are little-endian.
void save_checkpoint(const PatModel& model, const Vocabularies& vocab,
                     const std::filesystem::path& path);

struct LoadedModel {
  PatModel model;
  Vocabularies vocab;
};

// Throws FormatError for malformed or truncated files; never returns a
// partially loaded model.
LoadedModel load_checkpoint(const std::filesystem::path& path);

// Loads parameters into an existing model. Throws ConfigError naming the
// first parameter whose shape disagrees with the model's configuration.
Vocabularies load_checkpoint_into(PatModel& model, const std::filesystem::path& path);

}  // namespace pat
