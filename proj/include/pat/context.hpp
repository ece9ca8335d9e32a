#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

class Rng;

// One recorded attention map: softmax weights of one head, [n_q x n_kv].
struct AttentionRecord {
  std::string component;  // "cross_v", "cross_l", "self_v" or "self_l"
  std::size_t layer = 0;
  std::size_t head = 0;
  Tensor weights;
  std::vector<std::uint8_t> key_valid;
};

struct AttentionTrace {
  std::vector<AttentionRecord> records;
};

// Per-forward switches. Dropout applies only when training and rng is set.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
  AttentionTrace* trace = nullptr;

  bool dropout_active() const { return training && dropout > 0.0 && rng != nullptr; }
};

}  // namespace pat
