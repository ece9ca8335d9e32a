#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pat/tensor.hpp"

namespace pat {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-3;
  // Tensors with more elements than this are checked on a random subset of
  // `sample_size` elements.
  std::size_t max_elements = 10000;
  std::size_t sample_size = 512;
  std::uint64_t seed = 0;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double denominator_floor = 1e-6;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  bool passed = false;
  double tol = 0.0;
};

// Compares tape gradients of the scalar `loss` against central differences
// for every element of every parameter. `loss` is re-evaluated with graph
// recording disabled for the finite differences; it must be deterministic.
// Throws NumericError if the loss is non-finite at any evaluation point.
GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Parameter> params,
                           const GradCheckOptions& options = {});

}  // namespace pat
