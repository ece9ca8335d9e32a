#pragma once

#include <string>

#include "pat/tensor.hpp"

namespace pat {

class Rng;

// Precomputed detector region vectors for one image.
struct RegionFeatures {
  std::string image_id;
  Tensor features;  // [n_regions x feature_dim], constant

  std::size_t n_regions() const { return features.dim(0); }
  std::size_t feature_dim() const { return features.dim(1); }
};

struct VisionProjector {
  Tensor w;  // [feature_dim x hidden_dim]
  Tensor b;  // [hidden_dim]
  // Optional post-projection normalisation (normalize_visual).
  Tensor norm_gamma, norm_beta;

  static VisionProjector init(std::size_t feature_dim, std::size_t hidden_dim,
                              bool normalize, Rng& rng);
  std::size_t feature_dim() const { return w.dim(0); }
};

// features * W + b. Throws ConfigError on a feature_dim mismatch.
Tensor project_regions(const Tensor& features, const VisionProjector& p);
inline Tensor project_regions(const RegionFeatures& r, const VisionProjector& p) {
  return project_regions(r.features, p);
}

// Projection followed by layer_norm when the projector carries norm params.
Tensor embed_regions(const Tensor& features, const VisionProjector& p, double eps);

}  // namespace pat
