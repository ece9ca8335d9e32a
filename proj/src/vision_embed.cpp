#include "pat/vision_embed.hpp"

#include "pat/error.hpp"
#include "pat/init.hpp"
#include "pat/ops.hpp"

namespace pat {

VisionProjector VisionProjector::init(std::size_t feature_dim, std::size_t hidden_dim,
                                      bool normalize, Rng& rng) {
  VisionProjector p;
  p.w = xavier_uniform({feature_dim, hidden_dim}, feature_dim, hidden_dim, rng);
  p.b = zeros_param({hidden_dim});
  if (normalize) {
    p.norm_gamma = ones_param({hidden_dim});
    p.norm_beta = zeros_param({hidden_dim});
  }
  return p;
}

Tensor project_regions(const Tensor& features, const VisionProjector& p) {
  if (features.rank() != 2 || features.dim(1) != p.feature_dim())
    throw ConfigError("region features " + shape_string(features.shape()) +
                      " do not match projector feature_dim: expected " +
                      std::to_string(p.feature_dim()) + ", actual " +
                      std::to_string(features.rank() == 2 ? features.dim(1) : 0));
  return add_bias(matmul(features, p.w), p.b);
}

Tensor embed_regions(const Tensor& features, const VisionProjector& p, double eps) {
  Tensor out = project_regions(features, p);
  if (p.norm_gamma.defined()) out = layer_norm(out, p.norm_gamma, p.norm_beta, eps);
  return out;
}

}  // namespace pat
