#include "pat/init.hpp"

#include <cmath>

#include "pat/rng.hpp"

namespace pat {

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor unit_uniform(Shape shape, Rng& rng) {
  const double a = std::sqrt(3.0);
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

}  // namespace pat
