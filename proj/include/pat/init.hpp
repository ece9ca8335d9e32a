#pragma once

#include "pat/tensor.hpp"

namespace pat {

class Rng;

// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
// Unit-variance uniform, U(-sqrt(3), sqrt(3)).
Tensor unit_uniform(Shape shape, Rng& rng);
Tensor zeros_param(Shape shape);
Tensor ones_param(Shape shape);

}  // namespace pat
