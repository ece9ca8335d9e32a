#include "pat/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pat/error.hpp"
#include "pat/rng.hpp"

namespace pat {
namespace {

double evaluate(const std::function<Tensor()>& loss) {
  const Tensor value = loss();
  const double v = value.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Parameter> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    p.value.set_requires_grad(true);
    p.value.zero_grad();
  }
  {
    const Tensor l = loss();
    if (!std::isfinite(l.item()))
      throw NumericError("grad_check: loss evaluated to a non-finite value");
    l.backward();
  }

  GradCheckReport report;
  report.tol = options.tol;
  Rng rng(options.seed);
  NoGradGuard no_grad;
  for (auto& p : params) {
    ParamCheck check;
    check.name = p.name;
    const std::size_t n = p.value.numel();
    std::vector<double> analytic(n, 0.0);
    if (p.value.has_grad()) std::ranges::copy(p.value.grad(), analytic.begin());

    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (n > options.max_elements) {
      rng.shuffle(std::span<std::size_t>(indices));
      indices.resize(options.sample_size);
      std::ranges::sort(indices);
    }

    auto data = p.value.mutable_data();
    for (std::size_t idx : indices) {
      const double original = data[idx];
      data[idx] = original + options.eps;
      const double plus = evaluate(loss);
      data[idx] = original - options.eps;
      const double minus = evaluate(loss);
      data[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double denom =
          std::max({std::abs(analytic[idx]), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(analytic[idx] - numeric) / denom;
      if (rel > check.max_rel_error || check.checked == 0) {
        check.max_rel_error = rel;
        check.worst_index = idx;
        check.worst_analytic = analytic[idx];
        check.worst_numeric = numeric;
      }
      ++check.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace pat
