#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "caad/rng.hpp"
#include "caad/tensor.hpp"

namespace caad::testing {

// Central finite differences of a scalar-valued function with respect to one
// leaf tensor. The function must rebuild its graph on every call.
inline std::vector<double> finite_diff(ad::Tensor leaf, const std::function<double()>& f,
                                       double step = 1e-5) {
  std::vector<double> grad(leaf.values().size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double saved = leaf.values()[i];
    leaf.values()[i] = saved + step;
    const double up = f();
    leaf.values()[i] = saved - step;
    const double down = f();
    leaf.values()[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

inline bool close(double a, double b, double rtol, double atol = 1e-9) {
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

inline ad::Tensor random_leaf(ad::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(ad::numel(shape)));
  for (double& x : v) x = rng.normal(0.0, scale);
  return ad::Tensor::leaf(std::move(shape), std::move(v), true);
}

}  // namespace caad::testing
