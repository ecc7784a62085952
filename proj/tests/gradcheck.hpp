#pragma once

// Central finite-difference oracle for backward-pass checks. Lives in test
// code only and never calls into any backward implementation: numeric
// gradients come from re-running the forward closure with nudged values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ape/tensor.hpp"

namespace ape::testing {

inline Real rel_err(Real a, Real b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), Real(1.0)});
}

// forward() must be deterministic and must not depend on an active tape.
// Returns the max relative error between tape gradients and central
// differences over every element of every param.
inline Real max_grad_check_err(const std::function<Tensor()>& forward,
                               const std::vector<Tensor*>& params, Real h = 1e-5) {
  zero_grads(params);
  Tape tape;
  {
    Recording rec(tape);
    Tensor loss = forward();
    tape.backward(loss);
  }
  Real worst = 0.0;
  for (Tensor* p : params) {
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const Real saved = (*p->values)[i];
      (*p->values)[i] = saved + h;
      const Real up = forward().item();
      (*p->values)[i] = saved - h;
      const Real down = forward().item();
      (*p->values)[i] = saved;
      const Real numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err((*p->grad)[i], numeric));
    }
  }
  return worst;
}

inline Tensor random_param(const Shape& shape, Rng& rng, Real lo = -1.0, Real hi = 1.0) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::param(shape, std::move(v));
}

}  // namespace ape::testing
