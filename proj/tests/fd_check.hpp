#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "aif/tensor.hpp"

// Central finite-difference gradient oracle, double precision only.
// Independent of the tape: it re-evaluates the loss closure at perturbed
// inputs with the tape disabled. Pass criterion per element:
//   |analytic - numeric| <= tol * max(1, |analytic|, |numeric|)

namespace aif_test {

inline double fd_max_rel_err(const std::vector<aif::Tensor<double>*>& inputs,
                             const std::function<aif::Tensor<double>()>& loss_fn, double h_scale = 1e-5) {
  for (auto* t : inputs) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto* t : inputs)
    analytic.push_back(t->has_grad() ? t->grad() : std::vector<double>(t->data().size(), 0.0));

  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto* t = inputs[ti];
    for (std::size_t i = 0; i < t->data().size(); ++i) {
      const double x0 = t->data()[i];
      const double h = h_scale * std::max(1.0, std::abs(x0));
      double fp = 0.0, fm = 0.0;
      {
        aif::NoGradGuard ng;
        t->data()[i] = x0 + h;
        fp = loss_fn().item();
        t->data()[i] = x0 - h;
        fm = loss_fn().item();
        t->data()[i] = x0;
      }
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[ti][i];
      const double err = std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace aif_test
