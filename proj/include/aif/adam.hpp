#pragma once

#include <cmath>
#include <vector>

#include "aif/tensor.hpp"

namespace aif {

// Adam with bias correction over a fixed list of named parameters.
// Parameters without a populated gradient are treated as zero-gradient
// (moments still decay). A NaN gradient aborts, naming the parameter.
template <class T>
class Adam {
 public:
  explicit Adam(std::vector<Param<T>> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    check(lr_ >= 0.0, "adam: learning rate must be >= 0");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.value.numel(), T(0));
      v_.emplace_back(p.value.numel(), T(0));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = params_[pi];
      auto& data = p.value.data();
      const bool has_g = p.value.has_grad();
      const std::vector<T>* g = has_g ? &p.value.grad() : nullptr;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double gi = has_g ? static_cast<double>((*g)[i]) : 0.0;
        if (std::isnan(gi))
          throw std::runtime_error("adam: NaN gradient in parameter '" + p.name + "' at element " +
                                   std::to_string(i));
        double m = beta1_ * static_cast<double>(m_[pi][i]) + (1.0 - beta1_) * gi;
        double v = beta2_ * static_cast<double>(v_[pi][i]) + (1.0 - beta2_) * gi * gi;
        m_[pi][i] = static_cast<T>(m);
        v_[pi][i] = static_cast<T>(v);
        const double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        data[i] = static_cast<T>(static_cast<double>(data[i]) - update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) {
    check(lr >= 0.0, "adam: learning rate must be >= 0");
    lr_ = lr;
  }
  std::int64_t step_count() const { return t_; }
  const std::vector<Param<T>>& params() const { return params_; }

 private:
  std::vector<Param<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace aif
