#pragma once

#include <cmath>
#include <vector>

#include "hiervid/params.hpp"

namespace hiervid {

// Bias-corrected Adam. Moments live per parameter in registration order and
// persist across training stages unless explicitly reset.
template <class T>
class Adam {
 public:
  explicit Adam(const ParamStore<T>& params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& [name, t] : params.items()) {
      m_.emplace_back(static_cast<size_t>(t.numel()), T(0));
      v_.emplace_back(static_cast<size_t>(t.numel()), T(0));
    }
  }

  // Applies one update from the gradients currently held by the parameters.
  void step(ParamStore<T>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t p = 0; p < params.items().size(); ++p) {
      Tensor<T> param = params.items()[p].second;
      const std::vector<T>& g = param.grad();
      std::vector<T>& m = m_[p];
      std::vector<T>& v = v_[p];
      T* w = param.data();
      for (size_t i = 0; i < g.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) -
                              lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void reset() {
    t_ = 0;
    for (auto& m : m_) std::fill(m.begin(), m.end(), T(0));
    for (auto& v : v_) std::fill(v.begin(), v.end(), T(0));
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace hiervid
