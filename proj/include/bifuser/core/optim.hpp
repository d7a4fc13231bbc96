#pragma once

#include <cmath>
#include <vector>

#include "bifuser/core/nn.hpp"

namespace bifuser {

/// Cosine annealing from lr0 (step 0) down to lr_min (last step), inclusive
/// at both endpoints.
inline double cosine_lr(Index step, Index total_steps, double lr0, double lr_min) {
  if (total_steps <= 1 || step <= 0) return lr0;
  if (step >= total_steps - 1) return lr_min;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * progress));
}

template <typename S>
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(NamedParams<S>& np, Config cfg = {}) : cfg_(cfg) {
    for (auto& [name, p] : np.params) {
      params_.push_back(p);
      m_.push_back(Tensor<S>::zeros(p->shape()));
      v_.push_back(Tensor<S>::zeros(p->shape()));
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Var<S>* p = params_[i];
      if (!p->has_grad()) continue;
      const auto& g = p->grad().array();
      m_[i].array() = S(cfg_.beta1) * m_[i].array() + S(1.0 - cfg_.beta1) * g;
      v_[i].array() = S(cfg_.beta2) * v_[i].array() + S(1.0 - cfg_.beta2) * g.square();
      p->value().array() -=
          S(lr) * (m_[i].array() / S(bc1)) /
          ((v_[i].array() / S(bc2)).sqrt() + S(cfg_.eps));
    }
  }

  void zero_grad() {
    for (Var<S>* p : params_) p->zero_grad();
  }

  Index step_count() const { return t_; }
  void set_step_count(Index t) { t_ = t; }
  std::vector<Tensor<S>>& first_moments() { return m_; }
  std::vector<Tensor<S>>& second_moments() { return v_; }

 private:
  Config cfg_;
  std::vector<Var<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  Index t_ = 0;
};

}  // namespace bifuser
