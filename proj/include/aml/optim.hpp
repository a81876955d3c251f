#pragma once

// Adam with bias correction. Default beta2 is 0.9 (not the usual 0.999);
// that is the published training recipe this system reproduces.

#include "aml/layers.hpp"

namespace aml {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9;
  double eps = 1e-8;

  void validate() const {
    check(lr > 0 && eps > 0, "learning rate and epsilon must be positive");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1,
          "betas must lie in [0,1)");
  }
};

template <typename T>
class Adam {
 public:
  explicit Adam(const ParamMap<T>& params, AdamConfig cfg = {})
      : params_(params), cfg_(cfg) {
    cfg.validate();
    for (auto& [name, v] : params_.items) {
      m_.emplace_back(v->value.shape(), T(0));
      v_.emplace_back(v->value.shape(), T(0));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.items.size(); ++pi) {
      auto& [name, p] = params_.items[pi];
      if (p->grad.empty()) continue;  // never reached by any graph
      std::int64_t bad = p->grad.first_nonfinite();
      if (bad >= 0)
        fail("optimizer: non-finite gradient in parameter " + name +
             " at flat index " + std::to_string(bad));
      Tensor<T>& m = m_[pi];
      Tensor<T>& v = v_[pi];
      for (std::int64_t i = 0; i < p->value.numel(); ++i) {
        double g = p->grad[i];
        double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
        p->value[i] = static_cast<T>(p->value[i] - update);
      }
    }
  }

  void zero_grad() { params_.zero_grad(); }

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<Tensor<T>>& moment1() { return m_; }
  std::vector<Tensor<T>>& moment2() { return v_; }
  const ParamMap<T>& params() const { return params_; }

 private:
  ParamMap<T> params_;
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace aml
