#pragma once

// Central-difference gradient checking for autodiff graphs.

#include <functional>
#include <string>

#include "aml/autodiff.hpp"

namespace aml {

template <typename T>
struct GradCheckReport {
  T max_rel_err = T(0);
  std::size_t worst_param = 0;   // index into the checked parameter list
  std::int64_t worst_elem = -1;  // flat element index within that parameter
  T analytic = T(0);
  T numeric = T(0);

  bool ok(T tol) const { return worst_elem < 0 || max_rel_err < tol; }
};

// fn rebuilds the graph from the current parameter values and returns the
// scalar output. Every element of every parameter is perturbed by +/-eps.
template <typename T>
GradCheckReport<T> gradient_check(const std::function<Var<T>()>& fn,
                                  const std::vector<Var<T>>& params,
                                  T eps = static_cast<T>(1e-4)) {
  for (auto& p : params) {
    check(static_cast<bool>(p), "gradient_check: null parameter");
    p->zero_grad();
  }
  Var<T> out = fn();
  check(out->value.numel() == 1, "gradient_check: function output must be scalar");
  backward(out);

  std::vector<Tensor<T>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params)
    analytic.push_back(p->grad.numel() ? p->grad : Tensor<T>(p->value.shape(), T(0)));

  auto eval = [&]() -> T {
    Var<T> y = fn();
    check(y->value.numel() == 1, "gradient_check: function output must be scalar");
    return y->value[0];
  };

  GradCheckReport<T> rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& val = params[pi]->value;
    for (std::int64_t i = 0; i < val.numel(); ++i) {
      const T saved = val[i];
      val[i] = saved + eps;
      T fp = eval();
      val[i] = saved - eps;
      T fm = eval();
      val[i] = saved;
      T num = (fp - fm) / (T(2) * eps);
      T ana = analytic[pi][i];
      T denom = std::max({std::abs(ana), std::abs(num), static_cast<T>(1e-8)});
      T rel = std::abs(ana - num) / denom;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = pi;
        rep.worst_elem = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

template <typename T>
std::string describe(const GradCheckReport<T>& rep) {
  if (rep.worst_elem < 0) return "no parameters checked";
  return "max_rel_err=" + std::to_string(rep.max_rel_err) + " at param " +
         std::to_string(rep.worst_param) + " elem " +
         std::to_string(rep.worst_elem) + " (analytic " +
         std::to_string(rep.analytic) + ", numeric " +
         std::to_string(rep.numeric) + ")";
}

}  // namespace aml
