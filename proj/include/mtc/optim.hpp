#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "mtc/error.hpp"
#include "mtc/model.hpp"
#include "mtc/tensor.hpp"

namespace mtc::optim {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First and second moment buffers of one parameter.
template <class T>
struct Moments {
  std::vector<T> m;
  std::vector<T> v;
};

/// One decoupled-weight-decay Adam update of `param` at step t (t >= 1):
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
template <class T>
void adamw_step(std::span<T> param, std::span<const T> grad, Moments<T>& state, std::size_t t, double lr,
                const AdamWOptions& o) {
  if (t < 1) throw UsageError("adamw_step: step counter must start at 1");
  if (grad.size() != param.size()) throw DimensionError("adamw_step: grad/param size mismatch");
  if (state.m.size() != param.size()) {
    state.m.assign(param.size(), T(0));
    state.v.assign(param.size(), T(0));
  }
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T inv_bc1 = static_cast<T>(1.0 / bc1), inv_bc2 = static_cast<T>(1.0 / bc2);
  const T step = static_cast<T>(lr), decay = static_cast<T>(lr * o.weight_decay), eps = static_cast<T>(o.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T mhat = state.m[i] * inv_bc1;
    const T vhat = state.v[i] * inv_bc2;
    const T theta = param[i];
    param[i] = theta - step * mhat / (std::sqrt(vhat) + eps) - decay * theta;
  }
}

/// AdamW over a fixed, ordered parameter list.
template <class T>
class AdamW {
 public:
  AdamW(std::vector<model::NamedTensor<T>> params, AdamWOptions opts)
      : params_(std::move(params)), opts_(opts), moments_(params_.size()) {}

  void step(double lr) {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].tensor;
      if (!p.has_grad()) p.zero_grad();
      adamw_step<T>(p.data(), std::as_const(p).grad(), moments_[i], t_, lr, opts_);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t step_count() const { return t_; }
  void set_step_count(std::size_t t) { t_ = t; }
  const AdamWOptions& options() const { return opts_; }
  const std::vector<model::NamedTensor<T>>& params() const { return params_; }
  std::vector<Moments<T>>& moments() { return moments_; }
  const std::vector<Moments<T>>& moments() const { return moments_; }

 private:
  std::vector<model::NamedTensor<T>> params_;
  AdamWOptions opts_;
  std::vector<Moments<T>> moments_;
  std::size_t t_ = 0;
};

}  // namespace mtc::optim
