#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlcl/numerics/graph.hpp"
#include "mlcl/numerics/tensor.hpp"

namespace mlcl {

struct AdamOptions {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment accumulators for a fixed list of parameter shapes.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamOptions opts) : opts_(opts) {}

  const AdamOptions& options() const { return opts_; }
  std::size_t step_count() const { return step_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  /// One bias-corrected ADAM update of params in place.
  void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Tensor* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("adam_step: parameter count changed");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(m_[i])) {
        throw std::invalid_argument("adam_step: shape mismatch for parameter " + std::to_string(i) + " " +
                                    params[i]->shape_string() + " vs grad " + grads[i]->shape_string());
      }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(opts_.beta1, t);
    const double c2 = 1.0 - std::pow(opts_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      auto g = grads[i]->data();
      auto m = m_[i].data();
      auto v = v_[i].data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g[k];
        v[k] = opts_.beta2 * v[k] + (1.0 - opts_.beta2) * g[k] * g[k];
        const double m_hat = m[k] / c1;
        const double v_hat = v[k] / c2;
        p[k] -= opts_.learning_rate * m_hat / (std::sqrt(v_hat) + opts_.epsilon);
      }
    }
  }

  /// Convenience overload over Parameter objects.
  void step(const std::vector<Parameter*>& params) {
    std::vector<Tensor*> values;
    std::vector<const Tensor*> grads;
    for (Parameter* p : params) {
      values.push_back(&p->value);
      grads.push_back(&p->grad);
    }
    step(std::move(values), grads);
  }

 private:
  AdamOptions opts_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t step_ = 0;
};

}  // namespace mlcl
