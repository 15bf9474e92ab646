#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and keyed by position in the parameter list.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions o = {}) : o_(o) {}

  void step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, double lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Tensor<T>* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter list changed");
    ++t_;
    const double c1 = 1 - std::pow(o_.beta1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(o_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Tensor<T>& p = *params[k];
      const Tensor<T>& g = grads[k];
      if (g.shape() != p.shape()) throw ShapeError("Adam: gradient shape mismatch");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        const double m = o_.beta1 * m_[k][i] + (1 - o_.beta1) * gi;
        const double v = o_.beta2 * v_[k][i] + (1 - o_.beta2) * gi * gi;
        m_[k][i] = static_cast<T>(m);
        v_[k][i] = static_cast<T>(v);
        p[i] = static_cast<T>(p[i] - lr * (m / c1) / (std::sqrt(v / c2) + o_.eps));
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  AdamOptions o_;
  std::size_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace ecoc
