#include "hgx/optim.hpp"

#include <cmath>

#include "hgx/error.hpp"

namespace hgx {

void Adam::step(ad::ParameterSet& params) {
  if (first_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_.emplace_back(params[i].value.rows(), params[i].value.cols());
      second_.emplace_back(params[i].value.rows(), params[i].value.cols());
    }
  }
  if (first_.size() != params.size()) fail(ErrorKind::ShapeMismatch, "parameter count changed between Adam steps");
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = params[i];
    if (!p.value.same_shape(p.grad) || !p.value.same_shape(first_[i])) {
      fail(ErrorKind::ShapeMismatch, "Adam: gradient or moment shape differs for " + p.name);
    }
    auto& w = p.value.data();
    const auto& g = p.grad.data();
    auto& m = first_[i].data();
    auto& v = second_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps) + options_.lr * options_.weight_decay * w[k];
    }
  }
}

}  // namespace hgx
