#pragma once

#include <cstdint>
#include <vector>

#include "hgx/autodiff.hpp"

namespace hgx {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay:
///   w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}

  /// Applies one update using p.grad for every parameter. Moment buffers are
  /// created on the first call and must keep matching the parameter shapes.
  void step(ad::ParameterSet& params);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace hgx
