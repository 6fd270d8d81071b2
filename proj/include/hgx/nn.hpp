#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hgx/autodiff.hpp"
#include "hgx/rng.hpp"

namespace hgx::nn {

enum class Activation { Relu, Elu, LeakyRelu, Identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a) noexcept;
ad::Var activate(ad::Var x, Activation a);

/// widths = {in, hidden..., out}; activation is applied between layers and,
/// when activate_output is set, after the last one too.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation activation = Activation::Relu;
  bool bias = true;
  bool activate_output = false;

  std::size_t in() const { return widths.front(); }
  std::size_t out() const { return widths.back(); }
};

/// Xavier-uniform fill for a fan_in x fan_out weight.
Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Row-wise multilayer perceptron; the same map is applied to every row.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, ad::ParameterSet& params, const std::string& prefix, Rng& rng);

  /// Dropout (if rate > 0 and the tape is training) is applied to hidden activations.
  ad::Var forward(ad::Tape& tape, ad::Var x, double dropout_rate = 0.0) const;

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t in() const { return spec_.in(); }
  std::size_t out() const { return spec_.out(); }
  bool empty() const noexcept { return weights_.empty(); }

  ad::Parameter& weight(std::size_t layer) { return *weights_[layer]; }
  ad::Parameter* bias(std::size_t layer) { return biases_[layer]; }

 private:
  MlpSpec spec_;
  std::vector<ad::Parameter*> weights_;
  std::vector<ad::Parameter*> biases_;  // null entries when bias is disabled
};

/// Learnable gain (init 1) and bias (init 0) for a row-wise layer norm.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::size_t width, ad::ParameterSet& params, const std::string& prefix, double eps = 1e-5);

  ad::Var forward(ad::Tape& tape, ad::Var x) const;

 private:
  ad::Parameter* gain_ = nullptr;
  ad::Parameter* bias_ = nullptr;
  double eps_ = 1e-5;
};

}  // namespace hgx::nn
