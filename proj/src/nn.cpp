#include "hgx/nn.hpp"

#include <cmath>

#include "hgx/error.hpp"

namespace hgx::nn {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "elu") return Activation::Elu;
  if (name == "leakyrelu" || name == "leaky_relu") return Activation::LeakyRelu;
  if (name == "identity" || name == "none") return Activation::Identity;
  fail(ErrorKind::InvalidConfig, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::LeakyRelu: return "leakyrelu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

ad::Var activate(ad::Var x, Activation a) {
  switch (a) {
    case Activation::Relu: return ad::relu(x);
    case Activation::Elu: return ad::elu(x);
    case Activation::LeakyRelu: return ad::leaky_relu(x, 0.2);
    case Activation::Identity: return x;
  }
  return x;
}

Matrix xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

Mlp::Mlp(MlpSpec spec, ad::ParameterSet& params, const std::string& prefix, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) fail(ErrorKind::InvalidConfig, prefix + ": an MLP needs at least one layer");
  for (std::size_t w : spec_.widths)
    if (w == 0) fail(ErrorKind::InvalidConfig, prefix + ": layer widths must be positive");
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    const std::size_t fin = spec_.widths[l], fout = spec_.widths[l + 1];
    weights_.push_back(&params.add(prefix + ".W" + std::to_string(l), xavier_uniform(fin, fout, rng)));
    biases_.push_back(spec_.bias ? &params.add(prefix + ".b" + std::to_string(l), Matrix(1, fout)) : nullptr);
  }
}

ad::Var Mlp::forward(ad::Tape& tape, ad::Var x, double dropout_rate) const {
  if (x.cols() != spec_.in()) {
    fail(ErrorKind::ShapeMismatch,
         "MLP expects " + std::to_string(spec_.in()) + " input columns, got " + std::to_string(x.cols()));
  }
  ad::Var h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ad::matmul(h, tape.param(*weights_[l]));
    if (biases_[l]) h = ad::add_row(h, tape.param(*biases_[l]));
    const bool last = l + 1 == layers;
    if (!last || spec_.activate_output) h = activate(h, spec_.activation);
    if (!last) h = ad::dropout(h, dropout_rate);
  }
  return h;
}

LayerNorm::LayerNorm(std::size_t width, ad::ParameterSet& params, const std::string& prefix, double eps)
    : gain_(&params.add(prefix + ".gain", Matrix(1, width, 1.0))),
      bias_(&params.add(prefix + ".bias", Matrix(1, width))),
      eps_(eps) {}

ad::Var LayerNorm::forward(ad::Tape& tape, ad::Var x) const {
  return ad::layer_norm(x, tape.param(*gain_), tape.param(*bias_), eps_);
}

}  // namespace hgx::nn
