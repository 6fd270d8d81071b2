#include "hgx/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hgx/error.hpp"

namespace hgx::prop {

RuleKind parse_rule(std::string_view name) {
  if (name == "ceprop-a" || name == "cepropa") return RuleKind::CePropA;
  if (name == "ceprop-h" || name == "cepropH" || name == "cepropa-h" || name == "ceproph") return RuleKind::CePropH;
  if (name == "zprop") return RuleKind::ZProp;
  if (name == "hprop") return RuleKind::HProp;
  if (name == "hgnn") return RuleKind::Hgnn;
  if (name == "hcha") return RuleKind::Hcha;
  if (name == "hnhn") return RuleKind::Hnhn;
  if (name == "hypergcn") return RuleKind::HyperGcn;
  if (name == "hypersage") return RuleKind::HyperSage;
  fail(ErrorKind::InvalidConfig, "unknown propagation rule '" + std::string(name) + "'");
}

std::string_view to_string(RuleKind kind) noexcept {
  switch (kind) {
    case RuleKind::CePropA: return "ceprop-a";
    case RuleKind::CePropH: return "ceprop-h";
    case RuleKind::ZProp: return "zprop";
    case RuleKind::HProp: return "hprop";
    case RuleKind::Hgnn: return "hgnn";
    case RuleKind::Hcha: return "hcha";
    case RuleKind::Hnhn: return "hnhn";
    case RuleKind::HyperGcn: return "hypergcn";
    case RuleKind::HyperSage: return "hypersage";
  }
  return "unknown";
}

namespace {

void require_rows(const Hypergraph& hg, const Matrix& x) {
  if (x.rows() != hg.num_nodes()) {
    fail(ErrorKind::ShapeMismatch, "features have " + std::to_string(x.rows()) + " rows for " +
                                       std::to_string(hg.num_nodes()) + " nodes");
  }
}

void require_uniform(const Hypergraph& hg, std::size_t d) {
  if (d < 2 || !hg.is_uniform(d)) fail(ErrorKind::NotUniform, "hypergraph is not " + std::to_string(d) + "-uniform");
}

void add_scaled(std::span<double> dst, std::span<const double> src, double s) {
  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += s * src[j];
}

Matrix affine(const Matrix& h, const Affine& a) {
  Matrix out = matmul(h, a.theta);
  if (!a.bias.empty()) {
    if (a.bias.rows() != 1 || a.bias.cols() != out.cols()) fail(ErrorKind::ShapeMismatch, "bias must be 1 x F'");
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += a.bias(0, j);
  }
  return out;
}

void zero_isolated(const Hypergraph& hg, Matrix& out) {
  for (NodeId v = 0; v < hg.num_nodes(); ++v)
    if (hg.degree(v) == 0)
      for (double& val : out.row(v)) val = 0.0;
}

double power_mean_value(double sum_of_powers, std::size_t count, double p) {
  if (count == 0) return 0.0;
  const double mean = sum_of_powers / static_cast<double>(count);
  if (p == 1.0) return mean;
  if (mean < 0.0) fail(ErrorKind::NegativeBase, "power mean of order " + std::to_string(p) + " has a negative base");
  return std::pow(mean, 1.0 / p);
}

double raise(double v, double p) {
  if (std::floor(p) != p && v < 0.0) fail(ErrorKind::NegativeBase, "fractional power of a negative feature");
  return p == 1.0 ? v : std::pow(v, p);
}

}  // namespace

Matrix apply_activation(Matrix m, nn::Activation a) {
  for (double& v : m.data()) {
    switch (a) {
      case nn::Activation::Relu: v = v > 0.0 ? v : 0.0; break;
      case nn::Activation::Elu: v = v > 0.0 ? v : std::expm1(v); break;
      case nn::Activation::LeakyRelu: v = v > 0.0 ? v : 0.2 * v; break;
      case nn::Activation::Identity: break;
    }
  }
  return m;
}

Matrix ce_prop_h(const Hypergraph& hg, const Matrix& x) {
  require_rows(hg, x);
  Matrix out(x.rows(), x.cols());
  for (NodeId v = 0; v < hg.num_nodes(); ++v)
    for (EdgeId e : hg.incident_edges(v))
      for (NodeId u : hg.edge(e)) add_scaled(out.row(v), x.row(u), 1.0);
  return out;
}

Matrix ce_prop_a(const Hypergraph& hg, const Matrix& x) {
  require_rows(hg, x);
  Matrix out(x.rows(), x.cols());
  for (NodeId v = 0; v < hg.num_nodes(); ++v)
    for (EdgeId e : hg.incident_edges(v))
      for (NodeId u : hg.edge(e))
        if (u != v) add_scaled(out.row(v), x.row(u), 1.0);
  return out;
}

Matrix z_prop(const Hypergraph& hg, const Matrix& x, std::size_t d) {
  require_rows(hg, x);
  require_uniform(hg, d);
  Matrix out(x.rows(), x.cols());
  const double factor = static_cast<double>(d - 1);
  for (NodeId v = 0; v < hg.num_nodes(); ++v)
    for (EdgeId e : hg.incident_edges(v))
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double prod = 1.0;
        for (NodeId u : hg.edge(e))
          if (u != v) prod *= x(u, c);
        out(v, c) += factor * prod;
      }
  return out;
}

Matrix h_prop(const Hypergraph& hg, const Matrix& x, std::size_t d) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x.data()[i] > 0.0)) {
      fail(ErrorKind::NonPositiveInput, "Hprop needs strictly positive features; entry " + std::to_string(i) + " is " +
                                            std::to_string(x.data()[i]));
    }
  }
  Matrix out = z_prop(hg, x, d);
  const double root = 1.0 / static_cast<double>(d - 1);
  for (double& v : out.data()) v = std::pow(v, root);
  return out;
}

Matrix hgnn_layer(const Hypergraph& hg, const Matrix& x, const Affine& params, nn::Activation sigma) {
  require_rows(hg, x);
  Matrix agg(x.rows(), x.cols());
  for (NodeId v = 0; v < hg.num_nodes(); ++v) {
    if (hg.degree(v) == 0) continue;
    const double dv = 1.0 / std::sqrt(static_cast<double>(hg.degree(v)));
    for (EdgeId e : hg.incident_edges(v)) {
      const double we = hg.weight(e) / static_cast<double>(hg.edge_size(e));
      for (NodeId u : hg.edge(e)) {
        const double du = 1.0 / std::sqrt(static_cast<double>(hg.degree(u)));
        add_scaled(agg.row(v), x.row(u), dv * we * du);
      }
    }
  }
  Matrix out = apply_activation(affine(agg, params), sigma);
  zero_isolated(hg, out);
  return out;
}

std::vector<double> hcha_attention(const Hypergraph& hg, const Matrix& x, const Matrix* edge_features,
                                   const Matrix& attention) {
  require_rows(hg, x);
  std::vector<double> alpha(hg.num_incidences());
  // Offsets of each edge's block in star_expansion order.
  std::vector<std::size_t> offset(hg.num_edges() + 1, 0);
  for (EdgeId e = 0; e < hg.num_edges(); ++e) offset[e + 1] = offset[e] + hg.edge_size(e);
  auto slot = [&](NodeId u, EdgeId e) {
    const auto members = hg.edge(e);
    std::size_t pos = 0;
    while (members[pos] != u) ++pos;
    return offset[e] + pos;
  };
  if (edge_features == nullptr) {
    for (NodeId u = 0; u < hg.num_nodes(); ++u)
      for (EdgeId e : hg.incident_edges(u)) alpha[slot(u, e)] = 1.0 / static_cast<double>(hg.degree(u));
    return alpha;
  }
  const Matrix& z = *edge_features;
  if (z.rows() != hg.num_edges()) fail(ErrorKind::ShapeMismatch, "edge features must have one row per hyperedge");
  if (attention.size() != x.cols() + z.cols()) {
    fail(ErrorKind::ShapeMismatch, "attention vector must have F + F_e entries");
  }
  const auto& a = attention.data();
  for (NodeId u = 0; u < hg.num_nodes(); ++u) {
    const auto edges = hg.incident_edges(u);
    if (edges.empty()) continue;
    std::vector<double> score(edges.size());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < edges.size(); ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols(); ++j) s += a[j] * x(u, j);
      for (std::size_t j = 0; j < z.cols(); ++j) s += a[x.cols() + j] * z(edges[k], j);
      score[k] = s > 0.0 ? s : 0.2 * s;
      best = std::max(best, score[k]);
    }
    double total = 0.0;
    for (double& s : score) {
      s = std::exp(s - best);
      total += s;
    }
    for (std::size_t k = 0; k < edges.size(); ++k) alpha[slot(u, edges[k])] = score[k] / total;
  }
  return alpha;
}

Matrix hcha_layer(const Hypergraph& hg, const Matrix& x, const Matrix* edge_features, const HchaParams& params) {
  require_rows(hg, x);
  const std::vector<double> alpha = hcha_attention(hg, x, edge_features, params.attention);
  std::vector<std::size_t> offset(hg.num_edges() + 1, 0);
  for (EdgeId e = 0; e < hg.num_edges(); ++e) offset[e + 1] = offset[e] + hg.edge_size(e);
  auto alpha_of = [&](NodeId u, EdgeId e) {
    const auto members = hg.edge(e);
    std::size_t pos = 0;
    while (members[pos] != u) ++pos;
    return alpha[offset[e] + pos];
  };
  Matrix agg(x.rows(), x.cols());
  for (NodeId v = 0; v < hg.num_nodes(); ++v) {
    if (hg.degree(v) == 0) continue;
    const double inv_dv = 1.0 / static_cast<double>(hg.degree(v));
    for (EdgeId e : hg.incident_edges(v)) {
      const double outer = inv_dv * hg.weight(e) * alpha_of(v, e) / static_cast<double>(hg.edge_size(e));
      for (NodeId u : hg.edge(e)) add_scaled(agg.row(v), x.row(u), outer * alpha_of(u, e));
    }
  }
  Matrix out = apply_activation(affine(agg, params.affine), params.sigma);
  zero_isolated(hg, out);
  return out;
}

std::pair<Matrix, Matrix> hnhn_layer(const Hypergraph& hg, const Matrix& x, const HnhnParams& params) {
  require_rows(hg, x);
  Matrix zagg(hg.num_edges(), x.cols());
  for (EdgeId e = 0; e < hg.num_edges(); ++e) {
    double normalizer = 0.0;
    for (NodeId u : hg.edge(e)) normalizer += std::pow(static_cast<double>(hg.degree(u)), params.beta);
    if (normalizer == 0.0) fail(ErrorKind::ZeroNormalizer, "edge " + std::to_string(e) + " has zero normalizer");
    for (NodeId u : hg.edge(e)) {
      add_scaled(zagg.row(e), x.row(u), std::pow(static_cast<double>(hg.degree(u)), params.beta) / normalizer);
    }
  }
  Matrix z = apply_activation(affine(zagg, params.edge_affine), params.sigma);
  Matrix xagg(hg.num_nodes(), z.cols());
  for (NodeId v = 0; v < hg.num_nodes(); ++v) {
    if (hg.degree(v) == 0) continue;
    double normalizer = 0.0;
    for (EdgeId e : hg.incident_edges(v)) {
      normalizer += params.edge_cardinality_normalizer
                        ? std::pow(static_cast<double>(hg.edge_size(e)), params.alpha)
                        : std::pow(static_cast<double>(hg.degree(v)), params.alpha);
    }
    if (normalizer == 0.0) fail(ErrorKind::ZeroNormalizer, "node " + std::to_string(v) + " has zero normalizer");
    for (EdgeId e : hg.incident_edges(v)) {
      add_scaled(xagg.row(v), z.row(e), std::pow(static_cast<double>(hg.edge_size(e)), params.alpha) / normalizer);
    }
  }
  Matrix out = apply_activation(affine(xagg, params.node_affine), params.sigma);
  zero_isolated(hg, out);
  return {std::move(z), std::move(out)};
}

std::pair<NodeId, NodeId> hypergcn_mediator(const Hypergraph& hg, const Matrix& projected, EdgeId e) {
  const auto members = hg.edge(e);
  if (members.size() < 2) fail(ErrorKind::DegenerateEdge, "edge " + std::to_string(e) + " has fewer than 2 nodes");
  double best = -1.0;
  std::pair<NodeId, NodeId> arg{members[0], members[1]};
  // Strict improvement only, so ties keep the lexicographically smallest pair.
  for (std::size_t a = 0; a < members.size(); ++a)
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < projected.cols(); ++j) {
        const double diff = projected(members[a], j) - projected(members[b], j);
        s += diff * diff;
      }
      if (s > best) {
        best = s;
        arg = {members[a], members[b]};
      }
    }
  return arg;
}

std::vector<std::pair<NodeId, NodeId>> hypergcn_mediators(const Hypergraph& hg, const Matrix& x,
                                                          const Matrix& theta) {
  require_rows(hg, x);
  const Matrix projected = matmul(x, theta);
  std::vector<std::pair<NodeId, NodeId>> result;
  result.reserve(hg.num_edges());
  for (EdgeId e = 0; e < hg.num_edges(); ++e) result.push_back(hypergcn_mediator(hg, projected, e));
  return result;
}

double hypergcn_weight(const Hypergraph& hg, EdgeId e, std::pair<NodeId, NodeId> mediators, NodeId u, NodeId v) {
  if (u == v) return 0.0;
  const bool touches = u == mediators.first || u == mediators.second || v == mediators.first || v == mediators.second;
  if (!touches) return 0.0;
  return 1.0 / (2.0 * static_cast<double>(hg.edge_size(e)) - 3.0);
}

Matrix hypergcn_layer(const Hypergraph& hg, const Matrix& x, const Affine& params, nn::Activation sigma) {
  const auto mediators = hypergcn_mediators(hg, x, params.theta);
  Matrix agg(x.rows(), x.cols());
  for (NodeId v = 0; v < hg.num_nodes(); ++v)
    for (EdgeId e : hg.incident_edges(v))
      for (NodeId u : hg.edge(e)) {
        const double w = hypergcn_weight(hg, e, mediators[e], u, v);
        if (w != 0.0) add_scaled(agg.row(v), x.row(u), w);
      }
  Matrix out = apply_activation(affine(agg, params), sigma);
  zero_isolated(hg, out);
  return out;
}

Matrix hypersage_layer(const Hypergraph& hg, const Matrix& x, const Matrix& theta, double p, nn::Activation sigma) {
  require_rows(hg, x);
  if (p < 1.0) fail(ErrorKind::InvalidConfig, "HyperSAGE power must be >= 1");
  const std::size_t f = x.cols();
  Matrix z(hg.num_edges(), f);
  for (EdgeId e = 0; e < hg.num_edges(); ++e)
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      for (NodeId u : hg.edge(e)) s += raise(x(u, j), p);
      z(e, j) = power_mean_value(s, hg.edge_size(e), p);
    }
  Matrix star(hg.num_nodes(), f);
  for (NodeId v = 0; v < hg.num_nodes(); ++v) {
    double norm = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      double s = 0.0;
      for (EdgeId e : hg.incident_edges(v)) s += raise(z(e, j), p);
      star(v, j) = power_mean_value(s, hg.degree(v), p) + x(v, j);
      norm += star(v, j) * star(v, j);
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) fail(ErrorKind::ZeroNormRow, "node " + std::to_string(v) + " aggregates to a zero row");
    for (std::size_t j = 0; j < f; ++j) star(v, j) /= norm;
  }
  return apply_activation(matmul(star, theta), sigma);
}

}  // namespace hgx::prop
