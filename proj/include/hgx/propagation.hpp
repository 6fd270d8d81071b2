#pragma once

// Reference (non-differentiable) implementations of the fixed propagation
// rules, written node-wise as double sums over the incidence structure. They
// serve as baselines and as oracles for the AllSet compositions.

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "hgx/hypergraph.hpp"
#include "hgx/matrix.hpp"
#include "hgx/nn.hpp"

namespace hgx::prop {

enum class RuleKind { CePropA, CePropH, ZProp, HProp, Hgnn, Hcha, Hnhn, HyperGcn, HyperSage };

RuleKind parse_rule(std::string_view name);
std::string_view to_string(RuleKind kind) noexcept;

/// X'_v = sum_{e ∋ v} sum_{u ∈ e} X_u
Matrix ce_prop_h(const Hypergraph& hg, const Matrix& x);
/// X'_v = sum_{e ∋ v} sum_{u ∈ e \ v} X_u
Matrix ce_prop_a(const Hypergraph& hg, const Matrix& x);
/// X'_v = sum_{e ∋ v} (d - 1) prod_{u ∈ e \ v} X_u, column by column.
Matrix z_prop(const Hypergraph& hg, const Matrix& x, std::size_t d);
/// Elementwise (d-1)-th root of z_prop; every input entry must be > 0.
Matrix h_prop(const Hypergraph& hg, const Matrix& x, std::size_t d);

/// Theta (F x F') with optional 1 x F' bias (empty matrix = no bias).
struct Affine {
  Matrix theta;
  Matrix bias;
};

Matrix apply_activation(Matrix m, nn::Activation a);

/// HGNN: sigma([d_v^{-1/2} sum_{e∋v} (w_e/|e|) sum_{u∈e} d_u^{-1/2} X_u] Theta + b).
/// Nodes of degree 0 produce zero rows.
Matrix hgnn_layer(const Hypergraph& hg, const Matrix& x, const Affine& affine,
                  nn::Activation sigma = nn::Activation::Relu);

struct HchaParams {
  Affine affine;
  /// Attention vector a of length F + F_e (stored as a column).
  Matrix attention;
  nn::Activation sigma = nn::Activation::Relu;
};

/// alpha_{ue}, softmax over the edges incident to u of leakyrelu(a^T [X_u || Z_e]).
/// Returned in star_expansion order (edge-major). Without edge features every
/// alpha_{ue} = 1 / d_u.
std::vector<double> hcha_attention(const Hypergraph& hg, const Matrix& x, const Matrix* edge_features,
                                   const Matrix& attention);

/// HCHA: sigma([d_v^{-1} sum_{e∋v} (w_e alpha_ve/|e|) sum_{u∈e} alpha_ue X_u] Theta + b).
/// Without edge features the attention is uniform. Degree-0 nodes produce zero rows.
Matrix hcha_layer(const Hypergraph& hg, const Matrix& x, const Matrix* edge_features, const HchaParams& params);

struct HnhnParams {
  Affine edge_affine;
  Affine node_affine;
  double alpha = 0.0;
  double beta = 0.0;
  /// false: node normalizer sum_{e∋v} d_v^alpha (as printed);
  /// true:  node normalizer sum_{e∋v} |e|^alpha.
  bool edge_cardinality_normalizer = false;
  nn::Activation sigma = nn::Activation::Relu;
};

/// Returns (Z', X'). Degree-0 nodes produce zero rows of X'.
std::pair<Matrix, Matrix> hnhn_layer(const Hypergraph& hg, const Matrix& x, const HnhnParams& params);

/// (i_e, j_e) maximizing ||(X_u - X_v) Theta|| over pairs u < v of e; ties go to
/// the lexicographically smallest pair. Throws DegenerateEdge for |e| < 2.
std::vector<std::pair<NodeId, NodeId>> hypergcn_mediators(const Hypergraph& hg, const Matrix& x,
                                                          const Matrix& theta);
/// Mediator pair of one edge (|e| >= 2) from already-projected rows X Theta.
std::pair<NodeId, NodeId> hypergcn_mediator(const Hypergraph& hg, const Matrix& projected, EdgeId e);
/// w_{uv,e} for u != v: 1/(2|e|-3) if u or v is a mediator of e, else 0.
double hypergcn_weight(const Hypergraph& hg, EdgeId e, std::pair<NodeId, NodeId> mediators, NodeId u, NodeId v);

/// HyperGCN: sigma([sum_{e∋v} sum_{u∈e\v} w_{uv,e} X_u] Theta + b).
Matrix hypergcn_layer(const Hypergraph& hg, const Matrix& x, const Affine& affine,
                      nn::Activation sigma = nn::Activation::Relu);

/// HyperSAGE with power-mean aggregation of order p >= 1:
///   Z_e = pmean_p{X_u : u∈e},  X*_v = pmean_p{Z_e : e∋v} + X_v,
///   X'_v = sigma((X*_v / ||X*_v||) Theta).
/// The empty power mean (isolated node) is taken as zero.
Matrix hypersage_layer(const Hypergraph& hg, const Matrix& x, const Matrix& theta, double p,
                       nn::Activation sigma = nn::Activation::Relu);

}  // namespace hgx::prop
