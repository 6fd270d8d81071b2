#pragma once

// AllSet layers: one layer is a pair of multiset functions, node -> hyperedge
// then hyperedge -> node. Multisets are evaluated in batches: every multiset
// element is one row of `rows`, tagged with the segment (multiset) it belongs
// to, so a whole hypergraph is one call.

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hgx/autodiff.hpp"
#include "hgx/hypergraph.hpp"
#include "hgx/nn.hpp"
#include "hgx/rng.hpp"

namespace hgx::allset {

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

enum class Direction { NodeToEdge, EdgeToNode };

/// The current layer inputs. `z` may be an invalid Var when there are no
/// hyperedge states (treated as absent, i.e. the all-zero matrix).
struct LayerContext {
  const Hypergraph* hg = nullptr;
  ad::Var x;
  ad::Var z;
};

struct MultisetBatch {
  LayerContext ctx;
  Direction direction = Direction::NodeToEdge;
  ad::Var rows;
  std::vector<std::size_t> segment;  // per row
  std::size_t segments = 0;
  // Identity of each row: for NodeToEdge rows are member nodes of edge row_edge;
  // for EdgeToNode rows are states of edge row_edge seen by node row_node.
  std::vector<NodeId> row_node;
  std::vector<EdgeId> row_edge;
  // The node/edge each segment aggregates for (kNone when not applicable).
  std::vector<NodeId> segment_node;
  std::vector<EdgeId> segment_edge;
  /// Second argument, one row per segment; may be invalid.
  ad::Var second;
  /// When valid, rows == source[source_index]; lets row-wise maps run once per
  /// distinct node/edge instead of once per incidence.
  ad::Var source;
  std::vector<std::size_t> source_index;

  std::vector<std::size_t> segment_sizes() const;
};

/// mlp applied to every row of batch.rows. Uses the source rows when that is
/// exact, i.e. unless dropout is active on a training tape.
ad::Var map_rows(ad::Tape& tape, const MultisetBatch& batch, const nn::Mlp& mlp, double dropout = 0.0);

class MultisetFunction {
 public:
  virtual ~MultisetFunction() = default;
  /// One output row per segment.
  virtual ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const = 0;
  virtual std::string name() const = 0;
};

using FunctionPtr = std::shared_ptr<const MultisetFunction>;

/// Zeroes the rows of empty segments.
ad::Var mask_empty(ad::Var out, const MultisetBatch& batch);

// ---- parameter-free aggregators ----------------------------------------------

class SumFunction final : public MultisetFunction {
 public:
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "sum"; }
};

class MeanFunction final : public MultisetFunction {
 public:
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "mean"; }
};

/// Per-column product; with scale_by_edge_size the result is multiplied by
/// |e| - 1 for the segment's hyperedge e (the Zprop coefficient).
class ProductFunction final : public MultisetFunction {
 public:
  explicit ProductFunction(bool scale_by_edge_size = false) : scale_(scale_by_edge_size) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "product"; }

 private:
  bool scale_;
};

/// (mean of s^p)^(1/p) per column; p = 1 is the plain mean.
class PowerMeanFunction final : public MultisetFunction {
 public:
  explicit PowerMeanFunction(double p) : p_(p) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "power-mean"; }

 private:
  double p_;
};

/// Differentiable power mean over segments; empty segments give zero rows.
ad::Var power_mean(ad::Tape& tape, ad::Var rows, const MultisetBatch& batch, double p);

// ---- learnable pieces ----------------------------------------------------------

/// h Theta + b followed by sigma; theta/bias live in a ParameterSet.
struct AffineMap {
  ad::Parameter* theta = nullptr;
  ad::Parameter* bias = nullptr;  // optional
  nn::Activation sigma = nn::Activation::Identity;

  static AffineMap create(ad::ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                          bool bias, nn::Activation sigma, Rng& rng);
  bool empty() const noexcept { return theta == nullptr; }
  ad::Var forward(ad::Tape& tape, ad::Var h) const;
};

/// Fixed rule weights from the hypergraph (degrees, sizes, w_e).
enum class WeightRule {
  HgnnNodeToEdge,  // 1 / sqrt(d_u)
  HgnnEdgeToNode,  // w_e / (|e| sqrt(d_v))
  HnhnNodeToEdge,  // d_u^beta / sum_{u' in e} d_u'^beta
  HnhnEdgeToNode,  // |e|^alpha / (sum_{e ∋ v} d_v^alpha  or  sum_{e ∋ v} |e|^alpha)
};

struct HnhnExponents {
  double alpha = 0.0;
  double beta = 0.0;
  bool edge_cardinality_normalizer = false;
};

/// sum of rule-weighted rows, then an optional affine map + activation.
/// Empty segments give zero rows.
class WeightedSumFunction final : public MultisetFunction {
 public:
  WeightedSumFunction(WeightRule rule, AffineMap post = {}, HnhnExponents hnhn = {})
      : rule_(rule), post_(post), hnhn_(hnhn) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "weighted-sum"; }
  std::vector<double> weights(const MultisetBatch& batch) const;

 private:
  WeightRule rule_;
  AffineMap post_;
  HnhnExponents hnhn_;
};

/// alpha_ue per (row_node, row_edge) pair of a batch: softmax over the edges of
/// u of leakyrelu(a^T [X_u || Z_e]). `attention` holds a as an (F + F_e) x 1
/// column; without hyperedge states only the first F entries are used.
ad::Var hcha_alpha(ad::Tape& tape, const LayerContext& ctx, std::span<const NodeId> nodes,
                   std::span<const EdgeId> edges, ad::Parameter& attention);

/// sum_{u in e} alpha_ue X_u
class HchaNodeToEdge final : public MultisetFunction {
 public:
  explicit HchaNodeToEdge(ad::Parameter* attention) : attention_(attention) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "hcha-v2e"; }

 private:
  ad::Parameter* attention_;
};

/// sigma([d_v^-1 sum_{e ∋ v} w_e alpha_ve Z_e / |e|] Theta + b)
class HchaEdgeToNode final : public MultisetFunction {
 public:
  HchaEdgeToNode(ad::Parameter* attention, AffineMap post) : attention_(attention), post_(post) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "hcha-e2v"; }

 private:
  ad::Parameter* attention_;
  AffineMap post_;
};

/// Per-aggregator (node, edge) segments: sum_{u in e\v} w_{uv,e} X_u with the
/// mediator weights, mediators chosen with the Theta of `theta`. Edges with
/// fewer than two nodes contribute nothing.
class HyperGcnNodeToEdge final : public MultisetFunction {
 public:
  explicit HyperGcnNodeToEdge(ad::Parameter* theta) : theta_(theta) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "hypergcn-v2e"; }

 private:
  ad::Parameter* theta_;
};

/// sigma(sum of rows, then affine) — the plain sum followed by a linear layer.
class SumAffineFunction final : public MultisetFunction {
 public:
  explicit SumAffineFunction(AffineMap post) : post_(post) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "sum-affine"; }

 private:
  AffineMap post_;
};

/// sigma((P / ||P||) Theta) with P = power-mean(rows) + second argument.
class HyperSageEdgeToNode final : public MultisetFunction {
 public:
  HyperSageEdgeToNode(double p, AffineMap post) : p_(p), post_(post) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "hypersage-e2v"; }

 private:
  double p_;
  AffineMap post_;
};

/// MLP(sum_{s in S} MLP(s)); with `residual` the second argument is
/// concatenated to the pooled sum before the outer MLP.
class DeepSetsFunction final : public MultisetFunction {
 public:
  DeepSetsFunction(nn::Mlp inner, nn::Mlp outer, bool residual = false, double dropout = 0.0)
      : inner_(std::move(inner)), outer_(std::move(outer)), residual_(residual), dropout_(dropout) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "deepsets"; }

  /// Convenience builder: inner {in, hidden.., width}, outer {width(+second), hidden.., width}.
  static std::shared_ptr<DeepSetsFunction> create(ad::ParameterSet& params, const std::string& prefix,
                                                  std::size_t in, std::size_t width, std::size_t mlp_layers,
                                                  Rng& rng, std::size_t second_width = 0, double dropout = 0.0);

 private:
  nn::Mlp inner_;
  nn::Mlp outer_;
  bool residual_;
  double dropout_;
};

struct SetTransformerSpec {
  std::size_t in = 0;
  std::size_t heads = 1;
  std::size_t head_dim = 0;
  /// Layers in each key/value map; 1 = bias-free linear projection.
  std::size_t kv_layers = 1;
  double dropout = 0.0;
  double ln_eps = 1e-5;

  std::size_t width() const { return heads * head_dim; }
};

/// LN(Y + MLP(Y)), Y = LN(theta + MH(theta, S, S)) with a learnable seed query
/// theta (1 x h F_h) and per-head softmax attention; empty segments give zero rows.
class SetTransformerFunction final : public MultisetFunction {
 public:
  SetTransformerFunction(const SetTransformerSpec& spec, ad::ParameterSet& params, const std::string& prefix,
                         Rng& rng);
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override;
  std::string name() const override { return "settransformer"; }

  const SetTransformerSpec& spec() const noexcept { return spec_; }
  /// Softmax weights of one head, one per batch row.
  ad::Var attention(ad::Tape& tape, const MultisetBatch& batch, std::size_t head) const;

 private:
  SetTransformerSpec spec_;
  std::vector<nn::Mlp> keys_;
  std::vector<nn::Mlp> values_;
  ad::Parameter* seed_ = nullptr;
  nn::LayerNorm ln_attention_;
  nn::LayerNorm ln_output_;
  nn::Mlp post_;
};

/// Eq-style standalone evaluations on one multiset (rows of s).
Matrix alldeepsets_f(const nn::Mlp& inner, const nn::Mlp& outer, const Matrix& s);
Matrix allsettransformer_f(const SetTransformerFunction& f, const Matrix& s);

// ---- layers ------------------------------------------------------------------------

enum class Variant { Shared, PerAggregator };

struct LayerOutput {
  /// Shared: |E| rows. PerAggregator: one row per (node, edge) incidence in
  /// node-major order (see per_aggregator_pairs).
  ad::Var z;
  ad::Var x;
};

/// Incidences ordered by node, then edge.
std::vector<std::pair<NodeId, EdgeId>> per_aggregator_pairs(const Hypergraph& hg);

class AllSetLayer {
 public:
  /// The per-aggregator variant materializes sum_e |e|(|e|-1) rows; above this
  /// many it refuses with TooLarge.
  static constexpr std::size_t kMaxPerAggregatorRows = 2'000'000;

  AllSetLayer(FunctionPtr v2e, FunctionPtr e2v, Variant variant = Variant::Shared)
      : v2e_(std::move(v2e)), e2v_(std::move(e2v)), variant_(variant) {}

  ad::Var v2e_forward(ad::Tape& tape, const Hypergraph& hg, ad::Var x, ad::Var z_prev) const;
  /// z_prev (the hyperedge states before this layer) is only read by functions
  /// that look at the layer context, e.g. HCHA attention.
  ad::Var e2v_forward(ad::Tape& tape, const Hypergraph& hg, ad::Var z, ad::Var x_prev, ad::Var z_prev = {}) const;
  LayerOutput forward(ad::Tape& tape, const Hypergraph& hg, ad::Var x, ad::Var z_prev = {}) const;

  Variant variant() const noexcept { return variant_; }
  const MultisetFunction& v2e() const { return *v2e_; }
  const MultisetFunction& e2v() const { return *e2v_; }

  /// Batches as the layer builds them (exposed for tests and tooling).
  MultisetBatch v2e_batch(ad::Tape& tape, const Hypergraph& hg, ad::Var x, ad::Var z_prev) const;
  MultisetBatch e2v_batch(ad::Tape& tape, const Hypergraph& hg, ad::Var z, ad::Var x_prev,
                          ad::Var z_prev = {}) const;

 private:
  FunctionPtr v2e_;
  FunctionPtr e2v_;
  Variant variant_;
};

// ---- networks ------------------------------------------------------------------------

enum class ModelKind { AllSetTransformer, AllDeepSets, Mlp, Hgnn, Hnhn, Hcha, HyperGcn, HyperSage };

ModelKind parse_model(std::string_view name);
std::string_view to_string(ModelKind kind) noexcept;

struct NetworkConfig {
  ModelKind kind = ModelKind::AllSetTransformer;
  std::size_t hidden = 64;
  std::size_t heads = 1;
  std::size_t layers = 1;
  /// Depth of the DeepSets inner/outer MLPs and of the transformer key/value maps.
  std::size_t mlp_layers = 2;
  std::size_t kv_layers = 1;
  double dropout = 0.0;
  bool input_projection = false;
  bool residual = false;
  HnhnExponents hnhn;
  double hypersage_p = 1.0;
};

/// One propagation layer of `config.kind` reading `width` input features.
/// HCHA's attention vector additionally covers `edge_features` columns.
AllSetLayer make_layer(const NetworkConfig& config, ad::ParameterSet& params, const std::string& prefix,
                       std::size_t width, Rng& rng, std::size_t edge_features = 0);

/// input projection (optional) -> layers (activation after each v2e and e2v) ->
/// single linear classifier. Model kind Mlp skips propagation entirely.
class AllSetNetwork {
 public:
  AllSetNetwork(const NetworkConfig& config, std::size_t in_features, std::size_t classes, std::uint64_t seed);

  ad::Var forward(ad::Tape& tape, const Hypergraph& hg, const Matrix& x) const;

  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }
  const NetworkConfig& config() const noexcept { return config_; }
  std::size_t classes() const noexcept { return classes_; }

 private:
  NetworkConfig config_;
  std::size_t in_;
  std::size_t classes_;
  ad::ParameterSet params_;
  std::optional<AffineMap> projection_;
  std::vector<AllSetLayer> layers_;
  std::vector<AffineMap> dense_;  // ModelKind::Mlp only
  AffineMap classifier_;
};

// ---- theorem checks ------------------------------------------------------------------

struct EquivalenceCase {
  std::string name;
  std::size_t instances = 0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_deviation < tolerance; }
};

/// Runs each constructive special-case configuration on `instances` random
/// hypergraphs (n <= 12) against its direct oracle.
std::vector<EquivalenceCase> theorem_equivalence_suite(std::uint64_t seed, std::size_t instances = 50);

}  // namespace hgx::allset
