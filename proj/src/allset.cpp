#include "hgx/allset.hpp"

#include <cmath>
#include <numeric>

#include "hgx/error.hpp"
#include "hgx/propagation.hpp"

namespace hgx::allset {

std::vector<std::size_t> MultisetBatch::segment_sizes() const {
  std::vector<std::size_t> sizes(segments, 0);
  for (std::size_t s : segment) ++sizes[s];
  return sizes;
}

ad::Var mask_empty(ad::Var out, const MultisetBatch& batch) {
  const auto sizes = batch.segment_sizes();
  std::vector<double> keep(sizes.size());
  bool any_empty = false;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    keep[s] = sizes[s] > 0 ? 1.0 : 0.0;
    any_empty = any_empty || sizes[s] == 0;
  }
  return any_empty ? ad::scale_rows(out, keep) : out;
}

namespace {

const Hypergraph& graph_of(const MultisetBatch& batch) {
  if (batch.ctx.hg == nullptr) fail(ErrorKind::InvalidConfig, "this multiset function needs the hypergraph");
  return *batch.ctx.hg;
}

ad::Var require_second(const MultisetBatch& batch, const char* who) {
  if (!batch.second.valid()) fail(ErrorKind::InvalidConfig, std::string(who) + " needs the second argument");
  if (batch.second.rows() != batch.segments) {
    fail(ErrorKind::ShapeMismatch, std::string(who) + ": second argument must have one row per multiset");
  }
  return batch.second;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

ad::Var SumFunction::apply(ad::Tape&, const MultisetBatch& batch) const {
  return ad::segment_sum(batch.rows, batch.segment, batch.segments);
}

ad::Var MeanFunction::apply(ad::Tape&, const MultisetBatch& batch) const {
  const auto sizes = batch.segment_sizes();
  std::vector<double> inv(sizes.size());
  for (std::size_t s = 0; s < sizes.size(); ++s) inv[s] = sizes[s] ? 1.0 / static_cast<double>(sizes[s]) : 0.0;
  return ad::scale_rows(ad::segment_sum(batch.rows, batch.segment, batch.segments), inv);
}

ad::Var ProductFunction::apply(ad::Tape&, const MultisetBatch& batch) const {
  ad::Var out = ad::segment_prod(batch.rows, batch.segment, batch.segments);
  if (scale_) {
    const Hypergraph& hg = graph_of(batch);
    std::vector<double> factor(batch.segments);
    for (std::size_t s = 0; s < batch.segments; ++s) {
      const EdgeId e = batch.segment_edge.empty() ? kNone : batch.segment_edge[s];
      if (e == kNone) fail(ErrorKind::InvalidConfig, "scaled product needs hyperedge segments");
      factor[s] = static_cast<double>(hg.edge_size(e)) - 1.0;
    }
    out = ad::scale_rows(out, factor);
  }
  return mask_empty(out, batch);
}

ad::Var power_mean(ad::Tape& tape, ad::Var rows, const MultisetBatch& batch, double p) {
  if (!(p >= 1.0)) fail(ErrorKind::InvalidConfig, "power mean order must be >= 1");
  const auto sizes = batch.segment_sizes();
  std::vector<double> inv(sizes.size());
  Matrix pad(batch.segments, rows.cols());
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    inv[s] = sizes[s] ? 1.0 / static_cast<double>(sizes[s]) : 0.0;
    if (!sizes[s])
      for (double& v : pad.row(s)) v = 1.0;
  }
  if (p == 1.0) return ad::scale_rows(ad::segment_sum(rows, batch.segment, batch.segments), inv);
  ad::Var mean = ad::scale_rows(ad::segment_sum(ad::power(rows, p), batch.segment, batch.segments), inv);
  // Empty segments are padded to 1 before the root so its derivative stays finite,
  // then masked back to zero.
  mean = ad::add(mean, tape.constant(std::move(pad)));
  return mask_empty(ad::power(mean, 1.0 / p), batch);
}

ad::Var PowerMeanFunction::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  return power_mean(tape, batch.rows, batch, p_);
}

AffineMap AffineMap::create(ad::ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
                            bool bias, nn::Activation sigma, Rng& rng) {
  AffineMap m;
  m.theta = &params.add(prefix + ".theta", nn::xavier_uniform(in, out, rng));
  if (bias) m.bias = &params.add(prefix + ".bias", Matrix(1, out));
  m.sigma = sigma;
  return m;
}

ad::Var AffineMap::forward(ad::Tape& tape, ad::Var h) const {
  if (empty()) return h;
  ad::Var y = ad::matmul(h, tape.param(*theta));
  if (bias) y = ad::add_row(y, tape.param(*bias));
  return nn::activate(y, sigma);
}

// ---- rule-weighted sums ---------------------------------------------------------------

std::vector<double> WeightedSumFunction::weights(const MultisetBatch& batch) const {
  const Hypergraph& hg = graph_of(batch);
  const std::size_t rows = batch.segment.size();
  std::vector<double> w(rows);
  auto deg = [&](NodeId v) { return static_cast<double>(hg.degree(v)); };
  auto size = [&](EdgeId e) { return static_cast<double>(hg.edge_size(e)); };
  switch (rule_) {
    case WeightRule::HgnnNodeToEdge:
      for (std::size_t k = 0; k < rows; ++k) w[k] = 1.0 / std::sqrt(deg(batch.row_node[k]));
      break;
    case WeightRule::HgnnEdgeToNode:
      for (std::size_t k = 0; k < rows; ++k) {
        const EdgeId e = batch.row_edge[k];
        w[k] = hg.weight(e) / (size(e) * std::sqrt(deg(batch.row_node[k])));
      }
      break;
    case WeightRule::HnhnNodeToEdge: {
      std::vector<double> normalizer(hg.num_edges(), 0.0);
      for (EdgeId e = 0; e < hg.num_edges(); ++e)
        for (NodeId u : hg.edge(e)) normalizer[e] += std::pow(deg(u), hnhn_.beta);
      for (std::size_t k = 0; k < rows; ++k) {
        const EdgeId e = batch.row_edge[k];
        if (normalizer[e] == 0.0) fail(ErrorKind::ZeroNormalizer, "edge " + std::to_string(e) + " has zero normalizer");
        w[k] = std::pow(deg(batch.row_node[k]), hnhn_.beta) / normalizer[e];
      }
      break;
    }
    case WeightRule::HnhnEdgeToNode: {
      std::vector<double> normalizer(hg.num_nodes(), 0.0);
      for (NodeId v = 0; v < hg.num_nodes(); ++v)
        for (EdgeId e : hg.incident_edges(v))
          normalizer[v] += hnhn_.edge_cardinality_normalizer ? std::pow(size(e), hnhn_.alpha)
                                                             : std::pow(deg(v), hnhn_.alpha);
      for (std::size_t k = 0; k < rows; ++k) {
        const NodeId v = batch.row_node[k];
        if (normalizer[v] == 0.0) fail(ErrorKind::ZeroNormalizer, "node " + std::to_string(v) + " has zero normalizer");
        w[k] = std::pow(size(batch.row_edge[k]), hnhn_.alpha) / normalizer[v];
      }
      break;
    }
  }
  return w;
}

ad::Var WeightedSumFunction::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  ad::Var pooled = ad::segment_sum(ad::scale_rows(batch.rows, weights(batch)), batch.segment, batch.segments);
  return mask_empty(post_.forward(tape, pooled), batch);
}

ad::Var SumAffineFunction::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  return mask_empty(post_.forward(tape, ad::segment_sum(batch.rows, batch.segment, batch.segments)), batch);
}

// ---- HCHA ------------------------------------------------------------------------------

ad::Var hcha_alpha(ad::Tape& tape, const LayerContext& ctx, std::span<const NodeId> nodes,
                   std::span<const EdgeId> edges, ad::Parameter& attention) {
  if (ctx.hg == nullptr || !ctx.x.valid()) fail(ErrorKind::InvalidConfig, "HCHA attention needs the layer context");
  const std::size_t f = ctx.x.cols();
  const bool with_edges = ctx.z.valid() && ctx.z.cols() > 0;
  const std::size_t fe = with_edges ? ctx.z.cols() : 0;
  if (attention.value.cols() != 1 || attention.value.rows() < f + fe) {
    fail(ErrorKind::ShapeMismatch, "attention vector needs F + F_e = " + std::to_string(f + fe) + " entries");
  }
  ad::Var a_row = ad::transpose(tape.param(attention));
  ad::Var node_score = ad::matmul(ctx.x, ad::transpose(ad::slice_cols(a_row, 0, f)));
  ad::Var score = ad::gather_rows(node_score, nodes);
  if (with_edges) {
    ad::Var edge_score = ad::matmul(ctx.z, ad::transpose(ad::slice_cols(a_row, f, f + fe)));
    score = ad::add(score, ad::gather_rows(edge_score, edges));
  }
  return ad::segment_softmax(ad::leaky_relu(score, 0.2), nodes, ctx.hg->num_nodes());
}

ad::Var HchaNodeToEdge::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  ad::Var alpha = hcha_alpha(tape, batch.ctx, batch.row_node, batch.row_edge, *attention_);
  return ad::segment_sum(ad::mul_col(batch.rows, alpha), batch.segment, batch.segments);
}

ad::Var HchaEdgeToNode::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  const Hypergraph& hg = graph_of(batch);
  std::vector<double> c(batch.segment.size());
  for (std::size_t k = 0; k < c.size(); ++k) {
    const EdgeId e = batch.row_edge[k];
    c[k] = hg.weight(e) / (static_cast<double>(hg.edge_size(e)) * static_cast<double>(hg.degree(batch.row_node[k])));
  }
  ad::Var alpha = hcha_alpha(tape, batch.ctx, batch.row_node, batch.row_edge, *attention_);
  ad::Var pooled = ad::segment_sum(ad::mul_col(ad::scale_rows(batch.rows, c), alpha), batch.segment, batch.segments);
  return mask_empty(post_.forward(tape, pooled), batch);
}

// ---- HyperGCN ----------------------------------------------------------------------------

ad::Var HyperGcnNodeToEdge::apply(ad::Tape&, const MultisetBatch& batch) const {
  const Hypergraph& hg = graph_of(batch);
  if (batch.segment_node.empty() || batch.segment_edge.empty()) {
    fail(ErrorKind::InvalidConfig, "HyperGCN weights need per-aggregator (node, edge) multisets");
  }
  const Matrix projected = matmul(batch.ctx.x.value(), theta_->value);
  std::vector<std::pair<NodeId, NodeId>> mediators(hg.num_edges());
  for (EdgeId e = 0; e < hg.num_edges(); ++e)
    if (hg.edge_size(e) >= 2) mediators[e] = prop::hypergcn_mediator(hg, projected, e);
  std::vector<double> w(batch.segment.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const std::size_t s = batch.segment[k];
    const EdgeId e = batch.segment_edge[s];
    w[k] = prop::hypergcn_weight(hg, e, mediators[e], batch.row_node[k], batch.segment_node[s]);
  }
  return ad::segment_sum(ad::scale_rows(batch.rows, w), batch.segment, batch.segments);
}

// ---- HyperSAGE ---------------------------------------------------------------------------

ad::Var HyperSageEdgeToNode::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  ad::Var star = ad::add(power_mean(tape, batch.rows, batch, p_), require_second(batch, "HyperSAGE"));
  return post_.forward(tape, ad::row_l2_normalize(star));
}

// ---- DeepSets ----------------------------------------------------------------------------

ad::Var map_rows(ad::Tape& tape, const MultisetBatch& batch, const nn::Mlp& mlp, double dropout) {
  const bool per_row_noise = dropout > 0.0 && tape.training() && mlp.spec().widths.size() > 2;
  if (!batch.source.valid() || per_row_noise) return mlp.forward(tape, batch.rows, dropout);
  return ad::gather_rows(mlp.forward(tape, batch.source, dropout), batch.source_index);
}

ad::Var DeepSetsFunction::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  ad::Var pooled = ad::segment_sum(map_rows(tape, batch, inner_, dropout_), batch.segment, batch.segments);
  if (residual_) {
    const ad::Var parts[] = {pooled, require_second(batch, "DeepSets residual")};
    return outer_.forward(tape, ad::concat_cols(parts), dropout_);
  }
  return mask_empty(outer_.forward(tape, pooled, dropout_), batch);
}

std::shared_ptr<DeepSetsFunction> DeepSetsFunction::create(ad::ParameterSet& params, const std::string& prefix,
                                                          std::size_t in, std::size_t width, std::size_t mlp_layers,
                                                          Rng& rng, std::size_t second_width, double dropout) {
  if (mlp_layers == 0) fail(ErrorKind::InvalidConfig, "DeepSets MLPs need at least one layer");
  nn::MlpSpec inner{{in}};
  for (std::size_t l = 0; l < mlp_layers; ++l) inner.widths.push_back(width);
  nn::MlpSpec outer{{width + second_width}};
  for (std::size_t l = 0; l < mlp_layers; ++l) outer.widths.push_back(width);
  return std::make_shared<DeepSetsFunction>(nn::Mlp(inner, params, prefix + ".inner", rng),
                                            nn::Mlp(outer, params, prefix + ".outer", rng), second_width > 0,
                                            dropout);
}

// ---- Set transformer ------------------------------------------------------------------------

SetTransformerFunction::SetTransformerFunction(const SetTransformerSpec& spec, ad::ParameterSet& params,
                                               const std::string& prefix, Rng& rng)
    : spec_(spec) {
  if (spec.in == 0 || spec.heads == 0 || spec.head_dim == 0 || spec.kv_layers == 0) {
    fail(ErrorKind::InvalidConfig, prefix + ": set transformer sizes must be positive");
  }
  nn::MlpSpec kv{{spec.in}};
  for (std::size_t l = 0; l < spec.kv_layers; ++l) kv.widths.push_back(spec.head_dim);
  kv.bias = spec.kv_layers > 1;
  for (std::size_t i = 0; i < spec.heads; ++i) {
    keys_.emplace_back(kv, params, prefix + ".K" + std::to_string(i), rng);
    values_.emplace_back(kv, params, prefix + ".V" + std::to_string(i), rng);
  }
  const std::size_t w = spec.width();
  Matrix seed(1, w);
  const double sd = std::sqrt(1.0 / static_cast<double>(w));
  for (double& v : seed.data()) v = rng.normal(0.0, sd);
  seed_ = &params.add(prefix + ".seed", std::move(seed));
  ln_attention_ = nn::LayerNorm(w, params, prefix + ".ln0", spec.ln_eps);
  ln_output_ = nn::LayerNorm(w, params, prefix + ".ln1", spec.ln_eps);
  post_ = nn::Mlp(nn::MlpSpec{{w, w, w}}, params, prefix + ".mlp", rng);
}

ad::Var SetTransformerFunction::attention(ad::Tape& tape, const MultisetBatch& batch, std::size_t head) const {
  ad::Var seed = tape.param(*seed_);
  ad::Var keys = map_rows(tape, batch, keys_[head], spec_.dropout);
  ad::Var query = ad::slice_cols(seed, head * spec_.head_dim, (head + 1) * spec_.head_dim);
  return ad::segment_softmax(ad::matmul(keys, ad::transpose(query)), batch.segment, batch.segments);
}

ad::Var SetTransformerFunction::apply(ad::Tape& tape, const MultisetBatch& batch) const {
  if (batch.rows.cols() != spec_.in) {
    fail(ErrorKind::ShapeMismatch, "set transformer expects " + std::to_string(spec_.in) + " input columns, got " +
                                       std::to_string(batch.rows.cols()));
  }
  ad::Var seed = tape.param(*seed_);
  std::vector<ad::Var> heads;
  heads.reserve(spec_.heads);
  for (std::size_t i = 0; i < spec_.heads; ++i) {
    ad::Var keys = map_rows(tape, batch, keys_[i], spec_.dropout);
    ad::Var values = map_rows(tape, batch, values_[i], spec_.dropout);
    ad::Var query = ad::slice_cols(seed, i * spec_.head_dim, (i + 1) * spec_.head_dim);
    ad::Var weights = ad::segment_softmax(ad::matmul(keys, ad::transpose(query)), batch.segment, batch.segments);
    heads.push_back(ad::segment_sum(ad::mul_col(values, weights), batch.segment, batch.segments));
  }
  ad::Var mh = heads.size() == 1 ? heads.front() : ad::concat_cols(heads);
  ad::Var y = ln_attention_.forward(tape, ad::add_row(mh, seed));
  ad::Var out = ln_output_.forward(tape, ad::add(y, post_.forward(tape, y, spec_.dropout)));
  return mask_empty(out, batch);
}

namespace {

MultisetBatch single_multiset(ad::Tape& tape, const Matrix& s) {
  if (s.rows() == 0) fail(ErrorKind::EmptyMultiset, "multiset function applied to an empty multiset");
  MultisetBatch batch;
  batch.rows = tape.constant(s);
  batch.segment.assign(s.rows(), 0);
  batch.segments = 1;
  return batch;
}

}  // namespace

Matrix alldeepsets_f(const nn::Mlp& inner, const nn::Mlp& outer, const Matrix& s) {
  ad::Tape tape;
  MultisetBatch batch = single_multiset(tape, s);
  ad::Var pooled = ad::segment_sum(inner.forward(tape, batch.rows), batch.segment, 1);
  return outer.forward(tape, pooled).value();
}

Matrix allsettransformer_f(const SetTransformerFunction& f, const Matrix& s) {
  ad::Tape tape;
  return f.apply(tape, single_multiset(tape, s)).value();
}

// ---- layer ------------------------------------------------------------------------------------

std::vector<std::pair<NodeId, EdgeId>> per_aggregator_pairs(const Hypergraph& hg) {
  std::vector<std::pair<NodeId, EdgeId>> pairs;
  pairs.reserve(hg.num_incidences());
  for (NodeId v = 0; v < hg.num_nodes(); ++v)
    for (EdgeId e : hg.incident_edges(v)) pairs.emplace_back(v, e);
  return pairs;
}

namespace {

void check_rows(ad::Var m, std::size_t rows, const char* what) {
  if (m.valid() && m.rows() != rows) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + " has " + std::to_string(m.rows()) + " rows, expected " +
                                       std::to_string(rows));
  }
}

}  // namespace

MultisetBatch AllSetLayer::v2e_batch(ad::Tape&, const Hypergraph& hg, ad::Var x, ad::Var z_prev) const {
  check_rows(x, hg.num_nodes(), "node features");
  MultisetBatch b;
  b.ctx = {&hg, x, z_prev};
  b.direction = Direction::NodeToEdge;
  if (variant_ == Variant::Shared) {
    check_rows(z_prev, hg.num_edges(), "hyperedge states");
    for (EdgeId e = 0; e < hg.num_edges(); ++e)
      for (NodeId u : hg.edge(e)) {
        b.row_node.push_back(u);
        b.row_edge.push_back(e);
        b.segment.push_back(e);
      }
    b.segments = hg.num_edges();
    b.segment_node.assign(b.segments, kNone);
    b.segment_edge = iota(b.segments);
    b.second = z_prev;
  } else {
    std::size_t total = 0;
    for (EdgeId e = 0; e < hg.num_edges(); ++e) total += hg.edge_size(e) * (hg.edge_size(e) - 1);
    if (total > kMaxPerAggregatorRows) {
      fail(ErrorKind::TooLarge, "per-aggregator layer would materialize " + std::to_string(total) + " rows");
    }
    const auto pairs = per_aggregator_pairs(hg);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [v, e] = pairs[k];
      for (NodeId u : hg.edge(e)) {
        if (u == v) continue;
        b.row_node.push_back(u);
        b.row_edge.push_back(e);
        b.segment.push_back(k);
      }
      b.segment_node.push_back(v);
      b.segment_edge.push_back(e);
    }
    b.segments = pairs.size();
    if (z_prev.valid()) {
      if (z_prev.rows() == pairs.size()) {
        b.second = z_prev;
      } else {
        check_rows(z_prev, hg.num_edges(), "hyperedge states");
        b.second = ad::gather_rows(z_prev, b.segment_edge);
      }
    }
  }
  b.rows = ad::gather_rows(x, b.row_node);
  b.source = x;
  b.source_index = b.row_node;
  return b;
}

MultisetBatch AllSetLayer::e2v_batch(ad::Tape&, const Hypergraph& hg, ad::Var z, ad::Var x_prev,
                                     ad::Var z_prev) const {
  check_rows(x_prev, hg.num_nodes(), "node features");
  const auto pairs = per_aggregator_pairs(hg);
  MultisetBatch b;
  b.ctx = {&hg, x_prev, z_prev};
  b.direction = Direction::EdgeToNode;
  for (const auto& [v, e] : pairs) {
    b.row_node.push_back(v);
    b.row_edge.push_back(e);
    b.segment.push_back(v);
  }
  b.segments = hg.num_nodes();
  b.segment_node = iota(b.segments);
  b.segment_edge.assign(b.segments, kNone);
  b.second = x_prev;
  if (variant_ == Variant::Shared) {
    check_rows(z, hg.num_edges(), "hyperedge states");
    if (z_prev.valid() && z_prev.rows() != hg.num_edges()) b.ctx.z = {};
    b.rows = ad::gather_rows(z, b.row_edge);
    b.source = z;
    b.source_index = b.row_edge;
  } else {
    check_rows(z, pairs.size(), "per-aggregator hyperedge states");
    if (z_prev.valid() && z_prev.rows() != hg.num_edges()) b.ctx.z = {};
    b.rows = z;
  }
  return b;
}

ad::Var AllSetLayer::v2e_forward(ad::Tape& tape, const Hypergraph& hg, ad::Var x, ad::Var z_prev) const {
  return v2e_->apply(tape, v2e_batch(tape, hg, x, z_prev));
}

ad::Var AllSetLayer::e2v_forward(ad::Tape& tape, const Hypergraph& hg, ad::Var z, ad::Var x_prev,
                                 ad::Var z_prev) const {
  return e2v_->apply(tape, e2v_batch(tape, hg, z, x_prev, z_prev));
}

LayerOutput AllSetLayer::forward(ad::Tape& tape, const Hypergraph& hg, ad::Var x, ad::Var z_prev) const {
  LayerOutput out;
  out.z = v2e_forward(tape, hg, x, z_prev);
  out.x = e2v_forward(tape, hg, out.z, x, z_prev);
  return out;
}

// ---- network ------------------------------------------------------------------------------------

ModelKind parse_model(std::string_view name) {
  if (name == "allsettransformer") return ModelKind::AllSetTransformer;
  if (name == "alldeepsets") return ModelKind::AllDeepSets;
  if (name == "mlp") return ModelKind::Mlp;
  if (name == "hgnn") return ModelKind::Hgnn;
  if (name == "hnhn") return ModelKind::Hnhn;
  if (name == "hcha") return ModelKind::Hcha;
  if (name == "hypergcn") return ModelKind::HyperGcn;
  if (name == "hypersage") return ModelKind::HyperSage;
  fail(ErrorKind::InvalidConfig, "unknown model kind '" + std::string(name) + "'");
}

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::AllSetTransformer: return "allsettransformer";
    case ModelKind::AllDeepSets: return "alldeepsets";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Hgnn: return "hgnn";
    case ModelKind::Hnhn: return "hnhn";
    case ModelKind::Hcha: return "hcha";
    case ModelKind::HyperGcn: return "hypergcn";
    case ModelKind::HyperSage: return "hypersage";
  }
  return "unknown";
}

namespace {

bool is_set_model(ModelKind kind) {
  return kind == ModelKind::AllSetTransformer || kind == ModelKind::AllDeepSets;
}

}  // namespace

AllSetLayer make_layer(const NetworkConfig& config, ad::ParameterSet& params, const std::string& prefix,
                       std::size_t width, Rng& rng, std::size_t edge_features) {
  const auto relu = nn::Activation::Relu;
  const std::size_t h = config.hidden;
  if (config.heads == 0 || h % config.heads != 0) fail(ErrorKind::InvalidConfig, "heads must divide the hidden width");
  switch (config.kind) {
    case ModelKind::AllSetTransformer: {
      SetTransformerSpec v2e{width, config.heads, h / config.heads, config.kv_layers, config.dropout};
      SetTransformerSpec e2v{h, config.heads, h / config.heads, config.kv_layers, config.dropout};
      auto f = std::make_shared<SetTransformerFunction>(v2e, params, prefix + ".v2e", rng);
      auto g = std::make_shared<SetTransformerFunction>(e2v, params, prefix + ".e2v", rng);
      return AllSetLayer(f, g);
    }
    case ModelKind::AllDeepSets: {
      const std::size_t second_v2e = 0, second_e2v = config.residual ? width : 0;
      auto f = DeepSetsFunction::create(params, prefix + ".v2e", width, h, config.mlp_layers, rng, second_v2e,
                                        config.dropout);
      auto g = DeepSetsFunction::create(params, prefix + ".e2v", h, h, config.mlp_layers, rng, second_e2v,
                                        config.dropout);
      return AllSetLayer(f, g);
    }
    case ModelKind::Hgnn: {
      auto post = AffineMap::create(params, prefix + ".e2v", width, h, true, relu, rng);
      return AllSetLayer(std::make_shared<WeightedSumFunction>(WeightRule::HgnnNodeToEdge),
                         std::make_shared<WeightedSumFunction>(WeightRule::HgnnEdgeToNode, post));
    }
    case ModelKind::Hnhn: {
      auto edge = AffineMap::create(params, prefix + ".v2e", width, h, true, relu, rng);
      auto node = AffineMap::create(params, prefix + ".e2v", h, h, true, relu, rng);
      return AllSetLayer(std::make_shared<WeightedSumFunction>(WeightRule::HnhnNodeToEdge, edge, config.hnhn),
                         std::make_shared<WeightedSumFunction>(WeightRule::HnhnEdgeToNode, node, config.hnhn));
    }
    case ModelKind::Hcha: {
      ad::Parameter* a = &params.add(prefix + ".attention", nn::xavier_uniform(width + edge_features, 1, rng));
      auto post = AffineMap::create(params, prefix + ".e2v", width, h, true, relu, rng);
      return AllSetLayer(std::make_shared<HchaNodeToEdge>(a), std::make_shared<HchaEdgeToNode>(a, post));
    }
    case ModelKind::HyperGcn: {
      auto post = AffineMap::create(params, prefix + ".e2v", width, h, true, relu, rng);
      return AllSetLayer(std::make_shared<HyperGcnNodeToEdge>(post.theta),
                         std::make_shared<SumAffineFunction>(post), Variant::PerAggregator);
    }
    case ModelKind::HyperSage: {
      auto post = AffineMap::create(params, prefix + ".e2v", width, h, false, relu, rng);
      return AllSetLayer(std::make_shared<PowerMeanFunction>(config.hypersage_p),
                         std::make_shared<HyperSageEdgeToNode>(config.hypersage_p, post));
    }
    case ModelKind::Mlp:
      break;
  }
  fail(ErrorKind::InvalidConfig, "model kind " + std::string(to_string(config.kind)) + " has no propagation layer");
}

AllSetNetwork::AllSetNetwork(const NetworkConfig& config, std::size_t in_features, std::size_t classes,
                             std::uint64_t seed)
    : config_(config), in_(in_features), classes_(classes) {
  if (in_features == 0 || classes == 0 || config.hidden == 0) {
    fail(ErrorKind::InvalidConfig, "network sizes must be positive");
  }
  if (config.layers == 0) fail(ErrorKind::InvalidConfig, "network needs at least one layer");
  if (config.heads == 0 || config.hidden % config.heads != 0) {
    fail(ErrorKind::InvalidConfig, "heads must divide the hidden width");
  }
  if (config.dropout < 0.0 || config.dropout >= 1.0) fail(ErrorKind::InvalidConfig, "dropout must be in [0, 1)");
  Rng rng(seed);
  const auto relu = nn::Activation::Relu;
  const std::size_t h = config.hidden;
  std::size_t width = in_features;
  if (config.input_projection) {
    projection_ = AffineMap::create(params_, "proj", width, h, true, relu, rng);
    width = h;
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    if (config.kind == ModelKind::Mlp) {
      dense_.push_back(AffineMap::create(params_, p, width, h, true, relu, rng));
    } else {
      layers_.push_back(make_layer(config, params_, p, width, rng));
    }
    width = h;
  }
  classifier_ = AffineMap::create(params_, "classifier", width, classes, true, nn::Activation::Identity, rng);
}

ad::Var AllSetNetwork::forward(ad::Tape& tape, const Hypergraph& hg, const Matrix& x) const {
  if (x.rows() != hg.num_nodes() || x.cols() != in_) {
    fail(ErrorKind::ShapeMismatch, "network expects an " + std::to_string(hg.num_nodes()) + " x " +
                                       std::to_string(in_) + " feature matrix");
  }
  const double rate = config_.dropout;
  ad::Var h = tape.constant(x);
  if (projection_) h = ad::dropout(projection_->forward(tape, h), rate);
  if (config_.kind == ModelKind::Mlp) {
    for (const AffineMap& m : dense_) h = ad::dropout(m.forward(tape, h), rate);
    return classifier_.forward(tape, h);
  }
  const bool between = is_set_model(config_.kind);
  for (const AllSetLayer& layer : layers_) {
    ad::Var z = layer.v2e_forward(tape, hg, h, {});
    if (between) z = ad::dropout(ad::relu(z), rate);
    ad::Var next = layer.e2v_forward(tape, hg, z, h);
    if (between) next = ad::relu(next);
    h = ad::dropout(next, rate);
  }
  return classifier_.forward(tape, h);
}

}  // namespace hgx::allset
