// Constructive special cases: each configuration of multiset functions is run
// through AllSetLayer and compared against the direct node-wise rule.

#include <cmath>

#include "hgx/allset.hpp"
#include "hgx/error.hpp"
#include "hgx/propagation.hpp"

namespace hgx::allset {

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

Hypergraph random_instance(Rng& rng, std::size_t min_size = 1) {
  const std::size_t n = std::max<std::size_t>(min_size, 2 + rng.index(11));  // 2..12
  const std::size_t m = 1 + rng.index(8);
  return random_hypergraph(rng, n, m, min_size, std::min<std::size_t>(n, 5));
}

Hypergraph with_random_weights(Rng& rng, const Hypergraph& hg) {
  std::vector<double> w(hg.num_edges());
  for (double& v : w) v = rng.uniform(0.5, 2.0);
  return Hypergraph::from_edge_list(hg.num_nodes(), hg.edges(), w);
}

// Copies a plain Affine into parameters so the AllSet side uses identical numbers.
AffineMap bind(ad::ParameterSet& params, const std::string& name, const prop::Affine& a, nn::Activation sigma) {
  AffineMap m;
  m.theta = &params.add(name + ".theta", a.theta);
  if (!a.bias.empty()) m.bias = &params.add(name + ".bias", a.bias);
  m.sigma = sigma;
  return m;
}

prop::Affine random_affine(Rng& rng, std::size_t in, std::size_t out, bool bias = true) {
  prop::Affine a{random_matrix(rng, in, out, -1.0, 1.0), Matrix()};
  if (bias) a.bias = random_matrix(rng, 1, out, -0.5, 0.5);
  return a;
}

Matrix run_layer(const AllSetLayer& layer, const Hypergraph& hg, const Matrix& x, const Matrix* z = nullptr) {
  ad::Tape tape;
  ad::Var zv = z ? tape.constant(*z) : ad::Var{};
  return layer.forward(tape, hg, tape.constant(x), zv).x.value();
}

// U(X_v, sum_{e ∋ v} M(Z_e^v, X_v)) with M = tanh([. || X_v] W_m), U = relu([X_v || m] W_u).
class MessagePassingUpdate final : public MultisetFunction {
 public:
  MessagePassingUpdate(const Matrix& wm, const Matrix& wu) : wm_(wm), wu_(wu) {}
  ad::Var apply(ad::Tape& tape, const MultisetBatch& batch) const override {
    const ad::Var x_v = ad::gather_rows(batch.ctx.x, batch.row_node);
    const ad::Var in[] = {batch.rows, x_v};
    const ad::Var messages = ad::tanh(ad::matmul(ad::concat_cols(in), tape.constant(wm_)));
    const ad::Var m = ad::segment_sum(messages, batch.segment, batch.segments);
    const ad::Var upd[] = {batch.second, m};
    return ad::relu(ad::matmul(ad::concat_cols(upd), tape.constant(wu_)));
  }
  std::string name() const override { return "mpnn-update"; }

 private:
  Matrix wm_;
  Matrix wu_;
};

Matrix message_passing_oracle(const Matrix& adjacency, const Matrix& x, const Matrix& wm, const Matrix& wu) {
  const std::size_t n = x.rows(), f = x.cols(), fm = wm.cols();
  Matrix m(n, fm);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t u = 0; u < n; ++u) {
      if (adjacency(v, u) == 0.0) continue;
      for (std::size_t j = 0; j < fm; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < f; ++k) s += x(u, k) * wm(k, j) + x(v, k) * wm(f + k, j);
        m(v, j) += adjacency(v, u) * std::tanh(s);
      }
    }
  Matrix out(n, wu.cols());
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < wu.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < f; ++k) s += x(v, k) * wu(k, j);
      for (std::size_t k = 0; k < fm; ++k) s += m(v, k) * wu(f + k, j);
      out(v, j) = s > 0.0 ? s : 0.0;
    }
  return out;
}

}  // namespace

std::vector<EquivalenceCase> theorem_equivalence_suite(std::uint64_t seed, std::size_t instances) {
  if (instances == 0) fail(ErrorKind::InvalidConfig, "theorem suite needs at least one instance");
  Rng rng(seed);
  const auto relu = nn::Activation::Relu;
  const auto sum = std::make_shared<SumFunction>();
  std::vector<EquivalenceCase> cases;
  auto run = [&](const std::string& name, double tol, auto&& body) {
    EquivalenceCase c{name, instances, 0.0, tol};
    for (std::size_t i = 0; i < instances; ++i) c.max_deviation = std::max(c.max_deviation, body());
    cases.push_back(c);
  };

  run("ceprop-h = sum/sum shared", 1e-12, [&] {
    const Hypergraph hg = random_instance(rng);
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, -1.0, 1.0);
    return max_abs_diff(run_layer(AllSetLayer(sum, sum), hg, x), prop::ce_prop_h(hg, x));
  });

  run("ceprop-a = sum/sum per-aggregator", 1e-12, [&] {
    const Hypergraph hg = random_instance(rng);
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, -1.0, 1.0);
    return max_abs_diff(run_layer(AllSetLayer(sum, sum, Variant::PerAggregator), hg, x), prop::ce_prop_a(hg, x));
  });

  std::size_t zcount = 0;
  run("zprop = scaled product/sum per-aggregator", 1e-10, [&] {
    const std::size_t d = (zcount++ % 2 == 0) ? 3 : 4;
    const std::size_t n = d + rng.index(13 - d);
    const Hypergraph hg = random_uniform_hypergraph(rng, n, 1 + rng.index(8), d);
    const Matrix x = random_matrix(rng, n, 3, 0.5, 1.5);
    const AllSetLayer layer(std::make_shared<ProductFunction>(true), sum, Variant::PerAggregator);
    return max_abs_diff(run_layer(layer, hg, x), prop::z_prop(hg, x, d));
  });

  run("hgnn = degree-weighted sums", 1e-10, [&] {
    const Hypergraph hg = with_random_weights(rng, random_instance(rng));
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, -1.0, 1.0);
    const prop::Affine a = random_affine(rng, 3, 4);
    ad::ParameterSet params;
    const AllSetLayer layer(std::make_shared<WeightedSumFunction>(WeightRule::HgnnNodeToEdge),
                            std::make_shared<WeightedSumFunction>(WeightRule::HgnnEdgeToNode,
                                                                  bind(params, "hgnn", a, relu)));
    return max_abs_diff(run_layer(layer, hg, x), prop::hgnn_layer(hg, x, a, relu));
  });

  std::size_t hcount = 0;
  run("hnhn = normalized sums with two affine maps", 1e-10, [&] {
    const Hypergraph hg = random_instance(rng);
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, -1.0, 1.0);
    prop::HnhnParams ref{random_affine(rng, 3, 4), random_affine(rng, 4, 2), rng.uniform(-1.0, 1.0),
                         rng.uniform(-1.0, 1.0), (hcount++ % 2) == 1, relu};
    const HnhnExponents ex{ref.alpha, ref.beta, ref.edge_cardinality_normalizer};
    ad::ParameterSet params;
    const AllSetLayer layer(
        std::make_shared<WeightedSumFunction>(WeightRule::HnhnNodeToEdge, bind(params, "e", ref.edge_affine, relu), ex),
        std::make_shared<WeightedSumFunction>(WeightRule::HnhnEdgeToNode, bind(params, "v", ref.node_affine, relu), ex));
    return max_abs_diff(run_layer(layer, hg, x), prop::hnhn_layer(hg, x, ref).second);
  });

  run("hypersage = power means with residual and normalization", 1e-10, [&] {
    const Hypergraph hg = random_instance(rng);
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, 0.1, 1.0);
    const double p = static_cast<double>(1 + rng.index(3));
    const prop::Affine a = random_affine(rng, 3, 4, false);
    ad::ParameterSet params;
    const AllSetLayer layer(std::make_shared<PowerMeanFunction>(p),
                            std::make_shared<HyperSageEdgeToNode>(p, bind(params, "sage", a, relu)));
    return max_abs_diff(run_layer(layer, hg, x), prop::hypersage_layer(hg, x, a.theta, p, relu));
  });

  run("mpnn = per-aggregator message/update on graphs", 1e-12, [&] {
    const std::size_t n = 2 + rng.index(11);
    const Hypergraph hg = random_uniform_hypergraph(rng, n, 1 + rng.index(10), 2);
    const Matrix x = random_matrix(rng, n, 3, -1.0, 1.0);
    const Matrix wm = random_matrix(rng, 6, 4, -1.0, 1.0);
    const Matrix wu = random_matrix(rng, 7, 3, -1.0, 1.0);
    const AllSetLayer layer(sum, std::make_shared<MessagePassingUpdate>(wm, wu), Variant::PerAggregator);
    return max_abs_diff(run_layer(layer, hg, x),
                        message_passing_oracle(clique_expansion_adjacency(hg), x, wm, wu));
  });

  run("hcha = attention-weighted sums", 1e-10, [&] {
    const Hypergraph hg = with_random_weights(rng, random_instance(rng));
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, -1.0, 1.0);
    const Matrix z = random_matrix(rng, hg.num_edges(), 2, -1.0, 1.0);
    prop::HchaParams ref{random_affine(rng, 3, 4), random_matrix(rng, 5, 1, -1.0, 1.0), relu};
    ad::ParameterSet params;
    ad::Parameter* att = &params.add("a", ref.attention);
    const AllSetLayer layer(std::make_shared<HchaNodeToEdge>(att),
                            std::make_shared<HchaEdgeToNode>(att, bind(params, "hcha", ref.affine, relu)));
    return max_abs_diff(run_layer(layer, hg, x, &z), prop::hcha_layer(hg, x, &z, ref));
  });

  run("hypergcn = mediator-weighted sums per-aggregator", 1e-10, [&] {
    const Hypergraph hg = random_instance(rng, 2);
    const Matrix x = random_matrix(rng, hg.num_nodes(), 3, -1.0, 1.0);
    const prop::Affine a = random_affine(rng, 3, 4);
    ad::ParameterSet params;
    const AffineMap post = bind(params, "gcn", a, relu);
    const AllSetLayer layer(std::make_shared<HyperGcnNodeToEdge>(post.theta),
                            std::make_shared<SumAffineFunction>(post), Variant::PerAggregator);
    return max_abs_diff(run_layer(layer, hg, x), prop::hypergcn_layer(hg, x, a, relu));
  });

  return cases;
}

}  // namespace hgx::allset
