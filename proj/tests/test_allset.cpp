#include <cmath>

#include "doctest.h"
#include "hgx/allset.hpp"
#include "hgx/propagation.hpp"
#include "support.hpp"

using namespace hgx;
using namespace hgx::allset;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

AllSetLayer sum_layer(Variant v = Variant::Shared) {
  return {std::make_shared<SumFunction>(), std::make_shared<SumFunction>(), v};
}

nn::Mlp identity_mlp(std::size_t f, ad::ParameterSet& ps, const std::string& name, Rng& rng) {
  nn::Mlp m({{f, f}, nn::Activation::Identity, true}, ps, name, rng);
  m.weight(0).value = Matrix::identity(f);
  m.bias(0)->value.fill(0.0);
  return m;
}

}  // namespace

TEST_CASE("theorem suite cases stay within tolerance") {
  for (const auto& c : theorem_equivalence_suite(7, 50)) {
    INFO(c.name << " deviation " << c.max_deviation);
    CHECK(c.instances >= 50);
    CHECK(c.passed());
  }
}

TEST_CASE("v2e: sum and product") {
  ad::Tape t;
  auto pair = Hypergraph::from_edge_list(2, {{0, 1}});
  CHECK(sum_layer().v2e_forward(t, pair, t.constant(Matrix{{1}, {10}}), {}).value() == Matrix{{11}});

  auto tri = Hypergraph::from_edge_list(3, {{0, 1, 2}});
  AllSetLayer prod(std::make_shared<ProductFunction>(), std::make_shared<SumFunction>());
  CHECK(prod.v2e_forward(t, tri, t.constant(Matrix{{2}, {3}, {5}}), {}).value() == Matrix{{30}});
}

TEST_CASE("e2v: sum and isolated nodes") {
  ad::Tape t;
  auto hg = Hypergraph::from_edge_list(4, {{0, 1}, {1, 2}});
  auto x = sum_layer().e2v_forward(t, hg, t.constant(Matrix{{2}, {7}}), t.constant(Matrix(4, 1)));
  CHECK(x.value() == Matrix{{2}, {9}, {7}, {0}});
}

TEST_CASE("sum/sum composition equals ce_prop_h") {
  Rng rng(21);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.index(11);
    auto hg = random_hypergraph(rng, n, 1 + rng.index(8), 1, std::min<std::size_t>(n, 4));
    auto x = random_matrix(rng, n, 3);
    ad::Tape t;
    auto out = sum_layer().forward(t, hg, t.constant(x));
    worst = std::max(worst, max_abs_diff(out.x.value(), prop::ce_prop_h(hg, x)));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("stacked sum layers equal repeated ce_prop_h") {
  Rng rng(22);
  auto hg = random_hypergraph(rng, 9, 6, 1, 4);
  auto x = random_matrix(rng, 9, 2);
  ad::Tape t;
  auto h = t.constant(x);
  Matrix oracle = x;
  for (int k = 0; k < 3; ++k) {
    h = sum_layer().forward(t, hg, h).x;
    oracle = prop::ce_prop_h(hg, oracle);
  }
  auto head = random_matrix(rng, 2, 4);
  auto logits = ad::matmul(h, t.constant(head));
  CHECK(max_rel_diff(logits.value(), matmul(oracle, head)) < 1e-12);
}

TEST_CASE("alldeepsets_f") {
  Rng rng(23);
  ad::ParameterSet ps;
  auto inner = identity_mlp(3, ps, "in", rng);
  auto outer = identity_mlp(3, ps, "out", rng);
  auto s = random_matrix(rng, 5, 3);
  Matrix sum(1, 3);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) sum(0, c) += s(r, c);
  CHECK(max_abs_diff(alldeepsets_f(inner, outer, s), sum) < 1e-15);

  CHECK(hgx::testing::kind_of([&] { alldeepsets_f(inner, outer, Matrix(0, 3)); }) == ErrorKind::EmptyMultiset);
}

TEST_CASE("deepsets layer is invariant to member order") {
  Rng rng(24);
  ad::ParameterSet ps;
  AllSetLayer layer(DeepSetsFunction::create(ps, "v2e", 3, 8, 2, rng),
                    DeepSetsFunction::create(ps, "e2v", 8, 8, 2, rng));
  auto hg = random_hypergraph(rng, 8, 5, 2, 5);
  auto x = random_matrix(rng, 8, 3);
  // Members are read in canonical (sorted id) order, so listing them in any
  // order gives the same output bit for bit.
  auto raw = hg.edges();
  for (auto& e : raw) std::reverse(e.begin(), e.end());
  ad::Tape t;
  auto a = layer.forward(t, hg, t.constant(x)).x.value();
  CHECK(layer.forward(t, Hypergraph::from_edge_list(8, raw), t.constant(x)).x.value() == a);
  // Reordering the hyperedges changes only the floating-point summation order.
  std::reverse(raw.begin(), raw.end());
  CHECK(max_rel_diff(layer.forward(t, Hypergraph::from_edge_list(8, raw), t.constant(x)).x.value(), a) < 1e-12);
}

TEST_CASE("deepsets gradient through both mlps") {
  Rng rng(25);
  ad::ParameterSet ps;
  AllSetLayer layer(DeepSetsFunction::create(ps, "v2e", 3, 4, 2, rng),
                    DeepSetsFunction::create(ps, "e2v", 4, 4, 2, rng));
  auto hg = random_hypergraph(rng, 6, 4, 2, 4);
  auto x = random_matrix(rng, 6, 3);
  auto probe = random_matrix(rng, 6, 4);
  ps.add("x", x);
  auto rep = ad::grad_check(ps, [&](ad::Tape& t) {
    auto out = layer.forward(t, hg, t.param(*ps.find("x"))).x;
    return ad::sum_all(ad::mul(out, t.constant(probe)));
  });
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("set transformer attention") {
  Rng rng(26);
  ad::ParameterSet ps;
  SetTransformerSpec spec{.in = 3, .heads = 2, .head_dim = 4};
  auto f = std::make_shared<SetTransformerFunction>(spec, ps, "v2e", rng);
  SetTransformerSpec spec2 = spec;
  spec2.in = spec.width();
  AllSetLayer layer(f, std::make_shared<SetTransformerFunction>(spec2, ps, "e2v", rng));

  SUBCASE("singleton multiset: weight 1 and output from V") {
    auto s = random_matrix(rng, 1, 3);
    auto hg = Hypergraph::from_edge_list(1, {{0}});
    ad::Tape t;
    auto batch = layer.v2e_batch(t, hg, t.constant(s), {});
    for (std::size_t h = 0; h < 2; ++h) CHECK(f->attention(t, batch, h).value() == Matrix{{1.0}});
  }
  SUBCASE("weights sum to one per head") {
    auto hg = random_hypergraph(rng, 9, 6, 1, 5);
    ad::Tape t;
    auto batch = layer.v2e_batch(t, hg, t.constant(random_matrix(rng, 9, 3)), {});
    for (std::size_t h = 0; h < 2; ++h) {
      auto w = f->attention(t, batch, h).value();
      std::vector<double> total(batch.segments, 0.0);
      for (std::size_t r = 0; r < w.rows(); ++r) total[batch.segment[r]] += w(r, 0);
      for (double v : total) CHECK(std::abs(v - 1.0) < 1e-12);
    }
  }
  SUBCASE("shuffling the multiset rows") {
    for (int trial = 0; trial < 20; ++trial) {
      auto s = random_matrix(rng, 2 + rng.index(6), 3);
      auto perm = rng.permutation(s.rows());
      Matrix shuffled(s.rows(), 3);
      for (std::size_t r = 0; r < s.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c) shuffled(r, c) = s(perm[r], c);
      CHECK(max_rel_diff(allsettransformer_f(*f, s), allsettransformer_f(*f, shuffled)) < 1e-9);
    }
  }
  SUBCASE("empty multiset") {
    CHECK(hgx::testing::kind_of([&] { allsettransformer_f(*f, Matrix(0, 3)); }) == ErrorKind::EmptyMultiset);
  }
  SUBCASE("full layer gradient on a 5-node hypergraph") {
    auto hg = Hypergraph::from_edge_list(5, {{0, 1, 2}, {2, 3}, {1, 3, 4}, {4}});
    auto probe = random_matrix(rng, 5, 8);
    ps.add("x", random_matrix(rng, 5, 3));
    auto rep = ad::grad_check(ps, [&](ad::Tape& t) {
      auto out = layer.forward(t, hg, t.param(*ps.find("x"))).x;
      return ad::sum_all(ad::mul(out, t.constant(probe)));
    });
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("product layer gradient") {
  Rng rng(27);
  auto hg = random_uniform_hypergraph(rng, 6, 5, 3);
  AllSetLayer layer(std::make_shared<ProductFunction>(true), std::make_shared<SumFunction>(), Variant::PerAggregator);
  ad::ParameterSet ps;
  ps.add("x", random_matrix(rng, 6, 2, 0.5, 1.5));
  auto probe = random_matrix(rng, 6, 2);
  auto rep = ad::grad_check(ps, [&](ad::Tape& t) {
    return ad::sum_all(ad::mul(layer.forward(t, hg, t.param(ps[0])).x, t.constant(probe)));
  });
  CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("per-aggregator pairs are node-major") {
  auto pairs = per_aggregator_pairs(Hypergraph::from_edge_list(3, {{1, 2}, {0, 1}}));
  CHECK(pairs == std::vector<std::pair<NodeId, EdgeId>>{{0, 1}, {1, 0}, {1, 1}, {2, 0}});
}

TEST_CASE("network shapes") {
  Rng rng(28);
  auto hg = random_hypergraph(rng, 10, 6, 1, 4);
  auto x = random_matrix(rng, 10, 5);
  for (auto kind : {ModelKind::AllSetTransformer, ModelKind::AllDeepSets, ModelKind::Mlp, ModelKind::Hgnn,
                    ModelKind::Hnhn, ModelKind::Hcha, ModelKind::HyperGcn, ModelKind::HyperSage}) {
    NetworkConfig cfg;
    cfg.kind = kind;
    cfg.hidden = 8;
    cfg.layers = 2;
    AllSetNetwork net(cfg, 5, 3, 1);
    ad::Tape t;
    Matrix xin = x;
    if (kind == ModelKind::HyperSage) xin = random_matrix(rng, 10, 5, 0.1, 1.0);
    auto logits = net.forward(t, hg, xin).value();
    INFO(to_string(kind));
    CHECK(logits.rows() == 10);
    CHECK(logits.cols() == 3);
    CHECK(logits.all_finite());
  }
}

TEST_CASE("model names round-trip") {
  for (auto kind : {ModelKind::AllSetTransformer, ModelKind::AllDeepSets, ModelKind::Mlp, ModelKind::Hgnn,
                    ModelKind::Hnhn, ModelKind::Hcha, ModelKind::HyperGcn, ModelKind::HyperSage}) {
    CHECK(parse_model(to_string(kind)) == kind);
  }
  CHECK(hgx::testing::kind_of([] { parse_model("gat"); }) == ErrorKind::InvalidConfig);
}
