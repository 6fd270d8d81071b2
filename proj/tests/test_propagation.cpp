#include <cmath>

#include "doctest.h"
#include "hgx/propagation.hpp"
#include "support.hpp"

using namespace hgx;
using hgx::testing::kind_of;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

prop::Affine identity_affine(std::size_t f) { return {Matrix::identity(f), {}}; }

}  // namespace

TEST_CASE("ce_prop_h") {
  auto hg = Hypergraph::from_edge_list(3, {{0, 1}, {1, 2}});
  auto y = prop::ce_prop_h(hg, Matrix{{1}, {10}, {100}});
  CHECK(y(1, 0) == 121.0);
  CHECK(prop::ce_prop_h(Hypergraph::from_edge_list(3, {}), Matrix(3, 2, 1.0)) == Matrix(3, 2));
  CHECK(kind_of([&] { prop::ce_prop_h(hg, Matrix(2, 1)); }) == ErrorKind::ShapeMismatch);

  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    auto g = random_hypergraph(rng, 8, 6, 1, 4);
    auto x = random_matrix(rng, 8, 3);
    CHECK(max_abs_diff(prop::ce_prop_h(g, x), matmul(clique_expansion_incidence(g), x)) < 1e-12);
  }
}

TEST_CASE("ce_prop_a") {
  auto y = prop::ce_prop_a(Hypergraph::from_edge_list(2, {{0, 1}}), Matrix{{1}, {10}});
  CHECK(y == Matrix{{10}, {1}});

  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    auto g = random_hypergraph(rng, 8, 6, 1, 4);
    auto x = random_matrix(rng, 8, 3);
    auto h = prop::ce_prop_h(g, x);
    auto a = prop::ce_prop_a(g, x);
    for (NodeId v = 0; v < 8; ++v) {
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(a(v, c) == doctest::Approx(h(v, c) - static_cast<double>(g.degree(v)) * x(v, c)).epsilon(1e-12));
      }
    }
    CHECK(max_abs_diff(a, matmul(clique_expansion_adjacency(g), x)) < 1e-12);
  }
}

TEST_CASE("z_prop and h_prop") {
  auto edge = Hypergraph::from_edge_list(3, {{0, 1, 2}});
  Matrix x{{2}, {3}, {5}};
  CHECK(prop::z_prop(edge, x, 3)(0, 0) == 30.0);
  CHECK(prop::h_prop(edge, x, 3)(0, 0) == doctest::Approx(std::sqrt(30.0)).epsilon(1e-15));

  Rng rng(3);
  for (std::size_t d = 2; d <= 4; ++d) {
    auto g = random_uniform_hypergraph(rng, 7, 5, d);
    auto z = prop::z_prop(g, Matrix(7, 2, 1.0), d);
    auto h = prop::h_prop(g, Matrix(7, 2, 1.0), d);
    for (NodeId v = 0; v < 7; ++v) {
      const double expect = static_cast<double>((d - 1) * g.degree(v));
      CHECK(z(v, 1) == expect);
      CHECK(h(v, 0) == doctest::Approx(std::pow(expect, 1.0 / static_cast<double>(d - 1))));
    }
    auto xr = random_matrix(rng, 7, 2);
    CHECK(max_abs_diff(prop::z_prop(g, xr, d), AdjacencyTensor(g, d).contract(xr)) < 1e-10);
  }

  CHECK(kind_of([&] { prop::h_prop(edge, Matrix{{2}, {-3}, {5}}, 3); }) == ErrorKind::NonPositiveInput);
  CHECK(kind_of([&] { prop::z_prop(Hypergraph::from_edge_list(3, {{0, 1}}), x, 3); }) == ErrorKind::NotUniform);
}

TEST_CASE("hgnn layer") {
  auto hg = Hypergraph::from_edge_list(3, {{0, 1}});
  auto y = prop::hgnn_layer(hg, Matrix{{1}, {1}, {4}}, identity_affine(1));
  CHECK(y == Matrix{{1}, {1}, {0}});  // node 2 is isolated
  CHECK(prop::hgnn_layer(hg, Matrix(3, 1), identity_affine(1)) == Matrix(3, 1));
}

TEST_CASE("hcha layer") {
  Rng rng(4);
  auto hg = random_hypergraph(rng, 6, 5, 2, 4);
  SUBCASE("identical node features and zero edge features give uniform attention") {
    Matrix x(6, 3, 0.7);
    Matrix z(5, 2);
    auto alpha = prop::hcha_attention(hg, x, &z, random_matrix(rng, 5, 1));
    auto star = star_expansion(hg);
    for (std::size_t k = 0; k < star.size(); ++k) {
      CHECK(alpha[k] == doctest::Approx(1.0 / static_cast<double>(hg.degree(star[k].first))).epsilon(1e-12));
    }
  }
  SUBCASE("attention sums to one per node") {
    auto x = random_matrix(rng, 6, 3);
    auto z = random_matrix(rng, 5, 2);
    auto alpha = prop::hcha_attention(hg, x, &z, random_matrix(rng, 5, 1));
    std::vector<double> total(6, 0.0);
    auto star = star_expansion(hg);
    for (std::size_t k = 0; k < star.size(); ++k) total[star[k].first] += alpha[k];
    for (NodeId v = 0; v < 6; ++v) {
      if (hg.degree(v) > 0) CHECK(std::abs(total[v] - 1.0) < 1e-12);
    }
  }
  SUBCASE("without edge features attention is 1 / d_u") {
    auto x = random_matrix(rng, 6, 3);
    auto alpha = prop::hcha_attention(hg, x, nullptr, random_matrix(rng, 3, 1));
    auto star = star_expansion(hg);
    for (std::size_t k = 0; k < star.size(); ++k) {
      CHECK(alpha[k] == doctest::Approx(1.0 / static_cast<double>(hg.degree(star[k].first))));
    }
  }
}

TEST_CASE("hnhn layer") {
  SUBCASE("single edge, beta 0: edge state is the mean") {
    prop::HnhnParams p{identity_affine(2), identity_affine(2), 0.0, 0.0, false, nn::Activation::Identity};
    auto [z, x] = prop::hnhn_layer(Hypergraph::from_edge_list(2, {{0, 1}}), Matrix{{1, 4}, {3, 8}}, p);
    CHECK(z == Matrix{{2, 6}});
    CHECK(x == Matrix{{2, 6}, {2, 6}});
  }
  SUBCASE("zero exponents are plain means") {
    Rng rng(5);
    auto hg = random_hypergraph(rng, 7, 5, 1, 4);
    auto xin = random_matrix(rng, 7, 2);
    prop::HnhnParams p{identity_affine(2), identity_affine(2), 0.0, 0.0, false, nn::Activation::Identity};
    auto [z, x] = prop::hnhn_layer(hg, xin, p);
    for (EdgeId e = 0; e < hg.num_edges(); ++e) {
      double mean = 0.0;
      for (NodeId u : hg.edge(e)) mean += xin(u, 0);
      CHECK(z(e, 0) == doctest::Approx(mean / static_cast<double>(hg.edge_size(e))));
    }
    for (NodeId v = 0; v < 7; ++v) {
      double mean = 0.0;
      for (EdgeId e : hg.incident_edges(v)) mean += z(e, 1);
      if (hg.degree(v) > 0) CHECK(x(v, 1) == doctest::Approx(mean / static_cast<double>(hg.degree(v))));
    }
  }
}

TEST_CASE("hypergcn") {
  SUBCASE("a pair edge has weight 1") {
    auto hg = Hypergraph::from_edge_list(2, {{0, 1}});
    CHECK(prop::hypergcn_weight(hg, 0, {0, 1}, 0, 1) == 1.0);
    auto y = prop::hypergcn_layer(hg, Matrix{{1}, {10}}, identity_affine(1), nn::Activation::Identity);
    CHECK(y == Matrix{{10}, {1}});
  }
  SUBCASE("ties pick the smallest pair") {
    auto hg = Hypergraph::from_edge_list(4, {{0, 1, 2, 3}});
    auto m = prop::hypergcn_mediators(hg, Matrix(4, 2, 1.0), Matrix::identity(2));
    CHECK(m[0] == std::pair<NodeId, NodeId>{0, 1});
  }
  SUBCASE("3-node edge: only mediator-adjacent pairs carry weight") {
    auto hg = Hypergraph::from_edge_list(3, {{0, 1, 2}});
    Matrix x{{0}, {5}, {1}};
    auto med = prop::hypergcn_mediators(hg, x, Matrix::identity(1));
    CHECK(med[0] == std::pair<NodeId, NodeId>{0, 1});
    CHECK(prop::hypergcn_weight(hg, 0, med[0], 0, 1) == 1.0 / 3.0);
    CHECK(prop::hypergcn_weight(hg, 0, med[0], 0, 2) == 1.0 / 3.0);
    CHECK(prop::hypergcn_weight(hg, 0, med[0], 1, 2) == 1.0 / 3.0);

    auto big = Hypergraph::from_edge_list(4, {{0, 1, 2, 3}});
    Matrix xb{{0}, {9}, {4}, {5}};
    auto mb = prop::hypergcn_mediators(big, xb, Matrix::identity(1));
    CHECK(mb[0] == std::pair<NodeId, NodeId>{0, 1});
    CHECK(prop::hypergcn_weight(big, 0, mb[0], 2, 3) == 0.0);
    CHECK(prop::hypergcn_weight(big, 0, mb[0], 0, 2) == 1.0 / 5.0);
  }
  SUBCASE("singleton edges are rejected") {
    CHECK(kind_of([] {
            prop::hypergcn_mediators(Hypergraph::from_edge_list(2, {{0}}), Matrix(2, 1), Matrix::identity(1));
          }) == ErrorKind::DegenerateEdge);
  }
}

TEST_CASE("hypersage") {
  SUBCASE("single node in a singleton edge") {
    auto hg = Hypergraph::from_edge_list(1, {{0}});
    auto y = prop::hypersage_layer(hg, Matrix{{3, 4}}, Matrix::identity(2), 1.0, nn::Activation::Identity);
    CHECK(max_abs_diff(y, Matrix{{0.6, 0.8}}) < 1e-15);
  }
  SUBCASE("constant positive features are fixed by any power mean") {
    Rng rng(6);
    auto hg = random_hypergraph(rng, 6, 4, 1, 3);
    for (double p : {1.0, 2.0, 3.0}) {
      auto y = prop::hypersage_layer(hg, Matrix(6, 2, 0.5), Matrix::identity(2), p, nn::Activation::Identity);
      for (NodeId v = 0; v < 6; ++v) {
        // P_v = 0.5 + 0.5 (or 0.5 when isolated), equal columns -> 1/sqrt(2) each
        CHECK(y(v, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
      }
    }
  }
  SUBCASE("fractional power of a negative feature") {
    auto hg = Hypergraph::from_edge_list(2, {{0, 1}});
    CHECK(kind_of([&] {
            prop::hypersage_layer(hg, Matrix{{-1}, {2}}, Matrix::identity(1), 1.5, nn::Activation::Identity);
          }) == ErrorKind::NegativeBase);
  }
  SUBCASE("zero aggregate") {
    auto hg = Hypergraph::from_edge_list(2, {{0, 1}});
    CHECK(kind_of([&] {
            prop::hypersage_layer(hg, Matrix(2, 1), Matrix::identity(1), 1.0, nn::Activation::Identity);
          }) == ErrorKind::ZeroNormRow);
  }
}
