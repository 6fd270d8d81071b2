#include <cmath>

#include "doctest.h"
#include "hgx/autodiff.hpp"
#include "hgx/nn.hpp"
#include "hgx/optim.hpp"
#include "support.hpp"

using namespace hgx;
using hgx::testing::kind_of;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("matmul values") {
  ad::Tape t;
  auto i = t.constant(Matrix::identity(3));
  Rng rng(1);
  auto x = random_matrix(rng, 3, 2);
  CHECK(ad::matmul(i, t.constant(x)).value() == x);

  auto y = ad::matmul(t.constant(Matrix{{1, 2}, {3, 4}}), t.constant(Matrix{{1}, {1}}));
  CHECK(y.value() == Matrix{{3}, {7}});
}

TEST_CASE("matmul gradient") {
  Rng rng(2);
  ad::ParameterSet ps;
  auto& a = ps.add("a", random_matrix(rng, 5, 4));
  auto& b = ps.add("b", random_matrix(rng, 4, 3));
  auto probe = random_matrix(rng, 5, 3);
  auto rep = ad::grad_check(ps, [&](ad::Tape& t) {
    return ad::sum_all(ad::mul(ad::matmul(t.param(a), t.param(b)), t.constant(probe)));
  });
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("row softmax") {
  ad::Tape t;
  CHECK(ad::row_softmax(t.constant(Matrix{{0, 0}})).value() == Matrix{{0.5, 0.5}});
  auto big = ad::row_softmax(t.constant(Matrix{{1000, 0}})).value();
  CHECK(std::abs(big(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(big(0, 1)) < 1e-12);

  Rng rng(3);
  ad::ParameterSet ps;
  auto& a = ps.add("a", random_matrix(rng, 3, 4, -2, 2));
  auto probe = random_matrix(rng, 3, 4);
  auto rep = ad::grad_check(
      ps, [&](ad::Tape& tp) { return ad::sum_all(ad::mul(ad::row_softmax(tp.param(a)), tp.constant(probe))); });
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("layer norm") {
  ad::Tape t;
  auto gain = t.constant(Matrix{{1, 1}});
  auto bias = t.constant(Matrix{{0, 0}});
  CHECK(ad::layer_norm(t.constant(Matrix{{4, 4}}), gain, bias).value() == Matrix{{0, 0}});

  auto y = ad::layer_norm(t.constant(Matrix{{1, 3}}), gain, bias).value();
  CHECK(std::abs(y(0, 0) + 1.0) < 1e-4);
  CHECK(std::abs(y(0, 1) - 1.0) < 1e-4);

  Rng rng(4);
  ad::ParameterSet ps;
  auto& a = ps.add("a", random_matrix(rng, 3, 5));
  auto& g = ps.add("g", random_matrix(rng, 1, 5, 0.5, 1.5));
  auto& b = ps.add("b", random_matrix(rng, 1, 5));
  auto probe = random_matrix(rng, 3, 5);
  auto rep = ad::grad_check(ps, [&](ad::Tape& tp) {
    return ad::sum_all(ad::mul(ad::layer_norm(tp.param(a), tp.param(g), tp.param(b)), tp.constant(probe)));
  });
  CHECK(rep.max_rel_error < 1e-5);
}

TEST_CASE("mlp") {
  Rng rng(5);
  SUBCASE("identity single layer") {
    ad::ParameterSet ps;
    nn::Mlp mlp({{3, 3}, nn::Activation::Identity, true}, ps, "m", rng);
    mlp.weight(0).value = Matrix::identity(3);
    mlp.bias(0)->value.fill(0.0);
    ad::Tape t;
    auto x = random_matrix(rng, 4, 3);
    CHECK(mlp.forward(t, t.constant(x)).value() == x);
  }
  SUBCASE("row permutation commutes") {
    ad::ParameterSet ps;
    nn::Mlp mlp({{3, 8, 2}}, ps, "m", rng);
    auto x = random_matrix(rng, 5, 3);
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    ad::Tape t;
    auto y = mlp.forward(t, t.constant(x));
    auto yp = mlp.forward(t, ad::gather_rows(t.constant(x), perm));
    CHECK(ad::gather_rows(y, perm).value() == yp.value());
  }
  SUBCASE("two-layer relu gradient away from kinks") {
    ad::ParameterSet ps;
    nn::Mlp mlp({{3, 6, 2}}, ps, "m", rng);
    auto x = random_matrix(rng, 4, 3);
    // keep every hidden pre-activation at least 0.05 away from zero
    for (int tries = 0; tries < 100; ++tries) {
      ad::Tape t;
      auto h = ad::matmul(t.constant(x), t.param(mlp.weight(0)));
      h = ad::add_row(h, t.param(*mlp.bias(0)));
      bool clear = true;
      for (double v : h.value().data()) clear = clear && std::abs(v) > 0.05;
      if (clear) break;
      x = random_matrix(rng, 4, 3);
    }
    auto probe = random_matrix(rng, 4, 2);
    auto rep = ad::grad_check(
        ps, [&](ad::Tape& t) { return ad::sum_all(ad::mul(mlp.forward(t, t.constant(x)), t.constant(probe))); });
    CHECK(rep.max_rel_error < 1e-4);
  }
}

TEST_CASE("cross entropy") {
  std::vector<int> labels{0, 1, 2, 3};
  std::vector<std::size_t> mask{0, 1, 2, 3};
  ad::Tape t;
  auto uniform = ad::cross_entropy(t.constant(Matrix(4, 4)), labels, mask);
  CHECK(std::abs(uniform.value()(0, 0) - std::log(4.0)) < 1e-15);

  Matrix confident(4, 4);
  for (std::size_t i = 0; i < 4; ++i) confident(i, i) = 1e3;
  CHECK(ad::cross_entropy(t.constant(confident), labels, mask).value()(0, 0) < 1e-12);

  CHECK(kind_of([&] { ad::cross_entropy(t.constant(Matrix(4, 4)), labels, std::vector<std::size_t>{}); }) ==
        ErrorKind::EmptyMask);
  CHECK(kind_of([&] { ad::cross_entropy(t.constant(Matrix(4, 3)), labels, mask); }) == ErrorKind::LabelOutOfRange);

  Rng rng(6);
  ad::ParameterSet ps;
  auto& z = ps.add("z", random_matrix(rng, 4, 4, -3, 3));
  auto rep = ad::grad_check(ps, [&](ad::Tape& tp) {
    return ad::cross_entropy(tp.param(z), labels, std::vector<std::size_t>{0, 2, 3});
  });
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("segment ops") {
  ad::Tape t;
  std::vector<std::size_t> seg{0, 1, 0, 1, 1};
  auto x = t.constant(Matrix{{1}, {2}, {3}, {4}, {5}});
  CHECK(ad::segment_sum(x, seg, 3).value() == Matrix{{4}, {11}, {0}});
  CHECK(ad::segment_prod(x, seg, 3).value() == Matrix{{3}, {40}, {1}});
  auto sm = ad::segment_softmax(x, seg, 3).value();
  CHECK(std::abs(sm(0, 0) + sm(2, 0) - 1.0) < 1e-15);
  CHECK(std::abs(sm(1, 0) + sm(3, 0) + sm(4, 0) - 1.0) < 1e-15);

  Rng rng(7);
  ad::ParameterSet ps;
  auto& a = ps.add("a", random_matrix(rng, 5, 2, 0.5, 2.0));
  auto probe = random_matrix(rng, 2, 2);
  auto rep = ad::grad_check(ps, [&](ad::Tape& tp) {
    auto p = ad::segment_prod(tp.param(a), seg, 2);
    auto s = ad::segment_softmax(tp.param(a), seg, 2);
    return ad::add(ad::sum_all(ad::mul(p, tp.constant(probe))), ad::sum_all(ad::mul(s, s)));
  });
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("elementwise op gradients") {
  Rng rng(8);
  ad::ParameterSet ps;
  auto& a = ps.add("a", random_matrix(rng, 3, 3, 0.2, 2.0));
  auto& c = ps.add("c", random_matrix(rng, 3, 1));
  std::vector<std::size_t> idx{2, 0, 0, 1};
  auto probe = random_matrix(rng, 4, 8);
  auto rep = ad::grad_check(ps, [&](ad::Tape& t) {
    auto x = t.param(a);
    auto parts = std::vector<ad::Var>{ad::tanh(x), ad::sigmoid(x), ad::power(x, 1.5), ad::elu(ad::scale(x, -1.0))};
    auto y = ad::concat_cols(parts);
    y = ad::mul_col(y, t.param(c));
    y = ad::row_l2_normalize(ad::gather_rows(y, idx));
    y = ad::slice_cols(ad::add(y, ad::transpose(ad::transpose(y))), 2, 10);
    return ad::sum_all(ad::mul(y, t.constant(probe)));
  });
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("grad check report") {
  ad::ParameterSet ps;
  auto& a = ps.add("a", Matrix{{1, -2, 3}});
  auto linear = ad::grad_check(ps, [&](ad::Tape& t) {
    return ad::sum_all(ad::mul(t.param(a), t.constant(Matrix{{2, 5, -1}})));
  });
  CHECK(linear.max_rel_error < 1e-9);
  CHECK(linear.entries_checked == 3);
  CHECK(kind_of([&] { ad::grad_check(ps, [&](ad::Tape& t) { return t.param(a); }); }) ==
        ErrorKind::NonScalarOutput);
}

TEST_CASE("dropout") {
  ad::Tape t;
  auto x = t.constant(Matrix(50, 40, 1.0));
  CHECK(ad::dropout(x, 0.5).value() == x.value());  // evaluation mode
  Rng rng(9);
  t.set_training(true, &rng);
  auto y = ad::dropout(x, 0.5).value();
  double sum = 0.0;
  for (double v : y.data()) {
    CHECK((v == 0.0 || v == 2.0));
    sum += v;
  }
  CHECK(std::abs(sum / 2000.0 - 1.0) < 0.1);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient and no decay leave parameters unchanged") {
    ad::ParameterSet ps;
    auto& w = ps.add("w", Matrix{{1.5, -2.0}});
    w.grad = Matrix(1, 2);
    Adam opt({.lr = 0.1});
    opt.step(ps);
    CHECK(w.value == Matrix{{1.5, -2.0}});
  }
  SUBCASE("one step on w^2 descends") {
    ad::ParameterSet ps;
    auto& w = ps.add("w", Matrix{{1.0}});
    w.grad = Matrix{{2.0}};
    Adam opt({.lr = 0.1});
    opt.step(ps);
    CHECK(w.value(0, 0) < 1.0);
  }
  SUBCASE("200 steps on a quadratic") {
    ad::ParameterSet ps;
    auto& w = ps.add("w", Matrix{{1.0}});
    Adam opt({.lr = 0.05});
    for (int i = 0; i < 200; ++i) {
      ps.zero_grad();
      ad::Tape t;
      auto v = t.param(w);
      t.backward(ad::sum_all(ad::mul(v, v)));
      opt.step(ps);
    }
    CHECK(std::abs(w.value(0, 0)) < 1e-2);
  }
  SUBCASE("decoupled weight decay") {
    ad::ParameterSet ps;
    auto& w = ps.add("w", Matrix{{2.0}});
    w.grad = Matrix(1, 1);
    Adam opt({.lr = 0.1, .weight_decay = 0.5});
    opt.step(ps);
    CHECK(w.value(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));
  }
}
