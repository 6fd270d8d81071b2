#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "hgx/training.hpp"
#include "support.hpp"

using namespace hgx;
using namespace hgx::train;
using hgx::testing::kind_of;

namespace {

// Two classes with orthogonal features; hyperedges stay within a class.
struct Toy {
  Hypergraph hg;
  Matrix x;
  std::vector<int> labels;
};

Toy separable_toy(std::size_t n = 24) {
  Toy t;
  t.x = Matrix(n, 2);
  std::vector<std::vector<NodeId>> edges;
  for (std::size_t v = 0; v < n; ++v) {
    const int y = static_cast<int>(v % 2);
    t.labels.push_back(y);
    t.x(v, static_cast<std::size_t>(y)) = 1.0;
    if (v + 2 < n) edges.push_back({v, v + 2});
  }
  t.hg = Hypergraph::from_edge_list(n, edges);
  return t;
}

TrainConfig small_config(allset::ModelKind kind) {
  TrainConfig c;
  c.network.kind = kind;
  c.network.hidden = 8;
  c.lr = 0.01;
  c.epochs = 100;
  c.patience = 100;
  c.runs = 2;
  return c;
}

}  // namespace

TEST_CASE("split sizes") {
  auto s = make_splits(100, {});
  CHECK(s.train.size() == 50);
  CHECK(s.val.size() == 25);
  CHECK(s.test.size() == 25);

  auto zoo = make_splits(101, {});
  CHECK(zoo.train.size() == 51);
  CHECK(zoo.val.size() == 25);
  CHECK(zoo.test.size() == 25);

  auto a = make_splits(101, {.seed = 4});
  auto b = make_splits(101, {.seed = 4});
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(make_splits(101, {.seed = 5}).test != a.test);

  CHECK(kind_of([] { make_splits(3, {}); }) == ErrorKind::TooFewNodes);
}

TEST_CASE("splits are a disjoint cover for every small n") {
  for (std::size_t n = 4; n <= 40; ++n) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto s = make_splits(n, {.seed = seed});
      std::vector<int> seen(n, 0);
      for (const auto* part : {&s.train, &s.val, &s.test}) {
        CHECK(std::is_sorted(part->begin(), part->end()));
        for (auto i : *part) ++seen[i];
      }
      CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
      CHECK(s.val.size() == n / 4);
      CHECK(s.test.size() == n / 4);
    }
  }
}

TEST_CASE("micro f1") {
  std::vector<int> truth{0, 1, 2, 1};
  std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(micro_f1(truth, truth, all) == 1.0);
  CHECK(micro_f1(std::vector<int>{1, 0, 0, 0}, truth, all) == 0.0);
  CHECK(micro_f1(std::vector<int>{0, 1, 2, 2}, truth, all) == 0.75);
  CHECK(kind_of([&] { micro_f1(truth, truth, std::vector<std::size_t>{}); }) == ErrorKind::EmptyMask);
}

TEST_CASE("argmax takes the first maximum") {
  CHECK(argmax_rows(Matrix{{1, 3, 3}, {2, 0, 1}}) == std::vector<int>{1, 0});
}

TEST_CASE("aggregation") {
  auto runs_of = [](std::vector<double> acc) {
    std::vector<RunResult> runs;
    for (double a : acc) runs.push_back({.test_accuracy = a});
    return runs;
  };
  auto same = aggregate_runs(runs_of({0.9, 0.9}));
  CHECK(same.mean == doctest::Approx(0.9));
  REQUIRE(same.stddev);
  CHECK(*same.stddev == 0.0);

  auto spread = aggregate_runs(runs_of({1.0, 0.0}));
  CHECK(spread.mean == 0.5);
  CHECK(*spread.stddev == doctest::Approx(std::sqrt(0.5)));
  CHECK(std::abs(*spread.stddev - 0.7071) < 1e-4);

  auto single = aggregate_runs(runs_of({0.8}));
  CHECK(single.mean == 0.8);
  CHECK_FALSE(single.stddev);
  CHECK(kind_of([] { sample_stddev(std::vector<double>{1.0}); }) == ErrorKind::TooFewRuns);
  CHECK(kind_of([&] { aggregate_runs({}); }) == ErrorKind::TooFewRuns);
}

TEST_CASE("synthetic features") {
  std::vector<int> labels;
  for (int i = 0; i < 600; ++i) labels.push_back(i % 3);

  auto clean = synth_gaussian_features(labels, 100, 0.0, 1);
  for (std::size_t v = 0; v < labels.size(); ++v) {
    for (std::size_t c = 0; c < 100; ++c) CHECK(clean(v, c) == (static_cast<int>(c) == labels[v] ? 1.0 : 0.0));
  }

  auto noisy = synth_gaussian_features(labels, 100, 1.0, 2);
  CHECK(noisy == synth_gaussian_features(labels, 100, 1.0, 2));
  for (std::size_t c = 0; c < 100; ++c) {
    double mean = 0.0;
    for (std::size_t v = 0; v < labels.size(); ++v) mean += noisy(v, c) - clean(v, c);
    mean /= static_cast<double>(labels.size());
    double var = 0.0;
    for (std::size_t v = 0; v < labels.size(); ++v) var += std::pow(noisy(v, c) - clean(v, c) - mean, 2);
    var /= static_cast<double>(labels.size() - 1);
    CHECK(var >= 0.8);
    CHECK(var <= 1.2);
  }

  CHECK(kind_of([&] { synth_gaussian_features(labels, 2, 1.0, 0); }) == ErrorKind::TooManyClasses);
}

TEST_CASE("row normalization") {
  auto y = row_normalized(Matrix{{1, -3}, {0, 0}});
  CHECK(y == Matrix{{0.25, -0.75}, {0, 0}});
}

TEST_CASE("separable toy reaches full training accuracy") {
  auto toy = separable_toy();
  auto splits = make_splits(toy.labels.size(), {});
  for (auto kind : {allset::ModelKind::Mlp, allset::ModelKind::AllSetTransformer, allset::ModelKind::AllDeepSets}) {
    auto run = train_one_run(small_config(kind), toy.hg, toy.x, toy.labels, 2, splits, 3);
    INFO(allset::to_string(kind));
    CHECK(run.result.train_accuracy == 1.0);
    CHECK(run.result.epochs_run <= 100);
  }
}

TEST_CASE("zero epochs evaluates the initialization") {
  auto toy = separable_toy();
  auto splits = make_splits(toy.labels.size(), {});
  auto cfg = small_config(allset::ModelKind::AllSetTransformer);
  cfg.epochs = 0;
  auto run = train_one_run(cfg, toy.hg, toy.x, toy.labels, 2, splits, 5);
  CHECK(run.result.best_epoch == 0);
  CHECK(run.result.epochs_run == 0);
  CHECK(run.result.loss_curve.empty());
  CHECK(run.result.val_curve.size() == 1);

  allset::AllSetNetwork fresh(cfg.network, 2, 2, 5);
  ad::Tape t;
  auto pred = argmax_rows(fresh.forward(t, toy.hg, toy.x).value());
  CHECK(run.result.test_accuracy == micro_f1(pred, toy.labels, splits.test));
  CHECK(run.result.val_accuracy == micro_f1(pred, toy.labels, splits.val));
}

TEST_CASE("training is deterministic") {
  auto toy = separable_toy();
  auto cfg = small_config(allset::ModelKind::AllSetTransformer);
  cfg.network.dropout = 0.3;
  auto a = run_experiment(cfg, toy.hg, toy.x, toy.labels, 2, 1);
  auto b = run_experiment(cfg, toy.hg, toy.x, toy.labels, 2, 2);
  REQUIRE(a.runs.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(a.runs[r].seed == cfg.seed + r);
    CHECK(a.runs[r].loss_curve == b.runs[r].loss_curve);
    CHECK(a.runs[r].val_curve == b.runs[r].val_curve);
    CHECK(a.runs[r].test_accuracy == b.runs[r].test_accuracy);
  }
}

TEST_CASE("test labels never influence training") {
  // Flip every test label: the optimization trajectory and model selection must
  // not move; only the final test score may.
  Rng rng(8);
  const std::size_t n = 40;
  auto hg = random_hypergraph(rng, n, 15, 2, 5);
  Matrix x(n, 4);
  for (double& v : x.data()) v = rng.normal();
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.index(3));
  auto splits = make_splits(n, {.seed = 2});

  auto corrupted = labels;
  for (auto i : splits.test) corrupted[i] = (corrupted[i] + 1) % 3;

  auto cfg = small_config(allset::ModelKind::AllSetTransformer);
  cfg.epochs = 40;
  auto a = train_one_run(cfg, hg, x, labels, 3, splits, 11).result;
  auto b = train_one_run(cfg, hg, x, corrupted, 3, splits, 11).result;
  CHECK(a.loss_curve == b.loss_curve);
  CHECK(a.val_curve == b.val_curve);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.train_accuracy == b.train_accuracy);
  CHECK(a.test_accuracy != b.test_accuracy);
}

TEST_CASE("early stopping keeps the earliest best epoch") {
  auto toy = separable_toy();
  auto splits = make_splits(toy.labels.size(), {});
  auto cfg = small_config(allset::ModelKind::Mlp);
  cfg.epochs = 300;
  cfg.patience = 10;
  auto r = train_one_run(cfg, toy.hg, toy.x, toy.labels, 2, splits, 1).result;
  const double best = *std::max_element(r.val_curve.begin(), r.val_curve.end());
  CHECK(r.val_accuracy == best);
  CHECK(r.val_curve[r.best_epoch] == best);
  for (std::size_t e = 0; e < r.best_epoch; ++e) CHECK(r.val_curve[e] < best);
  CHECK(r.epochs_run <= r.best_epoch + cfg.patience);
}

TEST_CASE("divergence is reported") {
  auto toy = separable_toy();
  auto splits = make_splits(toy.labels.size(), {});
  auto bad = toy.x;
  bad(0, 0) = std::numeric_limits<double>::infinity();
  CHECK(kind_of([&] {
          train_one_run(small_config(allset::ModelKind::Mlp), toy.hg, bad, toy.labels, 2, splits, 1);
        }) == ErrorKind::Divergence);
}
