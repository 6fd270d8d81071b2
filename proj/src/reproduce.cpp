#include "hgx/reproduce.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <numeric>
#include <sstream>

#include "hgx/error.hpp"
#include "hgx/io.hpp"
#include "hgx/optim.hpp"
#include "hgx/propagation.hpp"

namespace hgx::repro {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

std::string pct(double v) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(2);
  ss << 100.0 * v;
  return ss.str();
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

// All d-subsets of [0, n) as one hyperedge each.
Hypergraph complete_uniform(std::size_t n, std::size_t d) {
  std::vector<std::vector<NodeId>> edges;
  std::vector<bool> pick(n, false);
  std::fill(pick.end() - static_cast<std::ptrdiff_t>(d), pick.end(), true);
  do {
    std::vector<NodeId> e;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) e.push_back(i);
    edges.push_back(std::move(e));
  } while (std::next_permutation(pick.begin(), pick.end()));
  return Hypergraph::from_edge_list(n, std::move(edges));
}

allset::NetworkConfig small_config(allset::ModelKind kind) {
  allset::NetworkConfig c;
  c.kind = kind;
  c.hidden = 4;
  c.heads = kind == allset::ModelKind::AllSetTransformer ? 2 : 1;
  c.hypersage_p = 2.0;
  c.hnhn = {0.5, -0.5, true};
  return c;
}

}  // namespace

std::string format_check(const CheckResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + "  " + r.name + "  " + r.measured + "  (" + fmt(r.seconds, 3) +
         " s)";
}

// ---- structural checks ----------------------------------------------------------------------

CheckResult check_theorems(std::uint64_t seed, std::size_t instances) {
  const auto start = Clock::now();
  CheckResult r{"theorem-equivalence"};
  const auto cases = allset::theorem_equivalence_suite(seed, instances);
  double worst = 0.0;
  r.passed = true;
  for (const auto& c : cases) {
    r.passed = r.passed && c.passed() && c.instances >= 50;
    worst = std::max(worst, c.max_deviation);
    r.details.push_back((c.passed() ? "ok    " : "MISS  ") + c.name + ": max deviation " + fmt(c.max_deviation, 3) +
                        " over " + std::to_string(c.instances) + " instances (tol " + fmt(c.tolerance, 2) + ")");
  }
  r.seconds = since(start);
  r.passed = r.passed && r.seconds < 60.0;
  r.measured = std::to_string(cases.size()) + " cases, worst deviation " + fmt(worst, 3);
  return r;
}

CheckResult check_tensor_oracle(std::uint64_t seed) {
  const auto start = Clock::now();
  CheckResult r{"tensor-oracle"};
  Rng rng(seed);
  double worst = 0.0;
  std::size_t count = 0;
  for (std::size_t d = 2; d <= 4; ++d)
    for (std::size_t n = d; n <= 6; ++n) {
      std::vector<Hypergraph> instances{complete_uniform(n, d)};
      for (int i = 0; i < 25; ++i) instances.push_back(random_uniform_hypergraph(rng, n, 1 + rng.index(8), d));
      for (const auto& hg : instances) {
        const Matrix x = random_matrix(rng, n, 3, -1.0, 1.0);
        const Matrix direct = prop::z_prop(hg, x, d);
        const Matrix oracle = AdjacencyTensor(hg, d).contract(x);
        worst = std::max(worst, max_abs_diff(direct, oracle));
        ++count;
      }
    }
  r.seconds = since(start);
  r.passed = worst < 1e-10 && r.seconds < 60.0;
  r.measured = std::to_string(count) + " instances (n <= 6, d in {2,3,4}), max deviation " + fmt(worst, 3);
  return r;
}

// ---- gradients ----------------------------------------------------------------------------------

std::vector<allset::ModelKind> trainable_layer_kinds() {
  using allset::ModelKind;
  return {ModelKind::AllDeepSets, ModelKind::AllSetTransformer, ModelKind::Hgnn,     ModelKind::Hnhn,
          ModelKind::Hcha,        ModelKind::HyperGcn,          ModelKind::HyperSage};
}

ad::GradCheckReport gradcheck_layer(allset::ModelKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t f = 3;
  const std::size_t n = 5 + rng.index(3);
  Hypergraph hg = random_hypergraph(rng, n, 3 + rng.index(3), 2, 4);
  std::vector<double> w(hg.num_edges());
  for (double& v : w) v = rng.uniform(0.5, 2.0);
  hg = Hypergraph::from_edge_list(n, hg.edges(), w);

  const bool edge_features = kind == allset::ModelKind::Hcha;
  const std::size_t fe = edge_features ? 2 : 0;
  ad::ParameterSet params;
  // Positive inputs keep HyperSAGE's power mean away from its kink at 0.
  ad::Parameter& x = params.add("x", random_matrix(rng, n, f, 0.1, 1.0));
  ad::Parameter* z = edge_features ? &params.add("z", random_matrix(rng, hg.num_edges(), fe, -1.0, 1.0)) : nullptr;
  const allset::AllSetLayer layer = allset::make_layer(small_config(kind), params, "layer", f, rng, fe);
  const Matrix probe = random_matrix(rng, n, small_config(kind).hidden, -1.0, 1.0);
  return ad::grad_check(params, [&](ad::Tape& tape) {
    const ad::Var zv = z ? tape.param(*z) : ad::Var{};
    const ad::Var out = layer.forward(tape, hg, tape.param(x), zv).x;
    return ad::sum_all(ad::mul(out, tape.constant(probe)));
  });
}

CheckResult check_gradients(std::uint64_t seed, std::size_t seeds, double tolerance) {
  const auto start = Clock::now();
  CheckResult r{"gradient-check"};
  r.passed = true;
  double worst = 0.0;
  for (const auto kind : trainable_layer_kinds()) {
    double kind_worst = 0.0;
    std::string where;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto report = gradcheck_layer(kind, seed + s);
      if (report.max_rel_error >= kind_worst) {
        kind_worst = report.max_rel_error;
        where = report.worst_parameter + "[" + std::to_string(report.worst_index) + "]";
      }
    }
    worst = std::max(worst, kind_worst);
    const bool ok = kind_worst < tolerance;
    r.passed = r.passed && ok;
    r.details.push_back(std::string(ok ? "ok    " : "MISS  ") + std::string(allset::to_string(kind)) +
                        ": max rel-err " + fmt(kind_worst, 3) + " over " + std::to_string(seeds) + " seeds (worst " +
                        where + ")");
  }
  r.seconds = since(start);
  r.passed = r.passed && r.seconds < 300.0;
  r.measured = std::to_string(trainable_layer_kinds().size()) + " layer kinds x " + std::to_string(seeds) +
               " seeds, max rel-err " + fmt(worst, 3) + " (tol " + fmt(tolerance, 2) + ")";
  return r;
}

// ---- permutation invariance ------------------------------------------------------------------

double permutation_deviation(allset::ModelKind kind, std::uint64_t seed, std::size_t triples) {
  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t t = 0; t < triples; ++t) {
    const std::size_t n = 3 + rng.index(10);
    const std::size_t min_size = kind == allset::ModelKind::HyperGcn ? 2 : 1;
    const Hypergraph hg = random_hypergraph(rng, n, 1 + rng.index(8), min_size, std::min<std::size_t>(n, 6));
    const Matrix x = random_matrix(rng, n, 3, 0.1, 1.0);
    allset::NetworkConfig config = small_config(kind);
    config.hidden = 6;
    config.heads = kind == allset::ModelKind::AllSetTransformer ? 2 : 1;
    const allset::AllSetNetwork net(config, 3, 3, rng.index(1u << 30));

    // Shuffle node ids and hyperedge order.
    const auto perm = rng.permutation(n);
    const auto edge_order = rng.permutation(hg.num_edges());
    std::vector<std::vector<NodeId>> edges;
    for (std::size_t e : edge_order) {
      std::vector<NodeId> members;
      for (NodeId v : hg.edge(e)) members.push_back(perm[v]);
      edges.push_back(std::move(members));
    }
    const Hypergraph shuffled = Hypergraph::from_edge_list(n, std::move(edges));
    Matrix xs(n, x.cols());
    for (std::size_t v = 0; v < n; ++v) std::copy(x.row(v).begin(), x.row(v).end(), xs.row(perm[v]).begin());

    ad::Tape t1, t2;
    const Matrix a = net.forward(t1, hg, x).value();
    const Matrix b = net.forward(t2, shuffled, xs).value();
    double scale = 1e-12, diff = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < a.cols(); ++j) {
        scale = std::max(scale, std::abs(a(v, j)));
        diff = std::max(diff, std::abs(a(v, j) - b(perm[v], j)));
      }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

CheckResult check_permutation_invariance(std::uint64_t seed, std::size_t triples, double tolerance) {
  const auto start = Clock::now();
  CheckResult r{"permutation-invariance"};
  r.passed = true;
  double worst = 0.0;
  std::size_t k = 0;
  for (const auto kind : trainable_layer_kinds()) {
    const double dev = permutation_deviation(kind, seed + 7919 * k++, triples);
    worst = std::max(worst, dev);
    const bool ok = dev < tolerance;
    r.passed = r.passed && ok;
    r.details.push_back(std::string(ok ? "ok    " : "MISS  ") + std::string(allset::to_string(kind)) +
                        ": max rel-err " + fmt(dev, 3) + " over " + std::to_string(triples) + " triples");
  }
  r.seconds = since(start);
  r.measured = std::to_string(triples) + " triples x " + std::to_string(trainable_layer_kinds().size()) +
               " kinds, max rel-err " + fmt(worst, 3) + " (tol " + fmt(tolerance, 2) + ")";
  return r;
}

// ---- DeepSets max fit -----------------------------------------------------------------------------

namespace {

struct MultisetData {
  Hypergraph hg;  // one hyperedge per multiset over one node per element
  Matrix x;
  Matrix target;
};

MultisetData sample_multisets(Rng& rng, std::size_t count) {
  MultisetData d;
  std::vector<std::vector<NodeId>> edges;
  std::vector<double> values;
  d.target = Matrix(count, 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t size = 1 + rng.index(8);
    std::vector<NodeId> e;
    double mx = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
      const double v = rng.uniform(0.0, 1.0);
      mx = std::max(mx, v);
      e.push_back(values.size());
      values.push_back(v);
    }
    edges.push_back(std::move(e));
    d.target(i, 0) = mx;
  }
  d.x = Matrix(values.size(), 1, values);
  d.hg = Hypergraph::from_edge_list(values.size(), std::move(edges));
  return d;
}

}  // namespace

MaxFitResult fit_deepsets_max(std::uint64_t seed, std::size_t steps) {
  Rng rng(seed);
  const MultisetData train_set = sample_multisets(rng, 512);
  const MultisetData test_set = sample_multisets(rng, 512);
  ad::ParameterSet params;
  auto f = allset::DeepSetsFunction::create(params, "ds", 1, 32, 2, rng);
  const allset::AllSetLayer layer(f, std::make_shared<allset::SumFunction>());
  const allset::AffineMap head = allset::AffineMap::create(params, "head", 32, 1, true, nn::Activation::Identity, rng);
  auto predict = [&](ad::Tape& tape, const MultisetData& d) {
    return head.forward(tape, ad::relu(layer.v2e_forward(tape, d.hg, tape.constant(d.x), {})));
  };
  Adam adam({0.003, 0.9, 0.999, 1e-8, 0.0});
  MaxFitResult out;
  for (std::size_t s = 0; s < steps; ++s) {
    ad::Tape tape;
    ad::Var loss = ad::mse(predict(tape, train_set), train_set.target);
    params.zero_grad();
    tape.backward(loss);
    adam.step(params);
    out.steps = s + 1;
  }
  auto evaluate = [&](const MultisetData& d) {
    ad::Tape tape;
    return ad::mse(predict(tape, d), d.target).value()(0, 0);
  };
  out.train_mse = evaluate(train_set);
  out.test_mse = evaluate(test_set);
  double mean = 0.0;
  for (double v : train_set.target.data()) mean += v;
  mean /= static_cast<double>(train_set.target.rows());
  for (double v : test_set.target.data()) out.baseline_mse += (v - mean) * (v - mean);
  out.baseline_mse /= static_cast<double>(test_set.target.rows());
  return out;
}

CheckResult check_deepsets_max(std::uint64_t seed, std::size_t steps) {
  const auto start = Clock::now();
  CheckResult r{"deepsets-max-fit"};
  const MaxFitResult fit = fit_deepsets_max(seed, steps);
  r.seconds = since(start);
  r.passed = fit.test_mse < 1e-2 && fit.steps <= 2000;
  r.measured = "test MSE " + fmt(fit.test_mse, 3) + " after " + std::to_string(fit.steps) +
               " Adam steps (train " + fmt(fit.train_mse, 3) + ", mean-predictor " + fmt(fit.baseline_mse, 3) +
               "; need < 0.01)";
  return r;
}

// ---- datasets ------------------------------------------------------------------------------------

train::TrainConfig zoo_config(allset::ModelKind kind, std::uint64_t seed, std::size_t runs) {
  train::TrainConfig c;
  c.network.kind = kind;
  c.network.hidden = 64;
  c.network.heads = 1;
  c.runs = runs;
  c.seed = seed;
  if (kind == allset::ModelKind::Mlp) {
    c.lr = 0.1;
    c.weight_decay = 0.0;
  } else {
    c.lr = 0.01;
    c.weight_decay = 1e-5;
  }
  return c;
}

train::TrainConfig cora_config(std::uint64_t seed, std::size_t runs) {
  train::TrainConfig c;
  c.network.kind = allset::ModelKind::AllSetTransformer;
  c.network.hidden = 64;
  c.network.heads = 1;
  c.lr = 0.001;
  c.weight_decay = 0.0;
  c.runs = runs;
  c.seed = seed;
  return c;
}

DatasetRun run_dataset(const std::string& name, const std::filesystem::path& dir, const train::TrainConfig& config,
                       double threshold, const std::string& reference, std::size_t jobs) {
  const auto start = Clock::now();
  DatasetRun out;
  out.check = CheckResult(name);
  try {
    const io::DatasetBundle b = io::load_dataset(dir);
    out.result = train::run_experiment(config, b.hg, b.features, b.labels, b.classes, jobs);
  } catch (const Error& e) {
    out.check.seconds = since(start);
    out.check.measured = "could not run: " + std::string(e.what());
    return out;
  }
  const auto& res = *out.result;
  out.check.seconds = since(start);
  out.check.passed = res.mean >= threshold;
  out.check.measured = "mean test accuracy " + pct(res.mean) + (res.stddev ? " +- " + pct(*res.stddev) : "") +
                       " over " + std::to_string(res.runs.size()) + " runs (need >= " + pct(threshold) +
                       "; reference " + reference + ")";
  for (const auto& run : res.runs) {
    out.check.details.push_back("run " + std::to_string(run.run) + " seed " + std::to_string(run.seed) + ": test " +
                                pct(run.test_accuracy) + ", val " + pct(run.val_accuracy) + ", best epoch " +
                                std::to_string(run.best_epoch) + "/" + std::to_string(run.epochs_run));
  }
  return out;
}

CheckResult check_baseline_gap(const train::ExperimentResult& allset, const train::ExperimentResult& mlp,
                               double min_gap) {
  CheckResult r{"zoo-baseline-gap"};
  const double gap = allset.mean - mlp.mean;
  r.passed = allset.runs.size() == mlp.runs.size() && gap >= min_gap;
  r.measured = "AllSetTransformer " + pct(allset.mean) + " vs MLP " + pct(mlp.mean) + ", gap " + pct(gap) +
               " points (need >= " + pct(min_gap) + ")";
  r.seconds = allset.seconds + mlp.seconds;
  return r;
}

CheckResult check_determinism(const train::ExperimentResult& first, const train::ExperimentResult& second) {
  CheckResult r{"determinism"};
  std::size_t identical = 0;
  const std::size_t n = std::min(first.runs.size(), second.runs.size());
  for (std::size_t i = 0; i < n; ++i) {
    // Compare bit patterns, not values.
    const auto& a = first.runs[i];
    const auto& b = second.runs[i];
    if (std::memcmp(&a.test_accuracy, &b.test_accuracy, sizeof(double)) == 0 &&
        std::memcmp(&a.val_accuracy, &b.val_accuracy, sizeof(double)) == 0 && a.best_epoch == b.best_epoch &&
        a.loss_curve == b.loss_curve) {
      ++identical;
    }
  }
  r.passed = first.runs.size() == second.runs.size() && identical == n && n > 0;
  r.measured = std::to_string(identical) + "/" + std::to_string(first.runs.size()) +
               " runs bit-identical (test accuracy, validation accuracy, best epoch, loss curve)";
  r.seconds = second.seconds;
  return r;
}

std::optional<std::filesystem::path> find_cora(const std::filesystem::path& data_dir) {
  namespace fs = std::filesystem;
  if (const char* env = std::getenv("HGX_CORA_DIR"); env && *env) {
    if (fs::exists(fs::path(env) / "hypergraph.hg")) return fs::path(env);
  }
  if (fs::exists(data_dir / "cora" / "hypergraph.hg")) return data_dir / "cora";
  return std::nullopt;
}

namespace {

DatasetRun zoo_run(allset::ModelKind kind, const CriterionOptions& o) {
  const bool mlp = kind == allset::ModelKind::Mlp;
  return run_dataset(mlp ? "zoo-mlp" : "zoo", o.data_dir / "zoo", zoo_config(kind, o.seed), mlp ? 0.0 : 0.90,
                     mlp ? "87.18 +- 4.44" : "97.50 +- 3.59", o.jobs);
}

// A failed dataset run carries its reason in `measured`; reuse it under another name.
CheckResult not_run(const std::string& name, const DatasetRun& run) {
  CheckResult r(name, false, run.check.measured);
  r.seconds = run.check.seconds;
  return r;
}

}  // namespace

CriterionOutcome run_criterion(int id, const CriterionOptions& o) {
  using allset::ModelKind;
  CriterionOutcome out;
  out.id = id;
  switch (id) {
    case 1:
      out.title = "theorem equivalence";
      out.time_limit = 60;
      out.check = check_theorems(o.seed);
      break;
    case 2:
      out.title = "tensor oracle";
      out.time_limit = 60;
      out.check = check_tensor_oracle(o.seed);
      break;
    case 3:
      out.title = "gradient checks";
      out.time_limit = 300;
      out.check = check_gradients(o.seed);
      break;
    case 4:
      out.title = "permutation invariance";
      out.check = check_permutation_invariance(o.seed);
      break;
    case 5:
      out.title = "multiset learnability";
      out.check = check_deepsets_max(o.seed);
      break;
    case 6:
      out.title = "zoo reproduction";
      out.time_limit = 600;
      out.check = zoo_run(ModelKind::AllSetTransformer, o).check;
      break;
    case 7: {
      out.title = "cora reproduction";
      out.time_limit = 1800;
      if (const auto dir = find_cora(o.data_dir)) {
        out.check = run_dataset("cora", *dir, cora_config(o.seed), 0.74, "78.59 +- 1.47", o.jobs).check;
      } else {
        out.data_missing = true;
        out.check = CheckResult("cora", false,
                                "not evaluated: no Cora bundle (set HGX_CORA_DIR or build " +
                                    (o.data_dir / "cora").string() + " with `hgx convert linqs`)");
      }
      break;
    }
    case 8: {
      out.title = "baseline ordering";
      const auto ast = zoo_run(ModelKind::AllSetTransformer, o);
      const auto mlp = zoo_run(ModelKind::Mlp, o);
      if (!ast.result) {
        out.check = not_run("zoo-baseline-gap", ast);
      } else if (!mlp.result) {
        out.check = not_run("zoo-baseline-gap", mlp);
      } else {
        out.check = check_baseline_gap(*ast.result, *mlp.result);
        out.check.details = ast.check.details;
        for (const auto& d : mlp.check.details) out.check.details.push_back("mlp " + d);
      }
      break;
    }
    case 9: {
      out.title = "determinism";
      const auto first = zoo_run(ModelKind::AllSetTransformer, o);
      const auto second = zoo_run(ModelKind::AllSetTransformer, o);
      if (first.result && second.result) {
        out.check = check_determinism(*first.result, *second.result);
        out.check.seconds = first.check.seconds + second.check.seconds;
      } else {
        out.check = not_run("determinism", first.result ? second : first);
      }
      break;
    }
    default:
      fail(ErrorKind::InvalidConfig, "no acceptance criterion " + std::to_string(id));
  }
  if (out.time_limit > 0 && out.check.seconds > out.time_limit) {
    out.check.passed = false;
    out.check.measured += "; exceeded the " + std::to_string(static_cast<int>(out.time_limit)) + " s budget";
  }
  return out;
}

std::string format_outcome(const CriterionOutcome& o) {
  return std::string(o.check.passed ? "PASS" : "FAIL") + "  criterion " + std::to_string(o.id) + " (" + o.title +
         "): " + o.check.measured + "  (" + fmt(o.check.seconds, 3) + " s)";
}

}  // namespace hgx::repro
