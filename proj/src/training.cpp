#include "hgx/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "hgx/error.hpp"
#include "hgx/optim.hpp"
#include "hgx/rng.hpp"

namespace hgx::train {

Splits make_splits(std::size_t n, const SplitSpec& spec) {
  if (n < 4) fail(ErrorKind::TooFewNodes, "splitting needs at least 4 nodes, got " + std::to_string(n));
  if (!(spec.train > 0.0 && spec.val > 0.0 && spec.test > 0.0) ||
      std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    fail(ErrorKind::InvalidConfig, "split fractions must be positive and sum to 1");
  }
  const auto nv = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(n)));
  const auto nt = static_cast<std::size_t>(std::floor(spec.test * static_cast<double>(n)));
  Rng rng(spec.seed);
  const auto perm = rng.permutation(n);
  Splits s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(nv));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(nv), perm.begin() + static_cast<std::ptrdiff_t>(nv + nt));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(nv + nt), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

double micro_f1(std::span<const int> pred, std::span<const int> truth, std::span<const std::size_t> mask) {
  if (mask.empty()) fail(ErrorKind::EmptyMask, "accuracy over an empty mask");
  std::size_t correct = 0;
  for (std::size_t i : mask) {
    if (i >= pred.size() || i >= truth.size()) fail(ErrorKind::ShapeMismatch, "mask index out of range");
    correct += pred[i] == truth[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

Matrix row_normalized(Matrix x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += std::abs(v);
    if (s > 0.0)
      for (double& v : x.row(i)) v /= s;
  }
  return x;
}

namespace {

std::vector<Matrix> snapshot(const ad::ParameterSet& params) {
  std::vector<Matrix> values;
  values.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) values.push_back(params[i].value);
  return values;
}

void restore(ad::ParameterSet& params, std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(values[i]);
}

Matrix predict(const allset::AllSetNetwork& net, const Hypergraph& hg, const Matrix& x) {
  ad::Tape tape;
  return net.forward(tape, hg, x).value();
}

}  // namespace

TrainedRun train_one_run(const TrainConfig& config, const Hypergraph& hg, const Matrix& features,
                         std::span<const int> labels, std::size_t classes, const Splits& splits,
                         std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  if (labels.size() != hg.num_nodes() || features.rows() != hg.num_nodes()) {
    fail(ErrorKind::DimensionMismatch, "features/labels must have one row per node");
  }
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      fail(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  const Matrix x = config.row_normalize ? row_normalized(features) : features;

  // Labels visible to training: train and validation rows only.
  std::vector<int> visible(labels.size(), -1);
  for (std::size_t i : splits.train) visible[i] = labels[i];
  for (std::size_t i : splits.val) visible[i] = labels[i];

  auto net = std::make_unique<allset::AllSetNetwork>(config.network, x.cols(), classes, seed);
  Adam adam({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng dropout_rng(seed ^ 0x9e3779b97f4a7c15ULL);

  RunResult r;
  r.seed = seed;
  auto evaluate = [&] { return micro_f1(argmax_rows(predict(*net, hg, x)), visible, splits.val); };
  double best = evaluate();
  r.val_curve.push_back(best);
  std::vector<Matrix> best_params = snapshot(net->params());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    {
      ad::Tape tape;
      tape.set_training(true, &dropout_rng);
      ad::Var loss = ad::cross_entropy(net->forward(tape, hg, x), visible, splits.train);
      const double l = loss.value()(0, 0);
      if (!std::isfinite(l)) {
        fail(ErrorKind::Divergence, "non-finite training loss at epoch " + std::to_string(epoch) + " (seed " +
                                        std::to_string(seed) + ")");
      }
      r.loss_curve.push_back(l);
      net->params().zero_grad();
      tape.backward(loss);
      adam.step(net->params());
    }
    r.epochs_run = epoch;
    const double acc = evaluate();
    r.val_curve.push_back(acc);
    if (acc > best) {
      best = acc;
      r.best_epoch = epoch;
      best_params = snapshot(net->params());
    } else if (epoch - r.best_epoch >= config.patience) {
      break;
    }
  }

  restore(net->params(), best_params);
  const auto pred = argmax_rows(predict(*net, hg, x));
  r.train_accuracy = micro_f1(pred, labels, splits.train);
  r.val_accuracy = micro_f1(pred, labels, splits.val);
  r.test_accuracy = micro_f1(pred, labels, splits.test);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(r), std::move(net)};
}

double mean_accuracy(std::span<const RunResult> runs) {
  if (runs.empty()) fail(ErrorKind::TooFewRuns, "no runs to aggregate");
  double s = 0.0;
  for (const auto& r : runs) s += r.test_accuracy;
  return s / static_cast<double>(runs.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) fail(ErrorKind::TooFewRuns, "sample standard deviation needs at least 2 runs");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

ExperimentResult aggregate_runs(std::vector<RunResult> runs) {
  ExperimentResult e;
  e.mean = mean_accuracy(runs);
  if (runs.size() >= 2) {
    std::vector<double> acc;
    for (const auto& r : runs) acc.push_back(r.test_accuracy);
    e.stddev = sample_stddev(acc);
  }
  for (const auto& r : runs) e.seconds += r.seconds;
  e.runs = std::move(runs);
  return e;
}

ExperimentResult run_experiment(const TrainConfig& config, const Hypergraph& hg, const Matrix& features,
                                std::span<const int> labels, std::size_t classes, std::size_t jobs) {
  if (config.runs == 0) fail(ErrorKind::TooFewRuns, "experiment needs at least one run");
  const auto start = std::chrono::steady_clock::now();
  std::vector<RunResult> results(config.runs);
  std::vector<std::exception_ptr> errors(config.runs);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t r;
      {
        std::lock_guard lock(mu);
        if (next == config.runs) return;
        r = next++;
      }
      try {
        const std::uint64_t seed = config.seed + r;
        SplitSpec split = config.split;
        split.seed = seed;
        const Splits s = make_splits(hg.num_nodes(), split);
        results[r] = train_one_run(config, hg, features, labels, classes, s, seed).result;
        results[r].run = r;
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, config.runs);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  ExperimentResult out = aggregate_runs(std::move(results));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

Matrix synth_gaussian_features(std::span<const int> labels, std::size_t dim, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) fail(ErrorKind::InvalidConfig, "sigma must be >= 0");
  int classes = 0;
  for (int y : labels) {
    if (y < 0) fail(ErrorKind::LabelOutOfRange, "negative label");
    classes = std::max(classes, y + 1);
  }
  if (static_cast<std::size_t>(classes) > dim) {
    fail(ErrorKind::TooManyClasses, std::to_string(classes) + " classes do not fit in " + std::to_string(dim) +
                                        " feature columns");
  }
  Rng rng(seed);
  Matrix x(labels.size(), dim);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    x(i, static_cast<std::size_t>(labels[i])) = 1.0;
    if (sigma > 0.0)
      for (double& v : x.row(i)) v += rng.normal(0.0, sigma);
  }
  return x;
}

}  // namespace hgx::train
