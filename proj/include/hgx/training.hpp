#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgx/allset.hpp"
#include "hgx/hypergraph.hpp"
#include "hgx/matrix.hpp"

namespace hgx::train {

struct SplitSpec {
  double train = 0.5;
  double val = 0.25;
  double test = 0.25;
  std::uint64_t seed = 0;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Random disjoint cover of [0, n): val/test sizes are floor(fraction * n), train
/// takes the remainder. Each index list is sorted.
Splits make_splits(std::size_t n, const SplitSpec& spec);

/// Single-label micro-F1, i.e. the fraction of masked rows predicted correctly.
double micro_f1(std::span<const int> pred, std::span<const int> truth, std::span<const std::size_t> mask);

/// Row-wise argmax (first maximum wins).
std::vector<int> argmax_rows(const Matrix& logits);

struct TrainConfig {
  allset::NetworkConfig network;
  double lr = 0.001;
  double weight_decay = 0.0;
  std::size_t epochs = 500;
  std::size_t patience = 100;
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  bool row_normalize = false;
  SplitSpec split;  // seed ignored; each run uses seed + run index
};

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;  // 0 = initialization
  std::size_t epochs_run = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> val_curve;   // index 0 = initialization
  std::vector<double> loss_curve;  // one entry per optimization step
  double seconds = 0.0;
};

struct TrainedRun {
  RunResult result;
  std::unique_ptr<allset::AllSetNetwork> network;  // parameters of the best validation epoch
};

/// Adam on the masked cross-entropy of the training split, keeping the
/// parameters with the best validation accuracy (ties keep the earlier epoch)
/// and stopping after `patience` epochs without improvement. Test labels are
/// only read for the final evaluation. Non-finite loss throws Divergence.
TrainedRun train_one_run(const TrainConfig& config, const Hypergraph& hg, const Matrix& features,
                         std::span<const int> labels, std::size_t classes, const Splits& splits, std::uint64_t seed);

struct ExperimentResult {
  std::vector<RunResult> runs;
  double mean = 0.0;
  std::optional<double> stddev;  // sample std; absent for a single run
  std::string config_hash;  // filled in by the caller that owns the config file
  double seconds = 0.0;
};

/// Mean and sample (n-1) standard deviation of per-run test accuracies.
/// Throws TooFewRuns when asked for the std of fewer than two runs.
double mean_accuracy(std::span<const RunResult> runs);
double sample_stddev(std::span<const double> values);
ExperimentResult aggregate_runs(std::vector<RunResult> runs);

/// Runs config.runs independent runs (run r: seed config.seed + r, split seed
/// config.seed + r), `jobs` at a time. Results do not depend on `jobs`.
ExperimentResult run_experiment(const TrainConfig& config, const Hypergraph& hg, const Matrix& features,
                                std::span<const int> labels, std::size_t classes, std::size_t jobs = 1);

struct SynthSpec {
  std::size_t dim = 100;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// One-hot(label) in the first C of `dim` columns plus N(0, sigma^2) noise on every entry.
Matrix synth_gaussian_features(std::span<const int> labels, std::size_t dim, double sigma, std::uint64_t seed);

/// Divides each row by its sum of absolute values (zero rows stay zero).
Matrix row_normalized(Matrix x);

}  // namespace hgx::train
