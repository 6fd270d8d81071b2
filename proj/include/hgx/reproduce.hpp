#pragma once

// Reproduction checks shared by `hgx reproduce` and the acceptance binary.
// Each check reports what it measured; none of them throws on a miss.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hgx/allset.hpp"
#include "hgx/training.hpp"

namespace hgx::repro {

struct CheckResult {
  CheckResult() = default;
  explicit CheckResult(std::string name_, bool passed_ = false, std::string measured_ = {})
      : name(std::move(name_)), passed(passed_), measured(std::move(measured_)) {}

  std::string name;
  bool passed = false;
  std::string measured;  // one-line human summary
  std::vector<std::string> details;
  double seconds = 0.0;
};

CheckResult check_theorems(std::uint64_t seed, std::size_t instances = 50);

/// z_prop against the dense tensor contraction on d-uniform hypergraphs with
/// n <= 6, d in {2, 3, 4}: every complete instance plus random ones per (n, d).
CheckResult check_tensor_oracle(std::uint64_t seed);

/// Layer kinds that carry trainable parameters.
std::vector<allset::ModelKind> trainable_layer_kinds();

/// Reverse mode vs central differences for one AllSet layer of `kind`
/// (parameters and input features), on a small random hypergraph.
ad::GradCheckReport gradcheck_layer(allset::ModelKind kind, std::uint64_t seed);
CheckResult check_gradients(std::uint64_t seed, std::size_t seeds = 3, double tolerance = 1e-4);

/// Relabels nodes and reorders hyperedges (and thus every multiset) at random
/// and compares the permuted network output; max relative error over `triples`.
double permutation_deviation(allset::ModelKind kind, std::uint64_t seed, std::size_t triples);
CheckResult check_permutation_invariance(std::uint64_t seed, std::size_t triples = 100, double tolerance = 1e-9);

struct MaxFitResult {
  double train_mse = 0.0;
  double test_mse = 0.0;
  double baseline_mse = 0.0;  // predicting the training mean
  std::size_t steps = 0;
};
/// Trains a DeepSets model on max over multisets of <= 8 scalars in [0, 1].
MaxFitResult fit_deepsets_max(std::uint64_t seed, std::size_t steps = 2000);
CheckResult check_deepsets_max(std::uint64_t seed, std::size_t steps = 2000);

/// Table 4 Zoo hyperparameters for the given model.
train::TrainConfig zoo_config(allset::ModelKind kind, std::uint64_t seed, std::size_t runs = 5);
train::TrainConfig cora_config(std::uint64_t seed, std::size_t runs = 5);

struct DatasetRun {
  std::optional<train::ExperimentResult> result;
  CheckResult check;
};

/// Loads the bundle at `dir` and runs `config`; a missing or invalid bundle
/// yields a failed check that names the problem.
DatasetRun run_dataset(const std::string& name, const std::filesystem::path& dir, const train::TrainConfig& config,
                       double threshold, const std::string& reference, std::size_t jobs);

CheckResult check_baseline_gap(const train::ExperimentResult& allset, const train::ExperimentResult& mlp,
                               double min_gap = 0.03);
CheckResult check_determinism(const train::ExperimentResult& first, const train::ExperimentResult& second);

/// Looks for a Cora bundle: $HGX_CORA_DIR, then <data_dir>/cora.
std::optional<std::filesystem::path> find_cora(const std::filesystem::path& data_dir);

std::string format_check(const CheckResult& r);

// ---- acceptance criteria ------------------------------------------------------------------

inline constexpr int kCriteria = 9;

struct CriterionOptions {
  std::filesystem::path data_dir = "data";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct CriterionOutcome {
  int id = 0;
  std::string title;
  CheckResult check;
  double time_limit = 0.0;  // seconds; 0 = none
  bool data_missing = false;  // the criterion could not be evaluated
};

/// Runs acceptance criterion `id` (1..kCriteria). A check that exceeds its
/// wall-clock budget fails even when its measured values are in range.
CriterionOutcome run_criterion(int id, const CriterionOptions& options);
std::string format_outcome(const CriterionOutcome& outcome);

}  // namespace hgx::repro
