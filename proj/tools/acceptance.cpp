// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status: 0 when every selected criterion passes, 1 when one fails, 77
// when the only failures are criteria whose input data is not installed.

#include <cstdlib>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "hgx/error.hpp"
#include "hgx/reproduce.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kNotEvaluated = 77;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hgx acceptance suite"};
  std::vector<int> criteria;
  std::string data_dir = "data";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool verbose = false;
  app.add_option("-c,--criterion", criteria, "criterion to run (repeatable; default: all)")
      ->check(CLI::Range(1, hgx::repro::kCriteria));
  app.add_option("--data-dir", data_dir, "directory holding the dataset bundles");
  app.add_option("--seed", seed, "base seed");
  app.add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", verbose, "print per-run details");
  CLI11_PARSE(app, argc, argv);

  if (criteria.empty())
    for (int i = 1; i <= hgx::repro::kCriteria; ++i) criteria.push_back(i);
  const std::set<int> selected(criteria.begin(), criteria.end());

  const hgx::repro::CriterionOptions options{data_dir, seed, jobs};
  bool failed = false;
  bool missing = false;
  for (int id : selected) {
    hgx::repro::CriterionOutcome outcome;
    try {
      outcome = hgx::repro::run_criterion(id, options);
    } catch (const std::exception& e) {
      outcome.id = id;
      outcome.title = "error";
      outcome.check = hgx::repro::CheckResult("error", false, e.what());
    }
    std::cout << hgx::repro::format_outcome(outcome) << std::endl;
    if (verbose)
      for (const auto& d : outcome.check.details) std::cout << "    " << d << '\n';
    if (!outcome.check.passed) (outcome.data_missing ? missing : failed) = true;
  }
  if (failed) return kFail;
  return missing ? kNotEvaluated : kPass;
}
