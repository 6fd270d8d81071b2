// hgx command-line tool.
//
// Exit codes: 0 success, 1 a reproduction check failed, 2 bad input, 3 internal error.
// Errors are printed to stderr as one JSON object {"error": kind, "message": ...}.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hgx/allset.hpp"
#include "hgx/error.hpp"
#include "hgx/hypergraph.hpp"
#include "hgx/io.hpp"
#include "hgx/propagation.hpp"
#include "hgx/reproduce.hpp"
#include "hgx/training.hpp"

namespace fs = std::filesystem;
using hgx::io::json;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kInputError = 2;
constexpr int kInternalError = 3;

// --seed, else $HGX_SEED, else 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("HGX_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    hgx::fail(hgx::ErrorKind::InvalidConfig, "HGX_SEED must be a non-negative integer, got '" + std::string(env) + "'");
  }
  return 0;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    hgx::io::write_text(path, text);
  }
}

std::string csv_text(const hgx::Matrix& m) {
  std::ostringstream ss;
  hgx::io::write_csv(ss, m);
  return ss.str();
}

// ---- stats -----------------------------------------------------------------------------------

json distribution_json(const hgx::Distribution& d) {
  if (!d.defined) return nullptr;
  return {{"min", d.min}, {"max", d.max}, {"mean", d.mean}, {"median", d.median}};
}

int cmd_stats(const std::string& path, bool as_json) {
  const hgx::Hypergraph hg = hgx::io::read_hg(path);
  const hgx::HypergraphStats s = hgx::stats(hg);
  if (as_json) {
    const json j = {{"nodes", s.num_nodes},
                    {"hyperedges", s.num_edges},
                    {"incidences", hg.num_incidences()},
                    {"edge_size", distribution_json(s.edge_size)},
                    {"node_degree", distribution_json(s.node_degree)}};
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  auto row = [](const char* label, const hgx::Distribution& d) {
    std::cout << label;
    if (!d.defined) {
      std::cout << "  (none)\n";
      return;
    }
    std::ostringstream mean;
    mean.setf(std::ios::fixed);
    mean.precision(2);
    mean << d.mean;
    std::cout << "  max " << d.max << "  min " << d.min << "  avg " << mean.str() << "  median " << d.median << '\n';
  };
  std::cout << "n " << s.num_nodes << "  |E| " << s.num_edges << "  incidences " << hg.num_incidences() << '\n';
  row("|e|", s.edge_size);
  row("d_v", s.node_degree);
  return kOk;
}

// ---- convert ---------------------------------------------------------------------------------

// Star expansion text: "n p" then p lines "node edge".
hgx::Hypergraph read_star(const std::string& path) {
  std::istringstream in(hgx::io::read_text(path));
  std::size_t n = 0, p = 0;
  if (!(in >> n >> p)) hgx::fail(hgx::ErrorKind::ParseError, path + ":1: expected header \"n p\"");
  std::vector<std::pair<hgx::NodeId, hgx::EdgeId>> pairs(p);
  for (std::size_t i = 0; i < p; ++i) {
    if (!(in >> pairs[i].first >> pairs[i].second)) {
      hgx::fail(hgx::ErrorKind::ParseError, path + ":" + std::to_string(i + 2) + ": expected \"node edge\"");
    }
  }
  return hgx::from_star_expansion(n, pairs);
}

int cmd_convert_format(const std::string& input, const std::string& from, const std::string& to,
                       const std::string& output) {
  const hgx::Hypergraph hg = from == "star" ? read_star(input) : hgx::io::read_hg(input);
  std::ostringstream out;
  if (to == "hg") {
    hgx::io::write_hg(out, hg);
  } else if (to == "star") {
    const auto pairs = hgx::star_expansion(hg);
    out << hg.num_nodes() << ' ' << pairs.size() << '\n';
    for (const auto& [v, e] : pairs) out << v << ' ' << e << '\n';
  } else if (to == "ce-adj") {
    hgx::io::write_csv(out, hgx::clique_expansion_adjacency(hg));
  } else if (to == "ce-inc") {
    hgx::io::write_csv(out, hgx::clique_expansion_incidence(hg));
  }
  emit(output, out.str());
  return kOk;
}

int cmd_convert_categorical(const std::string& table, const std::string& out_dir, hgx::io::CategoricalTableOptions opt) {
  std::istringstream in(hgx::io::read_text(table));
  hgx::io::DatasetBundle b = hgx::io::convert_categorical_table(in, opt);
  b.metadata["source_file"] = fs::path(table).filename().string();
  hgx::io::save_dataset(b, out_dir);
  std::cout << "wrote " << out_dir << ": n " << b.hg.num_nodes() << ", |E| " << b.hg.num_edges() << ", F "
            << b.features.cols() << ", C " << b.classes << '\n';
  return kOk;
}

int cmd_convert_linqs(const std::string& content, const std::string& cites, const std::string& out_dir,
                      const std::string& name) {
  std::istringstream c(hgx::io::read_text(content));
  std::istringstream k(hgx::io::read_text(cites));
  hgx::io::DatasetBundle b = hgx::io::convert_linqs_cocitation(c, k, name);
  hgx::io::save_dataset(b, out_dir);
  std::cout << "wrote " << out_dir << ": n " << b.hg.num_nodes() << ", |E| " << b.hg.num_edges() << ", F "
            << b.features.cols() << ", C " << b.classes << '\n';
  return kOk;
}

// ---- propagate -------------------------------------------------------------------------------

struct PropagateOptions {
  std::string hg;
  std::string features;
  std::string rule = "ceprop-h";
  std::size_t steps = 1;
  std::size_t order = 0;  // zprop/hprop; default: the hypergraph's uniform order
  std::string activation = "identity";
  double hnhn_alpha = 0.0;
  double hnhn_beta = 0.0;
  bool hnhn_edge_cardinality = false;
  double p = 1.0;
  std::string output;
};

hgx::Matrix identity(std::size_t n) {
  hgx::Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

// Learnable rules run with identity weights, no bias and uniform attention.
int cmd_propagate(const PropagateOptions& o) {
  using hgx::prop::RuleKind;
  const hgx::Hypergraph hg = hgx::io::read_hg(o.hg);
  hgx::Matrix x = hgx::io::read_csv(o.features);
  if (x.rows() != hg.num_nodes()) {
    hgx::fail(hgx::ErrorKind::DimensionMismatch, "features have " + std::to_string(x.rows()) + " rows for " +
                                                     std::to_string(hg.num_nodes()) + " nodes");
  }
  const RuleKind rule = hgx::prop::parse_rule(o.rule);
  const hgx::nn::Activation act = hgx::nn::parse_activation(o.activation);
  std::size_t d = o.order;
  if ((rule == RuleKind::ZProp || rule == RuleKind::HProp) && d == 0) {
    const auto u = hg.uniform_order();
    if (!u) hgx::fail(hgx::ErrorKind::NotUniform, "zprop/hprop need a uniform hypergraph (or --order)");
    d = *u;
  }
  for (std::size_t s = 0; s < o.steps; ++s) {
    const hgx::prop::Affine id{identity(x.cols()), hgx::Matrix()};
    switch (rule) {
      case RuleKind::CePropA: x = hgx::prop::ce_prop_a(hg, x); break;
      case RuleKind::CePropH: x = hgx::prop::ce_prop_h(hg, x); break;
      case RuleKind::ZProp: x = hgx::prop::z_prop(hg, x, d); break;
      case RuleKind::HProp: x = hgx::prop::h_prop(hg, x, d); break;
      case RuleKind::Hgnn: x = hgx::prop::hgnn_layer(hg, x, id, act); break;
      case RuleKind::Hcha:
        x = hgx::prop::hcha_layer(hg, x, nullptr, {id, hgx::Matrix(x.cols(), 1), act});
        break;
      case RuleKind::Hnhn:
        x = hgx::prop::hnhn_layer(hg, x, {id, id, o.hnhn_alpha, o.hnhn_beta, o.hnhn_edge_cardinality, act}).second;
        break;
      case RuleKind::HyperGcn: x = hgx::prop::hypergcn_layer(hg, x, id, act); break;
      case RuleKind::HyperSage: x = hgx::prop::hypersage_layer(hg, x, id.theta, o.p, act); break;
    }
  }
  emit(o.output, csv_text(x));
  return kOk;
}

// ---- synth-features --------------------------------------------------------------------------

int cmd_synth(const std::string& labels_path, std::size_t dim, double sigma, std::uint64_t seed,
              const std::string& output) {
  const auto labels = hgx::io::read_labels(labels_path);
  emit(output, csv_text(hgx::train::synth_gaussian_features(labels, dim, sigma, seed)));
  return kOk;
}

// ---- train -----------------------------------------------------------------------------------

struct TrainOptions {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> runs;
  std::string checkpoint;
};

int cmd_train(const TrainOptions& o) {
  json raw;
  try {
    raw = json::parse(hgx::io::read_text(o.config));
  } catch (const json::exception& e) {
    hgx::fail(hgx::ErrorKind::ParseError, o.config + ": " + e.what());
  }
  if (o.seed || !raw.contains("seed")) raw["seed"] = resolve_seed(o.seed);
  if (o.runs) raw["runs"] = *o.runs;
  if (o.jobs) raw["jobs"] = *o.jobs;
  const hgx::io::ExperimentConfig config = hgx::io::parse_experiment_config(raw, fs::path(o.config).parent_path());
  hgx::io::DatasetBundle b = hgx::io::load_dataset(config.dataset_dir);
  if (config.synthesize) {
    b.features = hgx::train::synth_gaussian_features(b.labels, config.synthesize->dim, config.synthesize->sigma,
                                                     config.synthesize->seed);
  }
  hgx::train::ExperimentResult result =
      hgx::train::run_experiment(config.train, b.hg, b.features, b.labels, b.classes, config.jobs);
  result.config_hash = hgx::io::config_hash(config);
  json out = hgx::io::results_to_json(result, config);
  out["dataset_name"] = b.name;
  emit(o.output, out.dump(2) + "\n");

  if (!o.checkpoint.empty()) {
    // Retrain run 0 to keep its best-validation parameters.
    hgx::train::SplitSpec split = config.train.split;
    split.seed = config.train.seed;
    const auto splits = hgx::train::make_splits(b.hg.num_nodes(), split);
    const auto run = hgx::train::train_one_run(config.train, b.hg, b.features, b.labels, b.classes, splits,
                                               config.train.seed);
    hgx::io::save_checkpoint(o.checkpoint, run.network->params(),
                             {{"config", hgx::io::to_json(config)},
                              {"config_hash", result.config_hash},
                              {"run", 0},
                              {"best_epoch", run.result.best_epoch}});
  }
  std::cerr << "mean test accuracy " << result.mean;
  if (result.stddev) std::cerr << " +- " << *result.stddev;
  std::cerr << " over " << result.runs.size() << " runs\n";
  return kOk;
}

// ---- reproduce / gradcheck -------------------------------------------------------------------

void print_check(const hgx::repro::CheckResult& r, bool verbose) {
  std::cout << hgx::repro::format_check(r) << '\n';
  if (verbose)
    for (const auto& d : r.details) std::cout << "    " << d << '\n';
}

int cmd_reproduce(const std::string& target, const fs::path& data_dir, std::uint64_t seed, std::size_t jobs,
                  bool verbose) {
  namespace repro = hgx::repro;
  static const std::vector<std::pair<std::string, int>> targets = {
      {"theorems", 1},     {"tensor", 2}, {"gradcheck", 3},    {"invariance", 4},  {"deepsets-fit", 5},
      {"zoo", 6},          {"cora", 7},   {"zoo-baseline", 8}, {"determinism", 9},
  };
  const repro::CriterionOptions options{data_dir, seed, jobs};
  bool ok = true;
  for (const auto& [name, id] : targets) {
    if (target != "all" && target != name) continue;
    const auto outcome = repro::run_criterion(id, options);
    std::cout << repro::format_outcome(outcome) << '\n';
    if (verbose)
      for (const auto& d : outcome.check.details) std::cout << "    " << d << '\n';
    ok = ok && outcome.check.passed;
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_gradcheck(const std::string& layer, std::size_t seeds, std::uint64_t seed, double tolerance) {
  namespace repro = hgx::repro;
  if (layer == "all") {
    const auto r = repro::check_gradients(seed, seeds, tolerance);
    print_check(r, true);
    return r.passed ? kOk : kCheckFailed;
  }
  const auto kind = hgx::allset::parse_model(layer);
  bool ok = true;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto rep = repro::gradcheck_layer(kind, seed + s);
    const bool pass = rep.max_rel_error < tolerance;
    ok = ok && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << layer << " seed " << seed + s << ": max rel-err "
              << rep.max_rel_error << " at " << rep.worst_parameter << "[" << rep.worst_index << "] (analytic "
              << rep.worst_analytic << ", numeric " << rep.worst_numeric << ", " << rep.entries_checked
              << " entries)\n";
  }
  return ok ? kOk : kCheckFailed;
}

int input_error_code(hgx::ErrorKind kind) {
  switch (kind) {
    case hgx::ErrorKind::Divergence:
      return kInternalError;
    default:
      return kInputError;
  }
}

void report_error(std::string_view kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hgx: hypergraph neural networks built from multiset functions"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--seed", seed_flag, "base seed (default: $HGX_SEED, else 0)");

  std::function<int()> action;

  auto* stats = app.add_subcommand("stats", "hypergraph statistics");
  std::string stats_path;
  bool stats_json = false;
  stats->add_option("hypergraph", stats_path, ".hg file")->required();
  stats->add_flag("--json", stats_json, "print JSON");
  stats->callback([&] { action = [&] { return cmd_stats(stats_path, stats_json); }; });

  auto* convert = app.add_subcommand("convert", "format conversions and dataset import");
  convert->require_subcommand(1);
  auto* fmt = convert->add_subcommand("format", "between .hg, star expansion, clique-expansion matrices");
  std::string in_path, from = "hg", to, out_path;
  fmt->add_option("input", in_path)->required();
  fmt->add_option("--from", from)->check(CLI::IsMember({"hg", "star"}));
  fmt->add_option("--to", to)->required()->check(CLI::IsMember({"hg", "star", "ce-adj", "ce-inc"}));
  fmt->add_option("-o,--output", out_path, "output file (default stdout)");
  fmt->callback([&] { action = [&] { return cmd_convert_format(in_path, from, to, out_path); }; });

  auto* cat = convert->add_subcommand("categorical", "categorical table -> dataset bundle");
  std::string table, bundle_out;
  hgx::io::CategoricalTableOptions cat_opt;
  std::string delimiter = "tab";
  bool no_label_edges = false;
  cat->add_option("table", table)->required();
  cat->add_option("-o,--output", bundle_out, "bundle directory")->required();
  cat->add_option("--name", cat_opt.name);
  cat->add_option("--delimiter", delimiter, "tab, comma or a single character");
  cat->add_option("--skip-lines", cat_opt.skip_lines);
  cat->add_option("--ignore-column", cat_opt.ignore_columns, "0-based column to drop (repeatable)");
  cat->add_option("--label-column", cat_opt.label_column)->required();
  cat->add_flag("--no-label-edges", no_label_edges, "do not add one hyperedge per class");
  cat->callback([&] {
    action = [&] {
      if (delimiter == "tab") cat_opt.delimiter = '\t';
      else if (delimiter == "comma") cat_opt.delimiter = ',';
      else if (delimiter.size() == 1) cat_opt.delimiter = delimiter[0];
      else hgx::fail(hgx::ErrorKind::InvalidConfig, "delimiter must be tab, comma or one character");
      cat_opt.label_edges = !no_label_edges;
      return cmd_convert_categorical(table, bundle_out, cat_opt);
    };
  });

  auto* linqs = convert->add_subcommand("linqs", "LINQS .content/.cites -> co-citation bundle");
  std::string content, cites, linqs_out, linqs_name = "cora";
  linqs->add_option("content", content)->required();
  linqs->add_option("cites", cites)->required();
  linqs->add_option("-o,--output", linqs_out, "bundle directory")->required();
  linqs->add_option("--name", linqs_name);
  linqs->callback([&] { action = [&] { return cmd_convert_linqs(content, cites, linqs_out, linqs_name); }; });

  auto* prop = app.add_subcommand("propagate", "apply a propagation rule to node features");
  PropagateOptions po;
  prop->add_option("hypergraph", po.hg)->required();
  prop->add_option("--features", po.features, "CSV, one row per node")->required();
  prop->add_option("--rule", po.rule, "ceprop-a ceprop-h zprop hprop hgnn hcha hnhn hypergcn hypersage");
  prop->add_option("--steps", po.steps);
  prop->add_option("--order", po.order, "tensor order for zprop/hprop");
  prop->add_option("--activation", po.activation, "identity relu elu leaky_relu");
  prop->add_option("--hnhn-alpha", po.hnhn_alpha);
  prop->add_option("--hnhn-beta", po.hnhn_beta);
  prop->add_flag("--hnhn-edge-cardinality", po.hnhn_edge_cardinality);
  prop->add_option("--p", po.p, "HyperSAGE power");
  prop->add_option("-o,--output", po.output);
  prop->callback([&] { action = [&] { return cmd_propagate(po); }; });

  auto* synth = app.add_subcommand("synth-features", "one-hot labels plus Gaussian noise");
  std::string labels_path, synth_out;
  std::size_t dim = 100;
  double sigma = 1.0;
  synth->add_option("labels", labels_path)->required();
  synth->add_option("--dim", dim);
  synth->add_option("--sigma", sigma);
  synth->add_option("-o,--output", synth_out);
  synth->callback([&] {
    action = [&] { return cmd_synth(labels_path, dim, sigma, resolve_seed(seed_flag), synth_out); };
  });

  auto* train = app.add_subcommand("train", "run an experiment config, write results JSON");
  TrainOptions to_opt;
  train->add_option("config", to_opt.config)->required();
  train->add_option("-o,--output", to_opt.output, "results JSON (default stdout)");
  train->add_option("--jobs", to_opt.jobs, "runs in parallel");
  train->add_option("--runs", to_opt.runs);
  train->add_option("--checkpoint", to_opt.checkpoint, "save run 0's best parameters to <stem>.json/.bin");
  train->callback([&] {
    action = [&] {
      to_opt.seed = seed_flag;
      return cmd_train(to_opt);
    };
  });

  auto* repro = app.add_subcommand("reproduce", "run a reproduction check");
  std::string target;
  std::string data_dir = "data";
  std::size_t jobs = 1;
  bool verbose = false;
  repro->add_option("target", target)
      ->required()
      ->check(CLI::IsMember(
          {"theorems", "tensor", "gradcheck", "invariance", "deepsets-fit", "zoo", "zoo-baseline", "determinism",
           "cora", "all"}));
  repro->add_option("--data-dir", data_dir);
  repro->add_option("--jobs", jobs);
  repro->add_flag("-v,--verbose", verbose);
  repro->callback([&] {
    action = [&] { return cmd_reproduce(target, data_dir, resolve_seed(seed_flag), jobs, verbose); };
  });

  auto* grad = app.add_subcommand("gradcheck", "reverse mode vs central differences for one layer kind");
  std::string layer = "all";
  std::size_t seeds = 3;
  double tolerance = 1e-4;
  grad->add_option("--layer", layer, "alldeepsets allsettransformer hgnn hnhn hcha hypergcn hypersage, or all");
  grad->add_option("--seeds", seeds);
  grad->add_option("--tolerance", tolerance);
  grad->callback([&] { action = [&] { return cmd_gradcheck(layer, seeds, resolve_seed(seed_flag), tolerance); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }
  try {
    return action();
  } catch (const hgx::Error& e) {
    report_error(hgx::to_string(e.kind()), e.what());
    return input_error_code(e.kind());
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return kInternalError;
  }
}
