#pragma once

// File formats: .hg hypergraphs, CSV features, label lists, dataset bundle
// directories, checkpoints, experiment configs and results.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hgx/autodiff.hpp"
#include "hgx/hypergraph.hpp"
#include "hgx/matrix.hpp"
#include "hgx/training.hpp"
#include "json.hpp"

namespace hgx::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- .hg ----------------------------------------------------------------------
// line 1: "n m"; then m lines of space-separated 0-based node ids, optionally
// ending with "w=<weight>"; lines starting with '#' are comments.

Hypergraph parse_hg(std::istream& in, const std::string& source = "<input>");
Hypergraph read_hg(const fs::path& path);
void write_hg(std::ostream& out, const Hypergraph& hg);
void save_hg(const fs::path& path, const Hypergraph& hg);

// ---- CSV ---------------------------------------------------------------------------
// ',' separated, '.' decimal, no header unless requested. Values are written in
// shortest round-trip form so write -> parse is bit-exact.

Matrix parse_csv(std::istream& in, bool header = false, const std::string& source = "<input>");
Matrix read_csv(const fs::path& path, bool header = false);
void write_csv(std::ostream& out, const Matrix& m);
void save_csv(const fs::path& path, const Matrix& m);

/// One integer per line. With `classes`, values outside [0, classes) throw
/// LabelOutOfRange naming the line.
std::vector<int> parse_labels(std::istream& in, std::optional<std::size_t> classes = std::nullopt,
                              const std::string& source = "<input>");
std::vector<int> read_labels(const fs::path& path, std::optional<std::size_t> classes = std::nullopt);
void save_labels(const fs::path& path, const std::vector<int>& labels);

// ---- dataset bundles ------------------------------------------------------------------
// A directory with hypergraph.hg, labels.txt, meta.json and either features.csv
// or a {"synthesize": {"dim": D, "sigma": s, "seed": k}} entry in meta.json.

struct DatasetBundle {
  std::string name;
  Hypergraph hg;
  Matrix features;
  std::vector<int> labels;
  std::size_t classes = 0;
  json metadata = json::object();
};

DatasetBundle load_dataset(const fs::path& dir);
void save_dataset(const DatasetBundle& bundle, const fs::path& dir);
/// Checks row counts and label range; throws DimensionMismatch / LabelOutOfRange.
void validate(const DatasetBundle& bundle);

// ---- converters -------------------------------------------------------------------------

struct CategoricalTableOptions {
  std::string name = "dataset";
  char delimiter = '\t';
  std::size_t skip_lines = 0;             // header lines before the data
  std::vector<std::size_t> ignore_columns;  // e.g. an instance-name column
  std::size_t label_column = 0;
  bool label_edges = true;  // add one hyperedge per class value as well
};

/// Categorical table -> bundle: one hyperedge per distinct value of every
/// attribute column (and of the label column when label_edges is set). Numeric
/// attribute values become the node features as-is; class names are numbered
/// in sorted order.
DatasetBundle convert_categorical_table(std::istream& in, const CategoricalTableOptions& options);

/// LINQS citation dump (`.content`: id, binary word vector, class; `.cites`:
/// cited citing) -> co-citation bundle: one hyperedge per citing paper holding
/// the papers it cites, kept when it has at least two members.
DatasetBundle convert_linqs_cocitation(std::istream& content, std::istream& cites, const std::string& name);

// ---- checkpoints ---------------------------------------------------------------------------
// <stem>.json manifest (names, shapes, offsets, metadata) + <stem>.bin of
// little-endian doubles.

void save_checkpoint(const fs::path& stem, const ad::ParameterSet& params, const json& metadata);
/// Loads values into same-named parameters; names and shapes must match.
json load_checkpoint(const fs::path& stem, ad::ParameterSet& params);

// ---- configs and results ----------------------------------------------------------------------

struct ExperimentConfig {
  std::string dataset;      // bundle directory as written in the config
  std::string dataset_dir;  // resolved against the config file's directory
  train::TrainConfig train;
  std::optional<train::SynthSpec> synthesize;  // overrides the bundle's features
  std::size_t jobs = 1;  // not part of the canonical form: results do not depend on it
};

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir = {});
ExperimentConfig read_experiment_config(const fs::path& path);
/// Canonical form: every field, defaults filled in, keys sorted.
json to_json(const ExperimentConfig& config);
/// 64-bit FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

inline constexpr int kResultsSchemaVersion = 1;
json results_to_json(const train::ExperimentResult& result, const ExperimentConfig& config);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace hgx::io
