#include "hgx/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hgx/error.hpp"

namespace hgx::io {

namespace {

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
  fail(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::string shortest(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) fail(ErrorKind::Io, "could not format a number");
  return std::string(buf, ptr);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ParseError, path.string() + ": cannot open file");
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, path.string() + ": cannot write file");
  return out;
}

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) fail(ErrorKind::Io, path.string() + ": write failed");
}

// ---- .hg -------------------------------------------------------------------------------------

Hypergraph parse_hg(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::pair<std::size_t, std::size_t>> header;
  std::vector<std::vector<NodeId>> edges;
  std::vector<double> weights;
  bool weighted = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto toks = tokens(s);
    if (!header) {
      if (toks.size() != 2) parse_error(source, lineno, "expected header \"n m\"");
      const auto n = parse_number<std::size_t>(toks[0]);
      const auto m = parse_number<std::size_t>(toks[1]);
      if (!n || !m) parse_error(source, lineno, "header counts must be non-negative integers");
      header = {{*n, *m}};
      continue;
    }
    if (edges.size() == header->second) parse_error(source, lineno, "more hyperedge lines than the declared m");
    std::vector<NodeId> edge;
    double w = 1.0;
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (toks[t].starts_with("w=")) {
        if (t + 1 != toks.size()) parse_error(source, lineno, "weight must be the last token");
        const auto v = parse_number<double>(toks[t].substr(2));
        if (!v) parse_error(source, lineno, "malformed weight '" + std::string(toks[t]) + "'");
        if (!(*v > 0.0)) {
          fail(ErrorKind::NonpositiveWeight, source + ":" + std::to_string(lineno) + ": weight must be > 0");
        }
        w = *v;
        weighted = true;
        continue;
      }
      const auto id = parse_number<std::size_t>(toks[t]);
      if (!id) parse_error(source, lineno, "malformed node id '" + std::string(toks[t]) + "'");
      if (*id >= header->first) {
        fail(ErrorKind::NodeIdOutOfRange, source + ":" + std::to_string(lineno) + ": node id " + std::to_string(*id) +
                                              " >= n = " + std::to_string(header->first));
      }
      edge.push_back(*id);
    }
    if (edge.empty()) fail(ErrorKind::EmptyEdge, source + ":" + std::to_string(lineno) + ": hyperedge has no nodes");
    edges.push_back(std::move(edge));
    weights.push_back(w);
  }
  if (!header) parse_error(source, lineno, "missing header \"n m\"");
  if (edges.size() != header->second) {
    parse_error(source, lineno, "declared " + std::to_string(header->second) + " hyperedges, found " +
                                    std::to_string(edges.size()));
  }
  std::optional<std::vector<double>> w;
  if (weighted) w = std::move(weights);
  return Hypergraph::from_edge_list(header->first, std::move(edges), std::move(w));
}

Hypergraph read_hg(const fs::path& path) {
  std::ifstream in = open_in(path);
  return parse_hg(in, path.string());
}

void write_hg(std::ostream& out, const Hypergraph& hg) {
  out << hg.num_nodes() << ' ' << hg.num_edges() << '\n';
  for (EdgeId e = 0; e < hg.num_edges(); ++e) {
    const auto members = hg.edge(e);
    for (std::size_t i = 0; i < members.size(); ++i) out << (i ? " " : "") << members[i];
    if (hg.has_weights()) out << " w=" << shortest(hg.weight(e));
    out << '\n';
  }
}

void save_hg(const fs::path& path, const Hypergraph& hg) {
  std::ofstream out = open_out(path);
  write_hg(out, hg);
}

// ---- CSV / labels -----------------------------------------------------------------------------

Matrix parse_csv(std::istream& in, bool header, const std::string& source) {
  std::string line;
  std::size_t lineno = 0, cols = 0, rows = 0;
  bool skipped_header = !header;
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    const auto fields = split(s, ',');
    if (rows == 0) cols = fields.size();
    if (fields.size() != cols) {
      parse_error(source, lineno, "expected " + std::to_string(cols) + " fields, found " + std::to_string(fields.size()));
    }
    for (const auto f : fields) {
      const auto v = parse_number<double>(f);
      if (!v) parse_error(source, lineno, "malformed number '" + std::string(trim(f)) + "'");
      data.push_back(*v);
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

Matrix read_csv(const fs::path& path, bool header) {
  std::ifstream in = open_in(path);
  return parse_csv(in, header, path.string());
}

void write_csv(std::ostream& out, const Matrix& m) {
  std::string line;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    line.clear();
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      line += shortest(m(i, j));
    }
    line += '\n';
    out << line;
  }
}

void save_csv(const fs::path& path, const Matrix& m) {
  std::ofstream out = open_out(path);
  write_csv(out, m);
}

std::vector<int> parse_labels(std::istream& in, std::optional<std::size_t> classes, const std::string& source) {
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty()) continue;
    const auto v = parse_number<int>(s);
    if (!v) parse_error(source, lineno, "malformed label '" + std::string(s) + "'");
    if (*v < 0 || (classes && static_cast<std::size_t>(*v) >= *classes)) {
      fail(ErrorKind::LabelOutOfRange, source + ":" + std::to_string(lineno) + ": label " + std::to_string(*v) +
                                           (classes ? " outside [0, " + std::to_string(*classes) + ")" : " is negative"));
    }
    labels.push_back(*v);
  }
  return labels;
}

std::vector<int> read_labels(const fs::path& path, std::optional<std::size_t> classes) {
  std::ifstream in = open_in(path);
  return parse_labels(in, classes, path.string());
}

void save_labels(const fs::path& path, const std::vector<int>& labels) {
  std::ofstream out = open_out(path);
  for (int y : labels) out << y << '\n';
}

// ---- bundles --------------------------------------------------------------------------------------

void validate(const DatasetBundle& b) {
  const std::size_t n = b.hg.num_nodes();
  if (b.features.rows() != n) {
    fail(ErrorKind::DimensionMismatch, "features have " + std::to_string(b.features.rows()) + " rows for " +
                                           std::to_string(n) + " nodes");
  }
  if (b.labels.size() != n) {
    fail(ErrorKind::DimensionMismatch, "labels have " + std::to_string(b.labels.size()) + " entries for " +
                                           std::to_string(n) + " nodes");
  }
  for (std::size_t i = 0; i < n; ++i)
    if (b.labels[i] < 0 || static_cast<std::size_t>(b.labels[i]) >= b.classes) {
      fail(ErrorKind::LabelOutOfRange, "node " + std::to_string(i) + " has label " + std::to_string(b.labels[i]) +
                                           " outside [0, " + std::to_string(b.classes) + ")");
    }
}

DatasetBundle load_dataset(const fs::path& dir) {
  DatasetBundle b;
  const fs::path meta_path = dir / "meta.json";
  if (fs::exists(meta_path)) {
    try {
      b.metadata = json::parse(read_text(meta_path));
    } catch (const json::exception& e) {
      fail(ErrorKind::ParseError, meta_path.string() + ": " + e.what());
    }
  }
  b.name = b.metadata.value("name", dir.filename().string());
  b.hg = read_hg(dir / "hypergraph.hg");
  std::optional<std::size_t> classes;
  if (b.metadata.contains("classes")) classes = b.metadata["classes"].get<std::size_t>();
  b.labels = read_labels(dir / "labels.txt", classes);
  if (classes) {
    b.classes = *classes;
  } else {
    for (int y : b.labels) b.classes = std::max(b.classes, static_cast<std::size_t>(y) + 1);
  }
  if (fs::exists(dir / "features.csv")) {
    b.features = read_csv(dir / "features.csv", b.metadata.value("features_header", false));
  } else if (b.metadata.contains("synthesize")) {
    const json& s = b.metadata["synthesize"];
    b.features = train::synth_gaussian_features(b.labels, s.value("dim", std::size_t{100}), s.value("sigma", 1.0),
                                                s.value("seed", std::uint64_t{0}));
  } else {
    fail(ErrorKind::ParseError, (dir / "features.csv").string() + ": cannot open file (and no synthesize entry)");
  }
  validate(b);
  if (b.metadata.contains("feature_dim") && b.metadata["feature_dim"].get<std::size_t>() != b.features.cols()) {
    fail(ErrorKind::DimensionMismatch, "meta.json feature_dim disagrees with features.csv");
  }
  return b;
}

void save_dataset(const DatasetBundle& b, const fs::path& dir) {
  validate(b);
  fs::create_directories(dir);
  save_hg(dir / "hypergraph.hg", b.hg);
  save_csv(dir / "features.csv", b.features);
  save_labels(dir / "labels.txt", b.labels);
  json meta = b.metadata;
  meta["name"] = b.name;
  meta["classes"] = b.classes;
  meta["feature_dim"] = b.features.cols();
  meta["nodes"] = b.hg.num_nodes();
  meta["hyperedges"] = b.hg.num_edges();
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

// ---- converters --------------------------------------------------------------------------------

DatasetBundle convert_categorical_table(std::istream& in, const CategoricalTableOptions& opt) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= opt.skip_lines) continue;
    if (trim(line).empty()) continue;
    std::string_view s = line;
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    std::vector<std::string> fields;
    for (auto f : split(s, opt.delimiter)) fields.emplace_back(trim(f));
    if (!rows.empty() && fields.size() != rows.front().size()) {
      parse_error(opt.name, lineno, "expected " + std::to_string(rows.front().size()) + " columns");
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) fail(ErrorKind::ParseError, opt.name + ": table has no data rows");
  const std::size_t ncols = rows.front().size();
  if (opt.label_column >= ncols) fail(ErrorKind::InvalidConfig, "label column out of range");
  const std::set<std::size_t> ignored(opt.ignore_columns.begin(), opt.ignore_columns.end());
  std::vector<std::size_t> attrs;
  for (std::size_t c = 0; c < ncols; ++c)
    if (c != opt.label_column && !ignored.count(c)) attrs.push_back(c);

  DatasetBundle b;
  b.name = opt.name;
  const std::size_t n = rows.size();
  b.features = Matrix(n, attrs.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < attrs.size(); ++k) {
      const auto v = parse_number<double>(rows[i][attrs[k]]);
      if (!v) parse_error(opt.name, i + 1 + opt.skip_lines, "non-numeric attribute '" + rows[i][attrs[k]] + "'");
      b.features(i, k) = *v;
    }

  std::map<std::string, int> class_ids;
  for (const auto& r : rows) class_ids.emplace(r[opt.label_column], 0);
  int next = 0;
  for (auto& [name, id] : class_ids) id = next++;
  b.classes = class_ids.size();
  for (const auto& r : rows) b.labels.push_back(class_ids.at(r[opt.label_column]));

  std::vector<std::vector<NodeId>> edges;
  auto add_column_edges = [&](std::size_t c, bool numeric) {
    // Values ordered numerically for attributes, by name for classes.
    std::map<double, std::vector<NodeId>> by_number;
    std::map<std::string, std::vector<NodeId>> by_name;
    for (std::size_t i = 0; i < n; ++i) {
      if (numeric) {
        by_number[*parse_number<double>(rows[i][c])].push_back(i);
      } else {
        by_name[rows[i][c]].push_back(i);
      }
    }
    for (auto& [v, members] : by_number) edges.push_back(std::move(members));
    for (auto& [v, members] : by_name) edges.push_back(std::move(members));
  };
  for (std::size_t c : attrs) add_column_edges(c, true);
  if (opt.label_edges) add_column_edges(opt.label_column, false);
  b.hg = Hypergraph::from_edge_list(n, std::move(edges));

  json classes = json::array();
  for (const auto& [name, id] : class_ids) classes.push_back(name);
  b.metadata = {
      {"source_format", "categorical-table"},
      {"class_names", classes},
      {"transformations",
       json::array({"attribute values used as node features without scaling",
                    "one hyperedge per distinct value of every attribute column",
                    opt.label_edges ? "one hyperedge per class value (class labels are encoded in the structure)"
                                    : "no class-value hyperedges",
                    "class names numbered in sorted order"})},
  };
  return b;
}

DatasetBundle convert_linqs_cocitation(std::istream& content, std::istream& cites, const std::string& name) {
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> feats;
  std::vector<std::string> class_of;
  std::string line;
  std::size_t lineno = 0, dim = 0;
  while (std::getline(content, line)) {
    ++lineno;
    const auto toks = tokens(line);
    if (toks.empty()) continue;
    if (toks.size() < 3) parse_error(name + ".content", lineno, "expected id, features and class");
    if (index.empty()) dim = toks.size() - 2;
    if (toks.size() - 2 != dim) parse_error(name + ".content", lineno, "feature count differs from first row");
    if (!index.emplace(std::string(toks[0]), feats.size()).second) {
      parse_error(name + ".content", lineno, "duplicate paper id " + std::string(toks[0]));
    }
    std::vector<double> f(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto v = parse_number<double>(toks[k + 1]);
      if (!v) parse_error(name + ".content", lineno, "malformed feature");
      f[k] = *v;
    }
    feats.push_back(std::move(f));
    class_of.emplace_back(toks.back());
  }
  const std::size_t n = feats.size();
  std::map<std::size_t, std::set<NodeId>> cited_by_citer;
  std::size_t dangling = 0;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    const auto toks = tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) parse_error(name + ".cites", lineno, "expected \"cited citing\"");
    const auto cited = index.find(std::string(toks[0]));
    const auto citing = index.find(std::string(toks[1]));
    if (cited == index.end() || citing == index.end()) {
      ++dangling;
      continue;
    }
    cited_by_citer[citing->second].insert(cited->second);
  }
  std::vector<std::vector<NodeId>> edges;
  std::size_t dropped = 0;
  for (auto& [citer, cited] : cited_by_citer) {
    if (cited.size() < 2) {
      ++dropped;
      continue;
    }
    edges.emplace_back(cited.begin(), cited.end());
  }
  DatasetBundle b;
  b.name = name;
  b.features = Matrix(n, dim);
  for (std::size_t i = 0; i < n; ++i) std::copy(feats[i].begin(), feats[i].end(), b.features.row(i).begin());
  std::map<std::string, int> class_ids;
  for (const auto& c : class_of) class_ids.emplace(c, 0);
  int next = 0;
  json classes = json::array();
  for (auto& [cname, id] : class_ids) {
    id = next++;
    classes.push_back(cname);
  }
  b.classes = class_ids.size();
  for (const auto& c : class_of) b.labels.push_back(class_ids.at(c));
  b.hg = Hypergraph::from_edge_list(n, std::move(edges));
  b.metadata = {
      {"source_format", "linqs-cocitation"},
      {"class_names", classes},
      {"citations_with_unknown_ids", dangling},
      {"citing_papers_with_fewer_than_two_references", dropped},
      {"transformations",
       json::array({"papers renumbered in .content order", "one hyperedge per citing paper: the papers it cites",
                    "hyperedges with fewer than two members dropped", "word features used as-is (binary)",
                    "class names numbered in sorted order"})},
  };
  return b;
}

// ---- checkpoints ------------------------------------------------------------------------------------

void save_checkpoint(const fs::path& stem, const ad::ParameterSet& params, const json& metadata) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian doubles");
  fs::path bin = stem;
  bin += ".bin";
  fs::path manifest = stem;
  manifest += ".json";
  std::ofstream out = open_out(bin);
  json entries = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
    entries.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    offset += p.value.size();
  }
  if (!out) fail(ErrorKind::Io, bin.string() + ": write failed");
  json m = {{"format", "hgx-checkpoint"},
            {"version", 1},
            {"binary", bin.filename().string()},
            {"dtype", "float64-le"},
            {"parameters", entries},
            {"metadata", metadata}};
  write_text(manifest, m.dump(2) + "\n");
}

json load_checkpoint(const fs::path& stem, ad::ParameterSet& params) {
  fs::path manifest = stem;
  manifest += ".json";
  json m;
  try {
    m = json::parse(read_text(manifest));
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, manifest.string() + ": " + e.what());
  }
  if (m.value("format", "") != "hgx-checkpoint") fail(ErrorKind::ParseError, manifest.string() + ": not a checkpoint");
  const std::string raw = read_text(stem.parent_path() / m["binary"].get<std::string>());
  const auto& entries = m["parameters"];
  if (entries.size() != params.size()) fail(ErrorKind::ShapeMismatch, "checkpoint parameter count differs");
  for (const auto& e : entries) {
    const std::string name = e["name"];
    ad::Parameter* p = params.find(name);
    if (!p) fail(ErrorKind::ShapeMismatch, "checkpoint parameter '" + name + "' not in the model");
    const std::size_t rows = e["rows"], cols = e["cols"], offset = e["offset"];
    if (p->value.rows() != rows || p->value.cols() != cols) {
      fail(ErrorKind::ShapeMismatch, "checkpoint parameter '" + name + "' has a different shape");
    }
    if ((offset + rows * cols) * sizeof(double) > raw.size()) fail(ErrorKind::ParseError, "checkpoint binary truncated");
    std::memcpy(p->value.data().data(), raw.data() + offset * sizeof(double), rows * cols * sizeof(double));
  }
  return m["metadata"];
}

// ---- configs ------------------------------------------------------------------------------------------

namespace {

template <class T>
T take(json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  T v;
  try {
    v = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("config field '") + key + "': " + e.what());
  }
  j.erase(key);
  return v;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& input, const fs::path& base_dir) {
  if (!input.is_object()) fail(ErrorKind::InvalidConfig, "config must be a JSON object");
  json j = input;
  ExperimentConfig c;
  train::TrainConfig& t = c.train;
  allset::NetworkConfig& n = t.network;
  c.dataset = take<std::string>(j, "dataset", "");
  if (c.dataset.empty()) fail(ErrorKind::InvalidConfig, "config needs a 'dataset' directory");
  if (!base_dir.empty() && fs::path(c.dataset).is_relative()) c.dataset_dir = (base_dir / c.dataset).string();
  else c.dataset_dir = c.dataset;
  n.kind = allset::parse_model(take<std::string>(j, "model", "allsettransformer"));
  n.layers = take(j, "layers", n.layers);
  n.hidden = take(j, "hidden", n.hidden);
  n.heads = take(j, "heads", n.heads);
  n.mlp_layers = take(j, "mlp_layers", n.mlp_layers);
  n.kv_layers = take(j, "kv_layers", n.kv_layers);
  n.dropout = take(j, "dropout", n.dropout);
  n.input_projection = take(j, "input_projection", n.input_projection);
  n.residual = take(j, "residual", n.residual);
  n.hnhn.alpha = take(j, "hnhn_alpha", n.hnhn.alpha);
  n.hnhn.beta = take(j, "hnhn_beta", n.hnhn.beta);
  n.hnhn.edge_cardinality_normalizer = take(j, "hnhn_edge_cardinality", n.hnhn.edge_cardinality_normalizer);
  n.hypersage_p = take(j, "hypersage_p", n.hypersage_p);
  t.lr = take(j, "lr", t.lr);
  t.weight_decay = take(j, "weight_decay", t.weight_decay);
  t.epochs = take(j, "epochs", t.epochs);
  t.patience = take(j, "patience", t.patience);
  t.runs = take(j, "runs", t.runs);
  t.seed = take(j, "seed", t.seed);
  t.row_normalize = take(j, "row_normalize", t.row_normalize);
  if (j.contains("split")) {
    json s = j["split"];
    t.split.train = take(s, "train", t.split.train);
    t.split.val = take(s, "val", t.split.val);
    t.split.test = take(s, "test", t.split.test);
    if (!s.empty()) fail(ErrorKind::InvalidConfig, "unknown split field '" + s.begin().key() + "'");
    j.erase("split");
  }
  if (j.contains("synthesize")) {
    json s = j["synthesize"];
    train::SynthSpec spec;
    spec.dim = take(s, "dim", spec.dim);
    spec.sigma = take(s, "sigma", spec.sigma);
    spec.seed = take(s, "seed", spec.seed);
    if (!s.empty()) fail(ErrorKind::InvalidConfig, "unknown synthesize field '" + s.begin().key() + "'");
    c.synthesize = spec;
    j.erase("synthesize");
  }
  c.jobs = take(j, "jobs", c.jobs);
  if (!j.empty()) fail(ErrorKind::InvalidConfig, "unknown config field '" + j.begin().key() + "'");
  if (t.runs == 0) fail(ErrorKind::InvalidConfig, "runs must be >= 1");
  if (!(t.lr > 0.0) || t.weight_decay < 0.0) fail(ErrorKind::InvalidConfig, "lr must be > 0 and weight_decay >= 0");
  return c;
}

ExperimentConfig read_experiment_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  const train::TrainConfig& t = c.train;
  const allset::NetworkConfig& n = t.network;
  json j = {
      {"dataset", c.dataset},
      {"model", std::string(allset::to_string(n.kind))},
      {"layers", n.layers},
      {"hidden", n.hidden},
      {"heads", n.heads},
      {"mlp_layers", n.mlp_layers},
      {"kv_layers", n.kv_layers},
      {"dropout", n.dropout},
      {"input_projection", n.input_projection},
      {"residual", n.residual},
      {"hnhn_alpha", n.hnhn.alpha},
      {"hnhn_beta", n.hnhn.beta},
      {"hnhn_edge_cardinality", n.hnhn.edge_cardinality_normalizer},
      {"hypersage_p", n.hypersage_p},
      {"lr", t.lr},
      {"weight_decay", t.weight_decay},
      {"epochs", t.epochs},
      {"patience", t.patience},
      {"runs", t.runs},
      {"seed", t.seed},
      {"row_normalize", t.row_normalize},
      {"split", {{"train", t.split.train}, {"val", t.split.val}, {"test", t.split.test}}},
  };
  if (c.synthesize) {
    j["synthesize"] = {{"dim", c.synthesize->dim}, {"sigma", c.synthesize->sigma}, {"seed", c.synthesize->seed}};
  }
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json results_to_json(const train::ExperimentResult& r, const ExperimentConfig& config) {
  json runs = json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"run", run.run},
                    {"seed", run.seed},
                    {"test_accuracy", run.test_accuracy},
                    {"val_accuracy", run.val_accuracy},
                    {"train_accuracy", run.train_accuracy},
                    {"best_epoch", run.best_epoch},
                    {"epochs_run", run.epochs_run},
                    {"seconds", run.seconds}});
  }
  json aggregate = {{"runs", r.runs.size()}, {"mean", r.mean}};
  if (r.stddev) aggregate["std"] = *r.stddev;
  return {
      {"schema_version", kResultsSchemaVersion},
      {"config_hash", config_hash(config)},
      {"config", to_json(config)},
      {"protocol",
       {{"optimizer", "adam"},
        {"beta1", 0.9},
        {"beta2", 0.999},
        {"eps", 1e-8},
        {"weight_decay_mode", "decoupled"},
        {"model_selection", "best validation accuracy, ties to the earlier epoch"},
        {"seed_derivation", "run r uses seed + r for initialization and split"},
        {"metric", "micro-F1 (accuracy)"}}},
      {"runs", runs},
      {"aggregate", aggregate},
      {"wall_seconds", r.seconds},
  };
}

}  // namespace hgx::io
