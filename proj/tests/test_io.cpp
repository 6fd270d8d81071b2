#include <unistd.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "hgx/io.hpp"
#include "support.hpp"

using namespace hgx;
using hgx::testing::kind_of;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hgx-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

fs::path source_dir() { return HGX_SOURCE_DIR; }

}  // namespace

TEST_CASE(".hg parsing") {
  std::istringstream in("# two edges\n3 2\n0 1\n\n2 1 w=2.5\n");
  auto hg = io::parse_hg(in);
  CHECK(hg.num_nodes() == 3);
  CHECK(hg.num_edges() == 2);
  CHECK(hg.weight(1) == 2.5);
  CHECK(hg.weight(0) == 1.0);

  std::istringstream bad_id("2 1\n0 5\n");
  CHECK(kind_of([&] { io::parse_hg(bad_id, "g.hg"); }) == ErrorKind::NodeIdOutOfRange);
  std::istringstream bad_count("2 2\n0 1\n");
  CHECK(kind_of([&] { io::parse_hg(bad_count); }) == ErrorKind::ParseError);
  std::istringstream bad_token("2 1\n0 x\n");
  CHECK(message_of([&] { io::parse_hg(bad_token, "g.hg"); }).find("g.hg:2") != std::string::npos);
  std::istringstream bad_weight("2 1\n0 1 w=0\n");
  CHECK(kind_of([&] { io::parse_hg(bad_weight); }) == ErrorKind::NonpositiveWeight);
}

TEST_CASE(".hg round trip") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    auto base = random_hypergraph(rng, 12, 1 + rng.index(9), 1, 5);
    std::vector<double> w;
    for (std::size_t e = 0; e < base.num_edges(); ++e) w.push_back(rng.uniform(0.01, 10.0));
    auto hg = t % 2 ? Hypergraph::from_edge_list(12, base.edges(), w) : base;
    std::ostringstream out;
    io::write_hg(out, hg);
    std::istringstream in(out.str());
    auto back = io::parse_hg(in);
    CHECK(back == hg);
    std::ostringstream again;
    io::write_hg(again, back);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("csv is bit-exact") {
  Rng rng(2);
  Matrix m(30, 7);
  for (double& v : m.data()) v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
  m(0, 0) = std::numeric_limits<double>::denorm_min();
  m(0, 1) = -0.0;
  m(0, 2) = std::numeric_limits<double>::max();
  std::ostringstream out;
  io::write_csv(out, m);
  std::istringstream in(out.str());
  auto back = io::parse_csv(in);
  REQUIRE(back.same_shape(m));
  CHECK(std::memcmp(back.data().data(), m.data().data(), m.size() * sizeof(double)) == 0);

  std::istringstream with_header("a,b\n1.5,2\n3,4\n");
  CHECK(io::parse_csv(with_header, true) == Matrix{{1.5, 2}, {3, 4}});
  std::istringstream ragged("1,2\n3\n");
  CHECK(kind_of([&] { io::parse_csv(ragged); }) == ErrorKind::ParseError);
}

TEST_CASE("labels") {
  std::istringstream ok("0\n2\n1\n");
  CHECK(io::parse_labels(ok, 3) == std::vector<int>{0, 2, 1});
  std::istringstream bad("0\n1\n3\n");
  const auto msg = message_of([&] { io::parse_labels(bad, 3, "labels.txt"); });
  CHECK(msg.find("LabelOutOfRange") == 0);
  CHECK(msg.find("labels.txt:3") != std::string::npos);
}

TEST_CASE("dataset bundles") {
  TempDir tmp("bundle");
  io::DatasetBundle b;
  b.name = "toy";
  b.hg = Hypergraph::from_edge_list(4, {{0, 1, 2}, {2, 3}});
  b.features = Matrix{{1, 0}, {0.5, 2}, {3, 1}, {0, 0}};
  b.labels = {0, 1, 1, 0};
  b.classes = 2;
  io::save_dataset(b, tmp.path / "toy");
  auto back = io::load_dataset(tmp.path / "toy");
  CHECK(back.name == "toy");
  CHECK(back.hg == b.hg);
  CHECK(back.features == b.features);
  CHECK(back.labels == b.labels);
  CHECK(back.classes == 2);

  SUBCASE("missing files") {
    CHECK(kind_of([&] { io::load_dataset(tmp.path / "nope"); }) == ErrorKind::ParseError);
  }
  SUBCASE("row mismatch") {
    io::save_csv(tmp.path / "toy" / "features.csv", Matrix(3, 2));
    CHECK(kind_of([&] { io::load_dataset(tmp.path / "toy"); }) == ErrorKind::DimensionMismatch);
  }
  SUBCASE("synthesized features") {
    fs::remove(tmp.path / "toy" / "features.csv");
    auto meta = nlohmann::json::parse(io::read_text(tmp.path / "toy" / "meta.json"));
    meta["synthesize"] = {{"dim", 10}, {"sigma", 0.0}, {"seed", 3}};
    meta.erase("feature_dim");
    io::write_text(tmp.path / "toy" / "meta.json", meta.dump());
    auto s = io::load_dataset(tmp.path / "toy");
    CHECK(s.features.cols() == 10);
    CHECK(s.features(1, 1) == 1.0);
  }
}

TEST_CASE("bundled zoo dataset") {
  auto zoo = io::load_dataset(source_dir() / "data" / "zoo");
  CHECK(zoo.hg.num_nodes() == 101);
  CHECK(zoo.features.cols() == 16);
  CHECK(zoo.classes == 7);
  auto s = stats(zoo.hg);
  CHECK(s.num_edges == 43);
  CHECK(s.edge_size.max == 93);
  CHECK(s.edge_size.min == 1);
  CHECK(s.node_degree.mean == 17.0);
  CHECK(star_expansion(zoo.hg).size() == s.edge_size.total);
}

TEST_CASE("categorical table conversion") {
  std::istringstream table(
      "name\tlegs\tfur\tclass\n"
      "cat\t4\t1\tmammal\n"
      "hen\t2\t0\tbird\n"
      "dog\t4\t1\tmammal\n");
  io::CategoricalTableOptions opt;
  opt.name = "mini";
  opt.skip_lines = 1;
  opt.ignore_columns = {0};
  opt.label_column = 3;
  auto b = io::convert_categorical_table(table, opt);
  CHECK(b.features == Matrix{{4, 1}, {2, 0}, {4, 1}});
  CHECK(b.labels == std::vector<int>{1, 0, 1});  // bird < mammal
  // legs=2, legs=4, fur=0, fur=1, bird, mammal
  CHECK(b.hg.edges() == std::vector<std::vector<NodeId>>{{1}, {0, 2}, {1}, {0, 2}, {1}, {0, 2}});
  CHECK(b.metadata["class_names"] == nlohmann::json::array({"bird", "mammal"}));
}

TEST_CASE("citation conversion") {
  std::istringstream content("p1 1 0 A\np2 0 1 B\np3 1 1 A\np4 0 0 B\n");
  std::istringstream cites("p1 p4\np2 p4\np3 p4\np1 p2\nzz p1\n");
  auto b = io::convert_linqs_cocitation(content, cites, "mini");
  CHECK(b.hg.num_nodes() == 4);
  // p4 cites three papers; p2's single citation is dropped
  CHECK(b.hg.edges() == std::vector<std::vector<NodeId>>{{0, 1, 2}});
  CHECK(b.labels == std::vector<int>{0, 1, 0, 1});
  CHECK(b.features(2, 1) == 1.0);
}

TEST_CASE("checkpoints") {
  TempDir tmp("ckpt");
  ad::ParameterSet a;
  a.add("w", Matrix{{1.5, -2}, {0.25, 1e-300}});
  a.add("b", Matrix{{7}});
  io::save_checkpoint(tmp.path / "m", a, {{"epoch", 3}});

  ad::ParameterSet b;
  b.add("w", Matrix(2, 2));
  b.add("b", Matrix(1, 1));
  auto meta = io::load_checkpoint(tmp.path / "m", b);
  CHECK(meta["epoch"] == 3);
  CHECK(b[0].value == a[0].value);
  CHECK(b[1].value == a[1].value);

  ad::ParameterSet wrong;
  wrong.add("w", Matrix(3, 2));
  wrong.add("b", Matrix(1, 1));
  CHECK(kind_of([&] { io::load_checkpoint(tmp.path / "m", wrong); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("experiment configs") {
  auto j = nlohmann::json::parse(R"({"dataset": "zoo", "model": "allsettransformer", "lr": 0.01,
                                     "weight_decay": 1e-5, "hidden": 64, "runs": 5})");
  auto c = io::parse_experiment_config(j, "/data/configs");
  CHECK(c.dataset_dir == "/data/configs/zoo");
  CHECK(c.train.lr == 0.01);
  CHECK(c.train.network.hidden == 64);
  CHECK(c.train.runs == 5);

  // The canonical form parses back to the same hash.
  auto again = io::parse_experiment_config(io::to_json(c), "/data/configs");
  CHECK(io::config_hash(again) == io::config_hash(c));
  CHECK(io::config_hash(c).size() == 16);

  auto other = c;
  other.train.lr = 0.02;
  CHECK(io::config_hash(other) != io::config_hash(c));
  auto more_jobs = c;
  more_jobs.jobs = 4;
  CHECK(io::config_hash(more_jobs) == io::config_hash(c));

  j["learning_rate"] = 0.1;
  CHECK(kind_of([&] { io::parse_experiment_config(j); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { io::parse_experiment_config(nlohmann::json::parse(R"({"model": "mlp"})")); }) ==
        ErrorKind::InvalidConfig);
  CHECK(kind_of([] {
          io::parse_experiment_config(nlohmann::json::parse(R"({"dataset": "x", "model": "gcn"})"));
        }) == ErrorKind::InvalidConfig);
}

TEST_CASE("results json") {
  io::ExperimentConfig cfg;
  cfg.dataset = "zoo";
  train::ExperimentResult r = train::aggregate_runs({train::RunResult{.run = 0, .test_accuracy = 0.9}});
  auto j = io::results_to_json(r, cfg);
  CHECK(j["schema_version"] == io::kResultsSchemaVersion);
  CHECK(j["config_hash"] == io::config_hash(cfg));
  CHECK(j["runs"].size() == 1);
  CHECK(j["aggregate"]["mean"] == 0.9);
  CHECK_FALSE(j["aggregate"].contains("std"));

  auto two = train::aggregate_runs({train::RunResult{.test_accuracy = 1.0}, train::RunResult{.run = 1}});
  CHECK(io::results_to_json(two, cfg)["aggregate"]["std"].get<double>() == doctest::Approx(0.70710678));
}
