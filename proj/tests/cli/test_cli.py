"""End-to-end checks of the hgx command line.

Run by ctest with HGX_BIN (the hgx executable) and HGX_SOURCE (the source tree).
"""

import json
import os
import subprocess
import tempfile
import unittest
from pathlib import Path

import jsonschema

HGX = os.environ["HGX_BIN"]
SOURCE = Path(os.environ["HGX_SOURCE"])
ZOO = SOURCE / "data" / "zoo"
SCHEMA = json.loads((SOURCE / "schemas" / "results.schema.json").read_text())


def hgx(*args, env=None, check=True):
    full_env = {k: v for k, v in os.environ.items() if k != "HGX_SEED"}
    full_env.update(env or {})
    proc = subprocess.run([HGX, *map(str, args)], capture_output=True, text=True, env=full_env)
    if check and proc.returncode != 0:
        raise AssertionError(f"hgx {' '.join(map(str, args))} exited {proc.returncode}: {proc.stderr}")
    return proc


def fnv1a64(text):
    h = 0xCBF29CE484222325
    for b in text.encode():
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def strip_timing(results):
    results = dict(results)
    results.pop("wall_seconds")
    results["runs"] = [{k: v for k, v in r.items() if k != "seconds"} for r in results["runs"]]
    return results


class CliTest(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, **overrides):
        config = json.loads((SOURCE / "configs" / "zoo_allsettransformer.json").read_text())
        config["dataset"] = str(ZOO)
        config.update(overrides)
        path = self.tmp / "config.json"
        path.write_text(json.dumps(config))
        return path

    def train(self, config, *extra):
        out = self.tmp / "results.json"
        hgx("train", config, "-o", out, *extra)
        return json.loads(out.read_text())


class TrainTest(CliTest):
    def test_single_run_omits_std(self):
        results = self.train(self.write_config(runs=1, epochs=20))
        jsonschema.validate(results, SCHEMA)
        self.assertEqual(len(results["runs"]), 1)
        self.assertIn("mean", results["aggregate"])
        self.assertNotIn("std", results["aggregate"])

    def test_five_runs(self):
        results = self.train(self.write_config(runs=5, epochs=20))
        jsonschema.validate(results, SCHEMA)
        self.assertEqual([r["run"] for r in results["runs"]], [0, 1, 2, 3, 4])
        self.assertEqual([r["seed"] for r in results["runs"]], [0, 1, 2, 3, 4])
        self.assertIn("std", results["aggregate"])

    def test_config_hash_matches_recomputation(self):
        results = self.train(self.write_config(runs=1, epochs=5))
        canonical = json.dumps(results["config"], sort_keys=True, separators=(",", ":"))
        self.assertEqual(results["config_hash"], fnv1a64(canonical))

    def test_deterministic(self):
        config = self.write_config(runs=2, epochs=30, dropout=0.2)
        first = strip_timing(self.train(config))
        second = strip_timing(self.train(config, "--jobs", "2"))
        self.assertEqual(first, second)

    def test_seed_flag_and_environment(self):
        config = self.tmp / "noseed.json"
        spec = json.loads(self.write_config(runs=1, epochs=10).read_text())
        del spec["seed"]
        config.write_text(json.dumps(spec))
        out = self.tmp / "r.json"
        hgx("--seed", "7", "train", config, "-o", out)
        by_flag = json.loads(out.read_text())
        hgx("train", config, "-o", out, env={"HGX_SEED": "7"})
        by_env = json.loads(out.read_text())
        self.assertEqual(by_flag["config"]["seed"], 7)
        self.assertEqual(strip_timing(by_flag), strip_timing(by_env))

    def test_missing_dataset(self):
        proc = hgx("train", self.write_config(dataset=str(self.tmp / "absent")), check=False)
        self.assertEqual(proc.returncode, 2)
        payload = json.loads(proc.stderr.strip().splitlines()[-1])
        self.assertEqual(payload["error"], "ParseError")

    def test_unknown_config_field(self):
        proc = hgx("train", self.write_config(learning_rate=0.1), check=False)
        self.assertEqual(proc.returncode, 2)
        self.assertEqual(json.loads(proc.stderr.strip().splitlines()[-1])["error"], "InvalidConfig")

    def test_checkpoint(self):
        self.train(self.write_config(runs=1, epochs=5), "--checkpoint", self.tmp / "ckpt")
        manifest = json.loads((self.tmp / "ckpt.json").read_text())
        self.assertEqual(manifest["format"], "hgx-checkpoint")
        total = sum(p["rows"] * p["cols"] for p in manifest["parameters"])
        self.assertEqual((self.tmp / "ckpt.bin").stat().st_size, 8 * total)


class ToolsTest(CliTest):
    def test_stats_zoo(self):
        stats = json.loads(hgx("stats", ZOO / "hypergraph.hg", "--json").stdout)
        self.assertEqual(stats["nodes"], 101)
        self.assertEqual(stats["hyperedges"], 43)
        self.assertEqual(stats["edge_size"]["max"], 93)
        self.assertEqual(stats["edge_size"]["min"], 1)
        self.assertEqual(stats["node_degree"]["mean"], 17.0)

    def test_clique_expansion_adjacency(self):
        g = self.tmp / "edge.hg"
        g.write_text("2 1\n0 1\n")
        out = hgx("convert", "format", g, "--to", "ce-adj").stdout
        rows = [[float(v) for v in line.split(",")] for line in out.split()]
        self.assertEqual(rows, [[0, 1], [1, 0]])

    def test_star_round_trip(self):
        star = self.tmp / "zoo.star"
        back = self.tmp / "zoo.hg"
        hgx("convert", "format", ZOO / "hypergraph.hg", "--to", "star", "-o", star)
        hgx("convert", "format", star, "--from", "star", "--to", "hg", "-o", back)
        original = hgx("stats", ZOO / "hypergraph.hg", "--json").stdout
        self.assertEqual(hgx("stats", back, "--json").stdout, original)
        strip = lambda p: [l for l in Path(p).read_text().splitlines() if not l.startswith("#")]
        self.assertEqual(strip(back), strip(ZOO / "hypergraph.hg"))

    def test_synth_features(self):
        out = self.tmp / "x.csv"
        hgx("--seed", "3", "synth-features", ZOO / "labels.txt", "--dim", "100", "--sigma", "0.6", "-o", out)
        rows = out.read_text().split()
        self.assertEqual(len(rows), 101)
        self.assertTrue(all(len(r.split(",")) == 100 for r in rows))
        again = self.tmp / "y.csv"
        hgx("synth-features", ZOO / "labels.txt", "--dim", "100", "--sigma", "0.6", "-o", again,
            env={"HGX_SEED": "3"})
        self.assertEqual(out.read_bytes(), again.read_bytes())

    def test_propagate(self):
        g = self.tmp / "path.hg"
        g.write_text("3 2\n0 1\n1 2\n")
        x = self.tmp / "x.csv"
        x.write_text("1\n10\n100\n")
        out = hgx("propagate", g, "--features", x, "--rule", "ceprop-h").stdout.split()
        self.assertEqual(float(out[1]), 121.0)

    def test_gradcheck(self):
        proc = hgx("gradcheck", "--layer", "allsettransformer")
        self.assertIn("PASS", proc.stdout)

    def test_reproduce_theorems(self):
        proc = hgx("reproduce", "theorems")
        self.assertTrue(proc.stdout.startswith("PASS"))

    def test_bad_arguments(self):
        self.assertEqual(hgx("stats", check=False).returncode, 2)
        self.assertEqual(hgx("stats", self.tmp / "none.hg", check=False).returncode, 2)


if __name__ == "__main__":
    unittest.main(verbosity=2)
