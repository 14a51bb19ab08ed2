import csv
import json
import math

import numpy as np
import pytest

from nibblepack.cli import main
from nibblepack.graphcore import Graph, build_geometric_graph
from nibblepack.nibble import verify_independent
from nibblepack.pointproc import read_cloud


def run(*argv) -> int:
    return main([str(a) for a in argv])


def outputs(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


class TestGen:
    def test_sharpness_round_trip(self, tmp_path):
        assert run("gen", "--kind", "sharpness", "--n", 240, "--degree", 12, "--eta", 1 / 3,
                   "--seed", 1, "--out", tmp_path) == 0
        G = Graph.read(tmp_path / "graph.json")
        prof = G.profile()
        assert prof.histogram == {11: 240}
        text = (tmp_path / "graph.json").read_text()
        G.write(tmp_path / "again.json")
        assert (tmp_path / "again.json").read_text() == text

    def test_binary(self, tmp_path):
        assert run("gen", "--kind", "regular", "--n", 100, "--degree", 4, "--seed", 3, "--binary",
                   "--out", tmp_path) == 0
        assert (Graph.read(tmp_path / "graph.bin").degrees == 4).all()

    def test_poisson(self, tmp_path):
        assert run("gen", "--kind", "poisson", "--dim", 2, "--intensity", 5, "--domain", "box:2",
                   "--seed", 9, "--out", tmp_path) == 0
        cloud = read_cloud(tmp_path / "cloud.json")
        assert cloud.seed == 9 and cloud.dim == 2

    def test_missing_parameter(self, tmp_path):
        assert run("gen", "--kind", "regular", "--n", 10, "--out", tmp_path) == 1

    def test_generation_failure(self, tmp_path):
        assert run("gen", "--kind", "capped", "--n", 30, "--degree", 12, "--cap", 0, "--seed", 1,
                   "--out", tmp_path) == 3


class TestNibble:
    def test_edgeless(self, tmp_path):
        run("gen", "--kind", "empty", "--n", 25, "--out", tmp_path)
        assert run("nibble", tmp_path / "graph.json", "--seed", 4, "--out", tmp_path) == 0
        res = json.loads((tmp_path / "result.json").read_text())
        assert res["independent_set"] == list(range(25))
        assert res["verified"] is True and res["seed"] == 4
        assert res["version"].startswith("nibblepack")

    def test_regular(self, tmp_path):
        run("gen", "--kind", "regular", "--n", 3000, "--degree", 10, "--seed", 2, "--out", tmp_path)
        assert run("nibble", tmp_path / "graph.json", "--seed", 1, "--rounds", 4, "--out", tmp_path) == 0
        G = Graph.read(tmp_path / "graph.json")
        res = json.loads((tmp_path / "result.json").read_text())
        assert verify_independent(G, res["independent_set"])
        rows = list(csv.reader((tmp_path / "trace.csv").open()))
        assert rows[0] == ["i", "n_i", "delta_i", "delta2_i", "A_i", "eGA_i", "I_i", "retries", "ms"]

    def test_retries_exit_code(self, tmp_path):
        run("gen", "--kind", "regular", "--n", 2000, "--degree", 64, "--seed", 0, "--out", tmp_path)
        assert run("nibble", tmp_path / "graph.json", "--gamma", 0.1, "--alpha", 0.02, "--max-retries", 2,
                   "--seed", 0, "--out", tmp_path) == 3

    def test_paper_mode_infeasible(self, tmp_path, capsys):
        run("gen", "--kind", "regular", "--n", 200, "--degree", 6, "--seed", 0, "--out", tmp_path)
        assert run("nibble", tmp_path / "graph.json", "--mode", "paper", "--out", tmp_path) == 2
        assert "ScheduleInfeasible" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("nibble", tmp_path / "nope.json", "--out", tmp_path) == 1


class TestPack:
    def test_valid_packing(self, tmp_path):
        assert run("pack", "--dim", 2, "--domain", "box:20", "--intensity", 4, "--seed", 11,
                   "--emit-graph", "--out", tmp_path) == 0
        res = json.loads((tmp_path / "result.json").read_text())
        cloud = read_cloud(tmp_path / "packing.json")
        r = res["params"]["radius"]
        assert len(cloud) == res["size"]
        assert build_geometric_graph(cloud, 2 * r).num_edges == 0
        assert cloud.min_pairwise() > 2 * r
        assert res["density"] == pytest.approx(res["size"] * math.pi * r * r / 400)
        assert (tmp_path / "graph.json").exists()

    def test_zero_intensity(self, tmp_path):
        assert run("pack", "--dim", 2, "--intensity", 0, "--seed", 1, "--out", tmp_path) == 0
        res = json.loads((tmp_path / "result.json").read_text())
        assert res["size"] == 0 and res["density"] == 0

    def test_paper_mode_d8(self, tmp_path, capsys):
        assert run("pack", "--dim", 8, "--mode", "paper", "--out", tmp_path) == 2
        err = capsys.readouterr().err
        assert "ScheduleInfeasible" in err and "8.320e+103" in err

    def test_sphere_domain_rejected(self, tmp_path):
        assert run("pack", "--dim", 3, "--domain", "sphere", "--intensity", 1, "--out", tmp_path) == 1

    def test_capacity(self, tmp_path):
        assert run("pack", "--dim", 3, "--intensity", 1000, "--max-points", 100, "--out", tmp_path) == 2

    @pytest.mark.xfail(strict=True, reason="the nibble keeps about half of what random greedy finds on these clouds")
    def test_beats_random_greedy(self, tmp_path):
        wins = 0
        for seed in range(10):
            out = tmp_path / str(seed)
            assert run("pack", "--dim", 2, "--domain", "box:20", "--intensity", 4, "--seed", seed,
                       "--out", out) == 0
            res = json.loads((out / "result.json").read_text())
            wins += res["density"] >= res["greedy_density"]
        assert wins >= 8


class TestCode:
    def test_antipodal(self, tmp_path):
        assert run("code", "--dim", 3, "--theta", math.pi, "--intensity", 50, "--seed", 2,
                   "--rounds", 2, "--out", tmp_path) == 0
        assert json.loads((tmp_path / "result.json").read_text())["size"] <= 2

    def test_kissing_ceiling(self, tmp_path):
        for seed in range(20):
            out = tmp_path / str(seed)
            assert run("code", "--dim", 3, "--theta", math.pi / 3, "--intensity", 200, "--rounds", 3,
                       "--seed", seed, "--out", out) == 0
            res = json.loads((out / "result.json").read_text())
            code = read_cloud(out / "code.json")
            assert res["size"] <= 12
            if len(code) > 1:
                assert code.min_pairwise() >= math.pi / 3 - 1e-12
            assert res["saturation_ratio"] == pytest.approx(res["size"] * 0.25)

    def test_simplex_regime(self, tmp_path):
        for seed in range(5):
            out = tmp_path / str(seed)
            assert run("code", "--dim", 3, "--theta", 2 * math.pi / 3, "--intensity", 100, "--rounds", 1,
                       "--seed", seed, "--out", out) == 0
            code = read_cloud(out / "code.json")
            P = code.points
            G = P @ P.T
            np.fill_diagonal(G, -1)
            assert len(code) <= 4
            assert (G <= math.cos(2 * math.pi / 3) + 1e-12).all()

    def test_bad_theta(self, tmp_path):
        assert run("code", "--dim", 3, "--theta", 4, "--intensity", 10, "--out", tmp_path) == 1

    def test_paper_mode(self, tmp_path):
        assert run("code", "--dim", 8, "--theta", 1.0, "--mode", "paper", "--out", tmp_path) == 2


class TestAnalyze:
    def test_geometry_table(self, tmp_path):
        assert run("analyze", "geometry", "--out", tmp_path) == 0
        rows = list(csv.DictReader((tmp_path / "geometry.csv").open()))
        assert {int(r["d"]) for r in rows} == set(range(4, 65))
        assert all(r["sandwich_ok"] == r["radius_ok"] == r["lens_ok"] == "1" for r in rows)

    def test_graph_profile(self, tmp_path):
        run("gen", "--kind", "complete", "--n", 5, "--out", tmp_path)
        assert run("analyze", "graph", "--graph", tmp_path / "graph.json", "--out", tmp_path) == 0
        prof = json.loads((tmp_path / "profile.json").read_text())
        assert (prof["max_degree"], prof["max_codegree"]) == (4, 3)

    def test_tails(self, tmp_path):
        assert run("analyze", "tails", "--trials", 2000, "--seed", 3, "--out", tmp_path) == 0
        rows = list(csv.DictReader((tmp_path / "tails.csv").open()))
        assert [r["kind"] for r in rows] == ["degree", "codegree"]
        assert all(r["respected"] == "1" for r in rows)

    def test_bad_range(self, tmp_path):
        assert run("analyze", "geometry", "--dmin", 2, "--out", tmp_path) == 1


class TestConfig:
    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# pack settings\ndim = 2\ndomain = box:10\nintensity = 3\nseed = 5\nrounds = 4\n")
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("pack", "--config", cfg, "--out", a) == 0
        assert run("pack", "--dim", 2, "--domain", "box:10", "--intensity", 3, "--seed", 5, "--rounds", 4,
                   "--out", b) == 0
        assert outputs(a) == outputs(b)
        c = tmp_path / "c"
        assert run("pack", "--config", cfg, "--seed", 6, "--out", c) == 0
        assert json.loads((c / "result.json").read_text())["seed"] == 6

    def test_json_config(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"kind": "cycle", "n": 9}))
        assert run("gen", "--config", cfg, "--out", tmp_path) == 0
        assert Graph.read(tmp_path / "graph.json").num_edges == 9

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour = blue\n")
        assert run("pack", "--config", cfg, "--out", tmp_path) == 1

    def test_bad_flag(self, tmp_path):
        assert run("pack", "--frobnicate", "--out", tmp_path) == 1

    def test_no_command(self):
        assert run() == 1

    def test_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NIBBLEPACK_THREADS", "0")
        assert run("gen", "--kind", "cycle", "--n", 5, "--out", tmp_path) == 1
        monkeypatch.setenv("NIBBLEPACK_THREADS", "3")
        assert run("gen", "--kind", "cycle", "--n", 5, "--out", tmp_path) == 0


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ("pack", "--dim", 2, "--domain", "box:20", "--intensity", 4, "--emit-graph"),
        ("pack", "--dim", 3, "--domain", "ball:4", "--intensity", 2),
        ("code", "--dim", 3, "--theta", math.pi / 3, "--intensity", 200, "--rounds", 3, "--emit-graph"),
        ("gen", "--kind", "sharpness", "--n", 240, "--degree", 12, "--eta", 1 / 3),
        ("gen", "--kind", "poisson", "--dim", 3, "--intensity", 2),
        ("analyze", "tails", "--trials", 1000),
    ])
    def test_byte_identical(self, tmp_path, argv):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(*argv, "--seed", 21, "--out", a) == 0
        assert run(*argv, "--seed", 21, "--out", b) == 0
        assert outputs(a) == outputs(b)

    def test_nibble_command(self, tmp_path):
        run("gen", "--kind", "regular", "--n", 2000, "--degree", 8, "--seed", 1, "--out", tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("nibble", tmp_path / "graph.json", "--seed", 3, "--out", out) == 0
        assert outputs(a) == outputs(b)
