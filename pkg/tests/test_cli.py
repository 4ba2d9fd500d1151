import csv
import json

import numpy as np
import pytest

from mcoclust.cli import main, replicate_seed
from mcoclust.core import Dataset, FeatureFamily, Kind
from mcoclust.evaluation import adjusted_rand_index, match_views
from mcoclust.io import (AssignmentTable, read_dataset, write_assignments, write_dataset,
                         write_schema)
from mcoclust.synthgen import generate, paper_scenario


def small_fit_args(data, schema, out, *extra):
    return ["fit", "--data", str(data), "--schema", str(schema), "--views", "3",
            "--feature-clusters", "2", "--object-clusters", "4", "--restarts", "2",
            "--out", str(out), *extra]


@pytest.fixture
def simulated(tmp_path):
    assert main(["simulate", "--n", "20", "--d", "2", "--missing", "0.1", "--replicates", "2",
                 "--seed", "5", "--out", str(tmp_path / "sim")]) == 0
    return tmp_path / "sim"


class TestRoundTrip:
    def test_dataset(self, tmp_path):
        rng = np.random.default_rng(0)
        fams = (FeatureFamily(Kind.GAUSSIAN), FeatureFamily(Kind.POISSON),
                FeatureFamily(Kind.CATEGORICAL, 3), FeatureFamily(Kind.MULTINOMIAL, 2))
        mats = (rng.normal(size=(5, 2)) * 1e3, rng.poisson(4, (5, 2)),
                rng.integers(3, size=(5, 1)), rng.integers(0, 4, size=(5, 2, 2)))
        masks = tuple(rng.random(m.shape[:2]) > 0.3 for m in mats)
        for m in masks:
            m[0] = True
        ds = Dataset(fams, mats, masks,
                     (("a", "b"), ("c", "d"), ("e",), ("f", "g")), tuple("vwxyz"))
        write_dataset(ds, tmp_path / "d.csv")
        write_schema(ds, tmp_path / "s.json")
        back = read_dataset(tmp_path / "d.csv", tmp_path / "s.json")
        assert back.families == ds.families and back.feature_names == ds.feature_names
        assert back.object_ids == ds.object_ids
        for a, b, ma, mb in zip(ds.matrices, back.matrices, ds.masks, back.masks):
            np.testing.assert_array_equal(ma, mb)
            np.testing.assert_array_equal(a[ma], b[mb])

    def test_na_and_no_id_column(self, tmp_path):
        (tmp_path / "d.csv").write_text("x,k\n1.5,NA\n,2\n-3,0\n")
        (tmp_path / "s.json").write_text('{"x": "gaussian", "k": "poisson"}')
        ds = read_dataset(tmp_path / "d.csv", tmp_path / "s.json")
        assert ds.object_ids == ("0", "1", "2")
        np.testing.assert_array_equal(ds.masks[0][:, 0], [True, False, True])
        np.testing.assert_array_equal(ds.masks[1][:, 0], [False, True, True])

    def test_assignments(self, tmp_path):
        ds, truth = generate(paper_scenario(6, 1, seed=0))
        write_assignments(ds, truth, tmp_path / "a.csv")
        table = AssignmentTable.read(tmp_path / "a.csv")
        assert len(table.features) == 9 and sorted(table.objects) == [0, 1, 2]
        assert table.objects[1]["obj_003"] == truth.object_assignment[1][3]


class TestSimulate:
    def test_files(self, simulated):
        names = sorted(p.name for p in simulated.iterdir())
        assert names == ["data_000.csv", "data_001.csv", "scenario_000.json", "scenario_001.json",
                         "schema.json", "truth_000.csv", "truth_001.csv"]

    def test_full_sized_table(self, tmp_path):
        assert main(["simulate", "--n", "100", "--d", "50", "--missing", "0.1",
                     "--out", str(tmp_path)]) == 0
        with open(tmp_path / "data_000.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 101 and all(len(r) == 451 for r in rows)
        empty = sum(c == "" for r in rows[1:] for c in r[1:])
        assert empty == 4500

    def test_same_seed_same_bytes(self, simulated, tmp_path):
        main(["simulate", "--n", "20", "--d", "2", "--missing", "0.1", "--replicates", "2",
              "--seed", "5", "--out", str(tmp_path / "again")])
        for p in simulated.iterdir():
            assert p.read_bytes() == (tmp_path / "again" / p.name).read_bytes()

    def test_replicate_seeds_distinct(self):
        seeds = {replicate_seed(b, r) for b in range(5) for r in range(100)}
        assert len(seeds) == 500

    def test_bad_flags(self, tmp_path):
        assert main(["simulate", "--missing", "1.5", "--out", str(tmp_path)]) == 2
        assert main(["simulate", "--n", "1", "--out", str(tmp_path)]) == 2


class TestFit:
    def test_outputs(self, simulated, tmp_path):
        out = tmp_path / "fit"
        assert main(small_fit_args(simulated / "data_000.csv", simulated / "schema.json", out)) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["mode"] == "full"
        table = AssignmentTable.read(out)
        assert len(table.features) == 18
        assert sorted(table.objects) == sorted(int(v) for v in summary["object_clusters"])
        assert all(len(rows) == 20 for rows in table.objects.values())
        trace = (out / "elbo_trace.csv").read_text().splitlines()
        assert trace[0] == "iteration,elbo" and len(trace) == summary["iterations"] + 1

    def test_coclustering_mode(self, simulated, tmp_path):
        args = small_fit_args(simulated / "data_000.csv", simulated / "schema.json", tmp_path)
        args[args.index("--views") + 1] = "1"
        assert main(args) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["mode"] == "coclustering" and summary["active_views"] == 1

    def test_config_file_and_override(self, simulated, tmp_path):
        (tmp_path / "c.json").write_text('{"restarts": 1, "views": 2, "standardize": true}')
        args = small_fit_args(simulated / "data_000.csv", simulated / "schema.json", tmp_path / "o",
                              "--config", str(tmp_path / "c.json"))
        assert main(args) == 0
        cfg = json.loads((tmp_path / "o" / "summary.json").read_text())["config"]
        assert cfg["views"] == 3 and cfg["restarts"] == 2 and cfg["standardize"] is True

    def test_rerun_is_byte_identical(self, simulated, tmp_path):
        for name in ("a", "b"):
            main(small_fit_args(simulated / "data_000.csv", simulated / "schema.json", tmp_path / name))
        for f in ("assignments.csv", "summary.json", "elbo_trace.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_invalid_cell_exits_2(self, tmp_path, caplog):
        (tmp_path / "d.csv").write_text("x,k\n1.5,3\n2.0,-1\n")
        (tmp_path / "s.json").write_text('{"x": "gaussian", "k": "poisson"}')
        assert main(small_fit_args(tmp_path / "d.csv", tmp_path / "s.json", tmp_path / "o")) == 2
        assert "cell (1, 0)" in caplog.text and "negative count" in caplog.text

    @pytest.mark.parametrize("data,schema", [
        ("x\n1\n2\n", '{"x": "weibull"}'),
        ("x\n1\nabc\n", '{"x": "gaussian"}'),
        ("x,y\n1\n", '{"x": "gaussian", "y": "gaussian"}'),
        ("x\n1\n2\n", '{"z": "gaussian"}'),
    ])
    def test_malformed_input_exits_2(self, tmp_path, data, schema):
        (tmp_path / "d.csv").write_text(data)
        (tmp_path / "s.json").write_text(schema)
        assert main(small_fit_args(tmp_path / "d.csv", tmp_path / "s.json", tmp_path / "o")) == 2

    def test_argument_errors(self, tmp_path):
        assert main(["fit"]) == 2
        assert main(["nonsense"]) == 2
        assert main(small_fit_args("missing.csv", "missing.json", tmp_path) + ["--restarts", "0"]) == 2

    def test_all_restarts_failing_exits_3(self, simulated, tmp_path, monkeypatch):
        from mcoclust import inference

        def broken(*args, **kwargs):
            raise inference.NonFiniteElboError(1)

        monkeypatch.setattr(inference, "fit_single", broken)
        args = small_fit_args(simulated / "data_000.csv", simulated / "schema.json", tmp_path)
        assert main(args) == 3


class TestEvaluate:
    def test_truth_against_itself(self, simulated, tmp_path):
        truth = simulated / "truth_000.csv"
        assert main(["evaluate", "--truth", str(truth), "--result", str(truth),
                     "--out", str(tmp_path / "m.json")]) == 0
        m = json.loads((tmp_path / "m.json").read_text())
        assert m["object_ari_mean"] == 1.0 and m["view_ari"] == 1.0
        assert set(m["object_ari"].values()) == {1.0}

    def test_single_view_single_cluster(self, simulated, tmp_path):
        rows = list(csv.reader(open(simulated / "truth_000.csv")))
        lumped = [rows[0]] + [[r[0], r[1], r[2], "0", "0"] for r in rows[1:]
                              if r[0] == "feature" or r[3] == "0"]
        with open(tmp_path / "r.csv", "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(lumped)
        main(["evaluate", "--truth", str(simulated / "truth_000.csv"),
              "--result", str(tmp_path / "r.csv"), "--out", str(tmp_path / "m.json")])
        m = json.loads((tmp_path / "m.json").read_text())
        assert m["object_ari_mean"] == 0.0 and m["view_ari"] == 0.0

    def test_matches_library(self, simulated, tmp_path):
        out = tmp_path / "fit"
        main(small_fit_args(simulated / "data_001.csv", simulated / "schema.json", out))
        main(["evaluate", "--truth", str(simulated / "truth_001.csv"), "--result", str(out),
              "--out", str(tmp_path / "m.json")])
        m = json.loads((tmp_path / "m.json").read_text())
        truth, found = AssignmentTable.read(simulated / "truth_001.csv"), AssignmentTable.read(out)
        ids = sorted(truth.objects[0])
        t = [[truth.objects[v][i] for i in ids] for v in sorted(truth.objects)]
        f = [[found.objects[v][i] for i in ids] for v in sorted(found.objects)]
        assert m["object_ari_mean"] == pytest.approx(match_views(t, f)[1], abs=1e-12)
        names = sorted(truth.features)
        assert m["view_ari"] == pytest.approx(adjusted_rand_index(
            [truth.features[n][1] for n in names], [found.features[n][1] for n in names]), abs=1e-12)

    def test_mismatched_universe_exits_2(self, simulated, tmp_path):
        (tmp_path / "r.csv").write_text("kind,family,name,view,cluster\nfeature,gaussian,zzz,0,0\n")
        assert main(["evaluate", "--truth", str(simulated / "truth_000.csv"),
                     "--result", str(tmp_path / "r.csv"), "--out", str(tmp_path / "m.json")]) == 2
