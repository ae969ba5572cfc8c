import json
import os
import subprocess
import sys

import numpy as np
import pytest

from latvar import io as lio
from latvar.cli import main
from latvar.model import ModelDims, TimeSeriesDataset


def run_cli(*args):
    """Invoke the CLI in-process; returns (exit_code, captured stdout)."""
    import io as _io
    from contextlib import redirect_stdout

    buf = _io.StringIO()
    with redirect_stdout(buf):
        code = main(list(args))
    return code, buf.getvalue()


@pytest.fixture
def gen_config(tmp_path):
    path = tmp_path / "gen.json"
    path.write_text(json.dumps({
        "dims": {"m": 3, "T": 80, "C": 3},
        "latent_ratio": 0.4,
        "avg_in_degree": 1.0,
        "noise_family": "gmm",
        "burn_in": 10,
        "seed": 1,
    }))
    return str(path)


@pytest.fixture
def fit_config(tmp_path):
    path = tmp_path / "fit.json"
    path.write_text(json.dumps({
        "n": 1,
        "C": 3,
        "train": {"max_epochs": 60, "seed": 2},
    }))
    return str(path)


class TestDatasetCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = TimeSeriesDataset(X=rng.normal(size=(30, 4)) * 10 ** rng.integers(-8, 8))
        path = tmp_path / "data.csv"
        lio.write_dataset_csv(ds, path)
        back = lio.read_dataset_csv(path)
        assert back.names == ds.names
        assert np.array_equal(back.X, ds.X)  # bitwise equality

    def test_rejects_ragged_rows(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n3.0\n")
        with pytest.raises(Exception):
            lio.read_dataset_csv(path)


class TestGenerate:
    def test_writes_pairs_and_is_deterministic(self, gen_config, tmp_path):
        out1 = tmp_path / "o1"
        out2 = tmp_path / "o2"
        assert run_cli("generate", "--config", gen_config, "--out", str(out1))[0] == 0
        assert run_cli("generate", "--config", gen_config, "--out", str(out2))[0] == 0
        d1 = (out1 / "dataset_seed1.csv").read_bytes()
        d2 = (out2 / "dataset_seed1.csv").read_bytes()
        t1 = (out1 / "truth_seed1.json").read_bytes()
        t2 = (out2 / "truth_seed1.json").read_bytes()
        assert d1 == d2 and t1 == t2

    def test_multiple_seeds(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({
            "dims": {"m": 2, "T": 40}, "avg_in_degree": 1.0,
            "seeds": [1, 2, 3], "burn_in": 5,
        }))
        out = tmp_path / "out"
        code, _ = run_cli("generate", "--config", str(cfg), "--out", str(out))
        assert code == 0
        for s in (1, 2, 3):
            assert (out / f"dataset_seed{s}.csv").exists()
            assert (out / f"truth_seed{s}.json").exists()

    def test_degenerate_config_exit_2(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({
            "dims": {"m": 20, "n": 8, "T": 40}, "avg_in_degree": 200.0, "seed": 1,
        }))
        code, _ = run_cli("generate", "--config", str(cfg), "--out", str(tmp_path / "x"))
        assert code == 2

    def test_unknown_key_exit_2(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({"dims": {"m": 2, "T": 40}, "bogus": 1}))
        code, _ = run_cli("generate", "--config", str(cfg))
        assert code == 2

    def test_truth_file_embeds_effective_config(self, gen_config, tmp_path):
        out = tmp_path / "out"
        run_cli("generate", "--config", gen_config, "--out", str(out))
        doc = json.loads((out / "truth_seed1.json").read_text())
        echo = doc["meta"]["generator_config"]
        assert echo["dims"] == {"m": 3, "n": 1, "T": 80, "C": 3}
        assert "stationarity_rescale" in doc


class TestFitEvaluate:
    def test_fit_deterministic_and_round_trip(self, gen_config, fit_config, tmp_path):
        out = tmp_path / "out"
        run_cli("generate", "--config", gen_config, "--out", str(out))
        data = str(out / "dataset_seed1.csv")
        f1 = tmp_path / "f1"
        f2 = tmp_path / "f2"
        assert run_cli("fit", "--config", fit_config, data, "--out", str(f1))[0] == 0
        assert run_cli("fit", "--config", fit_config, data, "--out", str(f2))[0] == 0
        b1 = (f1 / "checkpoint.json").read_bytes()
        b2 = (f2 / "checkpoint.json").read_bytes()
        assert b1 == b2
        # load -> serialize is byte-identical
        ckpt = lio.read_checkpoint(f1 / "checkpoint.json")
        assert lio.dumps_json(ckpt.to_doc()).encode() == b1

    def test_evaluate_pipeline(self, gen_config, fit_config, tmp_path):
        out = tmp_path / "out"
        run_cli("generate", "--config", gen_config, "--out", str(out))
        run_cli("fit", "--config", fit_config, str(out / "dataset_seed1.csv"),
                "--out", str(out))
        eval_cfg = tmp_path / "eval.json"
        eval_cfg.write_text(json.dumps({"tau": 0.5}))
        code, _ = run_cli(
            "evaluate", "--config", str(eval_cfg),
            str(out / "checkpoint.json"), str(out / "truth_seed1.json"),
            "--out", str(out),
        )
        assert code == 0
        doc = json.loads((out / "metrics.json").read_text())
        assert doc["kind"] == "metrics"
        assert 0.0 <= doc["f1"] <= 1.0
        assert doc["tau"] == 0.5
        assert "observed-observed" in doc["scope"]
        assert doc["latent_match"] is not None

    def test_evaluate_dims_mismatch_exit_2(self, gen_config, fit_config, tmp_path):
        out = tmp_path / "out"
        run_cli("generate", "--config", gen_config, "--out", str(out))
        run_cli("fit", "--config", fit_config, str(out / "dataset_seed1.csv"),
                "--out", str(out))
        other_gen = tmp_path / "gen2.json"
        other_gen.write_text(json.dumps({
            "dims": {"m": 4, "T": 60}, "avg_in_degree": 1.0, "seed": 1, "burn_in": 5,
        }))
        run_cli("generate", "--config", str(other_gen), "--out", str(out / "g2"))
        eval_cfg = tmp_path / "eval.json"
        eval_cfg.write_text(json.dumps({}))
        code, _ = run_cli(
            "evaluate", "--config", str(eval_cfg),
            str(out / "checkpoint.json"), str(out / "g2" / "truth_seed1.json"),
        )
        assert code == 2

    def test_checkpoint_threshold_monotonicity(self, gen_config, fit_config, tmp_path):
        out = tmp_path / "out"
        run_cli("generate", "--config", gen_config, "--out", str(out))
        run_cli("fit", "--config", fit_config, str(out / "dataset_seed1.csv"),
                "--out", str(out))
        ckpt = lio.read_checkpoint(out / "checkpoint.json")
        truth = lio.read_truth(out / "truth_seed1.json")
        from latvar.evaluation import score_against_truth

        rep_low, _ = score_against_truth(ckpt.edge_prob, ckpt.w_mean, truth, 0.5)
        rep_high, _ = score_against_truth(ckpt.edge_prob, ckpt.w_mean, truth, 0.99)
        assert rep_high.recall <= rep_low.recall

    def test_missing_dataset_exit_2(self, fit_config, tmp_path):
        code, _ = run_cli("fit", "--config", fit_config,
                          str(tmp_path / "nope.csv"))
        assert code == 2


class TestBenchmark:
    def _bench_config(self, tmp_path, **overrides):
        doc = {
            "grid": {"m": [3], "T": [60], "d": [1.0], "r": [0.4],
                     "noise_family": ["gmm"]},
            "seeds": [1],
            "C": 3,
            "train": {"max_epochs": 40, "seed": 1},
            "tau": 0.5,
            "gen": {"burn_in": 5},
        }
        doc.update(overrides)
        path = tmp_path / "bench.json"
        path.write_text(json.dumps(doc))
        return str(path)

    def test_single_cell_report_equals_cell_metrics(self, tmp_path):
        cfg = self._bench_config(tmp_path)
        out = tmp_path / "bench_out"
        code, _ = run_cli("benchmark", "--config", cfg, "--out", str(out))
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["cells"]) == 1
        cell = report["cells"][0]
        agg = report["aggregates"][0]
        assert cell["status"] == "ok"
        assert agg["f1_mean"] == cell["metrics"]["f1"]
        assert agg["f1_sd"] == 0.0
        assert (out / "report.csv").exists()
        # single grid point: a bar-chart figure is rendered
        assert (out / "report_metrics.png").exists()

    def test_grid_cardinality_and_figures(self, tmp_path):
        cfg = self._bench_config(
            tmp_path,
            grid={"m": [2, 3], "T": [60], "d": [0.75, 1.0], "r": [0.0],
                  "noise_family": ["gmm"]},
            seeds=[1, 2, 3],
        )
        out = tmp_path / "bench_out"
        code, _ = run_cli("benchmark", "--config", cfg, "--out", str(out))
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["cells"]) == 4 * 3
        assert len(report["aggregates"]) == 4
        assert (out / "report.csv").read_text().count("\n") == 5  # header + 4 rows
        assert (out / "report_vs_m.png").exists()
        assert (out / "report_vs_d.png").exists()

    def test_benchmark_idempotent(self, tmp_path):
        cfg = self._bench_config(tmp_path)
        out1 = tmp_path / "b1"
        out2 = tmp_path / "b2"
        run_cli("benchmark", "--config", cfg, "--out", str(out1))
        run_cli("benchmark", "--config", cfg, "--out", str(out2))
        assert (out1 / "report.json").read_bytes() == (out2 / "report.json").read_bytes()
        assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        assert (out1 / "report_metrics.png").read_bytes() == (out2 / "report_metrics.png").read_bytes()

    def test_failed_cell_recorded_not_fatal(self, tmp_path):
        # d too large for the smaller grid point: that cell errors, sweep continues
        cfg = self._bench_config(
            tmp_path,
            grid={"m": [2, 30], "T": [60], "d": [25.0], "r": [0.0],
                  "noise_family": ["gmm"]},
        )
        out = tmp_path / "bench_out"
        code, _ = run_cli("benchmark", "--config", cfg, "--out", str(out))
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        statuses = {c["grid_point"]["m"]: c["status"] for c in report["cells"]}
        assert statuses[2] == "error"
        assert statuses[30] == "ok"


class TestSubprocessEntry:
    def test_module_invocation(self, tmp_path):
        cfg = tmp_path / "gen.json"
        cfg.write_text(json.dumps({
            "dims": {"m": 2, "T": 40}, "avg_in_degree": 1.0, "seed": 1, "burn_in": 5,
        }))
        proc = subprocess.run(
            [sys.executable, "-m", "latvar.cli", "generate",
             "--config", str(cfg), "--out", str(tmp_path / "out")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "dataset_seed1.csv").exists()

    def test_usage_error_exit_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "latvar.cli", "fit"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2
