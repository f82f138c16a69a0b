from __future__ import annotations

import csv
import filecmp
import json
from collections import defaultdict

import numpy as np
import pytest

from commotions.cli import METRICS, compare_reports, main, parse_cm_config, read_report
from commotions.datasets import load_dataset

TINY = ["--n-p", "4", "--n-init", "9", "--n-iter", "1"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run("synth", "--n", 40, "--seed", 7, "--out", data) == 0
    out = root / "run"
    assert run("fit", "--data", data, "--out", out, "--model", "CM_NA12", *TINY) == 0
    assert run("evaluate", "--data", data, "--out", out, "--model", "CM_NA12", "--n-p", 4) == 0
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSynth:
    def test_files(self, workspace):
        files = sorted(p.name for p in (workspace / "data").iterdir())
        assert files == ["dataset.json", "geometry.csv", "outcomes.csv", "trajectories.csv"]
        assert len(load_dataset(workspace / "data")) == 40

    def test_identical_reruns(self, workspace, tmp_path):
        assert run("synth", "--n", 40, "--seed", 7, "--out", tmp_path) == 0
        for name in ("geometry.csv", "trajectories.csv", "outcomes.csv", "dataset.json"):
            assert filecmp.cmp(workspace / "data" / name, tmp_path / name, shallow=False)

    def test_zero_samples_is_a_usage_error(self, tmp_path, capsys):
        assert run("synth", "--n", 0, "--out", tmp_path) == 2
        assert "--n must be at least 1" in capsys.readouterr().err

    def test_output_directory_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COMMOTIONS_OUTPUT_DIR", str(tmp_path / "env"))
        assert run("synth", "--n", 3) == 0
        assert (tmp_path / "env" / "outcomes.csv").exists()

    def test_missing_output_directory(self, monkeypatch, capsys):
        monkeypatch.delenv("COMMOTIONS_OUTPUT_DIR", raising=False)
        assert run("synth", "--n", 3) == 2
        assert "COMMOTIONS_OUTPUT_DIR" in capsys.readouterr().err

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("n: 5\nseed: 3\n")
        assert run("synth", "--config", cfg, "--out", tmp_path / "a") == 0
        assert len(load_dataset(tmp_path / "a")) == 5
        assert run("synth", "--config", cfg, "--n", 6, "--out", tmp_path / "b") == 0
        assert len(load_dataset(tmp_path / "b")) == 6

    def test_config_file_rejects_unknown_keys(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("n: 5\nbogus: 1\n")
        assert run("synth", "--config", cfg, "--out", tmp_path) == 2
        assert "bogus" in capsys.readouterr().err


class TestFit:
    def test_one_file_per_split(self, workspace):
        files = sorted((workspace / "run" / "fits" / "CM_NA12").glob("*.json"))
        assert len(files) == 11
        payload = json.loads(files[0].read_text())
        assert {"params", "fit", "provenance"} <= set(payload)
        assert len(payload["fit"]["trace"]) == 10
        assert payload["provenance"]["seed"] == 0

    def test_rerun_reproduces_files(self, workspace, tmp_path):
        out = tmp_path / "again"
        assert run("fit", "--data", workspace / "data", "--out", out, "--model", "CM_NA12", *TINY,
                   "--splits", "random_0,critical") == 0
        for name in ("random_0.json", "critical.json"):
            first = json.loads((workspace / "run" / "fits" / "CM_NA12" / name).read_text())
            again = json.loads((out / "fits" / "CM_NA12" / name).read_text())
            assert first["fit"] == again["fit"] and first["params"] == again["params"]

    def test_invalid_configuration(self, workspace, tmp_path, capsys):
        assert run("fit", "--data", workspace / "data", "--out", tmp_path, "--model", "CM_XX") == 2
        err = capsys.readouterr().err
        assert "interaction" in err and "control" in err and "loss" in err

    def test_configuration_codes(self):
        for code in ("NA11", "IA12", "NJ21", "IJ22"):
            assert parse_cm_config(code).code == code

    def test_rollout_count_must_be_positive(self, workspace, tmp_path):
        assert run("fit", "--data", workspace / "data", "--out", tmp_path, "--n-p", 0) == 2

    def test_lr_baseline(self, workspace, tmp_path):
        assert run("fit", "--data", workspace / "data", "--out", tmp_path, "--model", "LR1D") == 0
        assert run("evaluate", "--data", workspace / "data", "--out", tmp_path, "--model", "LR1D") == 0
        rows = read_report(tmp_path / "reports" / "synthetic__LR1D.csv")
        assert any(r["status"] == "ok" for r in rows)


@pytest.fixture(scope="module")
def report(workspace):
    return read_report(workspace / "run" / "reports" / "synthetic__CM_NA12.csv")


class TestEvaluate:
    def test_metric_grid(self, report):
        per_split = [r for r in report if r["kind"] in ("random", "critical")]
        assert len(per_split) == 4 * 11
        assert {r["metric"] for r in per_split} == set(METRICS)
        for r in per_split:
            assert (r["status"] == "ok") == (r["reason"] == "")
            if r["status"] == "ok":
                assert r["value"] is not None

    def test_random_mean(self, report):
        for metric in METRICS:
            vals = [r["value"] for r in report if r["metric"] == metric and r["kind"] == "random" and r["status"] == "ok"]
            mean = [r for r in report if r["metric"] == metric and r["split"] == "random_mean"]
            assert len(mean) == 1
            if vals:
                assert abs(mean[0]["value"] - np.mean(vals)) <= 1e-12

    def test_roc_file_reproduces_auc(self, workspace, report):
        curves = defaultdict(list)
        for r in _rows(workspace / "run" / "reports" / "synthetic__CM_NA12.roc.csv"):
            curves[(r["split"], r["metric"])].append((float(r["fpr"]), float(r["tpr"])))
        checked = 0
        for r in report:
            if r["metric"].startswith("auc") and r["kind"] != "mean" and r["status"] == "ok":
                pts = np.array(curves[(r["split"], r["metric"])])
                assert abs(np.trapezoid(pts[:, 1], pts[:, 0]) - r["value"]) <= 1e-9
                checked += 1
        assert checked >= 11

    def test_untuned(self, workspace, tmp_path):
        assert run("evaluate", "--data", workspace / "data", "--out", tmp_path, "--model", "CM_NA12",
                   "--untuned", "--n-p", 4) == 0
        assert (tmp_path / "reports" / "synthetic__CM_NA12-untuned.csv").exists()

    def test_missing_fits(self, workspace, tmp_path, capsys):
        assert run("evaluate", "--data", workspace / "data", "--out", tmp_path, "--model", "CM_IA12") == 1
        assert "commotions fit" in capsys.readouterr().err

    def test_predict(self, workspace, tmp_path):
        fit = workspace / "run" / "fits" / "CM_NA12" / "random_0.json"
        assert run("predict", "--data", workspace / "data", "--out", tmp_path, "--fit", fit,
                   "--ids", "s00,s01", "--n-p", 3) == 0
        preds = json.loads((tmp_path / "predictions.json").read_text())["predictions"]
        assert 1 <= len(preds) <= 2
        rows = _rows(tmp_path / "trajectories.csv")
        assert {int(r["rollout"]) for r in rows} == {0, 1, 2}


def _report(values):
    """Rows for ``{(dataset, metric): (ten random values, critical value)}``."""
    rows = []
    for (ds, metric), (rand, crit) in values.items():
        for k, v in enumerate(rand):
            rows.append({"dataset": ds, "model": "m", "split": f"random_{k}", "kind": "random",
                         "metric": metric, "value": v, "n": 10, "status": "ok", "reason": ""})
        rows.append({"dataset": ds, "model": "m", "split": "critical", "kind": "critical",
                     "metric": metric, "value": crit, "n": 10, "status": "ok", "reason": ""})
    return rows


def _write_report(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


class TestCompare:
    base = np.linspace(0.6, 0.9, 10)

    def test_self_comparison(self):
        rows = _report({("d", "auc_gap_opening"): (self.base, 0.7)})
        _, summary = compare_reports(rows, rows)
        assert summary["a_better_cell"] == "0% (0%)" and summary["b_better_cell"] == "0% (0%)"

    def test_constant_shift_is_always_significant(self):
        a = _report({("d", "auc_gap_opening"): (self.base + 0.1, 0.8)})
        b = _report({("d", "auc_gap_opening"): (self.base, 0.7)})
        table, summary = compare_reports(a, b)
        assert table[0]["a_better"] and summary["a_better_cell"] == "100% (100%)"

    def test_two_dataset_hand_count(self, tmp_path):
        wobble = np.array([0.01, -0.01] * 5)
        noisy = np.array([0.3, 0.5, 0.4, 0.6, 0.35, 0.45, 0.55, 0.5, 0.4, 0.5])
        a = _report({
            ("d1", "auc_gap_opening"): (self.base + 0.1, 0.9),        # A significantly better
            ("d1", "ade_characteristic_gap"): (1.0 + noisy, 1.0),     # A larger error: B better
            ("d2", "auc_gap_opening"): (self.base + wobble, 0.7),     # mean difference 0
            ("d2", "ade_characteristic_gap"): (self.base, 3.0),       # identical
        })
        b = _report({
            ("d1", "auc_gap_opening"): (self.base, 0.8),
            ("d1", "ade_characteristic_gap"): (0.2 + noisy[::-1] * 0.1, 2.0),
            ("d2", "auc_gap_opening"): (self.base, 0.7),
            ("d2", "ade_characteristic_gap"): (self.base, 2.0),
        })
        # random: A better in 1 of 4 cases, B in 1 of 4; critical: A better in 2 of 4, B in 1 of 4
        _write_report(tmp_path / "a.csv", a)
        _write_report(tmp_path / "b.csv", b)
        assert run("compare", "--a", tmp_path / "a.csv", "--b", tmp_path / "b.csv", "--out", tmp_path) == 0
        summary = json.loads((tmp_path / "comparison.json").read_text())["summary"]
        assert summary["a_better_cell"] == "25% (50%)"
        assert summary["b_better_cell"] == "25% (25%)"

    def test_mismatched_splits(self):
        a = _report({("d", "auc_gap_opening"): (self.base, 0.7)})
        with pytest.raises(ValueError):
            compare_reports(a, a[:-2])
