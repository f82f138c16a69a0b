"""Command-line interface: synth, fit, predict, evaluate, compare."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np
import yaml

from commotions import baselines as B
from commotions.datasets import Dataset, SplitPlan, SynthConfig, load_dataset, make_splits, save_dataset, synth_generate
from commotions.fitting import ClipMode, FitResult, FitSchedule, LossCache, LossKind, fit
from commotions.metrics import BinaryEval, SingleClassError, TimePoint, TrajEval, ade, auc, paired_t_test, roc_points, tnr_pr
from commotions.model.core import ControlScheme, InteractionMode, ModelParams, SimConfig
from commotions.model.simulate import TRAJ_FIELDS, make_job, simulate_jobs
from commotions.prediction import aggregate
from commotions.scenario import Sample, decode_to_2d

log = logging.getLogger("commotions")

OUTPUT_ENV = "COMMOTIONS_OUTPUT_DIR"
METRICS = ("auc_gap_opening", "auc_characteristic_gap", "ade_characteristic_gap", "tnr_pr_critical_decision")
HIGHER_IS_BETTER = {"auc_gap_opening": True, "auc_characteristic_gap": True,
                    "ade_characteristic_gap": False, "tnr_pr_critical_decision": True}
REPORT_COLUMNS = ("dataset", "model", "split", "kind", "metric", "value", "n", "status", "reason")


class UsageError(Exception):
    pass


# ------------------------------------------------------------ model ids


@dataclass(frozen=True)
class CMConfig:
    """Four binary choices: interaction mode, control scheme, optimisation rounds, loss."""

    mode: InteractionMode
    scheme: ControlScheme
    two_stage: bool
    loss: LossKind

    @property
    def code(self) -> str:
        return ("I" if self.mode is InteractionMode.INTERACTIVE else "N") + \
               ("A" if self.scheme is ControlScheme.ACCELERATION else "J") + \
               ("2" if self.two_stage else "1") + self.loss.value[1]


AXES_HELP = ("a CM configuration is four characters: interaction N (non-interactive) or I (interactive); "
             "control A (acceleration) or J (jerk); optimisation rounds 1 or 2; loss 1 (L1) or 2 (L2), e.g. NA12")


def parse_cm_config(code: str) -> CMConfig:
    code = code.strip().upper()
    if len(code) != 4 or code[0] not in "NI" or code[1] not in "AJ" or code[2] not in "12" or code[3] not in "12":
        raise UsageError(f"invalid CM configuration {code!r}: {AXES_HELP}")
    return CMConfig(InteractionMode.INTERACTIVE if code[0] == "I" else InteractionMode.NON_INTERACTIVE,
                    ControlScheme.ACCELERATION if code[1] == "A" else ControlScheme.JERK,
                    code[2] == "2", LossKind.L1 if code[3] == "1" else LossKind.L2)


def parse_model(model: str) -> tuple[str, CMConfig | None]:
    """``CM_<cfg>``, ``LR1D``, ``LR2D`` or ``CV``."""
    m = model.strip()
    if m.upper() in ("LR1D", "LR2D", "CV"):
        return m.upper(), None
    if m.upper().startswith("CM"):
        rest = m[2:].lstrip("_")
        if not rest:
            raise UsageError(f"model {model!r} needs a configuration: {AXES_HELP}")
        return "CM", parse_cm_config(rest)
    raise UsageError(f"unknown model {model!r}; choose CM_<cfg>, LR1D, LR2D or CV")


def model_label(model: str, untuned: bool) -> str:
    kind, cfg = parse_model(model)
    if kind != "CM":
        return kind
    return f"CM_{cfg.code}" + ("-untuned" if untuned else "")


# ---------------------------------------------------------------- helpers


def _sim_config(args, cfg: CMConfig) -> SimConfig:
    kw = {"mode": cfg.mode, "scheme": cfg.scheme, "dt": args.dt, "horizon": args.horizon}
    if args.actions:
        kw["actions"] = tuple(float(x) for x in str(args.actions).split(","))
    return SimConfig(**kw)


def _out_dir(args) -> FsPath:
    out = args.out or os.environ.get(OUTPUT_ENV)
    if not out:
        raise UsageError(f"no output directory: pass --out or set {OUTPUT_ENV}")
    path = FsPath(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: FsPath, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _splits(args, dataset: Dataset) -> SplitPlan:
    return make_splits(dataset, n_random=args.n_random, test_fraction=args.test_fraction, seed=args.split_seed)


def _select_splits(plan: SplitPlan, names: str | None):
    if not names or names == "all":
        return list(plan.splits)
    wanted = [n.strip() for n in names.split(",")]
    chosen = [s for s in plan.splits if s.name in wanted]
    if len(chosen) != len(wanted):
        raise UsageError(f"unknown split in {names!r}; valid: {', '.join(s.name for s in plan.splits)}")
    return chosen


def time_of(sample: Sample, tp: TimePoint) -> float:
    if tp is TimePoint.GAP_OPENING:
        return sample.gap_opening_time
    if tp is TimePoint.CHARACTERISTIC_GAP:
        return sample.t_char
    return sample.t_crit


def evaluable(samples: Sequence[Sample], tp: TimePoint) -> list[Sample]:
    """Samples with a prediction time at ``tp`` at which the outcome is still open."""
    return [s for s in samples if np.isfinite(time_of(s, tp)) and s.is_undecided_at(time_of(s, tp))]


def _provenance(args, extra: dict | None = None) -> dict:
    skip = {"func", "out", "fits", "workers", "config", "verbose", "command"}
    prov = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    if extra:
        prov.update(extra)
    return prov


# ------------------------------------------------------------------ synth


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    out = _out_dir(args)
    cfg = SynthConfig(n=args.n, seed=args.seed)
    ds = synth_generate(cfg, name=args.name)
    save_dataset(ds, out)
    log.info("wrote %d samples to %s", len(ds), out)
    return 0


# -------------------------------------------------------------------- fit


def _fit_lr(train: list[Sample], schema: B.FeatureSchema, lam: float) -> dict:
    models = {}
    for tp in TimePoint:
        ss = evaluable(train, tp)
        labels = np.array([s.a for s in ss])
        if len(ss) < 2 or labels.min() == labels.max():
            models[tp.value] = {"status": "skipped", "reason": "training set lacks one of the classes at this time"}
            continue
        X = B.feature_matrix(ss, schema, [time_of(s, tp) for s in ss])
        models[tp.value] = {"status": "ok", "model": B.lr_fit(X, labels, lam, schema).to_dict()}
    return models


def cmd_fit(args) -> int:
    kind, cm = parse_model(args.model)
    dataset = load_dataset(args.data)
    plan = _splits(args, dataset)
    out = _out_dir(args)
    label = model_label(args.model, False)
    _write_json(out / "splits.json", plan.to_dict())
    cache = LossCache()
    for split in _select_splits(plan, args.splits):
        train = dataset.subset(split.train)
        target = out / "fits" / label / f"{split.name}.json"
        if kind == "CM":
            sim = _sim_config(args, cm)
            schedule = FitSchedule(cm.two_stage, args.n_init, args.n_iter, args.shrink)
            log.info("fitting %s on %s (%d samples)", label, split.name, len(train))
            res = fit(train, sim, cm.loss, schedule, seed=args.seed, n_p=args.n_p,
                      clip=ClipMode(args.clip), workers=args.workers, cache=cache)
            payload = {"model": label, "split": split.name, "dataset": dataset.name,
                       "params": res.params().to_dict(), "fit": res.to_dict(),
                       "provenance": _provenance(args)}
        elif kind in ("LR1D", "LR2D"):
            schema = B.FeatureSchema.ONE_D if kind == "LR1D" else B.FeatureSchema.TWO_D
            payload = {"model": label, "split": split.name, "dataset": dataset.name,
                       "lr": _fit_lr(train, schema, args.lr_lambda), "provenance": _provenance(args)}
        else:
            payload = {"model": label, "split": split.name, "dataset": dataset.name,
                       "provenance": _provenance(args)}
        _write_json(target, payload)
    log.info("fits written under %s (cache hits %d, misses %d)", out / "fits" / label, cache.hits, cache.misses)
    return 0


# -------------------------------------------------------- prediction core


def _truth_window(sample: Sample, t0: float, horizon: float) -> tuple[np.ndarray, np.ndarray]:
    tr = sample.target
    mask = (tr.t > t0 + 1e-9) & (tr.t <= t0 + horizon + 1e-9)
    return tr.t[mask], tr.xy[mask]


def _cm_predict(samples, tp, params, sim, n_p, seed, workers, record):
    jobs = [make_job(s, time_of(s, tp)) for s in samples]
    return simulate_jobs(jobs, params, sim, n_p, seed, record=record, workers=workers)


def _decode_at(rs, sample: Sample, times: np.ndarray) -> np.ndarray:
    col = TRAJ_FIELDS.index("d_target")
    grid = rs.time_grid
    return np.stack([decode_to_2d(times, np.interp(times, grid, rs.traj[p, :, col]), sample.target_path,
                                  sample.contested).xy for p in range(rs.n_p)])


@dataclass
class Scored:
    labels: np.ndarray
    scores: np.ndarray
    ids: list[str]


def _metric_row(dataset, model, split, metric, value=None, n=0, reason=""):
    status = "ok" if reason == "" else "skipped"
    return {"dataset": dataset, "model": model, "split": split.name, "kind": split.kind, "metric": metric,
            "value": value, "n": n, "status": status, "reason": reason}


def _evaluate_split(args, dataset: Dataset, split, kind, cm, label, fit_payload, roc_rows):
    test = dataset.subset(split.test)
    rows = []
    scores: dict[TimePoint, Scored] = {}
    ade_value, ade_n, ade_reason = None, 0, ""

    if kind == "CM":
        sim = _sim_config(args, cm)
        params = ModelParams().as_array() if args.untuned else ModelParams.from_dict(fit_payload["params"]).as_array()
        for tp in TimePoint:
            ss = evaluable(test, tp)
            if not ss:
                continue
            record = tp is TimePoint.CHARACTERISTIC_GAP
            sets = _cm_predict(ss, tp, params, sim, args.n_p, args.seed, args.workers, record)
            scores[tp] = Scored(np.array([s.a for s in ss]), np.array([aggregate(r).a_pred for r in sets]),
                                [s.id for s in ss])
            if record:
                preds, truths = [], []
                for s, r in zip(ss, sets):
                    t_true, xy_true = _truth_window(s, r.t0, sim.horizon)
                    if len(t_true) == 0:
                        continue
                    preds.append(_decode_at(r, s, t_true))
                    truths.append(xy_true)
                if truths:
                    ade_value, ade_n = ade(TrajEval(preds, truths)), len(truths)
    else:
        lr_models = (fit_payload or {}).get("lr", {})
        for tp in TimePoint:
            ss = evaluable(test, tp)
            if not ss:
                continue
            t_preds = [time_of(s, tp) for s in ss]
            if kind == "CV":
                sc = np.array([B.cv_score(s, t) for s, t in zip(ss, t_preds)])
            else:
                entry = lr_models.get(tp.value, {})
                if entry.get("status") != "ok":
                    continue
                model = B.LRModel.from_dict(entry["model"])
                sc = B.lr_predict(model, B.feature_matrix(ss, model.schema, t_preds))
            scores[tp] = Scored(np.array([s.a for s in ss]), sc, [s.id for s in ss])
            if tp is TimePoint.CHARACTERISTIC_GAP:
                preds, truths, weights = [], [], []
                for s, t, p in zip(ss, t_preds, sc):
                    t_obs, _ = s.observations("target", t)
                    t_true, xy_true = _truth_window(s, t_obs[-1], args.horizon)
                    if len(t_true) == 0:
                        continue
                    if kind == "CV":
                        preds.append(B.cv_trajectory(s, t_true, t)[None])
                        weights.append(np.ones(1))
                    else:
                        go, stay = B.template_trajectories(s, t_true, t)
                        preds.append(np.stack([go, stay]))
                        weights.append(np.array([p, 1.0 - p]))
                    truths.append(xy_true)
                if truths:
                    ade_value, ade_n = ade(TrajEval(preds, truths, weights=weights)), len(truths)

    def binary(metric, tp, fn, reason_missing):
        sc = scores.get(tp)
        if sc is None:
            return _metric_row(dataset.name, label, split, metric, reason=reason_missing)
        try:
            ev = BinaryEval(sc.labels, sc.scores, tp)
            val = fn(ev)
        except SingleClassError:
            return _metric_row(dataset.name, label, split, metric, n=len(sc.labels),
                               reason="test samples at this time cover only one outcome")
        if fn is auc:
            for fpr, tpr in roc_points(ev):
                roc_rows.append({"dataset": dataset.name, "model": label, "split": split.name,
                                 "metric": metric, "fpr": fpr, "tpr": tpr})
        return _metric_row(dataset.name, label, split, metric, float(val), len(sc.labels))

    no_model = "no fitted model for this time point" if kind in ("LR1D", "LR2D") else "no test sample is undecided at this time"
    rows.append(binary("auc_gap_opening", TimePoint.GAP_OPENING, auc, no_model))
    rows.append(binary("auc_characteristic_gap", TimePoint.CHARACTERISTIC_GAP, auc, no_model))
    if ade_value is None:
        ade_reason = "no test sample with a ground-truth track after the characteristic-gap time"
    rows.append(_metric_row(dataset.name, label, split, "ade_characteristic_gap", ade_value, ade_n, ade_reason))
    crit = scores.get(TimePoint.CRITICAL_DECISION)
    if crit is not None and not np.any(crit.labels == 1):
        rows.append(_metric_row(dataset.name, label, split, "tnr_pr_critical_decision", n=len(crit.labels),
                                reason="no accepted gap is still undecided at the critical-decision time"))
    else:
        rows.append(binary("tnr_pr_critical_decision", TimePoint.CRITICAL_DECISION, tnr_pr,
                           "no test sample is undecided at the critical-decision time"))
    return rows


def cmd_evaluate(args) -> int:
    kind, cm = parse_model(args.model)
    if args.untuned and kind != "CM":
        raise UsageError("--untuned applies to CM models only")
    dataset = load_dataset(args.data)
    plan = _splits(args, dataset)
    out = _out_dir(args)
    label = model_label(args.model, args.untuned)
    fit_label = model_label(args.model, False)
    fits_dir = FsPath(args.fits) if args.fits else out
    rows, roc_rows = [], []
    for split in plan.splits:
        payload = None
        if kind != "CV" and not args.untuned:
            path = fits_dir / "fits" / fit_label / f"{split.name}.json"
            if not path.exists():
                raise FileNotFoundError(f"missing fit file {path}; run `commotions fit` first")
            with open(path) as fh:
                payload = json.load(fh)
        log.info("evaluating %s on %s", label, split.name)
        rows.extend(_evaluate_split(args, dataset, split, kind, cm, label, payload, roc_rows))
    rows.extend(_random_means(rows, plan))
    stem = out / "reports" / f"{dataset.name}__{label}"
    _write_report(stem, rows, roc_rows, _provenance(args, {"dataset_name": dataset.name, "model_label": label}))
    log.info("report written to %s.csv", stem)
    return 0


def _random_means(rows, plan: SplitPlan) -> list[dict]:
    out = []
    n_random = len(plan.random)
    by = {}
    for r in rows:
        if r["kind"] == "random":
            by.setdefault((r["dataset"], r["model"], r["metric"]), []).append(r)
    for (ds, model, metric), group in by.items():
        vals = [r["value"] for r in group if r["status"] == "ok"]
        row = {"dataset": ds, "model": model, "split": "random_mean", "kind": "mean", "metric": metric,
               "value": float(np.mean(vals)) if vals else None, "n": len(vals),
               "status": "ok" if vals else "skipped",
               "reason": "" if len(vals) == n_random else f"{n_random - len(vals)} random split(s) skipped"}
        out.append(row)
    return out


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_report(stem: FsPath, rows, roc_rows, provenance) -> None:
    stem.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{stem}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
    with open(f"{stem}.roc.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ("dataset", "model", "split", "metric", "fpr", "tpr")
        w.writerow(cols)
        for r in roc_rows:
            w.writerow([_fmt(r[c]) for c in cols])
    _write_json(FsPath(f"{stem}.json"), {"provenance": provenance, "rows": rows})


def read_report(path: str | FsPath) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            r["value"] = float(r["value"]) if r["value"] else None
            r["n"] = int(r["n"]) if r["n"] else 0
            rows.append(r)
    return rows


# ---------------------------------------------------------------- compare


def compare_reports(rows_a: list[dict], rows_b: list[dict], alpha: float = 0.05) -> tuple[list[dict], dict]:
    """Per (dataset, metric): paired t-test over random splits and the critical-split values.

    Returns the per-case table and a summary with the share of cases in
    which each side is significantly better on random splits and strictly
    better on the critical split.
    """
    def index(rows):
        out = {}
        for r in rows:
            if r["kind"] in ("random", "critical"):
                out[(r["dataset"], r["metric"], r["split"])] = r
        return out

    ia, ib = index(rows_a), index(rows_b)
    if set(ia) != set(ib):
        raise ValueError("reports do not share the same datasets, splits and metrics")
    cases = sorted({(d, m) for d, m, _ in ia})
    table = []
    counts = {"a_random": 0, "b_random": 0, "a_critical": 0, "b_critical": 0, "random_cases": 0, "critical_cases": 0}
    for ds, metric in cases:
        higher = HIGHER_IS_BETTER.get(metric, True)
        splits = sorted(s for d, m, s in ia if d == ds and m == metric and s != "critical")
        pairs = [(ia[(ds, metric, s)]["value"], ib[(ds, metric, s)]["value"]) for s in splits]
        pairs = [(a, b) for a, b in pairs if a is not None and b is not None]
        row = {"dataset": ds, "metric": metric, "n_pairs": len(pairs)}
        if len(pairs) >= 2:
            a = np.array([p[0] for p in pairs])
            b = np.array([p[1] for p in pairs])
            res = paired_t_test(a, b, alpha)
            sign = 1.0 if higher else -1.0
            a_better = bool(res.significant and sign * (a.mean() - b.mean()) > 0)
            b_better = bool(res.significant and sign * (a.mean() - b.mean()) < 0)
            row.update(mean_a=float(a.mean()), mean_b=float(b.mean()), t=float(res.t), p=float(res.p),
                       a_better=a_better, b_better=b_better)
            counts["random_cases"] += 1
            counts["a_random"] += int(a_better)
            counts["b_random"] += int(b_better)
        else:
            row.update(mean_a=None, mean_b=None, t=None, p=None, a_better=None, b_better=None)
        ca = ia.get((ds, metric, "critical"), {}).get("value")
        cb = ib.get((ds, metric, "critical"), {}).get("value")
        row.update(critical_a=ca, critical_b=cb)
        if ca is not None and cb is not None:
            counts["critical_cases"] += 1
            diff = (ca - cb) if higher else (cb - ca)
            row.update(a_better_critical=bool(diff > 0), b_better_critical=bool(diff < 0))
            counts["a_critical"] += int(diff > 0)
            counts["b_critical"] += int(diff < 0)
        else:
            row.update(a_better_critical=None, b_better_critical=None)
        table.append(row)

    def pct(k, n):
        return 100.0 * counts[k] / counts[n] if counts[n] else 0.0

    summary = dict(counts)
    summary["a_better_cell"] = f"{pct('a_random', 'random_cases'):.0f}% ({pct('a_critical', 'critical_cases'):.0f}%)"
    summary["b_better_cell"] = f"{pct('b_random', 'random_cases'):.0f}% ({pct('b_critical', 'critical_cases'):.0f}%)"
    return table, summary


def cmd_compare(args) -> int:
    rows_a = [r for p in args.a for r in read_report(p)]
    rows_b = [r for p in args.b for r in read_report(p)]
    table, summary = compare_reports(rows_a, rows_b, args.alpha)
    out = _out_dir(args)
    cols = ("dataset", "metric", "n_pairs", "mean_a", "mean_b", "t", "p", "a_better", "b_better",
            "critical_a", "critical_b", "a_better_critical", "b_better_critical")
    with open(out / f"{args.name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in table:
            w.writerow([_fmt(r[c]) for c in cols])
        w.writerow(["summary", "a_better", "", "", "", "", "", summary["a_better_cell"], "", "", "", "", ""])
        w.writerow(["summary", "b_better", "", "", "", "", "", "", summary["b_better_cell"], "", "", "", ""])
    _write_json(out / f"{args.name}.json", {"cases": table, "summary": summary,
                                           "a": list(args.a), "b": list(args.b), "alpha": args.alpha})
    log.info("A better: %s, B better: %s", summary["a_better_cell"], summary["b_better_cell"])
    return 0


# ---------------------------------------------------------------- predict


def cmd_predict(args) -> int:
    kind, cm = parse_model(args.model)
    if kind != "CM":
        raise UsageError("predict supports CM models")
    dataset = load_dataset(args.data)
    out = _out_dir(args)
    if args.fit:
        with open(args.fit) as fh:
            params = ModelParams.from_dict(json.load(fh)["params"])
    else:
        params = ModelParams()
    tp = TimePoint(args.time_point)
    samples = dataset.samples if not args.ids else dataset.subset(args.ids.split(","))
    samples = evaluable(samples, tp)
    sim = _sim_config(args, cm)
    sets = _cm_predict(samples, tp, params.as_array(), sim, args.n_p, args.seed, args.workers, record=True)
    records = []
    with open(out / "trajectories.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sample_id", "rollout", "t", "x", "y", "clamped"))
        for s, r in zip(samples, sets):
            rec = aggregate(r, s, decode=True)
            records.append(rec.to_dict() | {"t0": r.t0})
            for p, tr in enumerate(rec.trajectories):
                for t, (x, y), c in zip(tr.t, tr.xy, tr.clamped):
                    w.writerow([s.id, p, repr(float(t)), repr(float(x)), repr(float(y)), int(c)])
    _write_json(out / "predictions.json", {"provenance": _provenance(args), "predictions": records})
    return 0


# ----------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV})")
    p.add_argument("--config", help="flat YAML file of option defaults")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default: $COMMOTIONS_WORKERS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def _model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", default="CM_NA12", help="CM_<cfg>, LR1D, LR2D or CV")
    p.add_argument("--seed", type=int, default=0, help="simulation and optimiser seed")
    p.add_argument("--n-p", dest="n_p", type=int, default=100, help="rollouts per sample")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--horizon", type=float, default=15.0)
    p.add_argument("--actions", default=None, help="comma-separated action set")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=0)
    p.add_argument("--n-random", dest="n_random", type=int, default=10)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="commotions", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--name", default="synthetic")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model on every training split")
    _common(p)
    _model_opts(p)
    p.add_argument("--n-init", dest="n_init", type=int, default=40)
    p.add_argument("--n-iter", dest="n_iter", type=int, default=60)
    p.add_argument("--shrink", type=float, default=0.25)
    p.add_argument("--clip", choices=[c.value for c in ClipMode], default=ClipMode.REFERENCE.value)
    p.add_argument("--lr-lambda", dest="lr_lambda", type=float, default=1.0)
    p.add_argument("--splits", default="all", help="comma-separated split names or 'all'")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict outcomes and trajectories for samples")
    _common(p)
    _model_opts(p)
    p.add_argument("--fit", help="fit file with parameters (default: untuned parameters)")
    p.add_argument("--time-point", dest="time_point", default=TimePoint.GAP_OPENING.value,
                   choices=[t.value for t in TimePoint])
    p.add_argument("--ids", help="comma-separated sample ids (default: all)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score fitted models on every test split")
    _common(p)
    _model_opts(p)
    p.add_argument("--fits", help="directory holding fits/ (default: --out)")
    p.add_argument("--untuned", action="store_true", help="evaluate CM with default parameters")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="paired comparison of two sets of reports")
    _common(p)
    p.add_argument("--a", nargs="+", required=True, help="report CSV(s) of model A")
    p.add_argument("--b", nargs="+", required=True, help="report CSV(s) of model B")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--name", default="comparison")
    p.set_defaults(func=cmd_compare)
    return parser


def _config_path(argv: Sequence[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv`` with defaults taken from a flat YAML ``--config`` file; flags still win."""
    path = _config_path(argv)
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if path is None or command not in subparsers:
        return parser.parse_args(argv)
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise UsageError(f"{path}: expected a flat mapping of option names to values")
    sub = subparsers[command]
    data = {str(k).replace("-", "_"): v for k, v in data.items()}
    known = {a.dest for a in sub._actions}
    unknown = sorted(k for k in data if k not in known)
    if unknown:
        raise UsageError(f"{path}: unknown option(s) {', '.join(unknown)}")
    sub.set_defaults(**data)
    for action in sub._actions:  # a config file may satisfy required options
        if action.dest in data:
            action.required = False
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config_file(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        if getattr(args, "n_p", 1) < 1:
            raise UsageError("--n-p must be at least 1")
        return int(args.func(args) or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"commotions: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"commotions: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
