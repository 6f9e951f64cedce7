"""Prediction-quality metrics, multi-seed aggregation, and report emission.

The headline metric is the normalized mean square error: the per-sample
2-norm of the prediction error divided by the 2-norm of the truth,
averaged over samples.  State dimensions whose ground truth decays
monotonically to (numerically) zero are dropped from the norm when
exclusion is on, since they would otherwise divide by a vanishing scale.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractError

HISTORY_FIELDS = ("epoch", "lr", "loss_total", "loss_o", "loss_f", "loss_b",
                  "loss_p", "test_nmse")

ZERO_STATE_ATOL = 1e-6


class MetricUndefinedError(ValueError):
    """Every dimension was excluded; the metric has no value."""


def zero_state_dimensions(truth: np.ndarray) -> np.ndarray:
    """Boolean mask of dimensions that end within 1e-6 of zero and decay
    monotonically (in magnitude) over the final 10% of samples."""
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    n = truth.shape[0]
    tail = truth[-max(2, math.ceil(n / 10)):]
    ends_at_zero = np.abs(truth[-1]) <= ZERO_STATE_ATOL
    decaying = np.all(np.diff(np.abs(tail), axis=0) <= 0.0, axis=0)
    return ends_at_zero & decaying


def nmse(pred: np.ndarray, truth: np.ndarray, exclusion: bool = False) -> float:
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape != truth.shape:
        raise ContractError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    if exclusion:
        keep = ~zero_state_dimensions(truth)
        if not np.any(keep):
            raise MetricUndefinedError("all state dimensions were excluded")
        pred, truth = pred[:, keep], truth[:, keep]
    err = np.linalg.norm(pred - truth, axis=1)
    ref = np.linalg.norm(truth, axis=1)
    return float(np.mean(err / ref))


@dataclass
class EvalReport:
    model: str
    method: str
    seeds: list[int]
    per_seed: list[float]
    mean: float
    std: float | None
    epochs: int = 0
    history_ref: str = ""


def final_nmse(nmse_series) -> float:
    """'Final' accuracy of one run: mean over the last 10% of logged values."""
    series = np.asarray(nmse_series, dtype=np.float64)
    if series.size == 0:
        raise ContractError("empty accuracy series")
    return float(series[-max(1, math.ceil(series.size / 10)):].mean())


def aggregate_seeds(nmse_histories, *, model: str = "", method: str = "",
                    seeds=None, epochs: int = 0) -> EvalReport:
    """Mean and sample standard deviation over >= 2 runs of the final N-MSE."""
    if len(nmse_histories) < 2:
        raise ContractError("aggregation needs at least 2 runs")
    finals = [final_nmse(series) for series in nmse_histories]
    mean = float(np.mean(finals))
    std = float(np.std(finals, ddof=1))
    seeds = list(seeds) if seeds is not None else list(range(len(finals)))
    return EvalReport(model=model, method=method, seeds=seeds, per_seed=finals,
                      mean=mean, std=std, epochs=epochs)


def rank_score(results: dict) -> dict:
    """Per-model rank scores: with k methods, the lowest N-MSE earns k points,
    the highest 1; ties share the average of their positions' points.

    `results` maps method -> {model -> nmse}.  Returns
    {"per_model": {model: {method: score}}, "mean": {method: score}}.
    """
    methods = list(results)
    if not methods:
        return {"per_model": {}, "mean": {}}
    models = list(results[methods[0]])
    for m in methods:
        if set(results[m]) != set(models):
            raise ContractError(f"method {m!r} is missing models")
    k = len(methods)
    per_model: dict = {}
    totals = {m: 0.0 for m in methods}
    for model in models:
        order = sorted(methods, key=lambda m: results[m][model])
        scores: dict = {}
        i = 0
        while i < k:
            j = i
            while j + 1 < k and results[order[j + 1]][model] == results[order[i]][model]:
                j += 1
            # positions i..j (0-based from best) tie; position p scores k - p
            shared = np.mean([k - p for p in range(i, j + 1)])
            for m in order[i:j + 1]:
                scores[m] = float(shared)
            i = j + 1
        per_model[model] = scores
        for m in methods:
            totals[m] += scores[m]
    mean = {m: totals[m] / len(models) for m in methods}
    return {"per_model": per_model, "mean": mean}


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    """Everything a report needs from one completed run."""

    model: str
    method: str
    seed: int
    history: list[dict]
    times: np.ndarray | None = None
    truth: np.ndarray | None = None
    pred: np.ndarray | None = None
    epochs: int = 0
    extra: dict = field(default_factory=dict)


def write_history_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in HISTORY_FIELDS})


def read_history_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row = {}
            for key, val in raw.items():
                if key == "epoch":
                    row[key] = int(val)
                else:
                    row[key] = float(val) if val not in ("", None) else math.nan
            rows.append(row)
        return rows


MAX_TRAJECTORY_PANELS = 16


def _plot_backend():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_trajectories(record: RunRecord, out_dir) -> list[str]:
    """One SVG per state dimension (capped for grid models): truth vs prediction."""
    plt = _plot_backend()
    paths = []
    dims = min(record.truth.shape[1], MAX_TRAJECTORY_PANELS)
    for d in range(dims):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(record.times, record.truth[:, d], "k-", label="truth")
        ax.plot(record.times, record.pred[:, d], "r--", label="prediction")
        ax.set_xlabel("t")
        ax.set_ylabel(f"dim_{d}")
        ax.set_title(f"{record.model} / {record.method} (seed {record.seed})")
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"trajectory_dim{d}.svg")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_loss_band(records: list[RunRecord], out_dir, column: str = "loss_total") -> str:
    """Loss curves across seeds: mean line with a min/max band."""
    plt = _plot_backend()
    epochs = [row["epoch"] for row in records[0].history]
    series = np.array([[row[column] for row in rec.history] for rec in records])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(epochs, series.mean(axis=0), label=f"mean {column}")
    if len(records) > 1:
        ax.fill_between(epochs, series.min(axis=0), series.max(axis=0), alpha=0.3,
                        label="min/max over seeds")
    ax.set_xlabel("epoch")
    ax.set_ylabel(column)
    ax.set_yscale("log")
    ax.set_title(f"{records[0].model} / {records[0].method}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "loss.svg")
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_method_bars(reports: list[EvalReport], path) -> str:
    plt = _plot_backend()
    labels = [f"{r.method}\n{r.model}" for r in reports]
    means = [r.mean for r in reports]
    errs = [r.std if r.std is not None else 0.0 for r in reports]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(reports), 3.4))
    ax.bar(range(len(reports)), means, yerr=errs, capsize=4)
    ax.set_xticks(range(len(reports)), labels, fontsize=7)
    ax.set_ylabel("N-MSE")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "model": report.model,
        "method": report.method,
        "seeds": report.seeds,
        "nmse": {"mean": report.mean, "std": report.std, "per_seed": report.per_seed},
        "epochs": report.epochs,
    }


def emit_report(records: list[RunRecord], out_dir) -> dict:
    """Write metrics JSON, per-run history CSVs, and SVG plots under out_dir.

    Runs are grouped by (model, method); each group gets its own folder.
    Returns the index document that was written to index.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    groups: dict[tuple[str, str], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.model, rec.method), []).append(rec)

    index = {"groups": []}
    for (model, method), group in sorted(groups.items()):
        gdir = os.path.join(out_dir, f"{model}__{method}".replace("/", "_"))
        os.makedirs(gdir, exist_ok=True)
        per_seed_files = []
        for rec in group:
            hist_path = os.path.join(gdir, f"history_seed{rec.seed}.csv")
            write_history_csv(hist_path, rec.history)
            per_seed_files.append(os.path.basename(hist_path))
        nmse_series = [[row["test_nmse"] for row in rec.history] for rec in group]
        if len(group) >= 2:
            report = aggregate_seeds(nmse_series, model=model, method=method,
                                     seeds=[r.seed for r in group],
                                     epochs=group[0].epochs)
        else:
            only = final_nmse(nmse_series[0])
            report = EvalReport(model=model, method=method, seeds=[group[0].seed],
                                per_seed=[only], mean=only, std=None,
                                epochs=group[0].epochs)
        entry = report_to_dict(report)
        entry["histories"] = per_seed_files
        svgs = []
        lead = group[0]
        if lead.truth is not None and lead.pred is not None:
            svgs.extend(plot_trajectories(lead, gdir))
        if group[0].history:
            svgs.append(plot_loss_band(group, gdir))
        entry["plots"] = [os.path.basename(p) for p in svgs]
        with open(os.path.join(gdir, "metrics.json"), "w") as fh:
            json.dump(entry, fh, indent=2)
        index["groups"].append({"model": model, "method": method,
                                "dir": os.path.basename(gdir)})
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        json.dump(index, fh, indent=2)
    return index
