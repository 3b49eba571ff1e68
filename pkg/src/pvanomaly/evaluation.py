"""Point-wise metrics, ROC-AUC, timing and report files."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata
from threadpoolctl import threadpool_limits

from .attacks import AttackKind
from .errors import AllZeroCounts, LengthMismatch, SingleClassLabels

ROW_NAMES = {
    0: "Overall",
    AttackKind.DISCONNECT.code: "Disconnect",
    AttackKind.REVERSE_POWER_FLOW.code: "Reverse Power flow",
    AttackKind.CURTAILMENT.code: "Power Curtailment",
    AttackKind.VOLT_VAR.code: "VAR",
}
REPORT_COLUMNS = ("row", "precision", "recall", "f1", "accuracy", "roc_auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_decisions(cls, decisions: np.ndarray, labels: np.ndarray) -> "ConfusionCounts":
        d = np.asarray(decisions, dtype=bool)
        y = np.asarray(labels, dtype=bool)
        if d.shape != y.shape:
            raise LengthMismatch(f"decisions {d.shape} vs labels {y.shape}")
        return cls(int(np.sum(d & y)), int(np.sum(d & ~y)), int(np.sum(~d & ~y)), int(np.sum(~d & y)))


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float, float]:
    """Precision, recall, F1 and accuracy; empty denominators give 0."""
    if c.total == 0:
        raise AllZeroCounts("confusion matrix is empty")
    pr = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    re = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * pr * re / (pr + re) if pr + re else 0.0
    acc = (c.tp + c.tn) / c.total
    return pr, re, f1, acc


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outscores a random negative (ties count half).

    ``scores`` must be oriented so that higher means more anomalous.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise LengthMismatch(f"scores {s.shape} vs labels {y.shape}")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassLabels("ROC needs both classes; found only "
                                + ("negatives" if n_pos == 0 else "positives"))
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(fpr, tpr) at every distinct threshold, from (0, 0) to (1, 1)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / max(y.sum(), 1)]
    fpr = np.r_[0.0, fps / max((~y).sum(), 1)]
    return fpr, tpr


@dataclass(frozen=True)
class MetricsRow:
    name: str
    precision: float
    recall: float
    f1: float
    accuracy: float
    roc_auc: float | None
    counts: ConfusionCounts

    def as_record(self) -> list[str]:
        auc = "" if self.roc_auc is None else f"{self.roc_auc:.6f}"
        return [self.name, f"{self.precision:.6f}", f"{self.recall:.6f}", f"{self.f1:.6f}",
                f"{self.accuracy:.6f}", auc]


def _row(name: str, decisions, scores, positives, mask) -> MetricsRow:
    counts = ConfusionCounts.from_decisions(decisions[mask], positives[mask])
    pr, re, f1, acc = precision_recall_f1(counts)
    auc = None
    if scores is not None and 0 < counts.tp + counts.fn < counts.total:
        auc = roc_auc(scores[mask], positives[mask])
    return MetricsRow(name, pr, re, f1, acc, auc, counts)


def evaluate_run(
    decisions: np.ndarray,
    kinds: np.ndarray,
    scores: np.ndarray | None = None,
) -> list[MetricsRow]:
    """Overall row plus one row per attack kind.

    ``kinds`` holds 0 for normal timesteps and the attack code otherwise;
    ``scores`` (optional) must be oriented high-is-anomalous. Each per-kind
    row keeps that kind's timesteps as positives and every unattacked
    timestep as negatives.
    """
    d = np.asarray(decisions, dtype=bool).ravel()
    k = np.asarray(kinds).ravel()
    s = None if scores is None else np.asarray(scores, dtype=np.float64).ravel()
    if d.shape != k.shape or (s is not None and s.shape != d.shape):
        raise LengthMismatch("decisions, kinds and scores must be aligned")
    positives = k != 0
    rows = [_row("Overall", d, s, positives, np.ones_like(positives))]
    for code in (AttackKind.DISCONNECT.code, AttackKind.REVERSE_POWER_FLOW.code,
                 AttackKind.CURTAILMENT.code, AttackKind.VOLT_VAR.code):
        rows.append(_row(ROW_NAMES[code], d, s, positives, (k == 0) | (k == code)))
    return rows


def write_report(rows: Sequence[MetricsRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow(r.as_record())


def read_report(path: str | Path) -> dict[str, dict[str, float | None]]:
    with open(path, newline="") as fh:
        out = {}
        for rec in csv.DictReader(fh):
            out[rec["row"]] = {c: (float(rec[c]) if rec[c] else None) for c in REPORT_COLUMNS[1:]}
        return out


def write_roc(scores: np.ndarray, labels: np.ndarray, path: str | Path) -> None:
    fpr, tpr = roc_curve(scores, labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for a, b in zip(fpr, tpr):
            w.writerow([f"{a:.6f}", f"{b:.6f}"])


# -- timing -------------------------------------------------------------------

@dataclass(frozen=True)
class TimingRow:
    detector: str
    train_time_per_sample: float  # microseconds
    test_time_per_sample: float  # microseconds


def time_detector(
    kind: str,
    fit: Callable[[], object],
    score: Callable[[object], object],
    n_train: int,
    n_test: int,
    repeats: int = 3,
) -> TimingRow:
    """Median wall-clock per-sample fit and score times over ``repeats`` runs.

    BLAS/OpenMP pools are held to one thread so detectors compare fairly.
    """
    repeats = max(3, repeats)
    fit_t, score_t = [], []
    with threadpool_limits(limits=1):
        for _ in range(repeats):
            t0 = time.perf_counter()
            model = fit()
            t1 = time.perf_counter()
            score(model)
            t2 = time.perf_counter()
            fit_t.append((t1 - t0) * 1e6 / max(n_train, 1))
            score_t.append((t2 - t1) * 1e6 / max(n_test, 1))
    return TimingRow(kind, statistics.median(fit_t), statistics.median(score_t))


def write_timing(rows: Sequence[TimingRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["detector", "train_us_per_sample", "test_us_per_sample"])
        for r in rows:
            w.writerow([r.detector, f"{r.train_time_per_sample:.3f}", f"{r.test_time_per_sample:.3f}"])


# -- plots --------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "pvanomaly"
    import matplotlib.pyplot as plt

    return plt


def plot_roc(fpr: np.ndarray, tpr: np.ndarray, label: str, path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr, label=label)
    ax.plot([0, 1], [0, 1], ls="--", color="grey", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_timing(rows: Sequence[TimingRow], path: str | Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r.train_time_per_sample for r in rows], 0.4, label="train")
    ax.bar(x + 0.2, [r.test_time_per_sample for r in rows], 0.4, label="test")
    ax.set_xticks(x, [r.detector for r in rows])
    ax.set_yscale("log")
    ax.set_ylabel("microseconds per sample")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
