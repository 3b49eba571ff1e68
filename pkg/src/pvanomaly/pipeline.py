"""Run directories and the train / detect / evaluate stages.

A run directory holds one ``manifest.json`` that records what produced it,
the SHA-256 of every file it wrote and the directory of its parent stage.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .attacks import AttackLabels
from .detectors import Detector, DetectorOptions, fit_detector, load_detector
from .detectors.base import Orientation
from .errors import LengthMismatch, SchemaMismatch, SingleClassLabels
from .evaluation import MetricsRow, evaluate_run
from .feeder import Scenario, house_params
from .fusion import RuleKind, ScoreSeries, ThresholdRule, fit_rule, fuse, training_max
from .timeseries import (
    HOUSE_SCHEMA,
    MODEL_GROUPS,
    NODE_SCHEMA,
    Standardizer,
    TimeSeriesFrame,
    emit_csv,
    fit_standardizer,
    ingest_csv,
)

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class ManifestMismatch(SchemaMismatch):
    """A file no longer matches the hash recorded in its manifest."""


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(out: Path, stage: str, parents: dict[str, Path] | None = None, **info: Any) -> dict:
    outputs = {
        p.relative_to(out).as_posix(): sha256_file(p)
        for p in sorted(out.rglob("*")) if p.is_file() and p.name != MANIFEST
    }
    doc = {
        "tool": "pvanomaly",
        "tool_version": __version__,
        "stage": stage,
        "parents": {k: str(Path(v).resolve()) for k, v in (parents or {}).items()},
        "outputs": outputs,
        **info,
    }
    (out / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def read_manifest(run_dir: str | Path, stage: str | Sequence[str] | None = None) -> dict:
    """Load and verify a manifest: every listed output must hash to its record."""
    run_dir = Path(run_dir)
    path = run_dir / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"{run_dir} has no {MANIFEST}")
    doc = json.loads(path.read_text())
    stages = (stage,) if isinstance(stage, str) else stage
    if stages and doc.get("stage") not in stages:
        raise SchemaMismatch(f"{run_dir} is a {doc.get('stage')!r} run, expected {stages}")
    for name, digest in doc.get("outputs", {}).items():
        f = run_dir / name
        if not f.is_file() or sha256_file(f) != digest:
            raise ManifestMismatch(f"{f} does not match its manifest hash")
    return doc


# -- measurement runs -------------------------------------------------------------

@dataclass
class RunData:
    scenario: Scenario
    houses: list[TimeSeriesFrame]
    node: TimeSeriesFrame
    labels: AttackLabels

    @property
    def pv_houses(self) -> list[int]:
        return [h for h, hp in enumerate(house_params(self.scenario)) if hp.has_pv]


def save_run(out: Path, run: RunData) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.json").write_text(run.scenario.to_json() + "\n")
    for k, f in enumerate(run.houses):
        emit_csv(f, out / f"house_{k}.csv")
    emit_csv(run.node, out / "node.csv")
    run.labels.to_csv(out / "labels.csv")


def load_run(run_dir: str | Path) -> RunData:
    run_dir = Path(run_dir)
    scenario = Scenario.load(run_dir / "scenario.json")
    houses = [ingest_csv(run_dir / f"house_{k}.csv", HOUSE_SCHEMA) for k in range(scenario.n_houses)]
    node = ingest_csv(run_dir / "node.csv", NODE_SCHEMA)
    labels = AttackLabels.from_csv(run_dir / "labels.csv")
    if labels.kind.shape != (len(houses), node.length) or any(f.length != node.length for f in houses):
        raise LengthMismatch(f"labels {labels.kind.shape} do not align with the frames in {run_dir}")
    return RunData(scenario, houses, node, labels)


# -- training -----------------------------------------------------------------------

def _group_matrix(frame: TimeSeriesFrame, group: str) -> TimeSeriesFrame:
    return frame.select(MODEL_GROUPS[group].channel_names)


@dataclass
class ModelSet:
    """Fitted detectors and standardizers for every (group, house) pair.

    m1 and m2 are fitted per PV house; m3 is one shared node model stored
    under house ``-1``.
    """

    kind: str
    options: DetectorOptions
    train_rows: int
    houses: list[int]
    standardizers: dict[tuple[str, int], Standardizer] = field(default_factory=dict)
    detectors: dict[tuple[str, int], Detector] = field(default_factory=dict)

    def key_for(self, group: str, house: int) -> tuple[str, int]:
        return (group, -1 if group == "m3" else house)

    def save(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "detector": self.kind,
            "options": asdict(self.options),
            "train_rows": self.train_rows,
            "houses": self.houses,
            "standardizers": {f"{g}:{h}": s.to_dict() for (g, h), s in sorted(self.standardizers.items())},
        }
        (out / "models.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        for (g, h), det in sorted(self.detectors.items()):
            (out / _model_name(g, h)).write_text(det.to_json() + "\n")

    @classmethod
    def load(cls, model_dir: Path) -> "ModelSet":
        meta = json.loads((model_dir / "models.json").read_text())
        opts = meta["options"]
        opts["hidden"] = tuple(opts["hidden"])
        opts["dae_hidden"] = tuple(opts["dae_hidden"])
        ms = cls(meta["detector"], DetectorOptions(**opts), meta["train_rows"], meta["houses"])
        for key, d in meta["standardizers"].items():
            g, h = key.split(":")
            ms.standardizers[(g, int(h))] = Standardizer.from_dict(d)
            det = load_detector((model_dir / _model_name(g, int(h))).read_text())
            if det.kind != ms.kind:
                raise SchemaMismatch(f"model {g}:{h} is {det.kind!r}, manifest says {ms.kind!r}")
            ms.detectors[(g, int(h))] = det
        return ms


def _model_name(group: str, house: int) -> str:
    return f"{group}.json" if house < 0 else f"{group}_house{house}.json"


def train_models(run: RunData, kind: str, opts: DetectorOptions, train_days: int = 7) -> ModelSet:
    rows = train_days * run.scenario.steps_per_day
    if rows > run.node.length:
        raise LengthMismatch(f"{train_days} training days exceed the {run.node.length}-step run")
    houses = run.pv_houses
    ms = ModelSet(kind, opts, rows, houses)
    jobs = [("m3", -1, run.node)] + [(g, h, run.houses[h]) for h in houses for g in ("m1", "m2")]
    for g, h, frame in jobs:
        sub = _group_matrix(frame, g).slice(0, rows)
        std = fit_standardizer(sub)
        log.info("fitting %s for %s house %d", kind, g, h)
        ms.standardizers[(g, h)] = std
        origin = std.transform(np.zeros(len(std.means)))
        ms.detectors[(g, h)] = fit_detector(kind, std.transform(sub), opts, origin)
    return ms


# -- detection ------------------------------------------------------------------------

@dataclass
class HouseScores:
    house: int
    timestamps: np.ndarray
    model_scores: dict[str, np.ndarray]  # normalized where the detector normalizes
    fused: np.ndarray
    decisions: np.ndarray
    rules: dict[str, ThresholdRule]


@dataclass
class Detection:
    kind: str
    fusion: str
    orientation: Orientation
    houses: list[HouseScores]

    def graded(self) -> np.ndarray:
        """Fused scores of every house, oriented high-is-anomalous."""
        s = np.concatenate([h.fused for h in self.houses])
        return -s if self.orientation is Orientation.LOW_IS_ANOMALOUS else s

    def decisions(self) -> np.ndarray:
        return np.concatenate([h.decisions for h in self.houses])


def _rule_kind(det: Detector) -> RuleKind:
    return RuleKind(det.rule)


def detect(
    models: ModelSet,
    run: RunData,
    fusion: str = "most-anomalous",
    weights: Sequence[float] | None = None,
    per_model_or: bool = False,
    start_row: int | None = None,
) -> Detection:
    """Score rows from ``start_row`` (default: the first non-training row) onward."""
    start = models.train_rows if start_row is None else start_row
    rows = np.arange(start, run.node.length)
    if rows.size == 0:
        raise LengthMismatch("no rows left to score after the training period")
    sample = next(iter(models.detectors.values()))
    cache: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}

    def scores_for(group: str, house: int) -> tuple[np.ndarray, np.ndarray]:
        key = models.key_for(group, house)
        if key not in cache:
            det, std = models.detectors[key], models.standardizers[key]
            frame = run.node if group == "m3" else run.houses[house]
            sub = _group_matrix(frame, group)
            if tuple(sub.names) != std.names:
                raise SchemaMismatch(f"channel schema {sub.names} differs from the model's {std.names}")
            raw_eval = det.score(std.transform(sub), rows)
            raw_train = det.train_scores
            top = training_max(raw_train) if det.normalized else 1.0
            cache[key] = (raw_train / top, raw_eval / top)
        return cache[key]

    out = []
    for h in models.houses:
        if h >= len(run.houses):
            raise SchemaMismatch(f"model trained for house {h}, run has {len(run.houses)} houses")
        train_s, eval_s, rules = [], [], {}
        for g in ("m1", "m2", "m3"):
            tr, ev = scores_for(g, h)
            det = models.detectors[models.key_for(g, h)]
            train_s.append(ScoreSeries(tr, det.orientation, (g, det.kind)))
            eval_s.append(ScoreSeries(ev, det.orientation, (g, det.kind)))
            rules[g] = fit_rule(_rule_kind(det), tr, percentile=models.options.pdf_percentile,
                                slack=_slack(det))
        fused_train = fuse(train_s, fusion, weights).values
        fused_eval = fuse(eval_s, fusion, weights).values
        rules["fused"] = fit_rule(_rule_kind(sample), fused_train,
                                  percentile=models.options.pdf_percentile, slack=_slack(sample))
        if per_model_or:
            decisions = np.any([rules[g].decide(s.values) for g, s in zip(("m1", "m2", "m3"), eval_s)],
                               axis=0)
        else:
            decisions = rules["fused"].decide(fused_eval)
        out.append(HouseScores(h, run.node.timestamps[rows],
                               {g: s.values for g, s in zip(("m1", "m2", "m3"), eval_s)},
                               fused_eval, decisions, rules))
    return Detection(models.kind, fusion, sample.orientation, out)


def _slack(det: Detector) -> float:
    # isolation-forest contamination widens the median rule by its value
    return float(getattr(det.model, "contamination", 0.0)) if det.kind == "iforest" else 0.0


def write_scores(det: Detection, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "house_id", "m1_score", "m2_score", "m3_score", "fused_score", "decision"])
        for hs in det.houses:
            cols = zip(hs.timestamps.tolist(), hs.model_scores["m1"].tolist(),
                       hs.model_scores["m2"].tolist(), hs.model_scores["m3"].tolist(),
                       hs.fused.tolist(), hs.decisions.tolist())
            for t, a, b, c, f, d in cols:
                w.writerow([t, hs.house, repr(a), repr(b), repr(c), repr(f), int(d)])


def read_scores(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        recs = list(csv.DictReader(fh))
    return {
        "timestamp": np.array([int(r["timestamp"]) for r in recs], dtype=np.int64),
        "house_id": np.array([int(r["house_id"]) for r in recs], dtype=np.int64),
        "fused_score": np.array([float(r["fused_score"]) for r in recs]),
        "decision": np.array([int(r["decision"]) for r in recs], dtype=bool),
    }


def thresholds_doc(det: Detection) -> dict:
    return {
        "detector": det.kind,
        "fusion": det.fusion,
        "orientation": det.orientation.value,
        "houses": {str(h.house): {k: r.to_dict() for k, r in h.rules.items()} for h in det.houses},
    }


# -- evaluation -----------------------------------------------------------------------

def label_kinds(labels: AttackLabels, houses: Sequence[int], timestamps: Sequence[int]) -> np.ndarray:
    """Attack codes aligned to ``(house, timestamp)`` pairs."""
    h = np.asarray(houses)
    idx = (np.asarray(timestamps) - labels.start_time) // labels.step
    if np.any(idx < 0) or np.any(idx >= labels.length) or np.any(h >= labels.n_houses):
        raise LengthMismatch("scores reference timesteps outside the label range")
    return labels.kind[h, idx].astype(np.int64)


def evaluate_scores(
    decisions: np.ndarray,
    kinds: np.ndarray,
    graded: np.ndarray | None,
) -> list[MetricsRow]:
    positives = np.asarray(kinds) != 0
    if positives.all() or not positives.any():
        missing = "attacked" if not positives.any() else "normal"
        raise SingleClassLabels(f"evaluation labels contain no {missing} timesteps")
    return evaluate_run(decisions, kinds, graded)
