"""Score normalization, threshold rules and fusion of the m1/m2/m3 scores."""

from __future__ import annotations

import enum
import hashlib
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .detectors.base import Orientation
from .errors import (
    LengthMismatch,
    MixedOrientation,
    OrientationMismatch,
    TooFewSamples,
    ZeroMaxWarning,
    ZeroWeightsWarning,
)

HULL_TOL = 1e-9


@dataclass(frozen=True)
class ScoreSeries:
    values: np.ndarray
    orientation: Orientation
    source: tuple[str, str] = ("", "")  # (model group, detector kind)

    def __len__(self) -> int:
        return len(self.values)


class RuleKind(str, enum.Enum):
    MEDIAN_MINUS_3SIGMA = "median-minus-3sigma"
    MEAN_PLUS_3SIGMA = "mean-plus-3sigma"
    FIXED_PROBABILITY = "fixed-probability"
    PDF_QUANTILE = "pdf-quantile"
    OUTSIDE_HULL = "outside-hull"


_LOW_RULES = {RuleKind.MEDIAN_MINUS_3SIGMA, RuleKind.PDF_QUANTILE}


def _fingerprint(scores: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(scores, dtype=np.float64).tobytes()).hexdigest()


@dataclass(frozen=True)
class ThresholdRule:
    kind: RuleKind
    threshold: float
    train_fingerprint: str = ""

    @property
    def orientation(self) -> Orientation:
        return Orientation.LOW_IS_ANOMALOUS if self.kind in _LOW_RULES else Orientation.HIGH_IS_ANOMALOUS

    def decide(self, scores: np.ndarray) -> np.ndarray:
        """Boolean anomaly flags; scores equal to the threshold are normal."""
        s = np.asarray(scores, dtype=np.float64)
        return s < self.threshold if self.kind in _LOW_RULES else s > self.threshold

    def verify(self, train_scores: np.ndarray) -> None:
        """Assert the rule was fitted on exactly these training scores."""
        assert _fingerprint(np.asarray(train_scores)) == self.train_fingerprint, (
            "threshold must be computed from the training scores only"
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "threshold": self.threshold,
                "train_fingerprint": self.train_fingerprint}

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRule":
        return cls(RuleKind(d["kind"]), float(d["threshold"]), d.get("train_fingerprint", ""))


def normalize_scores(train_scores: np.ndarray, eval_scores: np.ndarray | None = None):
    """Divide both series by the maximum training score."""
    m_n = np.asarray(train_scores, dtype=np.float64)
    top = float(np.max(m_n))
    if top == 0.0:
        warnings.warn("maximum training score is 0; leaving scores unscaled", ZeroMaxWarning,
                      stacklevel=2)
        top = 1.0
    if eval_scores is None:
        return m_n / top, None
    return m_n / top, np.asarray(eval_scores, dtype=np.float64) / top


def training_max(train_scores: np.ndarray) -> float:
    top = float(np.max(train_scores))
    return top if top != 0.0 else 1.0


def _sample_std(s: np.ndarray) -> float:
    # a constant series has exactly zero spread, whatever the mean rounds to
    return 0.0 if np.all(s == s[0]) else float(np.std(s, ddof=1))


def threshold_median_sigma(train_scores: np.ndarray, slack: float = 0.0) -> float:
    """``median - 3 * std`` (sample std), less an optional slack."""
    s = np.asarray(train_scores, dtype=np.float64)
    if s.size < 2:
        raise TooFewSamples("need at least 2 training scores")
    return float(np.median(s) - 3.0 * _sample_std(s) - slack)


def threshold_mean_sigma(train_scores: np.ndarray) -> float:
    """``mean + 3 * std`` (sample std)."""
    s = np.asarray(train_scores, dtype=np.float64)
    if s.size < 2:
        raise TooFewSamples("need at least 2 training scores")
    return float(np.mean(s) + 3.0 * _sample_std(s))


def fit_rule(kind: RuleKind | str, train_scores: np.ndarray, *, percentile: float = 0.001,
             slack: float = 0.0) -> ThresholdRule:
    kind = RuleKind(kind)
    s = np.asarray(train_scores, dtype=np.float64)
    if kind is RuleKind.MEDIAN_MINUS_3SIGMA:
        t = threshold_median_sigma(s, slack)
    elif kind is RuleKind.MEAN_PLUS_3SIGMA:
        t = threshold_mean_sigma(s)
    elif kind is RuleKind.FIXED_PROBABILITY:
        t = 0.5
    elif kind is RuleKind.PDF_QUANTILE:
        if s.size < 1:
            raise TooFewSamples("need at least 1 holdout score")
        t = float(np.quantile(s, percentile, method="lower"))
    else:
        t = HULL_TOL
    return ThresholdRule(kind, t, _fingerprint(s))


def _check_aligned(series: Sequence[ScoreSeries]) -> None:
    if len({len(s) for s in series}) > 1:
        raise LengthMismatch(f"score series lengths differ: {[len(s) for s in series]}")


def fuse_linear(series: Sequence[ScoreSeries], weights: Sequence[float] | None = None) -> ScoreSeries:
    """Element-wise weighted sum (default equal weights)."""
    series = list(series)
    _check_aligned(series)
    if len({s.orientation for s in series}) > 1:
        raise OrientationMismatch("linear fusion needs like-oriented scores")
    w = np.full(len(series), 1.0 / len(series)) if weights is None else np.asarray(weights, float)
    if w.shape != (len(series),):
        raise LengthMismatch(f"{len(series)} series but {w.size} weights")
    if not np.any(w):
        warnings.warn("all fusion weights are zero", ZeroWeightsWarning, stacklevel=2)
    out = np.zeros(len(series[0]))
    for wi, s in zip(w, series):
        out = out + wi * np.asarray(s.values, dtype=np.float64)
    return ScoreSeries(out, series[0].orientation, ("fused", series[0].source[1]))


def fuse_most_anomalous(series: Sequence[ScoreSeries],
                        orientation: Orientation | None = None) -> ScoreSeries:
    """Element-wise min for low-is-anomalous scores, max otherwise."""
    series = list(series)
    _check_aligned(series)
    kinds = {s.orientation for s in series} | ({orientation} if orientation else set())
    if len(kinds) > 1:
        raise MixedOrientation(f"cannot fuse orientations {sorted(k.value for k in kinds)}")
    (orient,) = kinds
    stack = np.vstack([np.asarray(s.values, dtype=np.float64) for s in series])
    fused = stack.min(axis=0) if orient is Orientation.LOW_IS_ANOMALOUS else stack.max(axis=0)
    return ScoreSeries(fused, orient, ("fused", series[0].source[1]))


def fuse(series: Sequence[ScoreSeries], method: str = "most-anomalous",
         weights: Sequence[float] | None = None) -> ScoreSeries:
    if method == "most-anomalous":
        return fuse_most_anomalous(series)
    if method == "linear":
        return fuse_linear(series, weights)
    raise ValueError(f"unknown fusion method {method!r}")
