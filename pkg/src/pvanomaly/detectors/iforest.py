"""Isolation forest with path length as the (higher = more normal) measure.

Tree construction follows a fixed random-draw protocol so any independent
re-implementation seeded the same way grows identical trees:

* tree ``t`` draws from ``default_rng([seed, t])``;
* its subsample is ``rng.choice(n, psi, replace=False)`` when ``n > psi``,
  otherwise all rows in order;
* nodes are expanded depth-first, left child first; at each internal node
  the split feature is ``cand[rng.integers(len(cand))]`` over features with
  a non-zero range and the split value is ``rng.uniform(lo, hi)``;
* rows with ``x < split`` go left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .. import kernels
from ..errors import DegenerateSubsample, DimensionMismatch
from .base import dump_model, load_model

KIND = "iforest"


@lru_cache(maxsize=None)
def harmonic(k: int) -> float:
    return float(sum(Fraction(1, i) for i in range(1, k + 1)))


def average_path_length(m: int) -> float:
    """Expected unsuccessful-search path length ``c(m) = 2H(m-1) - 2(m-1)/m``."""
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


@dataclass(frozen=True)
class IsolationForestModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    n_trees: int
    subsample_size: int
    n_features: int
    seed: int
    contamination: float = 1e-8

    def path_lengths(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        total = kernels.forest_apply(
            X, self.feature, self.threshold, self.left, self.right, self.value, self.roots
        )
        return total / self.n_trees

    def to_json(self) -> str:
        return dump_model(
            KIND,
            {"n_trees": self.n_trees, "subsample_size": self.subsample_size,
             "n_features": self.n_features, "contamination": self.contamination},
            {k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "value", "roots")},
            seed=self.seed,
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "IsolationForestModel":
        doc = load_model(text, KIND)
        a, hp = doc["arrays"], doc["hyperparameters"]
        return cls(a["feature"], a["threshold"], a["left"], a["right"], a["value"], a["roots"],
                   hp["n_trees"], hp["subsample_size"], hp["n_features"], doc["seed"],
                   hp["contamination"])


class _TreeBuilder:
    def __init__(self, rng: np.random.Generator, max_depth: int) -> None:
        self.rng = rng
        self.max_depth = max_depth
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new(self) -> int:
        self.feature.append(0)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.value) - 1

    def grow(self, pts: np.ndarray, depth: int) -> int:
        node = self._new()
        if depth >= self.max_depth or len(pts) <= 1:
            self.value[node] = depth + average_path_length(len(pts))
            return node
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        cand = np.flatnonzero(hi > lo)
        if cand.size == 0:
            self.value[node] = depth + average_path_length(len(pts))
            return node
        q = int(cand[self.rng.integers(len(cand))])
        split = float(self.rng.uniform(lo[q], hi[q]))
        mask = pts[:, q] < split
        self.feature[node] = q
        # x <= nextafter(split, -inf)  <=>  x < split
        self.threshold[node] = float(np.nextafter(split, -np.inf))
        self.left[node] = self.grow(pts[mask], depth + 1)
        self.right[node] = self.grow(pts[~mask], depth + 1)
        return node


def iforest_fit(
    X: np.ndarray,
    n_trees: int = 200,
    subsample_size: int = 256,
    seed: int = 0,
    contamination: float = 1e-8,
) -> IsolationForestModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if subsample_size < 2:
        raise ValueError("subsample_size must be >= 2")
    if n < 2 or np.all(X == X[0]):
        raise DegenerateSubsample("training rows are all identical")
    psi = min(subsample_size, n)
    max_depth = math.ceil(math.log2(psi))
    feature, threshold, left, right, value, roots = [], [], [], [], [], []
    for t in range(n_trees):
        rng = np.random.default_rng([seed, t])
        idx = rng.choice(n, psi, replace=False) if n > psi else np.arange(n)
        b = _TreeBuilder(rng, max_depth)
        b.grow(X[idx], 0)
        off = len(value)
        roots.append(off)
        feature += b.feature
        threshold += b.threshold
        left += [c + off if c >= 0 else -1 for c in b.left]
        right += [c + off if c >= 0 else -1 for c in b.right]
        value += b.value
    return IsolationForestModel(
        np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64), np.array(value), np.array(roots, dtype=np.int64),
        n_trees, psi, X.shape[1], seed, contamination,
    )


def iforest_score(model: IsolationForestModel, x: np.ndarray) -> np.ndarray | float:
    """Mean root-to-termination path length; shorter means more isolated."""
    x = np.asarray(x, dtype=np.float64)
    out = model.path_lengths(x)
    return float(out[0]) if x.ndim == 1 else out
