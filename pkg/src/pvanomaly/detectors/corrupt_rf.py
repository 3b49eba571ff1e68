"""Random forest trained to tell normal rows from synthetically corrupted ones.

Corruption multiplies every entry by an independent ``Uniform(0, 1)``
draw, which breaks the dependencies between features while keeping each
value inside its original sign range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier

from .. import kernels
from ..errors import DegenerateLabels, DimensionMismatch
from .base import dump_model, load_model

KIND = "corrupt-rf"


def corrupt(
    X: np.ndarray,
    rng: np.random.Generator | int | None = None,
    origin: np.ndarray | float = 0.0,
) -> np.ndarray:
    """Element-wise product of ``X - origin`` with i.i.d. ``Uniform(0, 1)`` noise.

    ``origin`` is where a fully suppressed reading lands. For standardized
    inputs, passing the standardized image of a zero measurement makes the
    corruption act on the physical values rather than on deviations from
    the mean.
    """
    rng = np.random.default_rng(rng)
    X = np.asarray(X, dtype=np.float64)
    return origin + (X - origin) * rng.uniform(0.0, 1.0, size=X.shape)


@dataclass(frozen=True)
class CorruptRfModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray  # 1.0 at leaves predicting "corrupted"
    roots: np.ndarray
    n_trees: int
    n_features: int
    corruption_seed: int

    def attack_probability(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        votes = kernels.forest_apply(
            X, self.feature, self.threshold, self.left, self.right, self.vote, self.roots
        )
        return votes / self.n_trees

    def to_json(self) -> str:
        return dump_model(
            KIND, {"n_trees": self.n_trees, "n_features": self.n_features},
            {k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "vote", "roots")},
            seed=self.corruption_seed,
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "CorruptRfModel":
        doc = load_model(text, KIND)
        a, hp = doc["arrays"], doc["hyperparameters"]
        return cls(a["feature"], a["threshold"], a["left"], a["right"], a["vote"], a["roots"],
                   hp["n_trees"], hp["n_features"], doc["seed"])


def _flatten(forest: RandomForestClassifier) -> tuple[np.ndarray, ...]:
    feats, thrs, lefts, rights, votes, roots = [], [], [], [], [], []
    off = 0
    for est in forest.estimators_:
        t = est.tree_
        roots.append(off)
        leaf = t.children_left < 0
        feats.append(np.where(leaf, 0, t.feature).astype(np.int64))
        thrs.append(np.where(leaf, 0.0, t.threshold))
        lefts.append(np.where(leaf, -1, t.children_left + off).astype(np.int64))
        rights.append(np.where(leaf, -1, t.children_right + off).astype(np.int64))
        counts = t.value[:, 0, :]
        votes.append((counts[:, 1] > counts[:, 0]).astype(np.float64))
        off += t.node_count
    return tuple(np.concatenate(a) for a in (feats, thrs, lefts, rights, votes)) + (
        np.array(roots, dtype=np.int64),
    )


def corrupt_rf_fit(
    X_normal: np.ndarray,
    n_trees: int = 100,
    seed: int = 0,
    origin: np.ndarray | float = 0.0,
) -> CorruptRfModel:
    """Fit on ``{(X, 0), (corrupt(X), 1)}`` with equal class counts.

    Trees use Gini splits, unlimited depth and per-tree bootstrap samples.
    """
    X = np.atleast_2d(np.asarray(X_normal, dtype=np.float64))
    rng = np.random.default_rng(seed)
    Xc = corrupt(X, rng, origin)
    if np.array_equal(X, Xc):
        raise DegenerateLabels("corruption left the data unchanged")
    data = np.vstack([X, Xc])
    labels = np.r_[np.zeros(len(X)), np.ones(len(Xc))]
    forest = RandomForestClassifier(
        n_estimators=n_trees, criterion="gini", max_depth=None, bootstrap=True,
        random_state=int(rng.integers(2**31 - 1)), n_jobs=1,
    )
    forest.fit(data, labels)
    feature, threshold, left, right, vote, roots = _flatten(forest)
    return CorruptRfModel(feature, threshold, left, right, vote, roots, n_trees, X.shape[1], seed)


def corrupt_rf_score(model: CorruptRfModel, x: np.ndarray) -> np.ndarray | float:
    """Fraction of trees voting "corrupted"; 0.5 is the decision threshold."""
    x = np.asarray(x, dtype=np.float64)
    out = model.attack_probability(x)
    return float(out[0]) if x.ndim == 1 else out
