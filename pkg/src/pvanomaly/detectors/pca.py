"""PCA projection, convex-hull membership and reconstruction-error scoring."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .. import kernels
from ..errors import DegenerateHullWarning, DimensionMismatch, RankDeficientWarning, TooFewSamples
from .base import dump_model, load_model

HULL_TOL = 1e-9


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.components.shape[1]

    def to_dict(self) -> dict:
        return {"mean": self.mean, "components": self.components,
                "explained_variance": self.explained_variance}

    @classmethod
    def from_arrays(cls, a: dict) -> "PcaModel":
        return cls(a["mean"], a["components"], a["explained_variance"])


def pca_fit(X: np.ndarray, n_components: int = 5, rank_tol: float = 1e-10) -> PcaModel:
    """Top eigenvectors of the sample covariance, by decreasing variance.

    Each component's sign is fixed so its largest-magnitude entry is
    positive. If fewer than ``n_components`` eigenvalues are non-zero the
    model keeps only those and emits :class:`RankDeficientWarning`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if n < max(2, n_components):
        raise TooFewSamples(f"need at least {max(2, n_components)} rows, got {n}")
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must lie in [1, {d}], got {n_components}")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1).reshape(d, d)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    rank = int(np.sum(evals > rank_tol * max(evals[0], 1e-300)))
    if rank < n_components:
        warnings.warn(
            f"only {rank} non-zero eigenvalues; reducing n_components from {n_components}",
            RankDeficientWarning, stacklevel=2,
        )
        n_components = max(rank, 1)
    comps = evecs[:, :n_components].T.copy()
    flip = np.sign(comps[np.arange(n_components), np.argmax(np.abs(comps), axis=1)])
    comps *= np.where(flip == 0, 1.0, flip)[:, None]
    return PcaModel(mean, comps, evals[:n_components].copy())


def pca_project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n_features:
        raise DimensionMismatch(f"expected {model.n_features} features, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_reconstruct(model: PcaModel, z: np.ndarray) -> np.ndarray:
    return np.asarray(z) @ model.components + model.mean


def components_for_variance(X: np.ndarray, share: float = 0.95, cap: int | None = None) -> int:
    """Smallest k whose leading components explain at least ``share`` of the variance."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    evals = np.sort(np.clip(np.linalg.eigvalsh(np.cov(X, rowvar=False).reshape(X.shape[1], -1)), 0, None))[::-1]
    total = evals.sum()
    k = X.shape[1] if total <= 0 else int(np.searchsorted(np.cumsum(evals) / total, share - 1e-12) + 1)
    if cap is not None:
        k = min(k, cap)
    return max(1, min(k, X.shape[1]))


# -- convex hull ----------------------------------------------------------------

@dataclass(frozen=True)
class HullModel:
    vertices: np.ndarray
    dimension: int
    degenerate: bool = False  # bounding-box fallback in use

    @property
    def lower(self) -> np.ndarray:
        return self.vertices.min(axis=0)

    @property
    def upper(self) -> np.ndarray:
        return self.vertices.max(axis=0)


def _affinely_independent(points: np.ndarray) -> bool:
    d = points.shape[1]
    if points.shape[0] < d + 1:
        return False
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return bool(s[-1] > 1e-10 * max(s[0], 1e-300))


def hull_fit(points: np.ndarray) -> HullModel:
    """Store the projected training points as the hull's generating set.

    Falls back to a per-dimension bounding box (with
    :class:`DegenerateHullWarning`) when the points do not span the space.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    degenerate = not _affinely_independent(P)
    if degenerate:
        warnings.warn("hull points are affinely dependent; using bounding box",
                      DegenerateHullWarning, stacklevel=2)
    return HullModel(P.copy(), P.shape[1], degenerate)


def hull_distance(model: HullModel, p: np.ndarray) -> float:
    """Euclidean distance from ``p`` to the hull (0 inside)."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (model.dimension,):
        raise DimensionMismatch(f"expected a {model.dimension}-vector, got shape {p.shape}")
    if model.degenerate:
        gap = np.maximum(model.lower - p, 0.0) + np.maximum(p - model.upper, 0.0)
        return float(np.sqrt(gap @ gap))
    dist, _, _ = kernels.min_norm_point(model.vertices, p)
    return dist


def hull_contains(model: HullModel, p: np.ndarray, tol: float = HULL_TOL) -> tuple[bool, float]:
    """Membership verdict and margin (distance to the hull)."""
    margin = hull_distance(model, p)
    return margin <= tol, (0.0 if margin <= tol else margin)


def hull_margins(model: HullModel, points: np.ndarray, tol: float = HULL_TOL) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.array([hull_distance(model, p) for p in pts])
    out[out <= tol] = 0.0
    return out


def hull_contains_lp(vertices: np.ndarray, p: np.ndarray) -> bool:
    """Feasibility of ``lambda >= 0, sum(lambda) = 1, V' lambda = p`` by linear programming."""
    V = np.asarray(vertices, dtype=np.float64)
    n = V.shape[0]
    A_eq = np.vstack([V.T, np.ones((1, n))])
    b_eq = np.r_[np.asarray(p, dtype=np.float64), 1.0]
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


@dataclass(frozen=True)
class PcaHullModel:
    pca: PcaModel
    hull: HullModel

    def score(self, X: np.ndarray) -> np.ndarray:
        return hull_margins(self.hull, pca_project(self.pca, np.atleast_2d(X)))

    def to_json(self) -> str:
        return dump_model(
            "pca-ch", {"n_components": self.pca.n_components, "degenerate": self.hull.degenerate},
            {**self.pca.to_dict(), "vertices": self.hull.vertices},
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "PcaHullModel":
        doc = load_model(text, "pca-ch")
        a = doc["arrays"]
        v = a["vertices"]
        return cls(PcaModel.from_arrays(a),
                   HullModel(v, v.shape[1], doc["hyperparameters"]["degenerate"]))


def pca_hull_fit(X: np.ndarray, n_components: int = 5) -> PcaHullModel:
    pca = pca_fit(X, min(n_components, np.atleast_2d(X).shape[1]))
    return PcaHullModel(pca, hull_fit(pca_project(pca, X)))


# -- reconstruction error ---------------------------------------------------------

def ipca_score(model: PcaModel, x: np.ndarray) -> np.ndarray | float:
    """Mean squared reconstruction error over channels."""
    x = np.asarray(x, dtype=np.float64)
    resid = x - pca_reconstruct(model, pca_project(model, x))
    e = np.mean(resid * resid, axis=-1)
    return float(e) if x.ndim == 1 else e


@dataclass(frozen=True)
class IpcaModel:
    pca: PcaModel

    def score(self, X: np.ndarray) -> np.ndarray:
        return ipca_score(self.pca, np.atleast_2d(X))

    def to_json(self) -> str:
        return dump_model("ipca", {"n_components": self.pca.n_components}, self.pca.to_dict())

    @classmethod
    def from_json(cls, text: str | dict) -> "IpcaModel":
        return cls(PcaModel.from_arrays(load_model(text, "ipca")["arrays"]))


def ipca_fit(X: np.ndarray, n_components: int | None = None) -> IpcaModel:
    """Fit with ``n_components`` or, when omitted, enough to explain 95% of the
    variance while always leaving at least one residual direction."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if n_components is None:
        n_components = components_for_variance(X, 0.95, cap=max(1, X.shape[1] - 1))
    return IpcaModel(pca_fit(X, n_components))
