"""One-class SVM (nu formulation) with an RBF kernel, solved by SMO."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import DimensionMismatch, NonConvergence, TooFewSamples
from .base import dump_model, load_model

KIND = "ocsvm"


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma * ||a - b||^2)`` for every row pair."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True)
class OcsvmModel:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    offset: float
    gamma: float
    nu: float
    n_iter: int = 0

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatch(
                f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}"
            )
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coeffs - self.offset

    def to_json(self) -> str:
        return dump_model(
            KIND, {"nu": self.nu, "gamma": self.gamma, "n_iter": self.n_iter},
            {"support_vectors": self.support_vectors, "dual_coeffs": self.dual_coeffs},
            offset=self.offset,
        )

    @classmethod
    def from_json(cls, text: str | dict) -> "OcsvmModel":
        doc = load_model(text, KIND)
        hp = doc["hyperparameters"]
        return cls(doc["arrays"]["support_vectors"], doc["arrays"]["dual_coeffs"],
                   doc["offset"], hp["gamma"], hp["nu"], hp["n_iter"])


def ocsvm_fit(
    X: np.ndarray,
    nu: float = 0.001,
    gamma: float | None = None,
    tol: float = 1e-6,
    max_iter: int = 100_000,
) -> OcsvmModel:
    """Fit the one-class SVM dual.

    Solves ``min 1/2 a'Ka`` subject to ``0 <= a_i <= 1/(nu*n)`` and
    ``sum(a) = 1``; ``gamma`` defaults to ``1 / n_features``. The offset is
    the mean gradient over free support vectors (the midpoint of the KKT
    interval when none are free).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, n_features = X.shape
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    if not 0 < nu <= 1:
        raise ValueError(f"nu must lie in (0, 1], got {nu}")
    gamma = 1.0 / n_features if gamma is None else float(gamma)
    upper = 1.0 / (nu * n)
    K = rbf_kernel(X, X, gamma)
    alpha, grad, n_iter = kernels.smo_one_class(K, upper, tol, max_iter)
    if n_iter >= max_iter:
        raise NonConvergence(f"SMO did not reach tolerance {tol} in {max_iter} iterations")

    free = (alpha > 0) & (alpha < upper)
    if np.any(free):
        offset = float(grad[free].mean())
    else:
        at_upper = grad[alpha >= upper]
        at_zero = grad[alpha <= 0]
        lo = at_upper.max() if at_upper.size else at_zero.min()
        hi = at_zero.min() if at_zero.size else at_upper.max()
        offset = float(0.5 * (lo + hi))
    sv = alpha > 0
    return OcsvmModel(X[sv].copy(), alpha[sv].copy(), offset, gamma, nu, int(n_iter))


def ocsvm_score(model: OcsvmModel, x: np.ndarray) -> np.ndarray | float:
    """Signed distance to the boundary: >= 0 inside (normal), < 0 outside."""
    x = np.asarray(x, dtype=np.float64)
    out = model.decision(x)
    return float(out[0]) if x.ndim == 1 else out
