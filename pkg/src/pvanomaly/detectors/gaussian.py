"""Multivariate Gaussian model of estimation residuals and its pdf threshold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from ..errors import DimensionMismatch, TooFewSamples

RIDGE = 1e-6


def gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray | float:
    """Density of ``N(mean, cov)`` at ``x`` (rows of ``x`` for a batch)."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    k = mean.shape[0]
    single = x.ndim <= 1
    X = x.reshape(-1, k)
    L = np.linalg.cholesky(cov)
    z = solve_triangular(L, (X - mean).T, lower=True)
    maha = np.sum(z * z, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    out = np.exp(-0.5 * (k * np.log(2.0 * np.pi) + log_det + maha))
    return float(out[0]) if single else out


@dataclass(frozen=True)
class GaussianResidualModel:
    mean: np.ndarray
    cov: np.ndarray
    threshold: float
    percentile: float = 0.001

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def pdf(self, x: np.ndarray) -> np.ndarray | float:
        x = np.asarray(x, dtype=np.float64)
        if self.dimension == 1 and x.ndim <= 1:
            out = gaussian_pdf(x.reshape(-1, 1), self.mean, self.cov)
            return float(out[0]) if x.ndim == 0 else out
        if x.shape[-1] != self.dimension:
            raise DimensionMismatch(f"expected residuals of size {self.dimension}, got {x.shape}")
        return gaussian_pdf(x, self.mean, self.cov)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(),
                "threshold": self.threshold, "percentile": self.percentile}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianResidualModel":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["cov"], dtype=np.float64),
                   float(d["threshold"]), float(d["percentile"]))


def residual_fit(
    errors: np.ndarray,
    holdout: np.ndarray | None = None,
    percentile: float = 0.001,
    ridge: float = RIDGE,
) -> GaussianResidualModel:
    """Fit mean and ridge-regularized covariance; set the pdf threshold.

    The threshold is the lower ``percentile`` quantile of pdf values on
    ``holdout`` (``errors`` itself when no holdout is given).
    """
    E = np.asarray(errors, dtype=np.float64)
    if E.ndim == 1:
        E = E[:, None]
    n, k = E.shape
    if n < k + 1:
        raise TooFewSamples(f"need at least {k + 1} residual vectors, got {n}")
    mean = E.mean(axis=0)
    cov = np.cov(E, rowvar=False, ddof=1).reshape(k, k)
    cov = 0.5 * (cov + cov.T) + ridge * np.eye(k)
    cho_factor(cov)  # raises if not positive-definite
    H = E if holdout is None else np.asarray(holdout, dtype=np.float64).reshape(-1, k)
    dens = gaussian_pdf(H, mean, cov)
    rho = float(np.quantile(np.atleast_1d(dens), percentile, method="lower"))
    return GaussianResidualModel(mean, cov, rho, percentile)


def residual_classify(model: GaussianResidualModel, x: np.ndarray) -> np.ndarray | bool:
    """True where the residual is anomalous, i.e. ``pdf(x) < threshold``."""
    dens = model.pdf(x)
    if np.ndim(dens) == 0:
        return bool(dens < model.threshold)
    return dens < model.threshold

