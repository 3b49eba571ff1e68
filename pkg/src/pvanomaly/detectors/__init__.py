"""The seven detector kinds behind one fit/score interface.

Every adapter is fitted on a standardized training matrix ``Z`` (rows are
timesteps) and scores selected rows of a standardized matrix that may
carry earlier history; sequence detectors read the rows before each
scored row, point detectors read only the row itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, ClassVar

import numpy as np

from ..errors import FrameTooShort, SchemaMismatch, TooFewSamples
from .base import Orientation, load_model
from .corrupt_rf import CorruptRfModel, corrupt_rf_fit
from .gaussian import GaussianResidualModel, residual_fit
from .iforest import IsolationForestModel, iforest_fit
from .neural import DaeModel, MlpEstimator, TrainConfig, dae_fit, mlp_fit
from .ocsvm import OcsvmModel, ocsvm_fit
from .pca import IpcaModel, PcaHullModel, ipca_fit, pca_hull_fit

KINDS = ("nn", "dae", "ocsvm", "iforest", "corrupt-rf", "pca-ch", "ipca")


@dataclass(frozen=True)
class DetectorOptions:
    seed: int = 0
    window_len: int = 15
    pca_dims: int = 3
    ipca_dims: int | None = None
    ocsvm_nu: float = 0.001
    ocsvm_max_train: int = 2000
    iforest_trees: int = 200
    iforest_subsample: int = 256
    rf_trees: int = 100
    hidden: tuple[int, ...] = (64, 32, 16)
    dae_hidden: tuple[int, ...] = (32,)
    dae_noise_std: float = 0.1
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 64
    holdout_fraction: float = 1 / 7
    pdf_percentile: float = 0.001

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.seed)


class Detector:
    """Base adapter; subclasses set the class attributes and the three hooks."""

    kind: ClassVar[str]
    orientation: ClassVar[Orientation]
    rule: ClassVar[str]  # threshold rule applied to this detector's scores
    normalized: ClassVar[bool]  # scores divided by the training maximum before thresholding

    def __init__(self, model: Any, n_channels: int, train_scores: np.ndarray, **state: Any):
        self.model = model
        self.n_channels = n_channels
        self.train_scores = np.asarray(train_scores, dtype=np.float64)
        self.state = state

    @classmethod
    def fit(cls, Z: np.ndarray, opts: DetectorOptions, origin: Any = 0.0) -> "Detector":
        """``origin``: standardized image of an all-zero measurement (used by corrupt-rf)."""
        raise NotImplementedError

    def score(self, Z: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != self.n_channels:
            raise SchemaMismatch(f"model expects {self.n_channels} channels, got {Z.shape[1]}")
        rows = np.arange(self.required_history(), Z.shape[0]) if rows is None else np.asarray(rows)
        if rows.size and rows.min() < self.required_history():
            raise FrameTooShort(f"scoring row {rows.min()} needs {self.required_history()} earlier rows")
        return self._score(Z, rows)

    def required_history(self) -> int:
        return 0

    def _score(self, Z: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self.model_score(Z[rows])

    def model_score(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # serialization: model JSON embedded in an envelope with adapter state
    def to_json(self) -> str:
        doc = {
            "detector": self.kind,
            "n_channels": self.n_channels,
            "train_scores": self.train_scores.tolist(),
            "state": self._state_dict(),
            "model": json.loads(self.model.to_json()),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def _state_dict(self) -> dict:
        return {}

    @classmethod
    def _state_from_dict(cls, d: dict) -> dict:
        return {}

    model_cls: ClassVar[Any]

    @classmethod
    def from_doc(cls, doc: dict) -> "Detector":
        model = cls.model_cls.from_json(doc["model"])
        return cls(model, doc["n_channels"], doc["train_scores"], **cls._state_from_dict(doc["state"]))


def _subsample(n: int, limit: int, seed: int) -> np.ndarray:
    if n <= limit:
        return np.arange(n)
    return np.sort(np.random.default_rng([seed, 1]).choice(n, limit, replace=False))


class OcsvmDetector(Detector):
    kind = "ocsvm"
    orientation = Orientation.LOW_IS_ANOMALOUS
    rule = "median-minus-3sigma"
    normalized = True
    model_cls = OcsvmModel

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        idx = _subsample(Z.shape[0], opts.ocsvm_max_train, opts.seed)
        model = ocsvm_fit(Z[idx], nu=opts.ocsvm_nu)
        return cls(model, Z.shape[1], model.decision(Z))

    def model_score(self, X):
        return self.model.decision(X)


class IforestDetector(Detector):
    kind = "iforest"
    orientation = Orientation.LOW_IS_ANOMALOUS
    rule = "median-minus-3sigma"
    normalized = True
    model_cls = IsolationForestModel

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        model = iforest_fit(Z, opts.iforest_trees, opts.iforest_subsample, opts.seed)
        return cls(model, Z.shape[1], model.path_lengths(Z))

    def model_score(self, X):
        return self.model.path_lengths(X)


class CorruptRfDetector(Detector):
    kind = "corrupt-rf"
    orientation = Orientation.HIGH_IS_ANOMALOUS
    rule = "fixed-probability"
    normalized = False
    model_cls = CorruptRfModel

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        model = corrupt_rf_fit(Z, opts.rf_trees, opts.seed, origin)
        return cls(model, Z.shape[1], model.attack_probability(Z))

    def model_score(self, X):
        return self.model.attack_probability(X)


class PcaHullDetector(Detector):
    kind = "pca-ch"
    orientation = Orientation.HIGH_IS_ANOMALOUS
    rule = "outside-hull"
    normalized = False
    model_cls = PcaHullModel

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        model = pca_hull_fit(Z, min(opts.pca_dims, Z.shape[1]))
        # every training point is a hull generator, so its margin is exactly 0
        return cls(model, Z.shape[1], np.zeros(Z.shape[0]))

    def model_score(self, X):
        return self.model.score(X)


class IpcaDetector(Detector):
    kind = "ipca"
    orientation = Orientation.HIGH_IS_ANOMALOUS
    rule = "mean-plus-3sigma"
    normalized = False
    model_cls = IpcaModel

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        model = ipca_fit(Z, opts.ipca_dims)
        return cls(model, Z.shape[1], model.score(Z))

    def model_score(self, X):
        return self.model.score(X)


def _holdout_split(n: int, fraction: float) -> int:
    n_hold = max(1, int(round(n * fraction)))
    if n - n_hold < 2:
        raise TooFewSamples(f"{n} windows leave nothing to train on after the holdout")
    return n - n_hold


class _ResidualDetector(Detector):
    orientation = Orientation.LOW_IS_ANOMALOUS
    rule = "pdf-quantile"
    normalized = True

    @property
    def residual(self) -> GaussianResidualModel:
        return self.state["residual"]

    def _state_dict(self):
        return {"residual": self.residual.to_dict()}

    @classmethod
    def _state_from_dict(cls, d):
        return {"residual": GaussianResidualModel.from_dict(d["residual"])}

    def required_history(self) -> int:
        return self.model_window() - self.offset

    def model_window(self) -> int:
        raise NotImplementedError

    offset: ClassVar[int] = 0  # 1 when the window includes the scored row

    def _windows(self, Z, rows):
        w = self.model_window()
        starts = rows - w + self.offset
        return np.stack([Z[s:s + w] for s in starts]) if rows.size else np.zeros((0, w, Z.shape[1]))

    def _score(self, Z, rows):
        return np.atleast_1d(self.residual.pdf(self.residuals(Z, rows)))


class NnDetector(_ResidualDetector):
    """One-step estimator: window of the ``w`` rows before ``t`` predicts row ``t``."""

    kind = "nn"
    model_cls = MlpEstimator

    def model_window(self):
        return self.model.window_len

    def residuals(self, Z, rows):
        return Z[rows] - self.model.predict(self._windows(Z, rows))

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        w = opts.window_len
        rows = np.arange(w, Z.shape[0])
        if rows.size < 3:
            raise FrameTooShort(f"need more than {w + 2} rows for window length {w}")
        cut = _holdout_split(rows.size, opts.holdout_fraction)
        fit_rows, hold_rows = rows[:cut], rows[cut:]
        windows = np.stack([Z[r - w:r] for r in fit_rows])
        model = mlp_fit(windows, Z[fit_rows], opts.hidden, opts.train_config())
        det = cls(model, Z.shape[1], np.zeros(0), residual=None)
        resid = residual_fit(det.residuals(Z, fit_rows), det.residuals(Z, hold_rows),
                             opts.pdf_percentile)
        det.state["residual"] = resid
        det.train_scores = det._score(Z, hold_rows)
        return det


class DaeDetector(_ResidualDetector):
    """Autoencoder on the window ending at (and including) row ``t``."""

    kind = "dae"
    model_cls = DaeModel
    offset = 1

    def model_window(self):
        return self.model.input_width // self.n_channels

    def residuals(self, Z, rows):
        X = self._windows(Z, rows).reshape(rows.size, -1)
        r = self.model.reconstruct(X) - X
        return np.mean(r * r, axis=1)

    @classmethod
    def fit(cls, Z, opts, origin=0.0):
        w = opts.window_len
        rows = np.arange(w - 1, Z.shape[0])
        if rows.size < 3:
            raise FrameTooShort(f"need more than {w + 1} rows for window length {w}")
        cut = _holdout_split(rows.size, opts.holdout_fraction)
        fit_rows, hold_rows = rows[:cut], rows[cut:]
        X = np.stack([Z[r - w + 1:r + 1] for r in fit_rows]).reshape(fit_rows.size, -1)
        model = dae_fit(X, opts.dae_noise_std, opts.dae_hidden, config=opts.train_config())
        det = cls(model, Z.shape[1], np.zeros(0), residual=None)
        resid = residual_fit(det.residuals(Z, fit_rows), det.residuals(Z, hold_rows),
                             opts.pdf_percentile)
        det.state["residual"] = resid
        det.train_scores = det._score(Z, hold_rows)
        return det


REGISTRY: dict[str, type[Detector]] = {
    cls.kind: cls
    for cls in (NnDetector, DaeDetector, OcsvmDetector, IforestDetector,
                CorruptRfDetector, PcaHullDetector, IpcaDetector)
}


def fit_detector(kind: str, Z: np.ndarray, opts: DetectorOptions = DetectorOptions(),
                 origin: Any = 0.0) -> Detector:
    try:
        cls = REGISTRY[kind]
    except KeyError:
        raise ValueError(f"unknown detector kind {kind!r}; expected one of {KINDS}") from None
    return cls.fit(np.atleast_2d(np.asarray(Z, dtype=np.float64)), opts, origin)


def load_detector(text: str | dict) -> Detector:
    doc = json.loads(text) if isinstance(text, str) else text
    kind = doc.get("detector")
    if kind not in REGISTRY or "model" not in doc:
        raise SchemaMismatch(f"not a detector document (kind {kind!r})")
    load_model(doc["model"], kind)  # version / kind check
    return REGISTRY[kind].from_doc(doc)


__all__ = ["KINDS", "REGISTRY", "Detector", "DetectorOptions", "Orientation",
           "fit_detector", "load_detector"]
