"""Versioned JSON serialization shared by all detector models."""

from __future__ import annotations

import enum
import json
from typing import Any

import numpy as np

from ..errors import SchemaMismatch

FORMAT = "pvanomaly-model"
FORMAT_VERSION = 1


class Orientation(str, enum.Enum):
    LOW_IS_ANOMALOUS = "low"
    HIGH_IS_ANOMALOUS = "high"


def pack_array(a: np.ndarray) -> dict[str, Any]:
    a = np.asarray(a)
    kind = "complex" if np.iscomplexobj(a) else ("int" if a.dtype.kind in "iub" else "float")
    if kind == "complex":
        data = np.stack([a.real, a.imag], axis=-1).ravel().tolist()
    else:
        data = a.ravel().tolist()
    return {"dtype": kind, "shape": list(a.shape), "data": data}


def unpack_array(d: dict[str, Any]) -> np.ndarray:
    shape = tuple(d["shape"])
    if d["dtype"] == "complex":
        raw = np.asarray(d["data"], dtype=np.float64).reshape(shape + (2,))
        return raw[..., 0] + 1j * raw[..., 1]
    dtype = np.int64 if d["dtype"] == "int" else np.float64
    return np.asarray(d["data"], dtype=dtype).reshape(shape)


def dump_model(kind: str, hyperparameters: dict, arrays: dict[str, np.ndarray],
               seed: int | None = None, **extra: Any) -> str:
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "kind": kind,
        "seed": seed,
        "hyperparameters": hyperparameters,
        "arrays": {k: pack_array(v) for k, v in arrays.items()},
        **extra,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def load_model(text: str | dict, kind: str | None = None) -> dict[str, Any]:
    doc = json.loads(text) if isinstance(text, str) else text
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise SchemaMismatch(
            f"unsupported model format {doc.get('format')!r} v{doc.get('version')!r}"
        )
    if kind is not None and doc.get("kind") != kind:
        raise SchemaMismatch(f"expected a {kind!r} model, found {doc.get('kind')!r}")
    doc = dict(doc)
    doc["arrays"] = {k: unpack_array(v) for k, v in doc["arrays"].items()}
    return doc
