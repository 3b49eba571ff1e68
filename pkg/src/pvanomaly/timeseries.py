"""Measurement data model shared by the simulator, detectors and evaluator.

A :class:`TimeSeriesFrame` is a uniformly sampled block of named channels.
Timestamps are integer seconds; values are float64 and always finite.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    EmptyFrame,
    FrameTooShort,
    MissingChannel,
    NonFiniteValue,
    NonUniformSampling,
)

DEFAULT_STEP = 60
STD_FLOOR = 1e-8
MISSING_TOKENS = frozenset({"", "nan", "NaN", "NAN"})
TIME_COLUMNS = ("timestamp", "t", "time")


class GroupKind(str, enum.Enum):
    PV = "PV"
    LOAD = "Load"
    NODE = "Node"


@dataclass(frozen=True)
class ChannelGroup:
    kind: GroupKind
    channel_names: tuple[str, ...]


PV_GROUP = ChannelGroup(
    GroupKind.PV,
    ("irradiance", "pv_active_power", "pv_reactive_power", "pv_voltage", "pv_current"),
)
LOAD_GROUP = ChannelGroup(GroupKind.LOAD, ("net_active_power", "net_reactive_power"))
NODE_GROUP = ChannelGroup(GroupKind.NODE, ("voltage_magnitude", "phase_angle"))

# m1 / m2 / m3 feature partitions
MODEL_GROUPS: dict[str, ChannelGroup] = {"m1": PV_GROUP, "m2": LOAD_GROUP, "m3": NODE_GROUP}
HOUSE_SCHEMA = (PV_GROUP, LOAD_GROUP)
NODE_SCHEMA = (NODE_GROUP,)


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Uniformly sampled multichannel measurements.

    ``values`` has shape ``(length, n_channels)``; column ``j`` holds the
    channel ``names[j]``.
    """

    names: tuple[str, ...]
    values: np.ndarray
    start_time: int = 0
    step: int = DEFAULT_STEP

    def __post_init__(self) -> None:
        names = tuple(self.names)
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise ValueError(
                f"values shape {values.shape} does not match {len(names)} channel names"
            )
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names in {names}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not np.all(np.isfinite(values)):
            row, col = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteValue(int(row), names[col])
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_time", int(self.start_time))
        object.__setattr__(self, "step", int(self.step))

    @classmethod
    def from_channels(
        cls, channels: dict[str, Sequence[float]] | Iterable[tuple[str, Sequence[float]]],
        start_time: int = 0, step: int = DEFAULT_STEP,
    ) -> "TimeSeriesFrame":
        items = list(channels.items()) if isinstance(channels, dict) else list(channels)
        lengths = {len(v) for _, v in items}
        if len(lengths) > 1:
            raise ValueError(f"channel lengths differ: {sorted(lengths)}")
        names = tuple(n for n, _ in items)
        if not items:
            return cls(names, np.zeros((0, 0)), start_time, step)
        values = np.column_stack([np.asarray(v, dtype=np.float64) for _, v in items])
        return cls(names, values, start_time, step)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.length

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time + self.step * np.arange(self.length, dtype=np.int64)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise MissingChannel(name) from None

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def select(self, names: Sequence[str]) -> "TimeSeriesFrame":
        cols = [self.index(n) for n in names]
        return TimeSeriesFrame(tuple(names), self.values[:, cols], self.start_time, self.step)

    def slice(self, start: int, stop: int | None = None) -> "TimeSeriesFrame":
        stop = self.length if stop is None else stop
        return TimeSeriesFrame(
            self.names, self.values[start:stop], self.start_time + start * self.step, self.step
        )

    def replace(self, **channels: np.ndarray) -> "TimeSeriesFrame":
        """Return a copy with the given channels overwritten."""
        values = self.values.copy()
        for name, col in channels.items():
            values[:, self.index(name)] = col
        return TimeSeriesFrame(self.names, values, self.start_time, self.step)


# -- CSV ---------------------------------------------------------------------

def _parse_timestamp(token: str) -> int:
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        as_float = float(token)
    except ValueError:
        dt = datetime.fromisoformat(token.replace("Z", "+00:00"))
        return int(round(dt.timestamp())) if dt.tzinfo else int(
            round((dt - datetime(1970, 1, 1)).total_seconds())
        )
    if not as_float.is_integer():
        raise ValueError(f"timestamp {token!r} is not a whole number of seconds")
    return int(as_float)


def _schema_names(schema: Sequence[ChannelGroup] | Sequence[str]) -> list[str]:
    names: list[str] = []
    for item in schema:
        names.extend(item.channel_names if isinstance(item, ChannelGroup) else [item])
    return names


def ingest_csv(
    path: str | Path,
    schema: Sequence[ChannelGroup] | Sequence[str],
    impute: bool = False,
) -> TimeSeriesFrame:
    """Load a measurement CSV into a frame.

    The first column holds time (``timestamp``, ``t`` or ``time``; integer
    seconds or ISO-8601). Every channel named by ``schema`` must be present;
    extra columns are ignored. Rows are sorted by time and must be uniformly spaced. Missing tokens
    (``""``/``NaN``) raise :class:`NonFiniteValue` unless ``impute`` is set,
    in which case the previous row's value is carried forward. Row numbers in
    errors are 1-based data rows (the header is not counted).
    """
    wanted = _schema_names(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFrame(f"{path}: empty file") from None
        if not header or header[0] not in TIME_COLUMNS:
            raise MissingChannel("timestamp")
        for name in wanted:
            if name not in header:
                raise MissingChannel(name)
        cols = [header.index(n) for n in wanted]
        rows = [r for r in reader if r]

    if not rows:
        raise EmptyFrame(f"{path}: no data rows")
    times = np.array([_parse_timestamp(r[0]) for r in rows], dtype=np.int64)
    raw = [[r[c].strip() for c in cols] for r in rows]
    order = np.argsort(times, kind="stable")
    times = times[order]
    raw = [raw[i] for i in order]

    values = np.empty((len(raw), len(wanted)), dtype=np.float64)
    for i, row in enumerate(raw):
        for j, token in enumerate(row):
            v = math.nan if token in MISSING_TOKENS else float(token)
            if not math.isfinite(v):
                if impute and i > 0:
                    v = values[i - 1, j]
                else:
                    raise NonFiniteValue(int(order[i]) + 1, wanted[j])
            values[i, j] = v

    if len(times) >= 2:
        gaps = np.diff(times)
        step = int(gaps[0])
        bad = np.flatnonzero(gaps != step)
        if step <= 0:
            raise NonUniformSampling(step, 2)
        if bad.size:
            raise NonUniformSampling(int(gaps[bad[0]]), int(bad[0]) + 2)
    else:
        step = DEFAULT_STEP
    return TimeSeriesFrame(tuple(wanted), values, int(times[0]), step)


def emit_csv(frame: TimeSeriesFrame, path: str | Path, extra: dict[str, object] | None = None) -> None:
    """Write a frame as CSV with integer-second timestamps.

    Floats are written with ``repr`` so a re-ingest is bit-exact.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", *frame.names])
        for t, row in zip(frame.timestamps.tolist(), frame.values.tolist()):
            writer.writerow([t, *(repr(v) for v in row)])


# -- standardization ---------------------------------------------------------

@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    std_devs: np.ndarray
    names: tuple[str, ...] = field(default=())

    def transform(self, x: np.ndarray | TimeSeriesFrame) -> np.ndarray:
        arr = x.values if isinstance(x, TimeSeriesFrame) else np.asarray(x, dtype=np.float64)
        return (arr - self.means) / self.std_devs

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * self.std_devs + self.means

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "means": self.means.tolist(),
            "std_devs": self.std_devs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["means"]), np.array(d["std_devs"]), tuple(d.get("names", ())))


def fit_standardizer(
    data: TimeSeriesFrame | np.ndarray, floor: float = STD_FLOOR
) -> Standardizer:
    """Per-channel sample mean and sample (n-1) standard deviation.

    Standard deviations below ``floor`` are replaced by ``floor`` so constant
    channels standardize to exactly zero.
    """
    if isinstance(data, TimeSeriesFrame):
        arr, names = data.values, data.names
    else:
        arr = np.asarray(data, dtype=np.float64)
        arr = arr.reshape(-1, 1) if arr.ndim == 1 else arr
        names = ()
    if arr.shape[0] < 2:
        raise EmptyFrame(f"need at least 2 rows to standardize, got {arr.shape[0]}")
    means = arr.mean(axis=0)
    stds = arr.std(axis=0, ddof=1)
    stds = np.where(stds < floor, floor, stds)
    return Standardizer(means, stds, tuple(names))


# -- windows -----------------------------------------------------------------

@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 15
    stride: int = 1

    def __post_init__(self) -> None:
        if self.window_len < 1 or self.stride < 1:
            raise ValueError(f"invalid window spec {self}")


class Windows(NamedTuple):
    windows: np.ndarray  # (n_windows, window_len, n_channels)
    targets: np.ndarray  # (n_windows,) timestep index right after each window


def window_count(length: int, window_len: int, stride: int = 1) -> int:
    return max(0, (length - window_len - 1) // stride + 1)


def make_windows(data: TimeSeriesFrame | np.ndarray, spec: WindowSpec = WindowSpec()) -> Windows:
    """Slice ``data`` into one-step-ahead estimation windows.

    Window ``i`` covers rows ``[i*stride, i*stride + window_len)`` and its
    target is the row right after it; windows without a target are dropped.
    """
    arr = data.values if isinstance(data, TimeSeriesFrame) else np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    n = arr.shape[0]
    if n < spec.window_len:
        raise FrameTooShort(f"frame of length {n} shorter than window {spec.window_len}")
    count = window_count(n, spec.window_len, spec.stride)
    starts = np.arange(count, dtype=np.int64) * spec.stride
    if count == 0:
        return Windows(np.empty((0, spec.window_len, arr.shape[1])), starts)
    view = np.lib.stride_tricks.sliding_window_view(arr, spec.window_len, axis=0)
    # sliding_window_view puts the window axis last
    windows = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
    return Windows(windows, starts + spec.window_len)
