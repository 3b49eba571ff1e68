"""Cyber-physical PV attacks applied to a simulated normal dataset."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import IntervalOutOfRange, InvalidFactor, InvalidPowerFactor
from .feeder import Scenario, reactive_for_power_factor, refresh_electrical
from .timeseries import TimeSeriesFrame


class AttackKind(str, enum.Enum):
    DISCONNECT = "disconnect"
    CURTAILMENT = "curtailment"
    VOLT_VAR = "voltvar"
    REVERSE_POWER_FLOW = "reverse_power_flow"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "AttackKind":
        return _CODE_KINDS[code]


_KIND_CODES = {k: i + 1 for i, k in enumerate(AttackKind)}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


@dataclass(frozen=True)
class AttackSpec:
    """One attack class applied over a set of ``[start, end)`` timestep intervals."""

    kind: AttackKind
    intervals: tuple[tuple[int, int], ...]
    penetration: float = 1.0
    curtail_factor: float = 0.5
    power_factor: float = 0.8
    load_off_fraction: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AttackKind(self.kind))
        ivs = tuple(sorted((int(a), int(b)) for a, b in self.intervals))
        for a, b in ivs:
            if a < 0 or b <= a:
                raise IntervalOutOfRange(f"invalid interval [{a}, {b})")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 < b0:
                raise IntervalOutOfRange(f"overlapping intervals in {ivs}")
        object.__setattr__(self, "intervals", ivs)
        if not 0 < self.penetration <= 1:
            raise ValueError(f"penetration must lie in (0, 1], got {self.penetration}")

    @classmethod
    def from_dict(cls, d: dict[str, Any], steps_per_day: int | None = None) -> "AttackSpec":
        d = dict(d)
        params = d.pop("params", {}) or {}
        if "day" in d:
            if steps_per_day is None:
                raise ValueError("'day' scheduling needs the scenario step")
            day = d.pop("day")
            d.setdefault("intervals", default_intervals(day, steps_per_day))
        return cls(**d, **params)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "intervals": [list(iv) for iv in self.intervals],
            "penetration": self.penetration,
            "params": {
                "curtail_factor": self.curtail_factor,
                "power_factor": self.power_factor,
                "load_off_fraction": self.load_off_fraction,
            },
        }


def default_intervals(day: int, steps_per_day: int, n: int = 4) -> list[tuple[int, int]]:
    """Daytime on/off schedule: 30-min attacks every hour from 10:00."""
    per_min = steps_per_day / 1440
    out = []
    for i in range(n):
        start = day * steps_per_day + int(round((600 + 60 * i) * per_min))
        out.append((start, start + int(round(30 * per_min))))
    return out


def four_attack_day(day: int, steps_per_day: int, penetration: float = 1.0) -> list[AttackSpec]:
    """All four attacks on one day, one 30-min interval each."""
    order = [AttackKind.DISCONNECT, AttackKind.CURTAILMENT,
             AttackKind.REVERSE_POWER_FLOW, AttackKind.VOLT_VAR]
    ivs = default_intervals(day, steps_per_day)
    return [AttackSpec(k, (iv,), penetration) for k, iv in zip(order, ivs)]


def select_houses(n_houses: int, penetration: float, seed: int) -> list[int]:
    """Houses controlled by the attacker: ``ceil(p * n)`` after a seeded shuffle.

    The chosen sets are nested across penetration levels for a fixed seed.
    """
    count = min(n_houses, math.ceil(penetration * n_houses - 1e-9))
    perm = np.random.default_rng(seed).permutation(n_houses)
    return sorted(int(i) for i in perm[:count])


@dataclass
class AttackLabels:
    """Per-house, per-timestep ground truth; ``kind`` is 0 when not attacked."""

    kind: np.ndarray  # (n_houses, length) int8 codes
    start_time: int = 0
    step: int = 60

    @classmethod
    def empty(cls, n_houses: int, length: int, start_time: int = 0, step: int = 60) -> "AttackLabels":
        return cls(np.zeros((n_houses, length), dtype=np.int8), start_time, step)

    @property
    def attacked(self) -> np.ndarray:
        return self.kind > 0

    @property
    def n_houses(self) -> int:
        return self.kind.shape[0]

    @property
    def length(self) -> int:
        return self.kind.shape[1]

    def to_csv(self, path: str | Path) -> None:
        ts = self.start_time + self.step * np.arange(self.length)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "house_id", "attacked", "kind"])
            for h in range(self.n_houses):
                for t, code in zip(ts.tolist(), self.kind[h].tolist()):
                    w.writerow([t, h, int(code > 0), AttackKind.from_code(code).value if code else ""])

    @classmethod
    def from_csv(cls, path: str | Path) -> "AttackLabels":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            return cls(np.zeros((0, 0), dtype=np.int8))
        houses = sorted({int(r["house_id"]) for r in rows})
        times = sorted({int(r["timestamp"]) for r in rows})
        step = times[1] - times[0] if len(times) > 1 else 60
        kind = np.zeros((len(houses), len(times)), dtype=np.int8)
        for r in rows:
            if r["kind"]:
                kind[int(r["house_id"]), (int(r["timestamp"]) - times[0]) // step] = AttackKind(r["kind"]).code
        return cls(kind, times[0], step)


def _validate(spec: AttackSpec) -> None:
    if spec.kind is AttackKind.CURTAILMENT and not 0 < spec.curtail_factor < 1:
        raise InvalidFactor(f"curtail_factor must lie in (0, 1), got {spec.curtail_factor}")
    if spec.kind is AttackKind.VOLT_VAR and not 0 < spec.power_factor <= 1:
        raise InvalidPowerFactor(f"attacked power factor must lie in (0, 1], got {spec.power_factor}")
    if spec.kind is AttackKind.REVERSE_POWER_FLOW and not 0 < spec.load_off_fraction <= 1:
        raise InvalidFactor(f"load_off_fraction must lie in (0, 1], got {spec.load_off_fraction}")


def _mutate(frame: TimeSeriesFrame, spec: AttackSpec, mask: np.ndarray) -> TimeSeriesFrame:
    pv_p = frame.channel("pv_active_power").copy()
    pv_q = frame.channel("pv_reactive_power").copy()
    net_p = frame.channel("net_active_power").copy()
    net_q = frame.channel("net_reactive_power").copy()
    m = mask
    if spec.kind is AttackKind.DISCONNECT:
        net_p[m] += pv_p[m]
        net_q[m] += pv_q[m]
        pv_p[m] = 0.0
        pv_q[m] = 0.0
    elif spec.kind is AttackKind.CURTAILMENT:
        new_p = pv_p[m] * spec.curtail_factor
        net_p[m] += pv_p[m] - new_p
        pv_p[m] = new_p
    elif spec.kind is AttackKind.VOLT_VAR:
        new_q = reactive_for_power_factor(pv_p[m], spec.power_factor)
        net_q[m] += pv_q[m] - new_q
        pv_q[m] = new_q
    else:
        keep = 1.0 - spec.load_off_fraction
        demand_p = net_p[m] + pv_p[m]
        demand_q = net_q[m] + pv_q[m]
        net_p[m] = demand_p * keep - pv_p[m]
        net_q[m] = demand_q * keep - pv_q[m]
    return frame.replace(
        pv_active_power=pv_p, pv_reactive_power=pv_q,
        net_active_power=net_p, net_reactive_power=net_q,
    )


def apply_attacks(
    house_frames: Sequence[TimeSeriesFrame],
    specs: AttackSpec | Iterable[AttackSpec],
    scenario: Scenario,
    seed: int,
    labels: AttackLabels | None = None,
) -> tuple[list[TimeSeriesFrame], TimeSeriesFrame, AttackLabels]:
    """Apply one or more attack specs and recompute the electrical channels.

    Returns mutated house frames, the recomputed node frame and labels.
    Specs may not overlap in time on the same house.
    """
    specs = [specs] if isinstance(specs, AttackSpec) else list(specs)
    n, length = len(house_frames), house_frames[0].length
    if labels is None:
        labels = AttackLabels.empty(n, length, house_frames[0].start_time, house_frames[0].step)
    else:
        labels = AttackLabels(labels.kind.copy(), labels.start_time, labels.step)
    frames = list(house_frames)
    for spec in specs:
        _validate(spec)
        window = np.zeros(length, dtype=bool)
        for a, b in spec.intervals:
            if b > length:
                raise IntervalOutOfRange(f"interval [{a}, {b}) exceeds frame length {length}")
            window[a:b] = True
        for h in select_houses(n, spec.penetration, seed):
            if np.any(labels.kind[h, window]):
                raise IntervalOutOfRange(f"attack intervals overlap on house {h}")
            labels.kind[h, window] = spec.kind.code
            frames[h] = _mutate(frames[h], spec, window)
    frames, node = refresh_electrical(frames, scenario)
    return frames, node, labels


def apply_disconnect(house_frames, spec, scenario, seed):
    """Mass PV disconnect: PV output and current drop to zero."""
    if spec.kind is not AttackKind.DISCONNECT:
        raise ValueError("spec is not a disconnect attack")
    return apply_attacks(house_frames, spec, scenario, seed)


def apply_curtailment(house_frames, spec, scenario, seed):
    """PV active power scaled by ``curtail_factor``."""
    if spec.kind is not AttackKind.CURTAILMENT:
        raise ValueError("spec is not a curtailment attack")
    return apply_attacks(house_frames, spec, scenario, seed)


def apply_voltvar(house_frames, spec, scenario, seed):
    """Inverter power factor forced to ``power_factor``; P unchanged."""
    if spec.kind is not AttackKind.VOLT_VAR:
        raise ValueError("spec is not a volt-var attack")
    return apply_attacks(house_frames, spec, scenario, seed)


def apply_reverse_power_flow(house_frames, spec, scenario, seed):
    """House loads switched off by ``load_off_fraction``; PV untouched."""
    if spec.kind is not AttackKind.REVERSE_POWER_FLOW:
        raise ValueError("spec is not a reverse power flow attack")
    return apply_attacks(house_frames, spec, scenario, seed)


@dataclass(frozen=True)
class AttackPlan:
    """Contents of an ``attack.json`` file."""

    specs: tuple[AttackSpec, ...]
    seed: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict[str, Any], steps_per_day: int) -> "AttackPlan":
        if "seed" not in d:
            raise ValueError("attack config must specify 'seed'")
        if "attacks" in d:
            raw = d["attacks"]
        elif d.get("four_attack_day") is not None:
            return cls(tuple(four_attack_day(d["four_attack_day"], steps_per_day,
                                             d.get("penetration", 1.0))), int(d["seed"]))
        else:
            raw = [{k: v for k, v in d.items() if k != "seed"}]
        return cls(tuple(AttackSpec.from_dict(r, steps_per_day) for r in raw), int(d["seed"]))

    def to_dict(self) -> dict[str, Any]:
        return {"seed": self.seed, "attacks": [s.to_dict() for s in self.specs]}
