"""Two-bus feeder simulator for houses with rooftop PV.

Every house sits behind a bi-directional meter on a common point of
interconnect (the *node*). The node is fed from a stiff source through a
series impedance; its voltage phasor follows from the aggregate net
injection of all houses.

Sign conventions:

* ``pv_active_power`` / ``pv_reactive_power`` are generation injected by
  the inverter (positive = into the grid).
* ``net_active_power`` / ``net_reactive_power`` are metered import
  (positive = drawn from the grid), ``net = demand - pv``.
* Positive reactive injection raises the node voltage magnitude in this
  model (inductive feeder, X > 0).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidPowerFactor, PowerFlowDivergence, ZeroPeakLoad
from .timeseries import HOUSE_SCHEMA, NODE_GROUP, TimeSeriesFrame

SECONDS_PER_DAY = 86_400
POWER_FLOW_TOL = 1e-10
POWER_FLOW_MAX_ITER = 100

HOUSE_CHANNELS = tuple(n for g in HOUSE_SCHEMA for n in g.channel_names)
NODE_CHANNELS = NODE_GROUP.channel_names


@dataclass(frozen=True)
class FeederParams:
    source_voltage: complex = 1.0 + 0.0j
    series_impedance: complex = 0.01 + 0.05j
    base_power: float = 0.1  # MVA
    base_voltage: float = 0.24  # kV

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_voltage", complex(self.source_voltage))
        object.__setattr__(self, "series_impedance", complex(self.series_impedance))
        z = self.series_impedance
        if abs(self.source_voltage) <= 0:
            raise ValueError("source voltage magnitude must be positive")
        if z.real < 0 or z.imag < 0 or z == 0:
            raise ValueError(f"invalid series impedance {z}")
        if self.base_power <= 0 or self.base_voltage <= 0:
            raise ValueError("base power and voltage must be positive")

    @property
    def base_kw(self) -> float:
        return self.base_power * 1000.0


@dataclass(frozen=True)
class WeatherParams:
    sunrise: float = 6.0  # hours
    sunset: float = 20.0
    clear_sky_peak: float = 900.0  # W/m^2
    cloud_event_rate: float = 0.25  # events per daylight hour
    cloud_depth: float = 0.6
    cloud_mean_minutes: float = 12.0
    noise_std: float = 8.0  # irradiance sensor noise, W/m^2

    def __post_init__(self) -> None:
        if not 0 <= self.sunrise < self.sunset <= 24:
            raise ValueError("need 0 <= sunrise < sunset <= 24")
        if self.clear_sky_peak < 0 or not 0 <= self.cloud_depth <= 1:
            raise ValueError("invalid irradiance parameters")


@dataclass(frozen=True)
class HouseParams:
    has_pv: bool
    panel_rating: float  # kW
    base_load: float  # kW
    morning_amp: float
    morning_hour: float
    evening_amp: float
    evening_hour: float
    noise_std: float  # kW, AR(1) stationary std
    load_power_factor: float
    service_impedance: complex  # per-unit on the feeder base


@dataclass(frozen=True)
class Scenario:
    seed: int
    n_houses: int = 20
    pv_fraction: float = 0.5
    days: int = 8
    step: int = 60
    feeder: FeederParams = field(default_factory=FeederParams)
    weather: WeatherParams = field(default_factory=WeatherParams)
    pv_power_factor: float = 1.0
    load_profiles: tuple[HouseParams, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_houses < 1 or self.days < 1:
            raise ValueError("n_houses and days must be >= 1")
        if not 0 <= self.pv_fraction <= 1:
            raise ValueError("pv_fraction must lie in [0, 1]")
        if self.step <= 0 or SECONDS_PER_DAY % self.step:
            raise ValueError("step must be a positive divisor of one day")
        if self.load_profiles is not None and len(self.load_profiles) != self.n_houses:
            raise ValueError("load_profiles must have one entry per house")

    @property
    def steps_per_day(self) -> int:
        return SECONDS_PER_DAY // self.step

    @property
    def length(self) -> int:
        return self.days * self.steps_per_day

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["feeder"] = _complex_to_json(asdict(self.feeder))
        d["weather"] = asdict(self.weather)
        if self.load_profiles is not None:
            d["load_profiles"] = [_complex_to_json(asdict(h)) for h in self.load_profiles]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        if "seed" not in d:
            raise ValueError("scenario must specify 'seed'")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        kw = dict(d)
        if not isinstance(kw["seed"], int) or isinstance(kw["seed"], bool):
            raise ValueError("seed must be an integer")
        if "feeder" in kw:
            kw["feeder"] = FeederParams(**_complex_from_json(kw["feeder"]))
        if "weather" in kw:
            kw["weather"] = WeatherParams(**kw["weather"])
        if kw.get("load_profiles") is not None:
            kw["load_profiles"] = tuple(
                HouseParams(**_complex_from_json(h)) for h in kw["load_profiles"]
            )
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _complex_to_json(d: dict) -> dict:
    return {k: ([v.real, v.imag] if isinstance(v, complex) else v) for k, v in d.items()}


def _complex_from_json(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if k in ("source_voltage", "series_impedance", "service_impedance") and isinstance(v, list):
            v = complex(v[0], v[1])
        out[k] = v
    return out


@dataclass(frozen=True)
class PhasorSample:
    magnitude: float
    angle: float  # degrees in (-180, 180]


# -- closed-form pieces -------------------------------------------------------

def solar_penetration(max_solar_power: float, total_grid_peak_load: float) -> float:
    """Ratio of peak solar generation to peak grid load."""
    if total_grid_peak_load <= 0:
        raise ZeroPeakLoad(f"peak load must be positive, got {total_grid_peak_load}")
    return max_solar_power / total_grid_peak_load


def pv_output(
    irradiance: float | np.ndarray,
    panel_rating: float | np.ndarray,
    power_factor: float = 1.0,
    leading: bool = False,
) -> tuple[Any, Any]:
    """Active and reactive inverter output for a given irradiance.

    ``P = rating * min(1, G/1000)``; ``Q = P * tan(arccos(pf))``, injected
    (positive) when lagging and absorbed when ``leading``.
    """
    if not 0 < abs(power_factor) <= 1:
        raise InvalidPowerFactor(f"power factor must lie in (0, 1], got {power_factor}")
    g = np.asarray(irradiance, dtype=np.float64)
    if np.any(g < 0):
        raise ValueError("irradiance must be non-negative")
    p = np.asarray(panel_rating, dtype=np.float64) * np.minimum(1.0, g / 1000.0)
    pf = abs(power_factor)
    q = p * (math.sqrt(1.0 - pf * pf) / pf) * (-1.0 if leading else 1.0)
    if p.ndim == 0:
        return float(p), float(q)
    return p, q


def reactive_for_power_factor(p: np.ndarray, power_factor: float) -> np.ndarray:
    if not 0 < power_factor <= 1:
        raise InvalidPowerFactor(f"power factor must lie in (0, 1], got {power_factor}")
    return p * (math.sqrt(1.0 - power_factor**2) / power_factor)


def solve_two_bus_many(
    net_injection: np.ndarray,
    feeder: FeederParams = FeederParams(),
    tol: float = POWER_FLOW_TOL,
    max_iter: int = POWER_FLOW_MAX_ITER,
) -> np.ndarray:
    """Vectorized Gauss fixed point for the node voltage.

    Solves ``V = Vs - Z * conj(S_drawn / V)`` with ``S_drawn = -injection``
    for each element, starting from the source voltage (high-voltage root).
    Returns complex per-unit voltages.
    """
    s_drawn = -np.asarray(net_injection, dtype=np.complex128)
    vs, z = feeder.source_voltage, feeder.series_impedance
    v = np.full(s_drawn.shape, vs, dtype=np.complex128)
    for _ in range(max_iter):
        v_next = vs - z * np.conj(s_drawn / v)
        if not np.all(np.isfinite(v_next)):
            break
        done = np.abs(v_next - v) < tol
        v = v_next
        if np.all(done):
            return v
    raise PowerFlowDivergence(
        f"two-bus fixed point did not converge in {max_iter} iterations"
    )


def phasor(v: complex | np.ndarray) -> tuple[Any, Any]:
    mag = np.abs(v)
    ang = np.degrees(np.angle(v))
    ang = np.where(ang <= -180.0, ang + 360.0, ang)
    return mag, ang


def solve_two_bus(net_injection: complex, feeder: FeederParams = FeederParams(), **kw: Any) -> PhasorSample:
    v = solve_two_bus_many(np.array([net_injection]), feeder, **kw)[0]
    mag, ang = phasor(v)
    return PhasorSample(float(mag), float(ang))


# -- stochastic drivers ------------------------------------------------------

def _child_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def house_params(scenario: Scenario) -> tuple[HouseParams, ...]:
    """Per-house parameters; explicit ``load_profiles`` win over seeded draws."""
    if scenario.load_profiles is not None:
        return scenario.load_profiles
    rng = _child_rngs(scenario.seed, 2)[1]
    n = scenario.n_houses
    n_pv = int(round(scenario.pv_fraction * n))
    pv_set = set(rng.permutation(n)[:n_pv].tolist())
    out = []
    for k in range(n):
        out.append(HouseParams(
            has_pv=k in pv_set,
            panel_rating=float(rng.uniform(3.0, 6.0)),
            base_load=float(rng.uniform(0.3, 0.8)),
            morning_amp=float(rng.uniform(0.4, 1.4)),
            morning_hour=float(rng.uniform(6.5, 8.5)),
            evening_amp=float(rng.uniform(0.8, 2.4)),
            evening_hour=float(rng.uniform(18.0, 20.5)),
            noise_std=float(rng.uniform(0.05, 0.15)),
            load_power_factor=float(rng.uniform(0.9, 0.97)),
            service_impedance=complex(rng.uniform(0.08, 0.12), rng.uniform(0.04, 0.06)),
        ))
    return tuple(out)


def irradiance_profile(
    weather: WeatherParams, days: int, step: int, rng: np.random.Generator
) -> np.ndarray:
    """True plane-of-array irradiance: clamped sine times cloud attenuation."""
    spd = SECONDS_PER_DAY // step
    hours = (np.arange(days * spd) % spd) * step / 3600.0
    span = weather.sunset - weather.sunrise
    shape = np.sin(np.pi * (hours - weather.sunrise) / span)
    daylight = (hours > weather.sunrise) & (hours < weather.sunset)
    clear = np.where(daylight, weather.clear_sky_peak * np.clip(shape, 0.0, None), 0.0)

    day_factor = np.repeat(rng.uniform(0.85, 1.0, size=days), spd)
    cover = np.zeros_like(clear)
    n_events = rng.poisson(weather.cloud_event_rate * span * days)
    for _ in range(n_events):
        day = rng.integers(days)
        start_h = rng.uniform(weather.sunrise, weather.sunset)
        dur_steps = max(1, int(round(rng.exponential(weather.cloud_mean_minutes) * 60 / step)))
        depth = weather.cloud_depth * rng.uniform(0.3, 1.0)
        i0 = day * spd + int(start_h * 3600 / step)
        i1 = min(i0 + dur_steps, (day + 1) * spd)
        cover[i0:i1] = np.maximum(cover[i0:i1], depth)
    return clear * day_factor * (1.0 - cover)


def load_profile(hp: HouseParams, days: int, step: int, rng: np.random.Generator) -> np.ndarray:
    """House demand in kW: base + morning/evening bumps + AR(1) noise."""
    spd = SECONDS_PER_DAY // step
    n = days * spd
    hours = (np.arange(n) % spd) * step / 3600.0
    bumps = hp.morning_amp * np.exp(-0.5 * ((hours - hp.morning_hour) / 1.0) ** 2)
    bumps += hp.evening_amp * np.exp(-0.5 * ((hours - hp.evening_hour) / 1.5) ** 2)
    phi = 0.98 ** (step / 60.0)
    eps = rng.normal(0.0, hp.noise_std * math.sqrt(1.0 - phi * phi), size=n)
    x0 = rng.normal(0.0, hp.noise_std)
    ar, _ = lfilter([1.0], [1.0, -phi], eps, zi=[phi * x0])
    return np.maximum(0.05, hp.base_load + bumps + ar)


# -- electrical assembly -------------------------------------------------------

def node_voltage(house_frames: Sequence[TimeSeriesFrame], feeder: FeederParams) -> np.ndarray:
    """Complex node voltage from the houses' metered net power."""
    net_p = np.sum([f.channel("net_active_power") for f in house_frames], axis=0)
    net_q = np.sum([f.channel("net_reactive_power") for f in house_frames], axis=0)
    injection = -(net_p + 1j * net_q) / feeder.base_kw
    return solve_two_bus_many(injection, feeder)


def refresh_electrical(
    house_frames: Sequence[TimeSeriesFrame], scenario: Scenario
) -> tuple[list[TimeSeriesFrame], TimeSeriesFrame]:
    """Recompute node phasor, PV terminal voltage and PV current.

    Only the power channels are read, so any mutation of them (attacks) is
    propagated consistently through the power flow.
    """
    feeder = scenario.feeder
    params = house_params(scenario)
    v_node = node_voltage(house_frames, feeder)
    mag, ang = phasor(v_node)
    base_v = feeder.base_voltage * 1000.0
    out = []
    for hp, f in zip(params, house_frames):
        s_drawn = (f.channel("net_active_power") + 1j * f.channel("net_reactive_power")) / feeder.base_kw
        v_local = np.abs(v_node - hp.service_impedance * np.conj(s_drawn / v_node)) * base_v
        s_pv = np.hypot(f.channel("pv_active_power"), f.channel("pv_reactive_power"))
        if hp.has_pv:
            volts = v_local
            amps = s_pv * 1000.0 / v_local
        else:
            volts = np.zeros_like(v_local)
            amps = np.zeros_like(v_local)
        out.append(f.replace(pv_voltage=volts, pv_current=amps))
    node = TimeSeriesFrame(NODE_CHANNELS, np.column_stack([mag, ang]), 0, scenario.step)
    return out, node


def simulate(scenario: Scenario) -> tuple[list[TimeSeriesFrame], TimeSeriesFrame]:
    """Generate a normal-operation dataset.

    Returns one frame per house (PV and load channels) and the node frame
    (voltage magnitude in pu, phase angle in degrees). Identical scenarios
    give bit-identical frames.
    """
    params = house_params(scenario)
    rngs = _child_rngs(scenario.seed, 2 + scenario.n_houses)
    weather_rng, house_rngs = rngs[0], rngs[2:]
    g_true = irradiance_profile(scenario.weather, scenario.days, scenario.step, weather_rng)
    pf = scenario.pv_power_factor

    frames = []
    for hp, rng in zip(params, house_rngs):
        demand = load_profile(hp, scenario.days, scenario.step, rng)
        demand_q = reactive_for_power_factor(demand, hp.load_power_factor)
        sensor = rng.normal(0.0, scenario.weather.noise_std, size=g_true.shape)
        if hp.has_pv:
            pv_p, pv_q = pv_output(g_true, hp.panel_rating, pf)
            irr = np.where(g_true > 0, np.maximum(0.0, g_true + sensor), 0.0)
        else:
            pv_p = np.zeros_like(g_true)
            pv_q = np.zeros_like(g_true)
            irr = np.zeros_like(g_true)
        zeros = np.zeros_like(g_true)
        values = np.column_stack([irr, pv_p, pv_q, zeros, zeros, demand - pv_p, demand_q - pv_q])
        frames.append(TimeSeriesFrame(HOUSE_CHANNELS, values, 0, scenario.step))
    return refresh_electrical(frames, scenario)


def house_demand(frame: TimeSeriesFrame) -> tuple[np.ndarray, np.ndarray]:
    """Recover the house's own demand (P, Q) from meter and PV channels."""
    return (
        frame.channel("net_active_power") + frame.channel("pv_active_power"),
        frame.channel("net_reactive_power") + frame.channel("pv_reactive_power"),
    )
