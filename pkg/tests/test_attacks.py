import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvanomaly.attacks import (
    AttackKind,
    AttackLabels,
    AttackPlan,
    AttackSpec,
    apply_attacks,
    apply_curtailment,
    apply_disconnect,
    apply_reverse_power_flow,
    apply_voltvar,
    default_intervals,
    four_attack_day,
    select_houses,
)
from pvanomaly.errors import IntervalOutOfRange, InvalidFactor, InvalidPowerFactor
from pvanomaly.feeder import HOUSE_CHANNELS, Scenario, house_params
from pvanomaly.timeseries import TimeSeriesFrame

NOON = 720


def _house(pv_p, demand_p, pv_q=0.0, demand_q=0.0, n=1440):
    cols = {c: np.zeros(n) for c in HOUSE_CHANNELS}
    cols["pv_active_power"][:] = pv_p
    cols["pv_reactive_power"][:] = pv_q
    cols["net_active_power"][:] = demand_p - pv_p
    cols["net_reactive_power"][:] = demand_q - pv_q
    return TimeSeriesFrame.from_channels(cols)


@pytest.fixture(scope="module")
def one_house():
    sc = Scenario(seed=3, n_houses=1, pv_fraction=1.0, days=1)
    return sc


def _apply(kind, frame, sc, iv=(NOON, NOON + 30), **kw):
    spec = AttackSpec(kind, (iv,), 1.0, **kw)
    return apply_attacks([frame], spec, sc, seed=0)


def test_disconnect_arithmetic(one_house):
    frames, _, labels = _apply(AttackKind.DISCONNECT, _house(3.0, 2.0), one_house)
    f = frames[0]
    assert f.channel("net_active_power")[NOON] == pytest.approx(2.0)
    assert f.channel("net_active_power")[NOON - 1] == pytest.approx(-1.0)
    assert f.channel("pv_active_power")[NOON] == 0.0
    assert f.channel("pv_current")[NOON] == 0.0
    assert labels.kind[0, NOON] == AttackKind.DISCONNECT.code
    assert labels.kind[0, NOON - 1] == 0


def test_disconnect_at_midnight_only_labels(one_house):
    base = _house(0.0, 1.0)
    frames, _, labels = _apply(AttackKind.DISCONNECT, base, one_house, iv=(0, 30))
    np.testing.assert_array_equal(frames[0].values[:30], apply_attacks([base], [], one_house, 0)[0][0].values[:30])
    assert labels.attacked[0, :30].all()


def test_curtailment_halves(one_house):
    f = _apply(AttackKind.CURTAILMENT, _house(4.0, 1.0), one_house, curtail_factor=0.5)[0][0]
    assert f.channel("pv_active_power")[NOON] == 2.0
    assert f.channel("net_active_power")[NOON] == pytest.approx(-1.0)
    night = _apply(AttackKind.CURTAILMENT, _house(0.0, 1.0), one_house, curtail_factor=0.5)[0][0]
    assert night.channel("pv_active_power")[NOON] == 0.0
    assert night.channel("net_active_power")[NOON] == 1.0


def test_curtailment_stealth_case(default_scenario, default_run):
    houses, _ = default_run
    day = 7 * 1440
    iv = (day + NOON, day + NOON + 30)
    pv = next(i for i, hp in enumerate(house_params(default_scenario)) if hp.has_pv)
    mutated = apply_curtailment(houses, AttackSpec(AttackKind.CURTAILMENT, (iv,), curtail_factor=0.999),
                                default_scenario, 0)[0][pv]
    a, b = iv
    change = np.abs(mutated.channel("net_active_power")[a:b] - houses[pv].channel("net_active_power")[a:b])
    noise = np.std(np.diff(houses[pv].channel("net_active_power")[day:day + 300]))
    assert change.max() < noise


def test_voltvar_three_four_five(one_house):
    f = _apply(AttackKind.VOLT_VAR, _house(4.0, 1.0), one_house, power_factor=0.8)[0][0]
    assert f.channel("pv_reactive_power")[NOON] == pytest.approx(3.0)
    assert f.channel("pv_active_power")[NOON] == 4.0
    assert f.channel("net_reactive_power")[NOON] == pytest.approx(-3.0)
    same = _apply(AttackKind.VOLT_VAR, _house(4.0, 1.0), one_house, power_factor=1.0)[0][0]
    assert same.channel("pv_reactive_power")[NOON] == 0.0


def test_reverse_power_flow(one_house):
    base = _house(3.0, 2.0)
    f = _apply(AttackKind.REVERSE_POWER_FLOW, base, one_house)[0][0]
    assert f.channel("net_active_power")[NOON] == pytest.approx(-3.0)
    np.testing.assert_array_equal(f.channel("pv_active_power"), base.channel("pv_active_power"))
    np.testing.assert_array_equal(f.channel("irradiance"), base.channel("irradiance"))


@pytest.mark.parametrize("fn,kind", [
    (apply_disconnect, AttackKind.CURTAILMENT),
    (apply_curtailment, AttackKind.DISCONNECT),
    (apply_voltvar, AttackKind.DISCONNECT),
    (apply_reverse_power_flow, AttackKind.VOLT_VAR),
])
def test_wrapper_kind_check(fn, kind, one_house):
    with pytest.raises(ValueError):
        fn([_house(1, 1)], AttackSpec(kind, ((0, 1),)), one_house, 0)


def test_parameter_validation(one_house):
    h = [_house(1, 1)]
    with pytest.raises(InvalidFactor):
        apply_attacks(h, AttackSpec(AttackKind.CURTAILMENT, ((0, 1),), curtail_factor=1.5), one_house, 0)
    with pytest.raises(InvalidPowerFactor):
        apply_attacks(h, AttackSpec(AttackKind.VOLT_VAR, ((0, 1),), power_factor=0.0), one_house, 0)
    with pytest.raises(IntervalOutOfRange):
        apply_attacks(h, AttackSpec(AttackKind.DISCONNECT, ((1400, 1500),)), one_house, 0)
    with pytest.raises(IntervalOutOfRange):
        AttackSpec(AttackKind.DISCONNECT, ((5, 5),))
    with pytest.raises(IntervalOutOfRange):
        AttackSpec(AttackKind.DISCONNECT, ((0, 10), (5, 20)))
    with pytest.raises(ValueError):
        AttackSpec(AttackKind.DISCONNECT, ((0, 1),), penetration=0.0)


def test_overlapping_specs_rejected(one_house):
    specs = [AttackSpec(AttackKind.DISCONNECT, ((0, 10),)), AttackSpec(AttackKind.CURTAILMENT, ((5, 15),))]
    with pytest.raises(IntervalOutOfRange):
        apply_attacks([_house(1, 1)], specs, one_house, 0)


def test_full_penetration_node_drop(default_scenario, default_run):
    houses, node = default_run
    a = 7 * 1440 + NOON
    _, attacked, labels = apply_attacks(
        houses, AttackSpec(AttackKind.DISCONNECT, ((a, a + 30),)), default_scenario, 0)
    assert labels.attacked[:, a:a + 30].all()
    assert not labels.attacked[:, :a].any()
    assert np.all(attacked.channel("voltage_magnitude")[a:a + 30] < node.channel("voltage_magnitude")[a:a + 30])


def test_voltvar_step_in_reactive_channel(default_scenario, default_run):
    houses, _ = default_run
    a = 7 * 1440 + NOON
    frames, _, _ = apply_attacks(houses, AttackSpec(AttackKind.VOLT_VAR, ((a, a + 30),)), default_scenario, 0)
    pv = [i for i, hp in enumerate(house_params(default_scenario)) if hp.has_pv]
    q = np.sum([frames[i].channel("pv_reactive_power") for i in pv], axis=0)
    assert q[a - 1] == 0.0
    assert q[a] > 5.0


@pytest.mark.parametrize("p,count", [(0.25, 5), (0.5, 10), (0.75, 15), (1.0, 20), (0.01, 1)])
def test_select_houses_ceiling(p, count):
    assert len(select_houses(20, p, 9)) == count


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_select_houses_nested(n, seed):
    levels = [select_houses(n, p, seed) for p in (0.25, 0.5, 0.75, 1.0)]
    for small, big in zip(levels, levels[1:]):
        assert set(small) <= set(big)
    assert levels[-1] == list(range(n))


def test_penetration_quarter_mutates_five(default_scenario, default_run):
    houses, _ = default_run
    a = 7 * 1440 + NOON
    frames, _, labels = apply_attacks(
        houses, AttackSpec(AttackKind.REVERSE_POWER_FLOW, ((a, a + 30),), 0.25), default_scenario, 3)
    changed = [i for i in range(20)
               if not np.array_equal(frames[i].channel("net_active_power"), houses[i].channel("net_active_power"))]
    assert len(changed) == 5
    assert labels.attacked.any(axis=1).sum() == 5


def test_four_attack_day_schedule():
    specs = four_attack_day(7, 1440)
    assert [s.kind for s in specs] == [AttackKind.DISCONNECT, AttackKind.CURTAILMENT,
                                       AttackKind.REVERSE_POWER_FLOW, AttackKind.VOLT_VAR]
    day = 7 * 1440
    assert [s.intervals[0] for s in specs] == [(day + 600, day + 630), (day + 660, day + 690),
                                               (day + 720, day + 750), (day + 780, day + 810)]
    assert default_intervals(0, 96)[0] == (40, 42)


def test_labels_csv_round_trip(tmp_path, four_attack_run):
    _, _, labels = four_attack_run
    labels.to_csv(tmp_path / "labels.csv")
    back = AttackLabels.from_csv(tmp_path / "labels.csv")
    np.testing.assert_array_equal(back.kind, labels.kind)
    assert (back.start_time, back.step) == (labels.start_time, labels.step)


def test_plan_from_dict():
    plan = AttackPlan.from_dict({"seed": 1, "kind": "disconnect", "day": 2}, 1440)
    assert plan.specs[0].intervals[0] == (2 * 1440 + 600, 2 * 1440 + 630)
    plan = AttackPlan.from_dict({"seed": 1, "four_attack_day": 7, "penetration": 0.5}, 1440)
    assert len(plan.specs) == 4 and plan.specs[0].penetration == 0.5
    doc = plan.to_dict()
    assert AttackPlan.from_dict(doc, 1440).specs == plan.specs
    with pytest.raises(ValueError):
        AttackPlan.from_dict({"four_attack_day": 7}, 1440)
    spec = plan.specs[1]
    assert AttackSpec.from_dict(spec.to_dict()) == spec
    assert dataclasses.replace(spec, curtail_factor=0.3).curtail_factor == 0.3
