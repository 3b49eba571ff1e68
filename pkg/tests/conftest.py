import contextlib
import os
import time

import numpy as np
import pytest

from pvanomaly.attacks import apply_attacks, four_attack_day
from pvanomaly.feeder import Scenario, simulate


@pytest.fixture(scope="session")
def small_scenario():
    return Scenario(seed=11, n_houses=4, days=2)


@pytest.fixture(scope="session")
def small_run(small_scenario):
    return simulate(small_scenario)


@pytest.fixture(scope="session")
def default_scenario():
    return Scenario(seed=42)


@pytest.fixture(scope="session")
def default_run(default_scenario):
    return simulate(default_scenario)


@pytest.fixture(scope="session")
def four_attack_run(default_scenario, default_run):
    houses, _ = default_run
    specs = four_attack_day(7, default_scenario.steps_per_day)
    return apply_attacks(houses, specs, default_scenario, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_report_header(config):
    from pvanomaly import kernels

    return f"pvanomaly kernels backend: {kernels.BACKEND} (PVANOMALY_PURE_PYTHON={os.environ.get('PVANOMALY_PURE_PYTHON', '')})"


# (criterion, part, passed, seconds, detail) recorded by the acceptance suite
ACCEPTANCE: list[tuple[int, str, bool, float, str]] = []


@pytest.fixture
def criterion():
    """Context manager that records one acceptance check and its runtime budget."""

    @contextlib.contextmanager
    def check(number: int, part: str, budget_s: float | None = None):
        t0 = time.perf_counter()
        try:
            yield
            elapsed = time.perf_counter() - t0
            assert budget_s is None or elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
        except Exception as exc:
            first = (str(exc) or type(exc).__name__).splitlines()[0]
            ACCEPTANCE.append((number, part, False, time.perf_counter() - t0, first))
            raise
        ACCEPTANCE.append((number, part, True, elapsed, ""))

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted({c[0] for c in ACCEPTANCE}):
        parts = [c for c in ACCEPTANCE if c[0] == number]
        ok = all(c[2] for c in parts)
        detail = "; ".join(f"{c[1]}: {'ok' if c[2] else 'FAILED ' + c[4]}" for c in parts)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  ({detail})")
