"""Shared fixtures and the acceptance summary printed at the end of the run."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from surrex.blackboxes import MIXED_SPACE, simulate_mixed
from surrex.doe import lhs_sample

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record_acceptance(key: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[key] = (bool(ok), detail)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")


@pytest.fixture(scope="session")
def mixed_train():
    return simulate_mixed(lhs_sample(MIXED_SPACE, 40, 11), 1)


@pytest.fixture(scope="session")
def mixed_valid():
    return simulate_mixed(lhs_sample(MIXED_SPACE, 200, 12), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
