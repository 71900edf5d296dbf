from __future__ import annotations

import numpy as np
import pytest

from kborel.config import desk_config
from kborel.desk import GridConfig, desk_spec


@pytest.fixture(scope="session")
def spec():
    return desk_spec()


@pytest.fixture(scope="session")
def cfg():
    return desk_config()


@pytest.fixture(scope="session")
def coarse():
    """A cheaper discretisation for structural tests."""
    return GridConfig(n_inner=10, inner_ratio=0.25, n_outer=10, order=8, n_m=65, m_max=20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for result in sorted(RESULTS, key=lambda r: r.number):
        terminalreporter.write_line(result.line())
