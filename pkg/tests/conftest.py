import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dnmaps.grid import assemble, build_chain, build_rectangle

settings.register_profile(
    "dnmaps", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("dnmaps")


@pytest.fixture(scope="session")
def chain4():
    return assemble(build_chain(4, 1.0), 0.0)


@pytest.fixture(scope="session")
def square6():
    return assemble(build_rectangle(6, 6, 1 / 6), 0.0)


@pytest.fixture(scope="session")
def shared_eig_model():
    """3x3 cell rectangle, h=1, V=24/7 at the first interior node.

    A_D and A_N then share the eigenvalue 4 exactly.
    """
    dom = build_rectangle(3, 3, 1.0)
    V = np.zeros(dom.n_nodes)
    V[dom.interior[0]] = 24 / 7
    return assemble(dom, V)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines, one per criterion, after the run."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
