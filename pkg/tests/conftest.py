import numpy as np
import pytest

from semithermo.semigroup import MultiMap

FAMILIES = {
    "z2": ["z^2"],
    "z2_rot": ["z^2", "exp(0.7*i)*z^2"],
    "z3_pair": ["z^3", "0.7*z^3"],
    "z2_z3": ["z^2", "z^3"],
    "quartic": ["z^4 - 2*z^2", "z^4/64"],
    "basilica": ["z^2 - 1", "0.09*z^2"],
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def family(name: str) -> MultiMap:
    return MultiMap.parse(FAMILIES[name])

from hypothesis import settings  # noqa: E402

# compiled kernels make the first example slow
settings.register_profile("default", deadline=None)
settings.load_profile("default")

# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
