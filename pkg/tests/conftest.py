import numpy as np
import pytest
from hypothesis import settings

from mitbag.clifford import build_dirac_matrices

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def alg2():
    return build_dirac_matrices(2)


@pytest.fixture(scope="session")
def alg3():
    return build_dirac_matrices(3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, n, count):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
