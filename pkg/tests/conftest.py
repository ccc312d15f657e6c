import numpy as np
import pytest
from hypothesis import settings

from dgeit.dgcore import DgSpace
from dgeit.mesh import build_mesh

settings.register_profile("dgeit", max_examples=30, deadline=None)
settings.load_profile("dgeit")

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (passed, detail); echoed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def unit_space():
    return DgSpace(build_mesh((0.0, 1.0, 0.0, 1.0), 4, 4))


@pytest.fixture(scope="session")
def square_space():
    return DgSpace(build_mesh((-1.0, 1.0, -1.0, 1.0), 8, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
