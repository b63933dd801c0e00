import numpy as np
import pytest

from mmfatlas.mesh import build_plane_mesh, build_sphere_mesh


@pytest.fixture(scope="session")
def plane_quad():
    return build_plane_mesh((-2.0, 2.0, -2.0, 2.0), 1.0, 4)


@pytest.fixture(scope="session")
def plane_tri():
    return build_plane_mesh((-2.0, 2.0, -2.0, 2.0), 1.5, 4, kind="tri")


@pytest.fixture(scope="session")
def sphere():
    return build_sphere_mesh(1.0, 0.6, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed once at the end of the session
ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    def record(number, passed, detail=""):
        ACCEPTANCE[number] = ("PASS" if passed else "FAIL", detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
