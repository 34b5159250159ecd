import warnings

import pytest

from watermark import ModelParams, build_surface

# numba probes for TBB at import time on some hosts
warnings.filterwarnings("ignore", message=".*TBB.*")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def p1():
    return ModelParams(mu=0.05, sigma=0.2, r=0.1, K=1.0, a=1.0, b=0.5)


@pytest.fixture(scope="session")
def p2():
    return ModelParams(mu=0.05, sigma=0.2, r=0.1, K=1.0, a=1.0, b=1.5)


@pytest.fixture(scope="session")
def surf1(p1):
    return build_surface(p1)


@pytest.fixture(scope="session")
def surf2(p2):
    return build_surface(p2)


@pytest.fixture(scope="session", params=["p1", "p2"])
def surf(request, surf1, surf2):
    return {"p1": surf1, "p2": surf2}[request.param]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
