import pytest

from mrsim import CoefficientSpec, ConstraintSpec, InitialLawSpec, TimeGrid

_CRITERIA = []


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    _CRITERIA.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def point(x):
    return InitialLawSpec("point", (x,))


@pytest.fixture
def closed_form():
    """b = -1, sigma = 0, xi = 0, identity h: K_t = t exactly."""
    return CoefficientSpec(theta=(-1.0, 0.0, 0.0), eta=(0.0, 0.0, 0.0), initial=point(0.0))


@pytest.fixture
def ou():
    return CoefficientSpec(theta=(0.0, -1.0, 0.0), eta=(1.0, 0.0, 0.0), initial=point(0.0))


@pytest.fixture
def ou_meanfield():
    return CoefficientSpec(theta=(0.0, -1.0, 0.5), eta=(1.0, 0.0, 0.0),
                           initial=InitialLawSpec("gaussian", (1.0, 0.5)))


@pytest.fixture
def sine_model():
    return CoefficientSpec(theta=(-1.0, -1.0, 0.5), eta=(1.0, 0.0, 0.0),
                           constraint=ConstraintSpec("sine", 0.5),
                           initial=InitialLawSpec("gaussian", (1.0, 0.5)))


@pytest.fixture
def unit_grid():
    return TimeGrid(1.0, 0.01)
