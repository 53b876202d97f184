import numpy as np
import pytest

from relmech import CoordinateChange, DynamicEquation, JetPoint1, ReferenceFrame, SampleBox


def rotating_chart(omega: float = 1.0, name: str = "R") -> CoordinateChange:
    """Comoving coordinates of a frame rotating with angular velocity ``omega``."""
    c = {"omega": omega}
    return CoordinateChange.from_strings(
        ["q1*cos(omega*t) + q2*sin(omega*t)", "-q1*sin(omega*t) + q2*cos(omega*t)"],
        ["q1*cos(omega*t) - q2*sin(omega*t)", "q1*sin(omega*t) + q2*cos(omega*t)"],
        2,
        constants=c,
        name=name,
    )


def rotating_frame(omega: float = 1.0) -> ReferenceFrame:
    return ReferenceFrame.from_strings(["-omega*q2", "omega*q1"], {"omega": omega}, "rotating")


def free(m: int = 2) -> DynamicEquation:
    return DynamicEquation.from_strings(["0"] * m, label="free")


def random_points(m: int, n: int, seed: int = 0) -> JetPoint1:
    rng = np.random.default_rng(seed)
    return JetPoint1(rng.uniform(0, 2, n), rng.uniform(-2, 2, (m, n)), rng.uniform(-2, 2, (m, n)))


@pytest.fixture
def box():
    return SampleBox()


@pytest.fixture
def R():
    return rotating_chart()


@pytest.fixture
def rot():
    return rotating_frame()


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
