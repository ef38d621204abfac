import numpy as np
import pytest

from pmean.adversaries import random_dirichlet
from pmean.model import Instance


@pytest.fixture
def two_halves():
    """n=2 with two goods valued (1/2, 1/2) by both agents."""
    return Instance.from_goods([[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture
def disjoint():
    return Instance.from_goods([[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def dirichlet8():
    return random_dirichlet(8, 32, seed=3)


def random_scaled(rng: np.random.Generator, n: int, T: int) -> Instance:
    V = rng.dirichlet(np.ones(T), size=n)
    return Instance(V)


ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> str:
    line = f"[criterion {number}] {'PASS' if passed else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
