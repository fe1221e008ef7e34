import numpy as np
import pytest

from kgan.scorers import KINDS
from kgan.synthetic import random_kg
from kgan.tensor import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def toy_triples():
    # {(a,r,b), (a,r,c), (d,r,b)} with a=0, b=1, c=2, d=3
    return np.array([[0, 0, 1], [0, 0, 2], [3, 0, 1]])


@pytest.fixture
def toy_kg():
    return random_kg(n_entities=40, n_relations=6, n_triples=280, seed=7)


@pytest.fixture(params=KINDS)
def kind(request):
    return request.param


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL (or SKIP, when ``passed`` is None) line per criterion."""

    def record(number, passed, detail):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"[acceptance {number}] {status}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    seen = {line.split("]")[0] for line in ACCEPTANCE_LINES}
    lines = list(ACCEPTANCE_LINES)
    if "[acceptance 5" not in seen:
        lines.append("[acceptance 5] NOT RUN: marked slow; run `pytest -m slow` with "
                     "KGAN_WN11_DIR pointing at the WN11 benchmark")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("]"))):
        terminalreporter.write_line(line)
