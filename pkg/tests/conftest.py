import numpy as np
import pytest

from ddm import MarkovGrowthModel, MtdModel
from ddm.markov import check_conditions


def random_markov(rng, m, margin=0.03):
    """A valid Markov growth model with both moment conditions holding by ``margin``."""
    factors = np.sort(rng.uniform(0.9, 1.12, size=m))
    while m > 1 and np.min(np.diff(factors)) < 1e-3:
        factors = np.sort(rng.uniform(0.9, 1.12, size=m))
    p = rng.dirichlet(np.ones(m), size=m)
    g_bar = np.max(p @ factors)
    g_bar2 = np.max(p @ factors**2)
    r = max(g_bar, np.sqrt(g_bar2), 1.0) + margin + rng.uniform(0.0, 0.05)
    model = MarkovGrowthModel.build(factors, p, r - 1.0)
    rep = check_conditions(model)
    assert rep.a1_holds and rep.a2_holds
    return model


def random_mtd(rng, m=2, gamma=2, lam=None, margin=0.04):
    states = tuple(np.sort(rng.uniform(0.93, 1.08, size=m)) for _ in range(gamma))
    cross = tuple(tuple(rng.dirichlet(np.ones(m), size=m) for _ in range(gamma)) for _ in range(gamma))
    if lam is None:
        lam = rng.dirichlet(np.ones(gamma), size=gamma).T
    discounts = tuple(float(max(s.max(), 1.0) - 1.0 + margin) for s in states)
    return MtdModel(states, np.asarray(lam), cross, discounts)


@pytest.fixture
def two_state():
    """States (0.95, 1.05) with a persistent transition matrix, r = 1.1."""
    return MarkovGrowthModel.build([1.05, 0.95], [[0.8, 0.2], [0.3, 0.7]], 0.1)


@pytest.fixture
def coupled_mtd():
    p11 = np.array([[0.8, 0.2], [0.3, 0.7]])
    p12 = np.array([[0.6, 0.4], [0.1, 0.9]])
    p21 = np.array([[0.5, 0.5], [0.2, 0.8]])
    p22 = np.array([[0.9, 0.1], [0.4, 0.6]])
    return MtdModel(
        states=(np.array([0.96, 1.06]), np.array([0.97, 1.05])),
        lam=np.array([[0.7, 0.4], [0.3, 0.6]]),
        cross=((p11, p12), (p21, p22)),
        discounts=(0.1, 0.09),
    )


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion
# ---------------------------------------------------------------------------

ACCEPTANCE = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title
        self.notes = []

    def note(self, text):
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        detail = "; ".join(self.notes) if ok else f"{exc_type.__name__}: {exc}".splitlines()[0]
        line = f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'}  {self.title}  ({detail})"
        ACCEPTANCE[self.number] = line
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
