import math

import numpy as np
import pytest

from mrpbayes.catalog import SequenceData, StateSpace, sufficient_stats
from mrpbayes.prior import DirichletPrior, PriorSet, TransitionPrior

SPACE3 = StateSpace((4.5, 4.9, 5.3))


def make_sequence(states, times, censored=0.0):
    times = np.asarray(times, dtype=np.float64)
    return SequenceData(
        states=np.asarray(states), times=times, censored=censored,
        horizon=float(times.sum()) + censored, n_states=max(states) + 1 if len(states) else 1,
    )


def gig_prior(m, t_q, mean_log, q=0.5):
    """Hand-built prior for an m > 2 transition (c = m - 1, alpha0 = 2/m)."""
    return TransitionPrior(
        m=m, c=float(m - 1), alpha0=2.0 / m, alpha1=math.inf, q=q, t_q=t_q, mean_log=mean_log
    )


def uniform_priors(s, prior, gamma=None):
    gamma = np.ones((s, s)) if gamma is None else np.asarray(gamma, dtype=np.float64)
    return PriorSet(
        transitions=tuple(tuple(prior for _ in range(s)) for _ in range(s)),
        dirichlet=DirichletPrior(gamma),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def space3():
    return SPACE3


@pytest.fixture
def small_stats():
    # two states, every transition visited, no censored tail
    seq = make_sequence([0, 1, 0, 0, 1, 1, 0, 1, 1], [30, 50, 20, 40, 70, 25, 35, 60])
    return sufficient_stats(seq)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
