import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mrpbayes.prior import (
    PriorError,
    PriorSet,
    TransitionPrior,
    b_hat,
    elicit_dirichlet_prior,
    elicit_priors,
    elicit_transition_prior,
    estimate_quantile,
    log_b_hat,
    log_prior_alpha,
)

from conftest import make_sequence


def test_b_hat_closed_form():
    assert b_hat(3.0, 1.0, 0.5, 2) == pytest.approx(1.0 / (math.sqrt(2.0) - 1.0), rel=1e-14)


@given(
    st.floats(0.1, 8.0), st.floats(1.0, 5000.0), st.floats(0.05, 0.95), st.integers(1, 200)
)
def test_b_hat_matches_direct_formula(alpha, t, q, m):
    direct = t**alpha / ((1.0 - q) ** (-1.0 / m) - 1.0)
    assume(np.isfinite(direct) and direct > 0)
    assert b_hat(alpha, t, q, m) == pytest.approx(direct, rel=1e-12)


@given(st.floats(0.3, 5.0), st.floats(1.0, 1000.0), st.floats(0.1, 0.9), st.integers(1, 50))
def test_b_hat_puts_prior_predictive_quantile_at_t(alpha, t, q, m):
    # P(X <= t) = 1 - (b / (b + t^alpha))^m once theta^-alpha ~ Gamma(m, b)
    lb = log_b_hat(alpha, t, q, m)
    log_ratio = lb - np.logaddexp(lb, alpha * math.log(t))
    assert -math.expm1(m * log_ratio) == pytest.approx(q, rel=1e-9)


def test_quantile_linear_rule():
    assert estimate_quantile([10, 20, 30, 40], 0.5) == 25.0
    assert estimate_quantile([10, 20, 30], 0.5) == 20.0


def test_rule_many_observations():
    times = [30.0, 60.0, 150.0, 200.0, 250.0]
    pr = elicit_transition_prior(times)
    assert (pr.m, pr.c, pr.alpha0, pr.alpha1, pr.q) == (5, 4.0, 0.4, math.inf, 0.5)
    assert pr.t_q == 150.0
    assert pr.mean_log == pytest.approx(np.log(times).mean())


def test_rule_two_observations():
    pr = elicit_transition_prior([50.0, 150.0])
    assert (pr.m, pr.c, pr.alpha0, pr.alpha1) == (2, 1.0, 2.0 / 3.0, math.inf)
    assert pr.t_q == 100.0


def test_rule_one_observation():
    pr = elicit_transition_prior([73.0])
    assert (pr.m, pr.c, pr.alpha0, pr.alpha1, pr.q, pr.t_q) == (1, 1.0, 2.0 / 3.0, 10.0, 0.5, 73.0)
    assert pr.log_gap == 0.0


def test_rule_no_observation_uses_all_historical_times():
    pr = elicit_transition_prior([], all_historical_times=[12.0, 400.0, 55.0])
    assert (pr.m, pr.c, pr.alpha0, pr.alpha1, pr.q) == (0, 1.0, 2.0 / 3.0, 10.0, 0.5)
    assert pr.t_range == (12.0, 400.0)
    assert pr.m_eff == 1


def test_rule_no_observation_needs_pool():
    with pytest.raises(PriorError):
        elicit_transition_prior([])


def test_propriety_repair_raises_q():
    pr = elicit_transition_prior([1.0, 1.0, 1.0, 100.0, 200.0])
    assert pr.q == pytest.approx(0.55)
    assert pr.q_repaired
    assert math.log(pr.t_q) > pr.mean_log


def test_unrepairable_prior():
    with pytest.raises(PriorError, match="proper"):
        elicit_transition_prior([5.0, 5.0, 5.0])


def test_improper_prior_rejected_directly():
    with pytest.raises(PriorError):
        TransitionPrior(m=4, c=3.0, alpha0=0.5, alpha1=math.inf, q=0.5, t_q=10.0, mean_log=3.0)


def test_dirichlet_floor():
    d = elicit_dirichlet_prior([[0, 3], [2, 5]])
    np.testing.assert_array_equal(d.gamma, [[1, 3], [2, 5]])
    np.testing.assert_allclose(d.mean, [[0.25, 0.75], [2 / 7, 5 / 7]])


def test_prior_set_roundtrip(tmp_path):
    seq = make_sequence([0, 0, 1, 1, 0, 0, 1, 0], [10, 20, 30, 40, 50, 60, 70])
    ps = elicit_priors(seq)
    ps.save(tmp_path / "p.json")
    back = PriorSet.load(tmp_path / "p.json")
    assert back.to_json() == ps.to_json()
    assert back[0, 0].alpha1 == ps[0, 0].alpha1


@pytest.mark.parametrize("m", [1, 2, 3, 10])
def test_log_prior_concave(m):
    times = np.geomspace(10, 500, m) if m > 1 else [50.0]
    pr = elicit_transition_prior(times)
    a = np.linspace(pr.alpha0 + 1e-3, min(pr.alpha1, 12.0) - 1e-3, 400)
    v = log_prior_alpha(a, pr)
    assert np.all(np.diff(v, 2) <= 1e-9)
    assert log_prior_alpha(pr.alpha0 - 0.01, pr) == -np.inf
