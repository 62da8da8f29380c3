import math
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrpbayes.catalog import StateSpace
from mrpbayes.forecast import (
    CspQuery,
    ForecastError,
    backtest_csv,
    backtest_one,
    csp,
    csp_posterior,
    csp_ratios,
    realized_pit,
    standard_horizons,
)
from mrpbayes.sampler import ChainOutput, GibbsConfig
from mrpbayes.simulate import TrueModel, generate_mrp, sequence_to_catalog, spm_model, tpm_model

P = np.array([[0.57, 0.27, 0.16], [0.58, 0.28, 0.14], [0.52, 0.32, 0.16]])


def _output(p, alpha, theta, n=1):
    s = p.shape[0]
    rep = lambda a: np.broadcast_to(a, (n, s, s)).copy()
    return ChainOutput(rep(p), rep(alpha), rep(theta), np.full(n, -1), np.full((n, s, s), np.nan), np.zeros(n, int))


def test_exponential_median_oracle():
    p = np.full((2, 2), 0.5)
    v = csp(p, np.ones((2, 2)), np.ones((2, 2)), 0, 0.0, math.log(2.0))
    np.testing.assert_allclose(v, [0.25, 0.25], rtol=1e-14)


def test_exponential_is_memoryless():
    p, a, th = P, np.ones((3, 3)), np.full((3, 3), 40.0)
    np.testing.assert_allclose(csp(p, a, th, 1, 0.0, 30.0), csp(p, a, th, 1, 500.0, 30.0), rtol=1e-12)


def test_limit_is_destination_law_given_survival():
    a = np.full((3, 3), 2.0)
    th = np.array([[10.0, 100.0, 100.0]] * 3)
    v = csp(P, a, th, 0, 50.0, math.inf)
    # after 50 days the fast (1,1) clock has almost surely rung
    w = P[0] * np.exp(-((50.0 / th[0]) ** 2))
    np.testing.assert_allclose(v, w / w.sum(), rtol=1e-12)


def test_underflowing_survival_keeps_other_states():
    a = np.full((3, 3), 3.0)
    th = np.array([[1.0, 500.0, 500.0]] * 3)
    v = csp(P, a, th, 0, 400.0, math.inf)
    assert v[0] == 0.0 and v.sum() == pytest.approx(1.0, abs=1e-12)


def test_incompatible_elapsed_time():
    with pytest.raises(ForecastError):
        csp(P, np.full((3, 3), 50.0), np.ones((3, 3)), 0, 1e7, 10.0)


params = st.tuples(
    st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
    st.lists(st.floats(0.5, 4.0), min_size=3, max_size=3),
    st.lists(st.floats(10.0, 1000.0), min_size=3, max_size=3),
    st.floats(0.0, 1500.0),
)


@settings(max_examples=80)
@given(params)
def test_normalised_and_monotone(args):
    prow, arow, trow, t0 = args
    p = np.tile(np.array(prow) / sum(prow), (3, 1))
    a, th = np.tile(arow, (3, 1)), np.tile(trow, (3, 1))
    grid = np.array([0.0, 1.0, 30.0, 365.0, 5000.0, math.inf])
    v = csp(p, a, th, 2, t0, grid)
    assert abs(v[:, -1].sum() - 1.0) < 1e-9
    assert np.all(np.diff(v, axis=1) >= -1e-15)
    assert np.all(v[:, 0] == 0.0)


@settings(max_examples=50)
@given(params, st.floats(0.01, 100.0))
def test_scale_equivariance(args, c):
    prow, arow, trow, t0 = args
    p = np.tile(np.array(prow) / sum(prow), (3, 1))
    a, th = np.tile(arow, (3, 1)), np.tile(trow, (3, 1))
    dx = np.array([5.0, 60.0, 700.0])
    np.testing.assert_allclose(
        csp(p, a, c * th, 0, c * t0, c * dx), csp(p, a, th, 0, t0, dx), rtol=1e-9, atol=1e-300
    )


def test_posterior_summary_shapes():
    out = _output(P, 1.2, 150.0, n=5)
    labels, grid = standard_horizons()
    res = csp_posterior(out, CspQuery(0, 30.0, tuple(grid)), 0.9, labels)
    assert res.mean.shape == (3, 10)
    np.testing.assert_allclose(res.lower, res.upper)
    assert res.column_labels()[6] == "Year"


def test_query_validation():
    with pytest.raises(ForecastError):
        CspQuery(0, -1.0, (1.0,))
    with pytest.raises(ForecastError):
        CspQuery(0, 0.0, (10.0, 5.0))


def test_tpm_ratios_flat():
    model = tpm_model(P, [0.9, 1.4, 2.1], [200.0, 260.0, 340.0])
    out = _output(model.p, model.alpha, model.theta)
    grid = tuple(standard_horizons()[1])
    for i in range(3):
        r = csp_ratios(out, CspQuery(i, 0.0, grid), "source-fixed")
        expected = P[i][:, None] / P[i][None, :]
        np.testing.assert_allclose(r.ratio, np.repeat(expected[..., None], len(grid), axis=2), rtol=1e-12)


def test_spm_ratios_one_with_equal_rows():
    p = np.tile(P[0], (3, 1))
    model = spm_model(p, [0.9, 1.4, 2.1], [200.0, 260.0, 340.0])
    out = _output(model.p, model.alpha, model.theta)
    for j in range(3):
        r = csp_ratios(out, CspQuery(j, 0.0, tuple(standard_horizons()[1])), "destination-fixed")
        np.testing.assert_allclose(r.ratio, 1.0, rtol=1e-12)


def test_ratio_missing_when_denominator_vanishes():
    p = np.array([[0.5, 0.5], [0.5, 0.5]])
    out = _output(p, np.full((2, 2), 1.0), np.array([[1.0, 1e6], [1.0, 1.0]]))
    r = csp_ratios(out, CspQuery(0, 0.0, (1e-310, 10.0)), "source-fixed")
    assert np.isnan(r.ratio[0, 1, 0]) and np.isfinite(r.ratio[0, 1, 1])


def test_realized_pit():
    assert realized_pit(np.array([0.5, 0.3, 0.2]), 1, 0.1) == pytest.approx(0.6)
    assert realized_pit(np.array([0.5, 0.3, 0.2]), 0, 0.25) == pytest.approx(0.25)


def test_backtest_one(tmp_path):
    space = StateSpace((4.5, 4.9, 5.3))
    seq = generate_mrp(TrueModel(P, 1.3, 100.0), 40000.0, np.random.default_rng(5))
    cat = sequence_to_catalog(seq, space)
    end = datetime(2080, 1, 1)
    cfg = GibbsConfig(n_iter=300, n_burnin=100, thin=2, n_chains=1, seed=1)
    res = backtest_one(cat, space, end, 2, cfg)
    assert res.status == "ok"
    assert 0.0 <= res.pit <= 1.0
    j, k = res.csp.marked
    assert j == res.realized_state
    assert res.csp.horizons[k] == pytest.approx(res.realized_delay)
    skipped = backtest_one(cat, space, datetime(2000, 1, 2), 2, cfg)
    assert skipped.status == "skipped"
    backtest_csv([res, skipped], tmp_path / "b.csv")
    text = (tmp_path / "b.csv").read_text()
    assert "[" in text and "skipped" in text
