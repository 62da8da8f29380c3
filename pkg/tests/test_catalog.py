from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrpbayes.catalog import (
    CatalogError,
    EventRecord,
    SequenceData,
    StateSpace,
    build_sequence,
    classify_magnitude,
    load_sequence,
    read_catalog,
    save_sequence,
    split_catalog,
    sufficient_stats,
    transition_counts,
    truncate_catalog,
    write_catalog,
)

from conftest import SPACE3, make_sequence


@pytest.mark.parametrize(
    "mag,state", [(4.5, 0), (4.89, 0), (4.9, 1), (5.29, 1), (5.3, 2), (7.1, 2)]
)
def test_classify_boundaries(mag, state):
    assert classify_magnitude(mag, SPACE3) == state


def test_below_threshold_rejected():
    with pytest.raises(CatalogError, match="below completeness"):
        classify_magnitude(4.4, SPACE3)


@pytest.mark.parametrize("th", [(4.5,), (4.5, 4.5), (5.0, 4.5)])
def test_state_space_validation(th):
    with pytest.raises(CatalogError):
        StateSpace(th)


@given(st.lists(st.floats(4.5, 8.0), min_size=2, max_size=30))
def test_classification_monotone(mags):
    mags = sorted(mags)
    states = [classify_magnitude(m, SPACE3) for m in mags]
    assert states == sorted(states)


def _catalog(days, mags, start=datetime(1900, 1, 1)):
    return [
        EventRecord(start + timedelta(days=d), m, f"ev{k}") for k, (d, m) in enumerate(zip(days, mags))
    ]


def test_build_sequence_times_and_tail():
    cat = _catalog([0, 10, 35], [4.6, 5.0, 5.5])
    seq = build_sequence(cat, SPACE3, datetime(1900, 1, 1) + timedelta(days=50))
    assert seq.states.tolist() == [0, 1, 2]
    np.testing.assert_allclose(seq.times, [10, 25])
    assert seq.censored == pytest.approx(15)
    assert seq.horizon == pytest.approx(50)


def test_default_horizon_is_last_event():
    seq = build_sequence(_catalog([0, 10], [4.6, 5.0]), SPACE3)
    assert seq.censored == 0


def test_identical_timestamps_rejected():
    with pytest.raises(CatalogError, match="share a timestamp"):
        build_sequence(_catalog([0, 5, 5], [4.6, 5.0, 5.5]), SPACE3)


def test_missing_catalog(tmp_path):
    with pytest.raises(FileNotFoundError, match="catalog not found"):
        read_catalog(tmp_path / "absent.csv")


def test_bad_header(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("when,mag\n2000-01-01,5\n")
    with pytest.raises(CatalogError):
        read_catalog(p)


def test_catalog_roundtrip_sorted(tmp_path):
    cat = _catalog([20, 0, 7], [5.0, 4.6, 5.4])
    p = tmp_path / "c.csv"
    write_catalog(cat, p)
    back = read_catalog(p)
    assert [e.time for e in back] == sorted(e.time for e in cat)
    assert [e.magnitude for e in back] == [4.6, 5.4, 5.0]


def test_truncate_inclusive():
    cat = _catalog([0, 10, 20], [4.6, 5.0, 5.5])
    assert len(truncate_catalog(cat, datetime(1900, 1, 11))) == 2


def test_sequence_json_roundtrip(tmp_path):
    seq = make_sequence([0, 2, 1], [3.5, 9.0], censored=4.0)
    save_sequence(seq, tmp_path / "s.json")
    back = load_sequence(tmp_path / "s.json")
    assert back.states.tolist() == seq.states.tolist()
    np.testing.assert_array_equal(back.times, seq.times)
    assert back.censored == seq.censored


def test_split_picks_shortest_prefix():
    # transitions: 00 01 10 01 11 10 00 01; (1,1) first appears at event 5
    seq = make_sequence([0, 0, 1, 0, 1, 1, 0, 0, 1], [1, 2, 3, 4, 5, 6, 7, 8])
    hist, cur, cut = split_catalog(seq, 1)
    assert cut == 5
    assert hist.states.tolist() == [0, 0, 1, 0, 1, 1]
    assert cur.states[0] == hist.states[-1]
    assert hist.censored == 0


def test_split_failure_names_transitions():
    seq = make_sequence([0, 0, 1, 1], [1, 2, 3])
    with pytest.raises(CatalogError, match=r"\(2,1\)"):
        split_catalog(seq, 1)


@st.composite
def sequences(draw):
    n = draw(st.integers(2, 60))
    states = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    states[:5] = [0, 0, 1, 1, 0][: len(states[:5])]
    times = draw(st.lists(st.floats(0.5, 500), min_size=n - 1, max_size=n - 1))
    tail = draw(st.floats(0, 300))
    return SequenceData(np.array(states), np.array(times), tail, sum(times) + tail, 2)


@settings(max_examples=60)
@given(sequences())
def test_split_reconstitutes(seq):
    try:
        hist, cur, cut = split_catalog(seq, 1)
    except CatalogError:
        return
    assert np.concatenate([hist.states, cur.states[1:]]).tolist() == seq.states.tolist()
    np.testing.assert_array_equal(np.concatenate([hist.times, cur.times]), seq.times)
    assert hist.horizon + cur.horizon == pytest.approx(seq.horizon)
    assert transition_counts(hist.states, 2).min() >= 1


@settings(max_examples=60)
@given(sequences())
def test_sufficient_stats_sums(seq):
    stats = sufficient_stats(seq)
    assert stats.counts.sum() == seq.tau
    total = sum(stats.times[i][j].sum() for i in range(2) for j in range(2))
    assert total == pytest.approx(seq.times.sum())
    for i in range(2):
        for j in range(2):
            assert len(stats.times[i][j]) == stats.counts[i, j]
