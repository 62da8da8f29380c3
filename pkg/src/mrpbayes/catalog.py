"""Event catalogs, magnitude classes and the observed Markov renewal sequence.

State indices are 0-based throughout the Python API. Files written for
people (CSV, JSON) use 1-based state labels.
"""
from __future__ import annotations

import bisect
import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SECONDS_PER_DAY = 86400.0


class CatalogError(ValueError):
    """Raised for malformed catalogs and unusable sequences."""


@dataclass(frozen=True)
class EventRecord:
    time: datetime
    magnitude: float
    id: str | None = None


@dataclass(frozen=True)
class StateSpace:
    """Left-closed, right-open magnitude classes; the last one is unbounded."""

    thresholds: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.thresholds)
        if len(th) < 2:
            raise CatalogError("need at least two thresholds (s >= 2)")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise CatalogError("thresholds must be strictly ascending")
        object.__setattr__(self, "thresholds", th)

    @property
    def n_states(self) -> int:
        return len(self.thresholds)


def classify_magnitude(mag: float, space: StateSpace) -> int:
    """Return the 0-based class of `mag`; boundaries join the upper class."""
    if mag < space.thresholds[0]:
        raise CatalogError(
            f"magnitude {mag} below completeness threshold {space.thresholds[0]}"
        )
    return bisect.bisect_right(space.thresholds, mag) - 1


@dataclass(frozen=True)
class SequenceData:
    """Visited states j_0..j_tau, inter-occurrence times and censored tail.

    `origin` is the calendar time of j_0 when the sequence came from a
    catalog; synthetic sequences leave it unset.
    """

    states: np.ndarray
    times: np.ndarray
    censored: float
    horizon: float
    n_states: int
    origin: datetime | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "times", times)
        if states.ndim != 1 or len(states) < 1:
            raise CatalogError("a sequence needs at least the initial state")
        if len(times) != len(states) - 1:
            raise CatalogError("len(times) must equal len(states) - 1")
        if np.any((states < 0) | (states >= self.n_states)):
            raise CatalogError("state index out of range")
        if np.any(times <= 0):
            raise CatalogError("inter-occurrence times must be positive")
        if self.censored < 0:
            raise CatalogError("censored time must be non-negative")

    @property
    def tau(self) -> int:
        return len(self.times)

    @property
    def last_state(self) -> int:
        return int(self.states[-1])

    def to_json(self) -> dict:
        out = {
            "states": [int(s) + 1 for s in self.states],
            "times_days": [float(x) for x in self.times],
            "censored_days": float(self.censored),
            "horizon_days": float(self.horizon),
            "n_states": int(self.n_states),
        }
        if self.origin is not None:
            out["origin"] = self.origin.isoformat()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SequenceData":
        states = np.asarray(obj["states"], dtype=np.int64) - 1
        n_states = int(obj.get("n_states", states.max() + 1))
        origin = obj.get("origin")
        return cls(
            states=states,
            times=np.asarray(obj["times_days"], dtype=np.float64),
            censored=float(obj["censored_days"]),
            horizon=float(obj["horizon_days"]),
            n_states=n_states,
            origin=datetime.fromisoformat(origin) if origin else None,
        )


@dataclass(frozen=True)
class TransitionStats:
    """Sufficient statistics of a sequence.

    ``times[i][j]`` holds the sojourn times of the visits to string (i, j)
    and ``sum_log[i, j]`` their summed logarithms.
    """

    counts: np.ndarray
    times: list
    sum_log: np.ndarray
    censor_state: int
    censored: float

    @property
    def n_states(self) -> int:
        return self.counts.shape[0]

    @property
    def tau(self) -> int:
        return int(self.counts.sum())


def _to_datetime(value) -> datetime:
    if isinstance(value, datetime):
        return value
    if isinstance(value, date):
        return datetime(value.year, value.month, value.day)
    return datetime.fromisoformat(str(value).strip())


def days_between(a: datetime, b: datetime) -> float:
    return (b - a).total_seconds() / SECONDS_PER_DAY


def read_catalog(path: str | Path) -> list[EventRecord]:
    """Read a ``date,magnitude[,id]`` CSV, sorted by time."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"catalog not found: {path}")
    events = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "magnitude"} <= set(
            reader.fieldnames
        ):
            raise CatalogError("catalog header must contain 'date,magnitude'")
        for row in reader:
            events.append(
                EventRecord(
                    time=_to_datetime(row["date"]),
                    magnitude=float(row["magnitude"]),
                    id=(row.get("id") or None),
                )
            )
    events.sort(key=lambda e: e.time)
    return events


def write_catalog(events: Iterable[EventRecord], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "magnitude", "id"])
        for e in events:
            writer.writerow([e.time.isoformat(), repr(float(e.magnitude)), e.id or ""])


def build_sequence(
    catalog: Sequence[EventRecord], space: StateSpace, end: datetime | None = None
) -> SequenceData:
    """Turn a sorted catalog into (j, x, u_T).

    The first event fixes j_0 and the time origin; `end` is the observation
    horizon and defaults to the last event.
    """
    if not catalog:
        raise CatalogError("catalog is empty")
    times = [e.time for e in catalog]
    if any(b < a for a, b in zip(times, times[1:])):
        raise CatalogError("catalog must be sorted by time")
    for a, b in zip(catalog, catalog[1:]):
        if a.time == b.time:
            raise CatalogError(
                f"events {a.id or a.time.isoformat()} and {b.id or b.time.isoformat()} "
                "share a timestamp (zero holding time)"
            )
    origin = times[0]
    end = times[-1] if end is None else _to_datetime(end)
    if end < times[-1]:
        raise CatalogError("horizon precedes the last event")
    offsets = np.array([days_between(origin, t) for t in times])
    states = [classify_magnitude(e.magnitude, space) for e in catalog]
    horizon = days_between(origin, end)
    return SequenceData(
        states=np.array(states),
        times=np.diff(offsets),
        censored=horizon - offsets[-1],
        horizon=horizon,
        n_states=space.n_states,
        origin=origin,
    )


def truncate_catalog(catalog: Sequence[EventRecord], end: datetime) -> list[EventRecord]:
    end = _to_datetime(end)
    return [e for e in catalog if e.time <= end]


def transition_counts(states: np.ndarray, n_states: int) -> np.ndarray:
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    np.add.at(counts, (states[:-1], states[1:]), 1)
    return counts


def split_catalog(
    seq: SequenceData, min_count: int
) -> tuple[SequenceData, SequenceData, int]:
    """Split at the shortest prefix in which every transition occurs `min_count` times.

    Returns (historical, current, cut) where `cut` is the 0-based index of
    the last historical event, which is also the origin of the current part.
    """
    if min_count < 1:
        raise CatalogError("min_count must be >= 1")
    s = seq.n_states
    counts = np.zeros((s, s), dtype=np.int64)
    cut = None
    for k in range(1, len(seq.states)):
        counts[seq.states[k - 1], seq.states[k]] += 1
        if counts.min() >= min_count:
            cut = k
            break
    if cut is None:
        deficient = [
            f"({i + 1},{j + 1})"
            for i in range(s)
            for j in range(s)
            if counts[i, j] < min_count
        ]
        raise CatalogError(
            f"no prefix has every transition at least {min_count} times; "
            f"deficient transitions: {', '.join(deficient)}"
        )
    hist_span = float(seq.times[:cut].sum())
    historical = SequenceData(
        states=seq.states[: cut + 1],
        times=seq.times[:cut],
        censored=0.0,
        horizon=hist_span,
        n_states=s,
        origin=seq.origin,
    )
    current_origin = None
    if seq.origin is not None:
        current_origin = seq.origin + timedelta(days=hist_span)
    current = SequenceData(
        states=seq.states[cut:],
        times=seq.times[cut:],
        censored=seq.censored,
        horizon=seq.horizon - hist_span,
        n_states=s,
        origin=current_origin,
    )
    return historical, current, cut


def sufficient_stats(seq: SequenceData) -> TransitionStats:
    s = seq.n_states
    times = [[[] for _ in range(s)] for _ in range(s)]
    for a, b, x in zip(seq.states[:-1], seq.states[1:], seq.times):
        times[a][b].append(float(x))
    times = [[np.array(times[i][j]) for j in range(s)] for i in range(s)]
    sum_log = np.array(
        [[float(np.log(times[i][j]).sum()) for j in range(s)] for i in range(s)]
    )
    return TransitionStats(
        counts=transition_counts(seq.states, s),
        times=times,
        sum_log=sum_log,
        censor_state=seq.last_state,
        censored=float(seq.censored),
    )


def save_sequence(seq: SequenceData, path: str | Path) -> None:
    Path(path).write_text(json.dumps(seq.to_json(), indent=1) + "\n")


def load_sequence(path: str | Path) -> SequenceData:
    return SequenceData.from_json(json.loads(Path(path).read_text()))
