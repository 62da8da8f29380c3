"""Synthetic Markov renewal sequences with Weibull sojourn times."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .catalog import EventRecord, SequenceData, StateSpace

SYNTHETIC_ORIGIN = datetime(2000, 1, 1)


@dataclass(frozen=True)
class TrueModel:
    p: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    j0: int = 0

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.p, dtype=np.float64))
        s = p.shape[0]
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=np.float64), (s, s)).copy()
        theta = np.broadcast_to(np.asarray(self.theta, dtype=np.float64), (s, s)).copy()
        if p.shape != (s, s) or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("p must be a square stochastic matrix")
        if np.any(alpha <= 0) or np.any(theta <= 0):
            raise ValueError("alpha and theta must be positive")
        if not 0 <= self.j0 < s:
            raise ValueError("initial state out of range")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "theta", theta)

    @property
    def n_states(self) -> int:
        return self.p.shape[0]

    def to_json(self) -> dict:
        return {
            "p": self.p.tolist(),
            "alpha": self.alpha.tolist(),
            "theta": self.theta.tolist(),
            "j0": self.j0 + 1,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrueModel":
        return cls(
            p=np.array(obj["p"]),
            alpha=np.array(obj["alpha"]),
            theta=np.array(obj["theta"]),
            j0=int(obj.get("j0", 1)) - 1,
        )

    @classmethod
    def load(cls, path: str | Path) -> "TrueModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def weibull_draw(alpha, theta, rng, size=None):
    """theta (-ln U)^(1/alpha)."""
    u = rng.random(size)
    return theta * (-np.log(u)) ** (1.0 / alpha)


def generate_mrp(model: TrueModel, horizon: float, rng) -> SequenceData:
    """Run the process from j0 on [0, horizon]; the unfinished sojourn is censored."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    s = model.n_states
    cum = np.cumsum(model.p, axis=1)
    states = [model.j0]
    times = []
    t = 0.0
    while True:
        i = states[-1]
        j = min(int(np.searchsorted(cum[i], rng.random(), side="right")), s - 1)
        x = float(weibull_draw(model.alpha[i, j], model.theta[i, j], rng))
        if t + x > horizon:
            break
        t += x
        states.append(j)
        times.append(x)
    return SequenceData(
        states=np.array(states), times=np.array(times), censored=horizon - t,
        horizon=horizon, n_states=s,
    )


def tpm_model(p, alpha_by_source, theta_by_source, j0: int = 0) -> TrueModel:
    """Time predictable: sojourn law depends on the current state only."""
    a = np.asarray(alpha_by_source, dtype=np.float64)[:, None]
    th = np.asarray(theta_by_source, dtype=np.float64)[:, None]
    s = len(a)
    return TrueModel(p, np.repeat(a, s, axis=1), np.repeat(th, s, axis=1), j0)


def spm_model(p, alpha_by_dest, theta_by_dest, j0: int = 0) -> TrueModel:
    """Slip predictable: sojourn law depends on the next state only."""
    a = np.asarray(alpha_by_dest, dtype=np.float64)[None, :]
    th = np.asarray(theta_by_dest, dtype=np.float64)[None, :]
    s = a.shape[1]
    return TrueModel(p, np.repeat(a, s, axis=0), np.repeat(th, s, axis=0), j0)


def generate_tpm(model: TrueModel, horizon: float, rng) -> SequenceData:
    if not (np.all(model.alpha == model.alpha[:, :1]) and np.all(model.theta == model.theta[:, :1])):
        raise ValueError("TPM requires alpha and theta constant along each row")
    return generate_mrp(model, horizon, rng)


def generate_spm(model: TrueModel, horizon: float, rng) -> SequenceData:
    if not (np.all(model.alpha == model.alpha[:1, :]) and np.all(model.theta == model.theta[:1, :])):
        raise ValueError("SPM requires alpha and theta constant along each column")
    return generate_mrp(model, horizon, rng)


def class_magnitudes(space: StateSpace) -> list[float]:
    """A representative magnitude inside each class."""
    th = space.thresholds
    mags = [0.5 * (a + b) for a, b in zip(th, th[1:])]
    mags.append(th[-1] + 0.2)
    return mags


def sequence_to_catalog(
    seq: SequenceData, space: StateSpace, origin: datetime = SYNTHETIC_ORIGIN
) -> list[EventRecord]:
    mags = class_magnitudes(space)
    offsets = np.concatenate(([0.0], np.cumsum(seq.times)))
    return [
        EventRecord(origin + timedelta(days=float(d)), mags[int(j)], f"e{k}")
        for k, (d, j) in enumerate(zip(offsets, seq.states))
    ]
