"""Prior elicitation for the Weibull shape/scale pairs and the transition rows.

Per transition (i, j), theta^(-alpha) given alpha is Gamma with shape m and
rate b_q(alpha) = t_q^alpha / ((1-q)^(-1/m) - 1), and alpha has the
log-concave density

    pi3(alpha) ∝ alpha^(m-1-c) (alpha - alpha0)^c exp{-m alpha (ln t_q - mean_log)}

on [alpha0, alpha1]. The hyperparameters follow the prior sample size m of
the transition in the historical data.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import SequenceData, sufficient_stats

# scarce-information defaults (m <= 2)
SCARCE_ALPHA0 = 2.0 / 3.0
SCARCE_ALPHA1 = 10.0
Q_STEP = 0.05
Q_MAX = 0.95


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionPrior:
    m: int
    c: float
    alpha0: float
    alpha1: float
    q: float
    t_q: float | None = None
    t_range: tuple[float, float] | None = None
    mean_log: float | None = None
    q_repaired: bool = False

    def __post_init__(self):
        if not self.alpha0 < self.alpha1:
            raise PriorError("alpha0 must be below alpha1")
        if not 0.0 < self.q < 1.0:
            raise PriorError("q must lie in (0, 1)")
        if self.m >= 1 and (self.t_q is None or self.t_q <= 0):
            raise PriorError("t_q must be positive when m >= 1")
        if self.m == 0:
            if self.t_range is None or not 0 < self.t_range[0] <= self.t_range[1]:
                raise PriorError("m = 0 needs a positive t_range")
        if self.m > 1 and not math.log(self.t_q) - self.mean_log > 0:
            raise PriorError("improper prior: ln t_q must exceed the mean log time")

    @property
    def m_eff(self) -> int:
        """Prior sample size used in the formulas; m = 0 behaves as m = 1."""
        return max(self.m, 1)

    @property
    def log_gap(self) -> float:
        """ln t_q - mean_log, which is zero whenever m <= 1."""
        if self.m <= 1:
            return 0.0
        return math.log(self.t_q) - self.mean_log

    def to_json(self) -> dict:
        return {
            "m": self.m,
            "c": self.c,
            "alpha0": self.alpha0,
            "alpha1": None if math.isinf(self.alpha1) else self.alpha1,
            "q": self.q,
            "t_q": self.t_q,
            "t_range": list(self.t_range) if self.t_range is not None else None,
            "mean_log": self.mean_log,
            "q_repaired": self.q_repaired,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TransitionPrior":
        alpha1 = obj.get("alpha1")
        t_range = obj.get("t_range")
        return cls(
            m=int(obj["m"]),
            c=float(obj["c"]),
            alpha0=float(obj["alpha0"]),
            alpha1=math.inf if alpha1 is None else float(alpha1),
            q=float(obj["q"]),
            t_q=obj.get("t_q"),
            t_range=tuple(t_range) if t_range is not None else None,
            mean_log=obj.get("mean_log"),
            q_repaired=bool(obj.get("q_repaired", False)),
        )


@dataclass(frozen=True)
class DirichletPrior:
    gamma: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
            raise PriorError("gamma must be a square matrix")
        if np.any(gamma <= 0):
            raise PriorError("Dirichlet weights must be positive")
        object.__setattr__(self, "gamma", gamma)

    @property
    def totals(self) -> np.ndarray:
        return self.gamma.sum(axis=1)

    @property
    def mean(self) -> np.ndarray:
        return self.gamma / self.totals[:, None]


@dataclass(frozen=True)
class PriorSet:
    """All priors needed for a fit, plus the bookkeeping that produced them."""

    transitions: tuple[tuple[TransitionPrior, ...], ...]
    dirichlet: DirichletPrior
    q_target: float = 0.5
    dirichlet_floor: float = 1.0

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def __getitem__(self, ij) -> TransitionPrior:
        i, j = ij
        return self.transitions[i][j]

    def repaired(self) -> list[dict]:
        return [
            {"transition": [i + 1, j + 1], "q": pr.q}
            for i, row in enumerate(self.transitions)
            for j, pr in enumerate(row)
            if pr.q_repaired
        ]

    def to_json(self) -> dict:
        s = self.n_states
        return {
            "n_states": s,
            "q_target": self.q_target,
            "transitions": [
                {"from": i + 1, "to": j + 1, **self.transitions[i][j].to_json()}
                for i in range(s)
                for j in range(s)
            ],
            "dirichlet": {
                "gamma": self.dirichlet.gamma.tolist(),
                "floor": self.dirichlet_floor,
                "source": "historical counts floored",
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PriorSet":
        s = int(obj["n_states"])
        grid = [[None] * s for _ in range(s)]
        for t in obj["transitions"]:
            grid[t["from"] - 1][t["to"] - 1] = TransitionPrior.from_json(t)
        return cls(
            transitions=tuple(tuple(row) for row in grid),
            dirichlet=DirichletPrior(np.array(obj["dirichlet"]["gamma"])),
            q_target=float(obj.get("q_target", 0.5)),
            dirichlet_floor=float(obj["dirichlet"].get("floor", 1.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PriorSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def estimate_quantile(times: Sequence[float], q: float) -> float:
    """Empirical quantile, linear between order statistics at position (n-1)q + 1."""
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        raise PriorError("cannot estimate a quantile from no data")
    if not 0.0 < q < 1.0:
        raise PriorError("q must lie in (0, 1)")
    return float(np.quantile(times, q, method="linear"))


def log_quantile_multiplier(q: float, m: int) -> float:
    """ln[(1-q)^(-1/m) - 1], computed without cancellation."""
    expo = -math.log1p(-q) / m
    if expo > 700.0:
        raise PriorError(f"q = {q} too close to 1 for m = {m}")
    return math.log(math.expm1(expo))


def log_b_hat(alpha, t_q: float, q: float, m: int):
    return alpha * math.log(t_q) - log_quantile_multiplier(q, m)


def b_hat(alpha: float, t_q: float, q: float, m: int) -> float:
    if alpha <= 0 or t_q <= 0:
        raise PriorError("alpha and t_q must be positive")
    return math.exp(log_b_hat(alpha, t_q, q, m))


def elicit_transition_prior(
    times: Sequence[float],
    q_target: float = 0.5,
    all_historical_times: Sequence[float] | None = None,
    label: str = "",
) -> TransitionPrior:
    """Hyperparameters for one transition from its m historical sojourn times."""
    times = np.asarray(times, dtype=np.float64)
    m = int(times.size)
    if m == 0:
        pool = np.asarray(all_historical_times if all_historical_times is not None else [])
        if pool.size == 0:
            raise PriorError(f"transition {label}: m = 0 needs historical sojourn times")
        return TransitionPrior(
            m=0, c=1.0, alpha0=SCARCE_ALPHA0, alpha1=SCARCE_ALPHA1, q=0.5,
            t_range=(float(pool.min()), float(pool.max())),
        )
    mean_log = float(np.log(times).mean())
    if m == 1:
        return TransitionPrior(
            m=1, c=1.0, alpha0=SCARCE_ALPHA0, alpha1=SCARCE_ALPHA1, q=0.5,
            t_q=float(times[0]), mean_log=mean_log,
        )
    if m == 2:
        c, alpha0 = 1.0, SCARCE_ALPHA0
    else:
        c, alpha0 = float(m - 1), 2.0 / m
    q = q_target
    t_q = estimate_quantile(times, q)
    while not math.log(t_q) > mean_log:
        if q >= Q_MAX - 1e-12:
            raise PriorError(
                f"transition {label}: no q <= {Q_MAX} gives a proper shape prior"
            )
        q = min(round(q + Q_STEP, 10), Q_MAX)
        t_q = estimate_quantile(times, q)
    return TransitionPrior(
        m=m, c=c, alpha0=alpha0, alpha1=math.inf, q=q, t_q=t_q,
        mean_log=mean_log, q_repaired=q != q_target,
    )


def elicit_dirichlet_prior(counts, floor: float = 1.0) -> DirichletPrior:
    if floor <= 0:
        raise PriorError("Dirichlet floor must be positive")
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise PriorError("counts must be non-negative")
    return DirichletPrior(np.maximum(counts, floor))


def elicit_priors(
    historical: SequenceData, q_target: float = 0.5, floor: float = 1.0
) -> PriorSet:
    stats = sufficient_stats(historical)
    s = historical.n_states
    rows = []
    for i in range(s):
        rows.append(
            tuple(
                elicit_transition_prior(
                    stats.times[i][j], q_target, historical.times, label=f"({i + 1},{j + 1})"
                )
                for j in range(s)
            )
        )
    return PriorSet(
        transitions=tuple(rows),
        dirichlet=elicit_dirichlet_prior(stats.counts, floor),
        q_target=q_target,
        dirichlet_floor=floor,
    )


def log_prior_alpha(alpha, prior: TransitionPrior):
    """log pi3(alpha) up to a constant; -inf outside [alpha0, alpha1].

    Accepts scalars or arrays.
    """
    a = np.asarray(alpha, dtype=np.float64)
    m = prior.m_eff
    inside = (a >= prior.alpha0) & (a <= prior.alpha1)
    with np.errstate(divide="ignore", invalid="ignore"):
        safe = np.where(inside, a, 1.0)
        out = (
            (m - 1 - prior.c) * np.log(safe)
            + (prior.c * np.log(safe - prior.alpha0) if prior.c else 0.0)
            - m * safe * prior.log_gap
        )
    out = np.where(inside, out, -np.inf)
    return float(out) if out.ndim == 0 else out
