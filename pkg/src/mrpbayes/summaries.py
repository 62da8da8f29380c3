"""Posterior and posterior-predictive summaries of a fitted chain."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .sampler import ChainOutput
from .simulate import weibull_draw

OUTLIER_LEVEL = 0.025


def effective_sample_size(x) -> float:
    """ESS of one chain with Geyer's initial monotone sequence estimator.

    Capped at the number of draws.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 4:
        return float(n)
    centered = x - x.mean()
    var0 = centered @ centered / n
    if var0 == 0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n] / n
    rho = acov / acov[0]
    # sums of adjacent pairs, truncated at the first non-positive one
    pairs = rho[: 2 * ((n - 1) // 2)].reshape(-1, 2).sum(axis=1)
    stop = np.argmax(pairs <= 0) if np.any(pairs <= 0) else len(pairs)
    pairs = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * pairs.sum()
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


@dataclass
class ParameterSummary:
    name: str
    mean: float
    sd: float
    median: float
    lower: float
    upper: float
    ess: float


@dataclass
class PosteriorSummary:
    level: float
    n_draws: int
    rows: list[ParameterSummary] = field(default_factory=list)

    def __getitem__(self, name: str) -> ParameterSummary:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "mean", "sd", "median", "lower", "upper", "ess", "level"])
            for r in self.rows:
                w.writerow([r.name, r.mean, r.sd, r.median, r.lower, r.upper, r.ess, self.level])

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "n_draws": self.n_draws,
            "parameters": [vars(r) for r in self.rows],
        }


def summarize_draws(name, x, level: float = 0.95, chains=None) -> ParameterSummary:
    x = np.asarray(x, dtype=np.float64)
    tail = 0.5 * (1.0 - level)
    lo, med, hi = np.quantile(x, [tail, 0.5, 1.0 - tail])
    if chains is None:
        ess = effective_sample_size(x)
    else:
        ess = sum(effective_sample_size(x[chains == c]) for c in np.unique(chains))
    return ParameterSummary(
        name, float(x.mean()), float(x.std(ddof=1)) if len(x) > 1 else 0.0,
        float(med), float(lo), float(hi), float(ess),
    )


def mean_interoccurrence(alpha, theta):
    """Weibull mean theta * Gamma(1 + 1/alpha)."""
    return theta * np.exp(special.gammaln(1.0 + 1.0 / np.asarray(alpha, dtype=np.float64)))


def chain_summary(output: ChainOutput, level: float = 0.95) -> PosteriorSummary:
    """Mean, sd, median, equal-tailed interval and ESS for p, alpha, theta and the mean times."""
    if output.n_draws < 10:
        raise ValueError("need at least 10 draws to summarise")
    s = output.n_states
    fields = {
        "p": output.p,
        "alpha": output.alpha,
        "theta": output.theta,
        "mean_time": mean_interoccurrence(output.alpha, output.theta),
    }
    summary = PosteriorSummary(level, output.n_draws)
    for name, arr in fields.items():
        for i in range(s):
            for j in range(s):
                summary.rows.append(
                    summarize_draws(f"{name}[{i + 1},{j + 1}]", arr[:, i, j], level, output.chain)
                )
    return summary


def predictive_draws(output: ChainOutput, rng) -> np.ndarray:
    """One Weibull(alpha_ij, theta_ij) sojourn per retained draw and transition."""
    return weibull_draw(output.alpha, output.theta, rng, size=output.alpha.shape)


def tail_fraction(observed, sample) -> np.ndarray:
    """r = share of predictive draws at or below each observation."""
    sample = np.sort(np.asarray(sample, dtype=np.float64))
    return np.searchsorted(sample, np.asarray(observed, dtype=np.float64), side="right") / len(sample)


def bayes_p_value(observed, sample) -> np.ndarray:
    r = tail_fraction(observed, sample)
    return np.minimum(r, 1.0 - r)


@dataclass
class TransitionCheck:
    transition: tuple[int, int]
    interval: tuple[float, float]
    predictive_mean: float
    predictive_median: float
    observed: np.ndarray
    p_values: np.ndarray
    flagged: np.ndarray

    @property
    def flagged_share(self) -> float:
        return float(self.flagged.mean()) if len(self.flagged) else 0.0


@dataclass
class PredictiveReport:
    level: float
    threshold: float
    checks: list[TransitionCheck]

    def to_csv(self, path: str | Path) -> None:
        """One row per observation, with the transition's predictive interval repeated."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([
                "from", "to", "observed_days", "p_value", "flagged",
                "pred_lower", "pred_upper", "pred_mean", "pred_median",
            ])
            for c in self.checks:
                for x, pv, fl in zip(c.observed, c.p_values, c.flagged):
                    w.writerow([
                        c.transition[0] + 1, c.transition[1] + 1, float(x), float(pv), int(fl),
                        c.interval[0], c.interval[1], c.predictive_mean, c.predictive_median,
                    ])

    def table_csv(self, path: str | Path) -> None:
        """Per-transition table: predictive mean, interval and share of flagged points."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from", "to", "n_observed", "pred_mean", "pred_lower", "pred_upper", "flagged_share"])
            for c in self.checks:
                w.writerow([
                    c.transition[0] + 1, c.transition[1] + 1, len(c.observed),
                    c.predictive_mean, c.interval[0], c.interval[1], c.flagged_share,
                ])

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "threshold": self.threshold,
            "transitions": [
                {
                    "from": c.transition[0] + 1,
                    "to": c.transition[1] + 1,
                    "interval": list(c.interval),
                    "predictive_mean": c.predictive_mean,
                    "predictive_median": c.predictive_median,
                    "observed": c.observed.tolist(),
                    "p_values": c.p_values.tolist(),
                    "flagged": c.flagged.astype(bool).tolist(),
                    "flagged_share": c.flagged_share,
                }
                for c in self.checks
            ],
        }


def bayes_p_values(
    observed, predictive, level: float = 0.95, threshold: float = OUTLIER_LEVEL
) -> PredictiveReport:
    """Compare observed sojourns per transition with their predictive samples.

    `observed[i][j]` holds the times of transition (i, j); `predictive` has
    shape (n_draws, s, s).
    """
    predictive = np.asarray(predictive)
    s = predictive.shape[1]
    tail = 0.5 * (1.0 - level)
    checks = []
    for i in range(s):
        for j in range(s):
            sample = predictive[:, i, j]
            obs = np.asarray(observed[i][j], dtype=np.float64)
            pv = bayes_p_value(obs, sample)
            lo, med, hi = np.quantile(sample, [tail, 0.5, 1.0 - tail])
            checks.append(
                TransitionCheck(
                    (i, j), (float(lo), float(hi)), float(sample.mean()), float(med),
                    obs, pv, pv < threshold,
                )
            )
    return PredictiveReport(level, threshold, checks)
