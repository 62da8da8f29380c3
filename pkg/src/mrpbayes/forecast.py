"""Cross state-probabilities (CSPs), their ratio diagnostics and the rolling backtest.

The CSP P^{ij}_{t0|dx} is the probability that the next event is of type j
and happens within dx, given the last event was of type i and t0 has
elapsed since then without events:

    p_ij (S_ij(t0) - S_ij(t0 + dx)) / sum_h p_ih S_ih(t0)

with S the Weibull survival function.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import (
    CatalogError,
    EventRecord,
    StateSpace,
    build_sequence,
    classify_magnitude,
    days_between,
    truncate_catalog,
)
from .pipeline import fit_sequence
from .prior import PriorError
from .sampler import ChainOutput, GibbsConfig

DAYS_PER_MONTH = 30.44
DAYS_PER_YEAR = 365.25
RATIO_FLOOR = 1e-300


class ForecastError(ValueError):
    pass


def standard_horizons() -> tuple[list[str], np.ndarray]:
    """Column grid of the CSP tables: 1-6 months, then 1-4 years."""
    labels = ["1 Month"] + [f"{k} Months" for k in range(2, 7)] + ["Year"] + [
        f"{k} Years" for k in range(2, 5)
    ]
    days = [k * DAYS_PER_MONTH for k in range(1, 7)] + [k * DAYS_PER_YEAR for k in range(1, 5)]
    return labels, np.array(days)


@dataclass(frozen=True)
class CspQuery:
    i: int
    t0: float
    dx_grid: tuple[float, ...]

    def __post_init__(self):
        grid = tuple(float(d) for d in self.dx_grid)
        if self.t0 < 0:
            raise ForecastError("elapsed time must be non-negative")
        if any(d < 0 for d in grid) or any(b < a for a, b in zip(grid, grid[1:])):
            raise ForecastError("horizons must be non-negative and ascending")
        object.__setattr__(self, "dx_grid", grid)


def log_survival(t, alpha, theta):
    """-(t/theta)^alpha, exact at t = 0 and t = inf."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return -np.exp(alpha * (np.log(t) - np.log(theta)))


def _log_csp(p, alpha, theta, i, t0, dx):
    """log CSPs with shape (..., s, n_dx)."""
    p, alpha, theta = (np.asarray(a, dtype=np.float64) for a in (p, alpha, theta))
    dx = np.atleast_1d(np.asarray(dx, dtype=np.float64))
    pi, a, th = p[..., i, :], alpha[..., i, :], theta[..., i, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.log(pi)
        ls0 = log_survival(t0, a, th)
        terms = log_p + ls0
        top = terms.max(axis=-1, keepdims=True)
        if np.any(~np.isfinite(top)):
            raise ForecastError("elapsed time incompatible with parameters")
        # everything relative to the largest term, so huge log-survivals cancel exactly
        rel = terms - top
        log_den = np.log(np.exp(rel).sum(axis=-1))
        ls1 = log_survival(t0 + dx, a[..., None], th[..., None])
        drop = np.log(-np.expm1(ls1 - ls0[..., None]))
        log_num = np.where(np.isfinite(ls0)[..., None], rel[..., None] + drop, -np.inf)
    return log_num - log_den[..., None, None]


def csp(p, alpha, theta, i: int, t0: float, dx):
    """CSP vector over destination states; shape (s,) for scalar dx, else (s, n_dx).

    Leading batch axes of p, alpha and theta carry through.
    """
    out = np.exp(_log_csp(p, alpha, theta, i, t0, dx))
    return out[..., 0] if np.ndim(dx) == 0 else out


@dataclass
class CspResult:
    i: int
    t0: float
    horizons: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    labels: list[str] = field(default_factory=list)
    marked: tuple[int, int] | None = None

    def column_labels(self) -> list[str]:
        if len(self.labels) == len(self.horizons):
            return list(self.labels)
        return [f"{d:g} days" for d in self.horizons]

    def to_table_csv(self, path: str | Path) -> None:
        """Rows = destination state, columns = horizons; the realised cell in brackets."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["to"] + self.column_labels())
            for j in range(self.mean.shape[0]):
                cells = []
                for k in range(len(self.horizons)):
                    v = f"{self.mean[j, k]:.3f}"
                    cells.append(f"[{v}]" if self.marked == (j, k) else v)
                w.writerow([j + 1] + cells)

    def to_long_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["from", "to", "elapsed_days", "horizon", "horizon_days",
                        "mean", "median", "lower", "upper", "level", "realized"])
            for j in range(self.mean.shape[0]):
                for k, (lab, d) in enumerate(zip(self.column_labels(), self.horizons)):
                    w.writerow([
                        self.i + 1, j + 1, self.t0, lab, float(d),
                        float(self.mean[j, k]), float(self.median[j, k]),
                        float(self.lower[j, k]), float(self.upper[j, k]), self.level,
                        int(self.marked == (j, k)),
                    ])


def csp_posterior(
    output: ChainOutput, query: CspQuery, level: float = 0.9, labels: Sequence[str] = ()
) -> CspResult:
    values = csp(output.p, output.alpha, output.theta, query.i, query.t0, np.array(query.dx_grid))
    tail = 0.5 * (1.0 - level)
    lower, median, upper = np.quantile(values, [tail, 0.5, 1.0 - tail], axis=0)
    return CspResult(
        i=query.i, t0=query.t0, horizons=np.array(query.dx_grid), mean=values.mean(axis=0),
        median=median, lower=lower, upper=upper, level=level, labels=list(labels),
    )


@dataclass
class RatioCurves:
    """Posterior means of CSP ratios.

    source-fixed (fixed = i): ratio[j, k] = P^{ij} / P^{ik}
    destination-fixed (fixed = j): ratio[i, k] = P^{ij} / P^{kj}
    NaN marks horizons where some draw has a denominator below 1e-300.
    """

    mode: str
    fixed: int
    horizons: np.ndarray
    ratio: np.ndarray


def csp_ratios(output: ChainOutput, query: CspQuery, mode: str = "source-fixed") -> RatioCurves:
    s = output.n_states
    if s < 2:
        raise ForecastError("ratios need at least two states")
    dx = np.array(query.dx_grid)
    if mode == "source-fixed":
        vals = csp(output.p, output.alpha, output.theta, query.i, query.t0, dx)
    elif mode == "destination-fixed":
        vals = np.stack(
            [csp(output.p, output.alpha, output.theta, i, query.t0, dx)[:, query.i] for i in range(s)],
            axis=1,
        )
    else:
        raise ForecastError(f"unknown mode {mode!r}")
    # vals: (n_draws, s, n_dx) indexed by the free state
    num = vals[:, :, None, :]
    den = vals[:, None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = num / den
    bad = np.any(den < RATIO_FLOOR, axis=0)
    ratio = np.where(bad, np.nan, r.mean(axis=0))
    return RatioCurves(mode, query.i, dx, ratio)


@dataclass
class BacktestResult:
    end: datetime
    status: str
    reason: str = ""
    previous_state: int | None = None
    waiting_days: float | None = None
    cut_index: int | None = None
    realized_state: int | None = None
    realized_delay: float | None = None
    boxed: float | None = None
    pit: float | None = None
    csp: CspResult | None = None


def _next_event(catalog, end: datetime) -> EventRecord | None:
    for e in catalog:
        if e.time > end:
            return e
    return None


def backtest_one(
    catalog: Sequence[EventRecord],
    space: StateSpace,
    end: datetime,
    min_count: int = 2,
    config: GibbsConfig = GibbsConfig(),
    q_target: float = 0.5,
    floor: float = 1.0,
    level: float = 0.9,
    horizons: tuple[list[str], np.ndarray] | None = None,
) -> BacktestResult:
    truncated = truncate_catalog(catalog, end)
    if len(truncated) < 2:
        return BacktestResult(end, "skipped", "fewer than two events before the end date")
    try:
        seq = build_sequence(truncated, space, end)
        fit = fit_sequence(seq, min_count, q_target, floor, config)
    except (CatalogError, PriorError) as exc:
        return BacktestResult(end, "skipped", str(exc))
    labels, grid = horizons if horizons is not None else standard_horizons()
    labels, grid = list(labels), list(grid)
    i, t0 = seq.last_state, seq.censored
    nxt = _next_event(catalog, end)
    realized_state = realized_delay = col = None
    if nxt is not None:
        realized_state = classify_magnitude(nxt.magnitude, space)
        realized_delay = days_between(end, nxt.time)
        col = int(np.searchsorted(grid, realized_delay, side="right"))
        grid.insert(col, realized_delay)
        labels.insert(col, f"{realized_delay:.0f} days")
    result = csp_posterior(fit.output, CspQuery(i, t0, tuple(grid)), level, labels)
    out = BacktestResult(
        end, "ok", previous_state=i, waiting_days=t0, cut_index=fit.cut, csp=result,
    )
    if nxt is not None:
        result.marked = (realized_state, col)
        limit = csp(fit.output.p, fit.output.alpha, fit.output.theta, i, t0, math.inf).mean(axis=0)
        out.realized_state = realized_state
        out.realized_delay = realized_delay
        out.boxed = float(result.mean[realized_state, col])
        out.pit = realized_pit(limit, realized_state, out.boxed)
    return out


def realized_pit(limit, state: int, boxed: float) -> float:
    """Randomisation-free PIT of the realised (type, delay) pair.

    `limit[k]` is P(next type = k); types are stacked in index order so the
    value is uniform on (0, 1) when the forecasts are calibrated.
    """
    return float(np.sum(limit[:state]) + boxed)


def backtest(
    catalog: Sequence[EventRecord],
    space: StateSpace,
    end_dates: Sequence[datetime],
    min_count: int = 2,
    config: GibbsConfig = GibbsConfig(),
    q_target: float = 0.5,
    floor: float = 1.0,
    level: float = 0.9,
    jobs: int = 1,
) -> list[BacktestResult]:
    args = [(catalog, space, end, min_count, config, q_target, floor, level) for end in end_dates]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(backtest_one, *zip(*args)))
    return [backtest_one(*a) for a in args]


def backtest_csv(results: Sequence[BacktestResult], path: str | Path) -> None:
    """Stacked layout: a header row per end date, then one row per destination state."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for r in results:
            if r.status != "ok":
                w.writerow(["end", r.end.date().isoformat(), "status", r.status, "reason", r.reason])
                continue
            w.writerow([
                "end", r.end.date().isoformat(), "previous_state", r.previous_state + 1,
                "waiting_days", f"{r.waiting_days:.0f}", "cut_event_number", r.cut_index + 1,
                "boxed", "" if r.boxed is None else f"{r.boxed:.3f}",
                "pit", "" if r.pit is None else f"{r.pit:.3f}",
            ])
            res = r.csp
            w.writerow(["to"] + res.column_labels())
            for j in range(res.mean.shape[0]):
                cells = [
                    f"[{res.mean[j, k]:.3f}]" if res.marked == (j, k) else f"{res.mean[j, k]:.3f}"
                    for k in range(len(res.horizons))
                ]
                w.writerow([j + 1] + cells)
