"""Adaptive rejection sampling for univariate log-concave densities.

Gilks & Wild (1992): the log-density is bounded above by the piecewise
linear hull of its tangents and below by the chords between abscissae.
Every rejected proposal refines the hull, so later draws from the same
target get cheaper.
"""
from __future__ import annotations

import bisect
import math
from typing import Callable

import numpy as np

# relative tolerance for "log-density above its upper hull"
HULL_TOL = 1e-7
DEEP_TAIL = 700.0  # exp(-700) is below double precision relative to the peak


class ARSError(RuntimeError):
    pass


def _log_segment_mass(u_left: float, slope: float, width: float) -> float:
    """log of the integral of exp(u_left + slope * t) over t in [0, width]."""
    if math.isinf(width):
        if slope >= 0:
            raise ARSError("unbounded hull segment with non-negative slope")
        return u_left - math.log(-slope)
    aw = slope * width
    if abs(aw) < 1e-10:
        return u_left + math.log(width) + 0.5 * aw
    if slope > 0:
        # factor out the right end so the exponent never overflows
        return u_left + aw + math.log(-math.expm1(-aw)) - math.log(slope)
    return u_left + math.log(-math.expm1(aw)) - math.log(-slope)


def _sample_segment(left: float, right: float, slope: float, u: float) -> float:
    """Inverse-CDF draw from a density ∝ exp(slope * x) on [left, right]."""
    if math.isinf(left):
        return right + math.log(u) / slope
    if math.isinf(right):
        return left + math.log(u) / slope
    width = right - left
    aw = slope * width
    if abs(aw) < 1e-10:
        return left + u * width
    if slope > 0:
        return right + math.log1p(u * math.expm1(-aw)) / slope
    return left + math.log1p(u * math.expm1(aw)) / slope


class AdaptiveRejectionSampler:
    """Hull over a concave `h`; `value_and_grad(x)` returns (h(x), h'(x)).

    `lo`/`hi` are the support limits (either may be infinite). Abscissae
    must be interior points with finite log-density; when a side of the
    support is unbounded the outermost tangent on that side has to point
    downhill, which `_bracket` guarantees.
    """

    def __init__(
        self,
        value_and_grad: Callable[[float], tuple[float, float]],
        lo: float,
        hi: float,
        init_points,
        max_rejections: int = 1000,
    ):
        if not lo < hi:
            raise ARSError("empty support")
        self.f = value_and_grad
        self.lo = float(lo)
        self.hi = float(hi)
        self.max_rejections = max_rejections
        self.x: list[float] = []
        self.h: list[float] = []
        self.dh: list[float] = []
        for x0 in sorted(set(float(v) for v in init_points)):
            self._add_initial(x0)
        if len(self.x) < 1:
            raise ARSError("no usable initial abscissa")
        self._bracket()
        self._rebuild()

    # -- construction ---------------------------------------------------
    def _interior_anchor(self) -> float:
        if math.isfinite(self.lo) and math.isfinite(self.hi):
            return 0.5 * (self.lo + self.hi)
        if math.isfinite(self.lo):
            return self.lo + 1.0
        if math.isfinite(self.hi):
            return self.hi - 1.0
        return 0.0

    def _add_initial(self, x0: float) -> None:
        anchor = self._interior_anchor()
        x = x0
        for _ in range(11):
            if self.lo < x < self.hi:
                h, dh = self.f(x)
                if math.isfinite(h) and math.isfinite(dh):
                    self._insert(x, h, dh)
                    return
            x = 0.5 * (x + anchor)
        raise ARSError(f"log-density not finite near initial abscissa {x0}")

    def _bracket(self) -> None:
        # unbounded sides need an outer tangent that decays
        if math.isinf(self.hi):
            step = max(1.0, abs(self.x[-1]))
            for _ in range(200):
                if self.dh[-1] < 0:
                    break
                x = self.x[-1] + step
                h, dh = self.f(x)
                if not math.isfinite(h):
                    raise ARSError("log-density not finite while bracketing the mode")
                self._insert(x, h, dh)
                step *= 2.0
            else:
                raise ARSError("could not bracket the mode from the right")
        if math.isinf(self.lo):
            step = max(1.0, abs(self.x[0]))
            for _ in range(200):
                if self.dh[0] > 0:
                    break
                x = self.x[0] - step
                h, dh = self.f(x)
                if not math.isfinite(h):
                    raise ARSError("log-density not finite while bracketing the mode")
                self._insert(x, h, dh)
                step *= 2.0
            else:
                raise ARSError("could not bracket the mode from the left")

    def _insert(self, x: float, h: float, dh: float) -> None:
        k = bisect.bisect_left(self.x, x)
        if k < len(self.x) and self.x[k] == x:
            return
        self.x.insert(k, x)
        self.h.insert(k, h)
        self.dh.insert(k, dh)

    def _rebuild(self) -> None:
        # steep tail tangents (|dh| near 1e300) are only ever multiplied by
        # distances measured from their own abscissa, and hull values at the
        # breakpoints come from the flatter of the two meeting tangents
        x, h, dh = self.x, self.h, self.dh
        n = len(x)
        z = [self.lo]
        uz = [h[0] + dh[0] * (self.lo - x[0]) if math.isfinite(self.lo) else -math.inf]
        for k in range(n - 1):
            gap = x[k + 1] - x[k]
            d = dh[k] - dh[k + 1]
            steep_right = abs(dh[k + 1]) > abs(dh[k])
            if d > 1e-12 * (abs(dh[k]) + abs(dh[k + 1]) + 1e-300):
                if steep_right:
                    zk = x[k + 1] + (h[k + 1] - h[k] - dh[k] * gap) / d
                else:
                    zk = x[k] + (h[k + 1] - h[k] - dh[k + 1] * gap) / d
                zk = min(max(zk, x[k]), x[k + 1])
            else:
                zk = 0.5 * (x[k] + x[k + 1])
            j = k if steep_right else k + 1
            z.append(zk)
            uz.append(h[j] + dh[j] * (zk - x[j]))
        z.append(self.hi)
        uz.append(h[-1] + dh[-1] * (self.hi - x[-1]) if math.isfinite(self.hi) else -math.inf)
        self.z, self.uz = z, uz
        log_mass = []
        for k in range(n):
            left, right = z[k], z[k + 1]
            if right <= left:
                log_mass.append(-math.inf)
                continue
            if math.isinf(left):
                if dh[k] <= 0:
                    raise ARSError("unbounded hull segment with non-positive slope")
                log_mass.append(uz[k + 1] - math.log(dh[k]))
                continue
            log_mass.append(_log_segment_mass(uz[k], dh[k], right - left))
        lm = np.array(log_mass)
        if not np.isfinite(lm.max()) or np.isnan(lm).any():
            raise ARSError("tangent hull has no finite mass")
        w = np.exp(lm - lm.max())
        self.cum = np.cumsum(w) / w.sum()

    # -- evaluation -------------------------------------------------------
    def upper(self, x: float) -> float:
        k = bisect.bisect_right(self.z, x, 1, len(self.z) - 1) - 1
        if math.isfinite(self.z[k]):
            return self.uz[k] + self.dh[k] * (x - self.z[k])
        return self.uz[k + 1] + self.dh[k] * (x - self.z[k + 1])

    def lower(self, x: float) -> float:
        k = bisect.bisect_right(self.x, x)
        if k == 0 or k == len(self.x):
            return -math.inf
        x0, x1 = self.x[k - 1], self.x[k]
        h0, h1 = self.h[k - 1], self.h[k]
        return h0 + (h1 - h0) * ((x - x0) / (x1 - x0))

    def _propose(self, rng: np.random.Generator) -> float:
        u1, u2 = rng.random(2)
        k = int(np.searchsorted(self.cum, u1, side="right"))
        k = min(k, len(self.x) - 1)
        x = _sample_segment(self.z[k], self.z[k + 1], self.dh[k], u2 or 1e-300)
        return min(max(x, self.z[k]), self.z[k + 1])

    def sample(self, rng: np.random.Generator) -> float:
        for _ in range(self.max_rejections):
            x = self._propose(rng)
            if not self.lo < x < self.hi:
                continue
            u = self.upper(x)
            log_w = math.log(rng.random() or 1e-300)
            if log_w <= self.lower(x) - u:
                return x
            h, dh = self.f(x)
            if h > u + HULL_TOL * (1.0 + abs(u)):
                raise ARSError(
                    f"log-density exceeds its tangent hull at x={x!r}; target is not concave"
                )
            if log_w <= h - u:
                return x
            self._tighten(x, h, dh)
        raise ARSError(f"more than {self.max_rejections} rejections")

    def _tighten(self, x: float, h: float, dh: float) -> None:
        # deep-tail tangents overflow the hull; move toward the peak until moderate
        floor = max(self.h) - DEEP_TAIL
        peak = self.x[int(np.argmax(self.h))]
        for _ in range(60):
            if math.isfinite(h) and math.isfinite(dh) and h > floor:
                self._insert(x, h, dh)
                self._rebuild()
                return
            x = 0.5 * (x + peak)
            h, dh = self.f(x)


def default_init_points(lo: float, hi: float, n: int = 3) -> list[float]:
    """Interior quantile positions of the support; a probe at lo + delta if hi is infinite."""
    n = max(n, 3)
    if math.isfinite(lo) and math.isfinite(hi):
        return [lo + (hi - lo) * k / (n + 1) for k in range(1, n + 1)]
    if math.isfinite(lo):
        delta = max(1e-3, 1e-3 * abs(lo))
        return [lo + delta * 10.0**k for k in range(n)]
    if math.isfinite(hi):
        delta = max(1e-3, 1e-3 * abs(hi))
        return [hi - delta * 10.0**k for k in range(n)]
    return [-1.0, 0.0, 1.0]


def _finite_difference(log_density, lo, hi):
    def value_and_grad(x):
        h = float(log_density(x))
        step = 1e-6 * max(1.0, abs(x))
        a, b = x - step, x + step
        if math.isfinite(lo):
            a = max(a, lo + 0.5 * (x - lo))
        if math.isfinite(hi):
            b = min(b, hi - 0.5 * (hi - x))
        fa, fb = float(log_density(a)), float(log_density(b))
        return h, (fb - fa) / (b - a)

    return value_and_grad


def ars_sample(
    log_density: Callable[[float], float],
    support: tuple[float, float],
    rng: np.random.Generator,
    init_points=None,
    *,
    grad: Callable[[float], float] | None = None,
    size: int | None = None,
    max_rejections: int = 1000,
):
    """Exact draw(s) from the density proportional to exp(log_density) on `support`.

    `log_density` must be concave on the open support. Without `grad` the
    tangent slopes come from central differences. With `size`, the hull is
    kept across draws.
    """
    lo, hi = float(support[0]), float(support[1])
    if init_points is None or np.isscalar(init_points):
        init_points = default_init_points(lo, hi, 3 if init_points is None else int(init_points))
    if grad is None:
        value_and_grad = _finite_difference(log_density, lo, hi)
    else:
        def value_and_grad(x):
            return float(log_density(x)), float(grad(x))
    sampler = AdaptiveRejectionSampler(value_and_grad, lo, hi, init_points, max_rejections)
    if size is None:
        return sampler.sample(rng)
    return np.array([sampler.sample(rng) for _ in range(size)])
