"""Gibbs sampler for the Weibull Markov renewal model.

The state of the chain is (p, alpha, theta, j_next, tq_fict). `j_next` is
the unobserved state that ends the censored sojourn u_T; it only exists
when u_T > 0. `tq_fict` holds the fictitious prior quantile of every
transition never seen in the historical data (m = 0).

Every update draws exactly from its full conditional:

* p rows: Dirichlet(N~_i + gamma_i)
* theta^(-alpha): Gamma(m + N, b_q(alpha) + M~(alpha))
* alpha: log-concave density, sampled by ARS
* j_next: categorical with weights p_{j_tau j} exp{-(u_T / theta_{j_tau j})^alpha}
* tq_fict: density ∝ t^alpha exp{-k_q (t / theta)^alpha} on the historical time range
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .ars import AdaptiveRejectionSampler, ARSError
from .catalog import TransitionStats
from .prior import (
    DirichletPrior,
    PriorSet,
    TransitionPrior,
    log_b_hat,
    log_quantile_multiplier,
)

log = logging.getLogger(__name__)

BLOCKS = ("j_next", "tq", "alpha", "theta", "p")


class GibbsError(RuntimeError):
    pass


@dataclass
class ChainState:
    p: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    j_next: int | None = None
    tq_fict: dict = field(default_factory=dict)

    def copy(self) -> "ChainState":
        return ChainState(
            self.p.copy(), self.alpha.copy(), self.theta.copy(), self.j_next, dict(self.tq_fict)
        )


@dataclass(frozen=True)
class GibbsConfig:
    n_iter: int = 20000
    n_burnin: int = 5000
    thin: int = 5
    n_chains: int = 4
    seed: int = 0
    ars_init_points: int = 3
    max_rejections: int = 1000
    # blocks held at their initial values, e.g. ("alpha", "theta")
    fixed: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.n_iter > self.n_burnin >= 0:
            raise ValueError("need n_iter > n_burnin >= 0")
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be >= 1")
        if self.ars_init_points < 3:
            raise ValueError("ars_init_points must be >= 3")
        unknown = set(self.fixed) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown blocks in fixed: {sorted(unknown)}")
        object.__setattr__(self, "fixed", tuple(self.fixed))

    @property
    def draws_per_chain(self) -> int:
        return (self.n_iter - self.n_burnin) // self.thin


# ---------------------------------------------------------------------------
# full conditionals


def censor_assigned(stats: TransitionStats, j_next: int | None, i: int, j: int) -> bool:
    return j_next is not None and stats.censor_state == i and j_next == j


def effective_counts(stats: TransitionStats, j_next: int | None) -> np.ndarray:
    """N~: the observed counts plus the latent transition closing the tail."""
    counts = stats.counts.astype(np.float64)
    if j_next is not None:
        counts[stats.censor_state, j_next] += 1
    return counts


def sample_p_rows(
    stats: TransitionStats, j_next: int | None, prior: DirichletPrior, rng
) -> np.ndarray:
    weights = effective_counts(stats, j_next) + prior.gamma
    return np.vstack([rng.dirichlet(row) for row in weights])


def _power_terms(xs, censored, prior: TransitionPrior, tq_eff, log_theta):
    """Log-slopes and offsets of the terms making up (b_q + M~) * theta^(-alpha)."""
    slopes = [np.log(xs) - log_theta] if len(xs) else []
    offsets = [np.zeros(len(xs))] if len(xs) else []
    if censored is not None:
        slopes.append(np.array([math.log(censored) - log_theta]))
        offsets.append(np.zeros(1))
    slopes.append(np.array([math.log(tq_eff) - log_theta]))
    offsets.append(np.array([-log_quantile_multiplier(prior.q, prior.m_eff)]))
    return np.concatenate(slopes), np.concatenate(offsets)


def _logsumexp(v: np.ndarray) -> float:
    top = v.max()
    return float(top + math.log(np.exp(v - top).sum()))


def sample_theta(alpha, xs, censored, prior: TransitionPrior, tq_eff, rng) -> float:
    """Draw theta given alpha; `censored` is u_T when the tail belongs to this transition.

    theta^(-alpha) ~ Gamma(m + N, rate = b_q(alpha) + sum x^alpha [+ u_T^alpha]).
    """
    xs = np.asarray(xs, dtype=np.float64)
    extra = [log_b_hat(alpha, tq_eff, prior.q, prior.m_eff)]
    if censored is not None:
        extra.append(alpha * math.log(censored))
    log_rate = _logsumexp(np.concatenate((alpha * np.log(xs), extra)))
    shape = prior.m_eff + len(xs)
    log_g = math.log(rng.standard_gamma(shape)) - log_rate
    return math.exp(-log_g / alpha)


class AlphaConditional:
    """log full conditional of alpha_ij (up to a constant) with its derivatives.

        log pi3(a) + a [sum ln x + m ln t_q - (m + N) ln theta] + (N + 1) ln a
            - (b_q(a) + M~(a)) theta^(-a)
    """

    def __init__(self, xs, sum_log, theta, censored, prior: TransitionPrior, tq_eff):
        xs = np.asarray(xs, dtype=np.float64)
        self.prior = prior
        self.n = len(xs)
        m = prior.m_eff
        log_theta = math.log(theta)
        self.linear = sum_log + m * math.log(tq_eff) - (m + self.n) * log_theta - m * prior.log_gap
        self.slopes, self.offsets = _power_terms(xs, censored, prior, tq_eff, log_theta)
        self.log_coef = prior.m_eff - 1 - prior.c + self.n + 1
        self.lo, self.hi = prior.alpha0, prior.alpha1

    def __call__(self, a: float) -> float:
        return self.value_and_grad(a)[0]

    def value_and_grad(self, a: float) -> tuple[float, float]:
        if not self.lo < a < self.hi:
            return -math.inf, math.nan
        with np.errstate(over="ignore"):
            e = np.exp(a * self.slopes + self.offsets)
        c = self.prior.c
        h = self.log_coef * math.log(a) + self.linear * a - float(e.sum())
        dh = self.log_coef / a + self.linear - float(self.slopes @ e)
        if c:
            h += c * math.log(a - self.lo)
            dh += c / (a - self.lo)
        return h, dh

    def curvature(self, a: float) -> float:
        with np.errstate(over="ignore"):
            e = np.exp(a * self.slopes + self.offsets)
        d2 = -self.log_coef / a**2 - float((self.slopes**2) @ e)
        if self.prior.c:
            d2 -= self.prior.c / (a - self.lo) ** 2
        return d2


def log_alpha_full_conditional(alpha, xs, sum_log, theta, censored, prior, tq_eff) -> float:
    return AlphaConditional(xs, sum_log, theta, censored, prior, tq_eff)(alpha)


def _alpha_init_points(cond: AlphaConditional, current: float, n: int) -> list[float]:
    lo, hi = cond.lo, cond.hi
    a = min(max(current, lo + 1e-9), hi - 1e-9) if math.isfinite(hi) else max(current, lo + 1e-9)
    d2 = cond.curvature(a)
    sd = 1.0 / math.sqrt(-d2) if d2 < 0 and math.isfinite(d2) else 0.5
    pts = []
    half = (n - 1) / 2
    for k in range(n):
        x = a + (k - half) / half * sd
        if x <= lo:
            x = lo + 0.5 * (a - lo) * (k + 1) / (half + 1)
        if x >= hi:
            x = hi - 0.5 * (hi - a) * (n - k) / (half + 1)
        pts.append(x)
    return pts


def sample_alpha(
    xs, sum_log, theta, censored, prior: TransitionPrior, tq_eff, rng,
    current: float | None = None, init_points: int = 3, max_rejections: int = 1000,
) -> float:
    cond = AlphaConditional(xs, sum_log, theta, censored, prior, tq_eff)
    if current is None:
        current = max(1.0, prior.alpha0 + 0.01)
    pts = _alpha_init_points(cond, current, init_points)
    ars = AdaptiveRejectionSampler(cond.value_and_grad, cond.lo, cond.hi, pts, max_rejections)
    return ars.sample(rng)


def latent_weights(p, alpha, theta, j_tau: int, censored: float) -> np.ndarray:
    """Normalised probabilities of the unseen state that follows j_tau."""
    with np.errstate(divide="ignore", over="ignore"):
        log_w = np.log(p[j_tau]) - np.exp(alpha[j_tau] * (math.log(censored) - np.log(theta[j_tau])))
    top = log_w.max()
    if not np.isfinite(top):
        raise GibbsError("censored time incompatible with parameters")
    w = np.exp(log_w - top)
    return w / w.sum()


def sample_latent_next_state(p, alpha, theta, j_tau: int, censored: float, rng) -> int:
    if censored <= 0:
        raise ValueError("latent state only exists when u_T > 0")
    w = latent_weights(p, alpha, theta, j_tau, censored)
    return int(rng.choice(len(w), p=w))


def _truncated_draw(cdf_lo, cdf_hi, sf_lo, sf_hi, inv_cdf, inv_sf, u):
    """Inverse-CDF draw on [lo, hi], using whichever tail keeps precision."""
    if cdf_lo < 0.5:
        mass = cdf_hi - cdf_lo
        return None if mass <= 0 else inv_cdf(cdf_lo + u * mass)
    mass = sf_lo - sf_hi
    return None if mass <= 0 else inv_sf(sf_hi + u * mass)


def sample_truncated_weibull(shape, scale, lo, hi, rng) -> float:
    """Weibull(shape, scale) restricted to [lo, hi] by inverse CDF."""
    zl, zh = (lo / scale) ** shape, (hi / scale) ** shape
    u = rng.random()
    t = _truncated_draw(
        -math.expm1(-zl), -math.expm1(-zh), math.exp(-zl), math.exp(-zh),
        lambda F: scale * (-math.log1p(-F)) ** (1.0 / shape),
        lambda S: scale * (-math.log(S)) ** (1.0 / shape),
        u,
    )
    if t is None:
        log.warning("truncated Weibull mass underflow; drawing uniformly on [%g, %g]", lo, hi)
        t = lo + u * (hi - lo)
    return min(max(t, lo), hi)


def fictitious_tq_cdf(t, alpha, theta, t_range, q: float = 0.5):
    """CDF of the fictitious-quantile full conditional on `t_range`."""
    a = 1.0 + 1.0 / alpha
    k = -log_quantile_multiplier(q, 1)
    lo, hi = t_range
    y = np.exp(k + alpha * (np.log(np.clip(t, lo, hi)) - math.log(theta)))
    ylo = math.exp(k + alpha * (math.log(lo) - math.log(theta)))
    yhi = math.exp(k + alpha * (math.log(hi) - math.log(theta)))
    return (special.gammainc(a, y) - special.gammainc(a, ylo)) / (
        special.gammainc(a, yhi) - special.gammainc(a, ylo)
    )


def sample_fictitious_tq(alpha, theta, t_range, rng, q: float = 0.5) -> float:
    """Draw the fictitious quantile of an m = 0 transition.

    Its full conditional is ∝ t^alpha exp{-k_q (t/theta)^alpha} on t_range,
    so y = k_q (t/theta)^alpha is Gamma(1 + 1/alpha) truncated.
    """
    lo, hi = t_range
    if hi <= lo:
        return float(lo)
    a = 1.0 + 1.0 / alpha
    log_k = -log_quantile_multiplier(q, 1)
    lt = math.log(theta)
    ylo = math.exp(log_k + alpha * (math.log(lo) - lt))
    yhi = math.exp(log_k + alpha * (math.log(hi) - lt))
    u = rng.random()
    y = _truncated_draw(
        special.gammainc(a, ylo), special.gammainc(a, yhi),
        special.gammaincc(a, ylo), special.gammaincc(a, yhi),
        lambda P: special.gammaincinv(a, P),
        lambda Q: special.gammainccinv(a, Q),
        u,
    )
    if y is None or not math.isfinite(y) or y <= 0:
        log.warning("fictitious quantile mass underflow; drawing uniformly on [%g, %g]", lo, hi)
        return lo + u * (hi - lo)
    t = math.exp(lt + (math.log(y) - log_k) / alpha)
    return min(max(t, lo), hi)


# ---------------------------------------------------------------------------
# sweeps


def initial_state(stats: TransitionStats, priors: PriorSet, rng) -> ChainState:
    s = priors.n_states
    alpha = np.empty((s, s))
    theta = np.empty((s, s))
    tq = {}
    for i in range(s):
        for j in range(s):
            pr = priors[i, j]
            alpha[i, j] = min(max(1.0, pr.alpha0 + 0.01), 0.5 * (pr.alpha0 + pr.alpha1))
            if pr.m == 0:
                tq[(i, j)] = 0.5 * (pr.t_range[0] + pr.t_range[1])
                theta[i, j] = tq[(i, j)]
            else:
                theta[i, j] = pr.t_q
    j_next = int(rng.integers(s)) if stats.censored > 0 else None
    return ChainState(priors.dirichlet.mean.copy(), alpha, theta, j_next, tq)


def gibbs_sweep(
    state: ChainState, stats: TransitionStats, priors: PriorSet, rng,
    config: GibbsConfig = GibbsConfig(),
) -> ChainState:
    """One sweep in the order j_next -> tq_fict -> alpha -> theta -> p (in place)."""
    s = priors.n_states
    fixed = config.fixed
    if state.j_next is not None and "j_next" not in fixed:
        state.j_next = sample_latent_next_state(
            state.p, state.alpha, state.theta, stats.censor_state, stats.censored, rng
        )
    if "tq" not in fixed:
        for (i, j) in sorted(state.tq_fict):
            pr = priors[i, j]
            state.tq_fict[(i, j)] = sample_fictitious_tq(
                state.alpha[i, j], state.theta[i, j], pr.t_range, rng, pr.q
            )
    for block in ("alpha", "theta"):
        if block in fixed:
            continue
        for i in range(s):
            for j in range(s):
                pr = priors[i, j]
                tq = state.tq_fict[(i, j)] if pr.m == 0 else pr.t_q
                cens = stats.censored if censor_assigned(stats, state.j_next, i, j) else None
                try:
                    if block == "alpha":
                        state.alpha[i, j] = sample_alpha(
                            stats.times[i][j], stats.sum_log[i, j], state.theta[i, j], cens,
                            pr, tq, rng, current=state.alpha[i, j],
                            init_points=config.ars_init_points,
                            max_rejections=config.max_rejections,
                        )
                    else:
                        state.theta[i, j] = sample_theta(
                            state.alpha[i, j], stats.times[i][j], cens, pr, tq, rng
                        )
                except (ARSError, ValueError, OverflowError) as exc:
                    raise GibbsError(f"{block}[{i + 1},{j + 1}]: {exc}") from exc
    if "p" not in fixed:
        state.p = sample_p_rows(stats, state.j_next, priors.dirichlet, rng)
    return state


def _run_chain(stats, priors, config: GibbsConfig, seed_seq, init: ChainState | None):
    rng = np.random.default_rng(seed_seq)
    state = initial_state(stats, priors, rng)
    if init is not None:
        state = init.copy()
        if stats.censored <= 0:
            state.j_next = None
    s = priors.n_states
    n = config.draws_per_chain
    out = {
        "p": np.empty((n, s, s)),
        "alpha": np.empty((n, s, s)),
        "theta": np.empty((n, s, s)),
        "j_next": np.full(n, -1, dtype=np.int64),
        "tq_fict": np.full((n, s, s), np.nan),
    }
    k = 0
    for sweep in range(config.n_iter):
        try:
            gibbs_sweep(state, stats, priors, rng, config)
        except GibbsError as exc:
            raise GibbsError(f"sweep {sweep}: {exc}") from exc
        if sweep >= config.n_burnin and (sweep - config.n_burnin + 1) % config.thin == 0:
            out["p"][k] = state.p
            out["alpha"][k] = state.alpha
            out["theta"][k] = state.theta
            out["j_next"][k] = -1 if state.j_next is None else state.j_next
            for (i, j), v in state.tq_fict.items():
                out["tq_fict"][k, i, j] = v
            k += 1
    return out


@dataclass
class ChainOutput:
    """Retained draws of all chains, stacked in chain order."""

    p: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    j_next: np.ndarray
    tq_fict: np.ndarray
    chain: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.chain)

    @property
    def n_states(self) -> int:
        return self.p.shape[1]

    @property
    def draws(self) -> list[ChainState]:
        out = []
        for k in range(self.n_draws):
            tq = {
                (i, j): float(self.tq_fict[k, i, j])
                for i, j in zip(*np.nonzero(~np.isnan(self.tq_fict[k])))
            }
            jn = int(self.j_next[k])
            out.append(
                ChainState(self.p[k], self.alpha[k], self.theta[k], None if jn < 0 else jn, tq)
            )
        return out

    def chain_draws(self, c: int) -> "ChainOutput":
        keep = self.chain == c
        return ChainOutput(
            self.p[keep], self.alpha[keep], self.theta[keep], self.j_next[keep],
            self.tq_fict[keep], self.chain[keep], dict(self.meta),
        )

    @classmethod
    def concatenate(cls, outputs) -> "ChainOutput":
        outputs = list(outputs)
        return cls(
            *(np.concatenate([getattr(o, f) for o in outputs]) for f in
              ("p", "alpha", "theta", "j_next", "tq_fict", "chain")),
            meta=dict(outputs[0].meta),
        )

    def save(self, path: str | Path) -> None:
        """JSON lines, one retained draw per line; metadata in `<path>.meta.json`."""
        path = Path(path)
        with path.open("w") as fh:
            for k in range(self.n_draws):
                tq = self.tq_fict[k].ravel()
                row = {
                    "chain": int(self.chain[k]),
                    "p": self.p[k].ravel().tolist(),
                    "alpha": self.alpha[k].ravel().tolist(),
                    "theta": self.theta[k].ravel().tolist(),
                    "j_next": None if self.j_next[k] < 0 else int(self.j_next[k]) + 1,
                    "tq_fict": [None if np.isnan(v) else float(v) for v in tq],
                }
                fh.write(json.dumps(row) + "\n")
        meta_path(path).write_text(json.dumps(self.meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ChainOutput":
        path = Path(path)
        rows = [json.loads(line) for line in path.read_text().splitlines() if line]
        meta = json.loads(meta_path(path).read_text()) if meta_path(path).exists() else {}
        s = int(round(math.sqrt(len(rows[0]["p"]))))
        shape = (len(rows), s, s)
        return cls(
            p=np.array([r["p"] for r in rows]).reshape(shape),
            alpha=np.array([r["alpha"] for r in rows]).reshape(shape),
            theta=np.array([r["theta"] for r in rows]).reshape(shape),
            j_next=np.array([-1 if r["j_next"] is None else r["j_next"] - 1 for r in rows]),
            tq_fict=np.array(
                [[np.nan if v is None else v for v in r["tq_fict"]] for r in rows]
            ).reshape(shape),
            chain=np.array([r["chain"] for r in rows]),
            meta=meta,
        )


def meta_path(path: Path) -> Path:
    """Sidecar of a chain file: chains.jsonl -> chains.meta.json."""
    if path.suffix == ".jsonl":
        return path.with_suffix(".meta.json")
    return path.with_name(path.name + ".meta.json")


def stats_digest(stats: TransitionStats) -> str:
    payload = {
        "counts": stats.counts.tolist(),
        "times": [[t.tolist() for t in row] for row in stats.times],
        "censor_state": stats.censor_state,
        "censored": stats.censored,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def priors_digest(priors: PriorSet) -> str:
    return hashlib.sha256(json.dumps(priors.to_json(), sort_keys=True).encode()).hexdigest()


def run_gibbs(
    stats: TransitionStats,
    priors: PriorSet,
    config: GibbsConfig = GibbsConfig(),
    init: ChainState | None = None,
    jobs: int = 1,
) -> ChainOutput:
    """Run `config.n_chains` independent chains and stack their retained draws.

    Chain c uses the c-th child of SeedSequence(config.seed), so results do
    not depend on `jobs`.
    """
    if priors.n_states != stats.n_states:
        raise ValueError("priors and data disagree on the number of states")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    args = [(stats, priors, config, ss, init) for ss in seeds]
    if jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chain, *zip(*args)))
    else:
        results = [_run_chain(*a) for a in args]
    n = config.draws_per_chain
    meta = {
        "config": asdict(config),
        "n_states": priors.n_states,
        "data_digest": stats_digest(stats),
        "prior_digest": priors_digest(priors),
        "censor_state": stats.censor_state + 1,
        "censored_days": stats.censored,
    }
    return ChainOutput(
        p=np.concatenate([r["p"] for r in results]),
        alpha=np.concatenate([r["alpha"] for r in results]),
        theta=np.concatenate([r["theta"] for r in results]),
        j_next=np.concatenate([r["j_next"] for r in results]),
        tq_fict=np.concatenate([r["tq_fict"] for r in results]),
        chain=np.repeat(np.arange(config.n_chains), n),
        meta=meta,
    )
