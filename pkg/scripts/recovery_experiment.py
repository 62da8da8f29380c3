"""Coverage of 95% credible intervals over repeated synthetic fits.

    python scripts/recovery_experiment.py --replicates 10 --seed 1
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass, field
from datetime import timedelta

import numpy as np
from scipy import special

from mrpbayes.catalog import StateSpace, build_sequence, split_catalog, truncate_catalog
from mrpbayes.pipeline import fit_sequence
from mrpbayes.sampler import GibbsConfig
from mrpbayes.simulate import TrueModel, generate_mrp, sequence_to_catalog
from mrpbayes.summaries import chain_summary


@dataclass
class RecoveryConfig:
    p: list = field(default_factory=lambda: [[0.57, 0.27, 0.16], [0.58, 0.28, 0.14], [0.52, 0.32, 0.16]])
    alpha: list = field(default_factory=lambda: [[0.8, 1.2, 1.6], [1.0, 1.4, 1.8], [0.9, 1.7, 2.1]])
    theta: list = field(default_factory=lambda: [[200.0, 250.0, 300.0], [350.0, 220.0, 280.0], [260.0, 320.0, 240.0]])
    current_transitions: int = 300
    min_count: int = 3
    level: float = 0.95
    n_iter: int = 5000
    n_burnin: int = 1000
    thin: int = 4
    n_chains: int = 4
    replicates: int = 10
    seed: int = 1


def stationary_mean_sojourn(p, alpha, theta) -> float:
    w, v = np.linalg.eig(p.T)
    pi = np.real(v[:, np.argmin(abs(w - 1))])
    pi /= pi.sum()
    return float(pi @ (p * theta * np.exp(special.gammaln(1 + 1 / alpha))).sum(axis=1))


def one_replicate(cfg: RecoveryConfig, k: int) -> dict:
    model = TrueModel(np.array(cfg.p), np.array(cfg.alpha), np.array(cfg.theta))
    space = StateSpace((4.5, 4.9, 5.3))
    ex = stationary_mean_sojourn(model.p, model.alpha, model.theta)
    rng = np.random.default_rng([cfg.seed, k])
    long = generate_mrp(model, 4 * cfg.current_transitions * ex, rng)
    _, _, cut = split_catalog(long, cfg.min_count)
    catalog = sequence_to_catalog(long, space)
    end = catalog[0].time + timedelta(days=float(long.times[:cut].sum()) + cfg.current_transitions * ex)
    seq = build_sequence(truncate_catalog(catalog, end), space, end)
    gibbs = GibbsConfig(n_iter=cfg.n_iter, n_burnin=cfg.n_burnin, thin=cfg.thin, n_chains=cfg.n_chains, seed=cfg.seed * 1000 + k)
    fit = fit_sequence(seq, cfg.min_count, config=gibbs)
    summ = chain_summary(fit.output, cfg.level)
    hits = {}
    s = model.n_states
    for i in range(s):
        for j in range(s):
            for name, arr in (("alpha", model.alpha), ("theta", model.theta), ("p", model.p)):
                if name == "p" and j == s - 1:
                    continue
                key = f"{name}[{i + 1},{j + 1}]"
                hits[key] = bool(summ[key].lower <= arr[i, j] <= summ[key].upper)
    return {"replicate": k, "current_transitions": fit.current.tau, "covered": sum(hits.values()), "n": len(hits), "hits": hits}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="recovery.json")
    args = ap.parse_args(argv)
    cfg = RecoveryConfig(**{k: v for k, v in vars(args).items() if k in ("replicates", "seed") and v is not None})
    rows = []
    for k in range(cfg.replicates):
        r = one_replicate(cfg, k)
        rows.append(r)
        print(f"replicate {k}: {r['covered']}/{r['n']} covered, {r['current_transitions']} transitions")
    total = sum(r["covered"] for r in rows) / sum(r["n"] for r in rows)
    print(f"overall coverage {total:.3f} at nominal {cfg.level}")
    with open(args.out, "w") as fh:
        json.dump({"config": asdict(cfg), "coverage": total, "replicates": rows}, fh, indent=1)


if __name__ == "__main__":
    main()
