"""PIT histogram of realised next events over many synthetic catalogs.

    python scripts/backtest_calibration.py --catalogs 50 --jobs 4 --seed 909
"""
from __future__ import annotations

import argparse
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import timedelta

import numpy as np
from scipy import special, stats

from mrpbayes.catalog import StateSpace
from mrpbayes.forecast import backtest_one
from mrpbayes.sampler import GibbsConfig
from mrpbayes.simulate import TrueModel, generate_mrp, sequence_to_catalog

P = [[0.57, 0.27, 0.16], [0.58, 0.28, 0.14], [0.52, 0.32, 0.16]]
ALPHA = [[0.8, 1.2, 1.6], [1.0, 1.4, 1.8], [0.9, 1.7, 2.1]]
THETA = [[200.0, 250.0, 300.0], [350.0, 220.0, 280.0], [260.0, 320.0, 240.0]]


@dataclass
class CalibrationConfig:
    catalogs: int = 50
    history_transitions: int = 250
    min_count: int = 2
    n_iter: int = 1500
    n_burnin: int = 500
    thin: int = 2
    jobs: int = 1
    seed: int = 909


def _mean_sojourn(m: TrueModel) -> float:
    w, v = np.linalg.eig(m.p.T)
    pi = np.real(v[:, np.argmin(abs(w - 1))])
    pi /= pi.sum()
    return float(pi @ (m.p * m.theta * np.exp(special.gammaln(1 + 1 / m.alpha))).sum(axis=1))


def one_catalog(cfg: CalibrationConfig, k: int):
    model = TrueModel(np.array(P), np.array(ALPHA), np.array(THETA))
    space = StateSpace((4.5, 4.9, 5.3))
    ex = _mean_sojourn(model)
    seq = generate_mrp(model, (cfg.history_transitions + 30) * ex, np.random.default_rng([cfg.seed, k]))
    catalog = sequence_to_catalog(seq, space)
    end = catalog[0].time + timedelta(days=cfg.history_transitions * ex)
    gibbs = GibbsConfig(n_iter=cfg.n_iter, n_burnin=cfg.n_burnin, thin=cfg.thin, n_chains=1, seed=k)
    res = backtest_one(catalog, space, end, cfg.min_count, gibbs)
    return res.pit if res.status == "ok" else None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--catalogs", type=int, default=50)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=909)
    ap.add_argument("--out", default="calibration.json")
    args = ap.parse_args(argv)
    cfg = CalibrationConfig(catalogs=args.catalogs, jobs=args.jobs, seed=args.seed)
    ks = list(range(cfg.catalogs))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            pits = list(pool.map(one_catalog, [cfg] * len(ks), ks))
    else:
        pits = [one_catalog(cfg, k) for k in ks]
    kept = [p for p in pits if p is not None]
    test = stats.kstest(kept, "uniform")
    counts, _ = np.histogram(kept, bins=10, range=(0, 1))
    print(f"{len(kept)} PIT values, KS D = {test.statistic:.3f}, p = {test.pvalue:.3f}")
    print("decile counts:", counts.tolist())
    with open(args.out, "w") as fh:
        json.dump({"config": asdict(cfg), "pit": kept, "ks_statistic": test.statistic, "ks_pvalue": test.pvalue}, fh, indent=1)


if __name__ == "__main__":
    main()
