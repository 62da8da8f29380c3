"""Command line interface: one subcommand per stage plus `all`.

Stages talk to each other only through files in the output directory, so
any stage can be re-run on its own.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path

import numpy as np

from .catalog import (
    StateSpace,
    build_sequence,
    load_sequence,
    read_catalog,
    save_sequence,
    sufficient_stats,
    write_catalog,
)
from .forecast import (
    CspQuery,
    backtest,
    backtest_csv,
    csp_posterior,
    csp_ratios,
    standard_horizons,
)
from .pipeline import elicit
from .prior import PriorSet
from .sampler import ChainOutput, GibbsConfig, run_gibbs
from .simulate import TrueModel, generate_mrp, sequence_to_catalog
from .summaries import bayes_p_values, chain_summary, predictive_draws

OUTPUT_ENV = "MRPBAYES_OUTPUT_DIR"
DEFAULT_THRESHOLDS = (4.5, 4.9, 5.3)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    catalog: str | None = None
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    end: str | None = None
    min_count: int = 3
    q_target: float = 0.5
    floor: float = 1.0
    n_iter: int = 20000
    n_burnin: int = 5000
    thin: int = 5
    n_chains: int = 4
    seed: int | None = None
    level: float = 0.95
    csp_level: float = 0.9
    output_dir: str | None = None
    jobs: int = 1

    def gibbs(self) -> GibbsConfig:
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or \"seed\" in the config file)")
        return GibbsConfig(
            n_iter=self.n_iter, n_burnin=self.n_burnin, thin=self.thin,
            n_chains=self.n_chains, seed=self.seed,
        )

    @property
    def out(self) -> Path:
        path = Path(self.output_dir or os.environ.get(OUTPUT_ENV, "mrp_out"))
        path.mkdir(parents=True, exist_ok=True)
        return path

    def space(self) -> StateSpace:
        return StateSpace(tuple(self.thresholds))

    def load_catalog(self):
        if not self.catalog:
            raise ConfigError("no catalog given")
        return read_catalog(self.catalog)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _dates(text: str) -> list[datetime]:
    return [datetime.fromisoformat(v.strip()) for v in text.split(",") if v.strip()]


def resolve_config(args) -> RunConfig:
    """Config file values first, then any flag given on the command line."""
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if "thresholds" in values:
        values["thresholds"] = tuple(values["thresholds"])
    return RunConfig(**values)


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# -- stages -----------------------------------------------------------------


def stage_elicit(cfg: RunConfig) -> dict:
    catalog = cfg.load_catalog()
    seq = build_sequence(catalog, cfg.space(), cfg.end)
    historical, current, cut, priors = elicit(seq, cfg.min_count, cfg.q_target, cfg.floor)
    out = cfg.out
    save_sequence(seq, out / "sequence.json")
    save_sequence(historical, out / "historical.json")
    save_sequence(current, out / "current.json")
    priors.save(out / "priors.json")
    decisions = {
        "cut_index": cut,
        "cut_event_number": cut + 1,
        "cut_date": (current.origin.isoformat() if current.origin else None),
        "historical_counts": sufficient_stats(historical).counts.tolist(),
        "repaired_q": priors.repaired(),
        "dirichlet_source": "historical counts floored",
    }
    _write_json(out / "elicit.json", decisions)
    return decisions


def stage_fit(cfg: RunConfig) -> ChainOutput:
    out = cfg.out
    priors = PriorSet.load(out / "priors.json")
    stats = sufficient_stats(load_sequence(out / "current.json"))
    output = run_gibbs(stats, priors, cfg.gibbs(), jobs=cfg.jobs)
    output.save(out / "chains.jsonl")
    return output


def stage_summarize(cfg: RunConfig, plot_data: bool = False) -> None:
    out = cfg.out
    output = ChainOutput.load(out / "chains.jsonl")
    stats = sufficient_stats(load_sequence(out / "current.json"))
    summary = chain_summary(output, cfg.level)
    summary.to_csv(out / "summary.csv")
    _write_json(out / "summary.json", summary.to_json())
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed or 0, 1]))
    report = bayes_p_values(stats.times, predictive_draws(output, rng), cfg.level)
    report.to_csv(out / "predictive.csv")
    report.table_csv(out / "predictive_table.csv")
    _write_json(out / "predictive.json", report.to_json())
    if plot_data:
        report.to_csv(out / "plot_data.csv")


def stage_forecast(cfg: RunConfig, state=None, elapsed=None, horizons=None, ratios=False) -> None:
    out = cfg.out
    output = ChainOutput.load(out / "chains.jsonl")
    current = load_sequence(out / "current.json")
    i = current.last_state if state is None else state - 1
    t0 = current.censored if elapsed is None else elapsed
    if horizons:
        labels, grid = [], np.array(horizons)
    else:
        labels, grid = standard_horizons()
    query = CspQuery(i, t0, tuple(grid))
    result = csp_posterior(output, query, cfg.csp_level, labels)
    result.to_table_csv(out / "csp.csv")
    result.to_long_csv(out / "csp_long.csv")
    if ratios:
        import csv

        with (out / "csp_ratios.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "fixed", "a", "b", "horizon_days", "ratio"])
            for mode in ("source-fixed", "destination-fixed"):
                for fixed in range(output.n_states):
                    rc = csp_ratios(output, CspQuery(fixed, t0, tuple(grid)), mode)
                    for a in range(output.n_states):
                        for b in range(output.n_states):
                            for d, r in zip(grid, rc.ratio[a, b]):
                                w.writerow([mode, fixed + 1, a + 1, b + 1, float(d), "" if np.isnan(r) else float(r)])


def stage_backtest(cfg: RunConfig, ends: list[datetime]) -> None:
    catalog = cfg.load_catalog()
    results = backtest(
        catalog, cfg.space(), ends, cfg.min_count, cfg.gibbs(), cfg.q_target, cfg.floor,
        cfg.csp_level, jobs=cfg.jobs,
    )
    backtest_csv(results, cfg.out / "backtest.csv")
    _write_json(cfg.out / "backtest.json", [
        {
            "end": r.end.isoformat(), "status": r.status, "reason": r.reason,
            "previous_state": None if r.previous_state is None else r.previous_state + 1,
            "waiting_days": r.waiting_days, "cut_event_number": None if r.cut_index is None else r.cut_index + 1,
            "realized_state": None if r.realized_state is None else r.realized_state + 1,
            "realized_delay_days": r.realized_delay, "boxed": r.boxed, "pit": r.pit,
        }
        for r in results
    ])


def stage_simulate(cfg: RunConfig, model_path: str, horizon: float) -> None:
    if cfg.seed is None:
        raise ConfigError("a seed is required (--seed)")
    model = TrueModel.load(model_path)
    seq = generate_mrp(model, horizon, np.random.default_rng(cfg.seed))
    th = tuple(cfg.thresholds)
    if len(th) != model.n_states:
        th = tuple(4.5 + 0.4 * k for k in range(model.n_states))
    space = StateSpace(th)
    save_sequence(seq, cfg.out / "sequence.json")
    write_catalog(sequence_to_catalog(seq, space), cfg.out / "catalog.csv")


def run_pipeline(cfg: RunConfig, plot_data: bool = False) -> dict:
    """elicit -> fit -> summarize -> forecast, then a manifest of digests."""
    decisions = stage_elicit(cfg)
    stage_fit(cfg)
    stage_summarize(cfg, plot_data)
    stage_forecast(cfg)
    out = cfg.out
    produced = [
        "sequence.json", "historical.json", "current.json", "priors.json", "elicit.json",
        "chains.jsonl", "chains.meta.json", "summary.csv", "summary.json", "predictive.csv",
        "predictive_table.csv", "predictive.json", "csp.csv", "csp_long.csv",
    ]
    if plot_data:
        produced.append("plot_data.csv")
    config = asdict(cfg)
    config.pop("output_dir")
    manifest = {
        "config": config,
        "inputs": {"catalog": {"path": cfg.catalog, "sha256": sha256_file(cfg.catalog)}},
        "decisions": decisions,
        "outputs": {name: sha256_file(out / name) for name in produced},
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


# -- argument parsing ---------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, catalog=False, gibbs=False) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./mrp_out)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    if catalog:
        p.add_argument("--catalog", help="CSV with header date,magnitude[,id]")
        p.add_argument("--thresholds", type=_floats, help="ascending magnitude cut-points, e.g. 4.5,4.9,5.3")
        p.add_argument("--end", help="observation horizon (ISO date); default: last event")
        p.add_argument("--min-count", dest="min_count", type=int)
        p.add_argument("--q-target", dest="q_target", type=float)
        p.add_argument("--floor", type=float, help="Dirichlet weight floor")
    if gibbs:
        p.add_argument("--n-iter", dest="n_iter", type=int)
        p.add_argument("--n-burnin", dest="n_burnin", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--n-chains", dest="n_chains", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrpbayes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("elicit", help="split the catalog and elicit priors")
    _add_common(p, catalog=True)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    _add_common(p, gibbs=True)

    p = sub.add_parser("summarize", help="posterior summaries and predictive checks")
    _add_common(p)
    p.add_argument("--level", type=float)
    p.add_argument("--plot-data", action="store_true")

    p = sub.add_parser("forecast", help="cross state-probabilities")
    _add_common(p)
    p.add_argument("--state", type=int, help="state of the last event (1-based)")
    p.add_argument("--elapsed-days", dest="elapsed", type=float)
    p.add_argument("--horizons", type=_floats, help="comma-separated horizons in days")
    p.add_argument("--csp-level", dest="csp_level", type=float)
    p.add_argument("--ratios", action="store_true", help="also write TPM/SPM ratio curves")

    p = sub.add_parser("backtest", help="re-fit with the catalog ending at earlier dates")
    _add_common(p, catalog=True, gibbs=True)
    p.add_argument("--ends", type=_dates, required=True)
    p.add_argument("--csp-level", dest="csp_level", type=float)

    p = sub.add_parser("simulate", help="synthetic sequence from a model file")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--horizon-days", dest="horizon", type=float, required=True)
    p.add_argument("--thresholds", type=_floats)

    p = sub.add_parser("all", help="elicit, fit, summarize and forecast")
    _add_common(p, catalog=True, gibbs=True)
    p.add_argument("--level", type=float)
    p.add_argument("--csp-level", dest="csp_level", type=float)
    p.add_argument("--plot-data", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        cfg = resolve_config(args)
        cmd = args.command
        if cmd == "elicit":
            stage_elicit(cfg)
        elif cmd == "fit":
            stage_fit(cfg)
        elif cmd == "summarize":
            stage_summarize(cfg, args.plot_data)
        elif cmd == "forecast":
            stage_forecast(cfg, args.state, args.elapsed, args.horizons, args.ratios)
        elif cmd == "backtest":
            stage_backtest(cfg, args.ends)
        elif cmd == "simulate":
            stage_simulate(cfg, args.model, args.horizon)
        elif cmd == "all":
            run_pipeline(cfg, args.plot_data)
    except Exception as exc:  # every stage failure ends as a machine-readable error
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        try:
            out = cfg.out if cfg is not None else None
            if out is not None:
                _write_json(out / "error.json", err)
        except Exception:
            pass
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
