"""Split -> elicit -> fit, shared by the CLI and the backtest."""
from __future__ import annotations

from dataclasses import dataclass

from .catalog import SequenceData, TransitionStats, split_catalog, sufficient_stats
from .prior import PriorSet, elicit_priors
from .sampler import ChainOutput, GibbsConfig, run_gibbs


@dataclass
class Fit:
    sequence: SequenceData
    historical: SequenceData
    current: SequenceData
    cut: int
    priors: PriorSet
    stats: TransitionStats
    output: ChainOutput

    def decisions(self) -> dict:
        return {
            "cut_index": self.cut,
            "cut_event_number": self.cut + 1,
            "historical_events": len(self.historical.states),
            "current_transitions": self.current.tau,
            "repaired_q": self.priors.repaired(),
            "dirichlet_source": "historical counts floored",
        }


def elicit(seq: SequenceData, min_count: int = 3, q_target: float = 0.5, floor: float = 1.0):
    historical, current, cut = split_catalog(seq, min_count)
    return historical, current, cut, elicit_priors(historical, q_target, floor)


def fit_sequence(
    seq: SequenceData,
    min_count: int = 3,
    q_target: float = 0.5,
    floor: float = 1.0,
    config: GibbsConfig = GibbsConfig(),
    jobs: int = 1,
) -> Fit:
    historical, current, cut, priors = elicit(seq, min_count, q_target, floor)
    stats = sufficient_stats(current)
    output = run_gibbs(stats, priors, config, jobs=jobs)
    return Fit(seq, historical, current, cut, priors, stats, output)
