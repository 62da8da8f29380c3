"""Bayesian Markov renewal models with Weibull sojourn times for earthquake catalogs."""
from .catalog import (
    CatalogError,
    EventRecord,
    SequenceData,
    StateSpace,
    build_sequence,
    classify_magnitude,
    read_catalog,
    split_catalog,
    sufficient_stats,
)
from .forecast import CspQuery, backtest, csp, csp_posterior, csp_ratios
from .prior import PriorSet, elicit_priors, elicit_transition_prior
from .sampler import ChainOutput, GibbsConfig, run_gibbs
from .simulate import TrueModel, generate_mrp
from .summaries import bayes_p_values, chain_summary

__all__ = [
    "CatalogError", "EventRecord", "SequenceData", "StateSpace", "build_sequence",
    "classify_magnitude", "read_catalog", "split_catalog", "sufficient_stats",
    "CspQuery", "backtest", "csp", "csp_posterior", "csp_ratios",
    "PriorSet", "elicit_priors", "elicit_transition_prior",
    "ChainOutput", "GibbsConfig", "run_gibbs",
    "TrueModel", "generate_mrp", "bayes_p_values", "chain_summary",
]
