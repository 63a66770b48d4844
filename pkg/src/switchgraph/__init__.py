"""Adversarial bandits with feedback graphs and switching costs."""

from .graph import FeedbackGraph, StarDecomposition, build_graph, exact_stats, generate, greedy_dominating_set
from .metrics import RunTrace, fit_exponent, policy_regret, regret_with_switching
from .policies import log_barrier_omd, run_baseline, run_corral, run_general, run_policy_regret, run_star

__all__ = [
    "FeedbackGraph",
    "StarDecomposition",
    "build_graph",
    "exact_stats",
    "generate",
    "greedy_dominating_set",
    "RunTrace",
    "fit_exponent",
    "policy_regret",
    "regret_with_switching",
    "log_barrier_omd",
    "run_baseline",
    "run_corral",
    "run_general",
    "run_policy_regret",
    "run_star",
]
