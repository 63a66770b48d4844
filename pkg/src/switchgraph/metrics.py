"""Regret accounting with unit switching costs, policy regret, and
log-log exponent fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

MAX_CHECKPOINTS = 1024


class HorizonMismatch(ValueError):
    pass


@dataclass
class RunTrace:
    """Per-round actions and incurred losses of one run.

    ``info`` carries algorithm-specific diagnostics (epoch counts, clamp
    counts, corral bookkeeping, ...).
    """

    actions: np.ndarray
    losses: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.losses = np.asarray(self.losses, dtype=float)
        if self.actions.shape != self.losses.shape or self.actions.ndim != 1:
            raise ValueError("actions and losses must be equal-length 1-D arrays")

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def switched(self) -> np.ndarray:
        """``a_t != a_{t-1}`` with ``a_0`` outside the action set."""
        flags = np.ones(self.horizon, dtype=bool)
        flags[1:] = self.actions[1:] != self.actions[:-1]
        return flags

    @property
    def switches(self) -> int:
        return int(self.switched.sum())

    @property
    def total_loss(self) -> float:
        return float(self.losses.sum())

    def records(self):
        """``(t, action, loss, switched)`` tuples with 1-based rounds."""
        for t, (a, x, s) in enumerate(zip(self.actions, self.losses, self.switched), 1):
            yield t, int(a), float(x), bool(s)


@dataclass
class RegretReport:
    trace_loss: float
    benchmark_losses: np.ndarray
    switches: int
    best_action: int
    total_regret: float
    curve: np.ndarray  # cumulative regret after each round

    def checkpoints(self, limit: int = MAX_CHECKPOINTS) -> list[tuple[int, float]]:
        T = len(self.curve)
        if T == 0:
            return []
        idx = np.unique(np.linspace(1, T, num=min(limit, T)).round().astype(int))
        return [(int(t), float(self.curve[t - 1])) for t in idx]

    def to_json(self) -> dict:
        return {
            "total_regret": self.total_regret,
            "switches": self.switches,
            "best_action": self.best_action,
            "curve_checkpoints": [list(c) for c in self.checkpoints()],
        }


def _report(trace: RunTrace, bench_matrix: np.ndarray, include_switches: bool, benchmark_action: int | None) -> RegretReport:
    totals = bench_matrix.sum(axis=0)
    best = int(np.argmin(totals)) if benchmark_action is None else int(benchmark_action)
    incurred = trace.losses + (trace.switched if include_switches else 0.0)
    curve = np.cumsum(incurred - bench_matrix[:, best])
    return RegretReport(
        trace_loss=trace.total_loss,
        benchmark_losses=totals,
        switches=trace.switches,
        best_action=best,
        total_regret=float(curve[-1]),
        curve=curve,
    )


def regret_with_switching(trace: RunTrace, stream, benchmark_action: int | None = None) -> RegretReport:
    """``R_T = sum_t l_t(a_t) + M - sum_t l_t(a*)``.

    ``a*`` is the best fixed action in hindsight unless ``benchmark_action``
    pins it (e.g. to a construction's hidden best action).
    """
    losses = stream.losses if hasattr(stream, "losses") else np.asarray(stream)
    if losses.shape[0] != trace.horizon:
        raise HorizonMismatch(f"trace has {trace.horizon} rounds, stream has {losses.shape[0]}")
    return _report(trace, losses, True, benchmark_action)


def policy_regret(trace: RunTrace, adv, benchmark_action: int | None = None) -> RegretReport:
    """Regret against constant sequences ``(a, ..., a)`` under an adaptive
    adversary. Switching cost is not included; ``switches`` reports it."""
    if adv.memory > trace.horizon:
        raise HorizonMismatch(f"memory {adv.memory} exceeds trace length {trace.horizon}")
    if adv.horizon != trace.horizon:
        raise HorizonMismatch(f"trace has {trace.horizon} rounds, adversary has {adv.horizon}")
    return _report(trace, adv.benchmark_losses(), False, benchmark_action)


def fit_exponent(points: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """OLS fit of ``log regret`` on ``log T``; returns (slope, intercept, stderr)."""
    if len(points) < 3:
        raise ValueError(f"need at least 3 points, got {len(points)}")
    x, y = np.array(points, dtype=float).T
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("horizons and regrets must be positive to take logs")
    res = stats.linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.intercept), float(res.stderr)
