"""Loss streams: multi-scale random walk, lower-bound constructions, and
m-memory bounded adaptive adversaries.

Rounds are 1-based (``t = 1..T``) wherever a round is passed explicitly;
``LossStream.losses`` is the dense ``(T, n)`` matrix with row ``t - 1``
holding round ``t``.

Draw order for every seeded construction: hidden-structure sampling first
(active vertices, best action), then the walk's Gaussian increments in round
order, then per-round revealing vertices.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._rng import make_rng
from .graph import FeedbackGraph, GraphError, StarDecomposition, build_graph

GAP_CONSTANT = 1.0 / 42.0 ** (1.0 / 3.0)


def delta(t: int) -> int:
    """Exponent of the largest power of two dividing ``t``."""
    if t < 1:
        raise ValueError(f"round must be >= 1, got {t}")
    return (t & -t).bit_length() - 1


def parent(t: int) -> int:
    if t < 1:
        raise ValueError(f"round must be >= 1, got {t}")
    return t - (t & -t)


def walk_depth_width(parent_fn: Callable[[int], int], T: int) -> tuple[int, int]:
    """Depth (longest ancestor chain) and width (largest cut) of a parent
    function on ``1..T``, by exhaustive scan.

    ``cut(t) = {s : parent(s) < t <= s}``; a difference array over the
    intervals ``(parent(s), s]`` gives every cut size in one pass.
    """
    depth = [0] * (T + 1)
    diff = [0] * (T + 2)
    for s in range(1, T + 1):
        ps = parent_fn(s)
        if not 0 <= ps < s:
            raise ValueError(f"parent({s}) = {ps} is not in [0, {s})")
        depth[s] = depth[ps] + 1
        diff[ps + 1] += 1
        diff[s + 1] -= 1
    width = run = 0
    for t in range(1, T + 1):
        run += diff[t]
        width = max(width, run)
    return max(depth[1:]), width


@dataclass(frozen=True)
class MultiScaleWalk:
    T: int
    sigma: float
    seed: int | None
    values: np.ndarray  # W_0..W_T, W_0 = 0
    noise: np.ndarray  # xi_0..xi_T, xi_0 = 0

    def __getitem__(self, t: int) -> float:
        return float(self.values[t])


def _walk_from_noise(noise: np.ndarray) -> np.ndarray:
    values = np.zeros_like(noise)
    for t in range(1, len(noise)):
        values[t] = values[t - (t & -t)] + noise[t]
    return values


def sample_walk(T: int, sigma: float, seed: int | None = None, rng: np.random.Generator | None = None) -> MultiScaleWalk:
    """``W_t = W_parent(t) + xi_t`` with ``xi_t ~ N(0, sigma^2)`` i.i.d.

    Pass ``rng`` to continue an existing draw sequence; otherwise a fresh
    generator is built from ``seed``.
    """
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if rng is None:
        rng = make_rng(0 if seed is None else seed)
    noise = np.zeros(T + 1)
    noise[1:] = sigma * rng.standard_normal(T)
    return MultiScaleWalk(T, sigma, seed, _walk_from_noise(noise), noise)


def clip(x):
    """Clamp into ``[0, 1]``; works on scalars and arrays."""
    out = np.minimum(np.maximum(x, 0.0), 1.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# oblivious streams


@dataclass(frozen=True)
class LossStream:
    losses: np.ndarray  # (T, n), entries in [0, 1]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.losses.ndim != 2:
            raise ValueError("loss matrix must be 2-D (rounds x actions)")
        if np.any(self.losses < 0.0) or np.any(self.losses > 1.0):
            raise ValueError("losses must lie in [0, 1]")
        self.losses.setflags(write=False)

    @property
    def horizon(self) -> int:
        return self.losses.shape[0]

    @property
    def n_actions(self) -> int:
        return self.losses.shape[1]

    @property
    def best_action(self) -> int | None:
        return self.meta.get("best_action")

    def loss(self, t: int, action: int) -> float:
        return float(self.losses[t - 1, action])


def oblivious_stream(losses, **meta) -> LossStream:
    return LossStream(np.array(losses, dtype=float), dict(meta, construction=meta.get("construction", "oblivious")))


def uniform_stream(n_actions: int, T: int, seed: int) -> LossStream:
    """I.i.d. uniform losses; a benign baseline stream."""
    rng = make_rng(seed)
    return LossStream(rng.random((T, n_actions)), {"construction": "uniform", "seed": seed})


def walk_parameters(T: int, k: int = 1) -> tuple[float, float]:
    """Gap and noise scale ``(eps, sigma)`` for the walk constructions.

    ``eps = 42**(-1/3) * (k / T)**(1/3) / log T`` and ``sigma = 1 / log T``;
    ``k = 1`` is the two-action construction on a non-complete graph.
    """
    if T < 2:
        raise ValueError("walk constructions need T >= 2 (log T must be positive)")
    log_t = math.log(T)
    return GAP_CONSTANT * (k / T) ** (1.0 / 3.0) / log_t, 1.0 / log_t


def _walk_losses(n: int, T: int, candidates: Sequence[int], best: int, eps: float, walk: MultiScaleWalk) -> np.ndarray:
    losses = np.ones((T, n))
    base = walk.values[1:] + 0.5
    for v in candidates:
        losses[:, v] = clip(base - eps) if v == best else clip(base)
    return losses


def first_nonadjacent_pair(g: FeedbackGraph) -> tuple[int, int] | None:
    for u in range(g.n):
        for v in range(u + 1, g.n):
            if v not in g.adj[u]:
                return u, v
    return None


def noncomplete_lower_bound(g: FeedbackGraph, T: int, seed: int) -> LossStream:
    """Two-action walk construction on any non-complete graph.

    The lexicographically first non-adjacent pair carries walk losses (one of
    them, chosen uniformly, shifted down by ``eps``); every other vertex,
    including their shared neighbours, loses 1 each round.
    """
    pair = first_nonadjacent_pair(g)
    if pair is None:
        raise GraphError("complete graph has no non-adjacent pair; the construction needs a missing edge")
    eps, sigma = walk_parameters(T)
    rng = make_rng(seed)
    best = pair[int(rng.integers(2))]
    walk = sample_walk(T, sigma, seed, rng=rng)
    shared = sorted((g.adj[pair[0]] & g.adj[pair[1]]) - set(pair))
    meta = {
        "construction": "noncomplete",
        "seed": seed,
        "epsilon": eps,
        "sigma": sigma,
        "best_action": best,
        "candidates": list(pair),
        "shared_neighbor": shared[0] if shared else None,
    }
    return LossStream(_walk_losses(g.n, T, pair, best, eps, walk), meta)


def _check_disjoint_stars(g: FeedbackGraph, d: StarDecomposition) -> None:
    for u, v in g.edges():
        if d.owner[u] != d.owner[v]:
            raise GraphError(f"edge ({u}, {v}) crosses stars {d.owner[u]} and {d.owner[v]}")
        if u != d.owner[u] and v != d.owner[v]:
            raise GraphError(f"edge ({u}, {v}) joins two leaves of star {d.owner[u]}")


def star_union_lower_bound(g: FeedbackGraph, d: StarDecomposition, T: int, seed: int) -> LossStream:
    """Walk construction on a disjoint union of stars.

    One active leaf per star (uniform); a leafless star's lone vertex has no
    neighbours at all and is itself active. The best vertex is uniform among
    the actives; revealing vertices and inactive leaves lose 1.
    """
    d.check(g)
    _check_disjoint_stars(g, d)
    rng = make_rng(seed)
    active = []
    for r in d.revealing:
        leaves = d.leaves(r)
        if leaves:
            active.append(leaves[int(rng.integers(len(leaves)))])
        else:
            active.append(r)
    best = active[int(rng.integers(len(active)))]
    eps, sigma = walk_parameters(T, len(active))
    walk = sample_walk(T, sigma, seed, rng=rng)
    meta = {
        "construction": "star_union",
        "seed": seed,
        "epsilon": eps,
        "sigma": sigma,
        "best_action": best,
        "active": active,
        "singleton_policy": "leafless star vertex is active (it has no neighbours)",
    }
    return LossStream(_walk_losses(g.n, T, active, best, eps, walk), meta)


@dataclass(frozen=True)
class EvolvingGraphStream:
    """Losses over ``2 * alpha`` actions with a per-round revealing vertex.

    ``I = 0..alpha-1`` carry walk losses, ``R = alpha..2*alpha-1`` form a
    clique with loss 1, and round ``t``'s revealing vertex ``revealing[t-1]``
    is additionally joined to all of ``I``.
    """

    alpha: int
    stream: LossStream
    revealing: np.ndarray

    @property
    def independent(self) -> range:
        return range(self.alpha)

    @property
    def clique(self) -> range:
        return range(self.alpha, 2 * self.alpha)

    def graph_at(self, t: int) -> FeedbackGraph:
        return self._graph_for(int(self.revealing[t - 1]))

    def _graph_for(self, r: int) -> FeedbackGraph:
        clique = list(self.clique)
        edges = [(u, v) for i, u in enumerate(clique) for v in clique[i + 1:]]
        edges += [(r, v) for v in self.independent]
        return build_graph(2 * self.alpha, edges)

    def static_graph(self) -> FeedbackGraph:
        """The part of every round's graph known in advance: the clique on R."""
        clique = list(self.clique)
        return build_graph(2 * self.alpha, [(u, v) for i, u in enumerate(clique) for v in clique[i + 1:]])

    def observed(self, t: int, action: int) -> frozenset[int]:
        r = int(self.revealing[t - 1])
        if action == r:
            return frozenset(range(2 * self.alpha))
        if action >= self.alpha:
            return frozenset(self.clique)
        return frozenset((action,))


def evolving_graph_stream(alpha: int, T: int, seed: int) -> EvolvingGraphStream:
    if alpha < 2:
        raise ValueError(f"alpha must be >= 2, got {alpha}")
    rng = make_rng(seed)
    best = int(rng.integers(alpha))
    eps, sigma = walk_parameters(T, alpha)
    walk = sample_walk(T, sigma, seed, rng=rng)
    revealing = alpha + rng.integers(alpha, size=T)
    meta = {
        "construction": "evolving",
        "seed": seed,
        "epsilon": eps,
        "sigma": sigma,
        "best_action": best,
        "alpha": alpha,
    }
    losses = _walk_losses(2 * alpha, T, range(alpha), best, eps, walk)
    revealing.setflags(write=False)
    return EvolvingGraphStream(alpha, LossStream(losses, meta), revealing)


# ---------------------------------------------------------------------------
# adaptive (m-memory bounded) adversaries


@dataclass(frozen=True)
class AdaptiveLossStream:
    """Loss of round ``t`` as a function of the last ``memory`` actions.

    The window passed to ``loss`` is oldest-first; early rounds see a
    shorter window.
    """

    memory: int
    n_actions: int
    horizon: int
    evaluator: Callable[[int, tuple[int, ...]], float]
    meta: dict = field(default_factory=dict)

    def loss(self, t: int, window: Sequence[int]) -> float:
        window = tuple(window)[-self.memory:]
        value = self.evaluator(t, window)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"adversary produced loss {value} outside [0, 1]")
        return value

    def constant_loss(self, t: int, action: int) -> float:
        """``l_t(a, ..., a)``, the counterfactual loss of always playing ``a``."""
        return self.loss(t, (action,) * min(self.memory, t))

    def trace_losses(self, actions: Sequence[int]) -> np.ndarray:
        actions = list(actions)
        return np.array(
            [self.loss(t, actions[max(0, t - self.memory):t]) for t in range(1, len(actions) + 1)]
        )

    def benchmark_losses(self) -> np.ndarray:
        """``(T, n)`` matrix of constant-play losses."""
        return np.array(
            [[self.constant_loss(t, a) for a in range(self.n_actions)] for t in range(1, self.horizon + 1)]
        )


def _default_base(n_actions: int) -> np.ndarray:
    if n_actions == 1:
        return np.array([0.5])
    return 0.25 + 0.5 * np.arange(n_actions) / (n_actions - 1)


def switch_penalty(m: int, n_actions: int, T: int, base: Sequence[float] | None = None) -> AdaptiveLossStream:
    """Loss 1 while the window holds a switch, else a fixed per-action loss."""
    if m < 1:
        raise ValueError(f"memory must be >= 1, got {m}")
    base = _default_base(n_actions) if base is None else np.asarray(base, dtype=float)
    if base.shape != (n_actions,):
        raise ValueError("need one base loss per action")
    base_list = base.tolist()

    def evaluator(t, window):
        if len(set(window)) > 1:
            return 1.0
        return base_list[window[-1]]

    meta = {"construction": "switch_penalty", "memory": m, "base": base_list,
            "best_action": int(np.argmin(base))}
    return AdaptiveLossStream(m, n_actions, T, evaluator, meta)


def delayed_gap(m: int, n_actions: int, T: int, eps: float, best: int | None = None) -> AdaptiveLossStream:
    """Every action loses 1/2; ``best`` loses ``1/2 - eps`` only once the
    whole window has settled on it."""
    if m < 1:
        raise ValueError(f"memory must be >= 1, got {m}")
    if not 0.0 <= eps <= 0.5:
        raise ValueError(f"eps must lie in [0, 1/2], got {eps}")
    best = n_actions - 1 if best is None else best
    if not 0 <= best < n_actions:
        raise ValueError(f"best action {best} out of range")

    def evaluator(t, window):
        if all(a == best for a in window):
            return 0.5 - eps
        return 0.5

    meta = {"construction": "delayed_gap", "memory": m, "epsilon": eps, "best_action": best}
    return AdaptiveLossStream(m, n_actions, T, evaluator, meta)


def memory_adversary(kind: str, n_actions: int, T: int, **params) -> AdaptiveLossStream:
    if kind == "switch_penalty":
        return switch_penalty(params.pop("m"), n_actions, T, **params)
    if kind == "delayed_gap":
        return delayed_gap(params.pop("m"), n_actions, T, **params)
    raise ValueError(f"unknown adaptive adversary {kind!r}")


# ---------------------------------------------------------------------------
# fixtures


def _jsonable(meta: dict) -> dict:
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in meta.items()}


def write_fixture(stream: LossStream, path: str | Path, extra_meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``t,action,loss`` rows plus a ``.meta.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "action", "loss"])
        for t, row in enumerate(stream.losses, 1):
            for a, x in enumerate(row):
                w.writerow([t, a, repr(float(x))])
    meta_path = path.with_suffix(".meta.json")
    meta = {"construction": None, "seed": None, "epsilon": None, "sigma": None, "best_action": None}
    meta.update(_jsonable(stream.meta))
    meta.update(horizon=stream.horizon, n_actions=stream.n_actions)
    if extra_meta:
        meta.update(extra_meta)
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, meta_path


def read_fixture(path: str | Path) -> LossStream:
    path = Path(path)
    rows = []
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["t", "action", "loss"]:
            raise ValueError(f"{path}: expected header t,action,loss")
        for row in reader:
            rows.append((int(row["t"]), int(row["action"]), float(row["loss"])))
    T = max(r[0] for r in rows)
    n = max(r[1] for r in rows) + 1
    losses = np.full((T, n), np.nan)
    for t, a, x in rows:
        losses[t - 1, a] = x
    if np.isnan(losses).any():
        raise ValueError(f"{path}: fixture does not cover every (t, action)")
    meta_path = path.with_suffix(".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return LossStream(losses, meta)
