"""Online learners for bandits with feedback graphs and switching costs.

Two clocks are in play: an *epoch* counter (one draw and one weight update
per epoch) and the *global round* clock against which losses are indexed.
An epoch plays a single action for ``floor(tau_t)`` consecutive rounds; the
last epoch is cut at the horizon and its estimate uses only the rounds
actually played.

Learners expose ``begin_epoch()`` / ``end_epoch(batch)`` and, for use under
corralling, a per-round ``act()`` / ``feed(row)`` interface built on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rng import derive_seed, draw_index, make_rng
from .graph import FeedbackGraph, GraphError, StarDecomposition, bandit, greedy_dominating_set
from .metrics import RunTrace

# tolerance for floor() and for the beta * tau >= |R| precondition; the
# default presets sit exactly on that boundary
FLOOR_SLACK = 1e-9
CORRAL_CONSTANT = 3.0 * math.sqrt(2.0) * (math.sqrt(2.0) + 1.0)


class OMDConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EpochDecision:
    action: int
    batch_length: int
    revealing_owner: int


@dataclass(frozen=True)
class MiniBatchParams:
    eta: float
    beta: float
    tau: float


@dataclass(frozen=True)
class CorralParams:
    eta: float
    eta_prime: float
    tau: float


def star_default(T: int) -> MiniBatchParams:
    return MiniBatchParams(eta=T ** (-2 / 3), beta=T ** (-1 / 3), tau=T ** (2 / 3))


def general_default(T: int, n_revealing: int) -> MiniBatchParams:
    r = n_revealing
    return MiniBatchParams(
        eta=1.0 / (r ** (1 / 3) * T ** (2 / 3)),
        beta=min(1.0, r ** (1 / 3) / T ** (1 / 3)),
        tau=r ** (2 / 3) * T ** (1 / 3),
    )


def corral_default(T: int, n_revealing: int, n_vertices: int) -> CorralParams:
    r = n_revealing
    tau = T ** (1 / 3) / r ** 0.25
    t_outer = max(2.0, T / max(1.0, math.floor(tau)))
    log_v = math.log(n_vertices) if n_vertices > 1 else 1.0
    eta = r ** 0.25 / (40.0 * CORRAL_CONSTANT * math.log(t_outer) * T ** (1 / 3) * log_v)
    return CorralParams(eta=eta, eta_prime=T ** (-2 / 3), tau=tau)


def _batch_length(tau_t: float) -> tuple[int, bool]:
    n = math.floor(tau_t + FLOOR_SLACK)
    return (n, False) if n >= 1 else (1, True)


def _softmax(logw: np.ndarray) -> np.ndarray:
    w = np.exp(logw - logw.max())
    return w / w.sum()


def mix(q: np.ndarray, beta: float, target: np.ndarray) -> np.ndarray:
    return (1.0 - beta) * q + beta * target


# ---------------------------------------------------------------------------
# estimators (exposed for the unbiasedness checks)


def star_estimate(batch: np.ndarray, played: int, center: int, p: np.ndarray) -> np.ndarray:
    """Batch loss estimate: summed losses over ``p(center)`` when the center
    was played, zero otherwise."""
    if played != center:
        return np.zeros(batch.shape[1])
    return batch.sum(axis=0) / p[center]


def general_estimate(batch: np.ndarray, played: int, owner: Sequence[int], p: np.ndarray) -> np.ndarray:
    """Credit vertex ``i`` only through its revealing owner ``r_i``."""
    owner = np.asarray(owner)
    est = np.zeros(batch.shape[1])
    cols = owner == played
    if cols.any():
        est[cols] = batch[:, cols].sum(axis=0) / p[played]
    return est


# ---------------------------------------------------------------------------
# learners


class _EpochLearner:
    """Shared per-round adapter over ``begin_epoch``/``end_epoch``."""

    def _reset_clock(self):
        self._remaining = 0
        self._rows = []
        self._current = None

    def act(self) -> int:
        if self._remaining == 0:
            self._current = self.begin_epoch()
            self._remaining = self._current.batch_length
        return self._current.action

    def feed(self, row: np.ndarray) -> None:
        self._rows.append(row)
        self._remaining -= 1
        if self._remaining == 0:
            self.end_epoch(np.array(self._rows))
            self._rows = []


class StarLearner(_EpochLearner):
    """Adaptive mini-batch exponential weights on a star.

    ``vertices`` are global action ids (ascending); ``center`` is the
    revealing one. With ``restrict_switches`` a draw that would move between
    two leaves keeps the previous action instead.
    """

    def __init__(self, vertices: Sequence[int], center: int, eta: float, beta: float, tau: float,
                 rng: np.random.Generator, restrict_switches: bool = True):
        if beta * tau < 1.0 - FLOOR_SLACK:
            raise ValueError(f"need beta >= 1/tau so every batch is non-empty (beta={beta}, tau={tau})")
        self.vertices = np.asarray(vertices, dtype=np.int64)
        self.center = int(np.flatnonzero(self.vertices == center)[0])
        self.eta, self.beta, self.tau = eta, beta, tau
        self.rng = rng
        self.restrict_switches = restrict_switches
        self._dirac = np.zeros(len(self.vertices))
        self._dirac[self.center] = 1.0
        self.clamped = 0
        self.epochs = 0
        self.restart(eta)

    def restart(self, eta: float) -> None:
        self.eta = eta
        self.logw = np.zeros(len(self.vertices))
        self.prev = None
        self._reset_clock()

    @property
    def q(self) -> np.ndarray:
        return _softmax(self.logw)

    def distribution(self) -> np.ndarray:
        return mix(self.q, self.beta, self._dirac)

    def begin_epoch(self) -> EpochDecision:
        p = self.distribution()
        a = draw_index(p, self.rng.random())
        length, clamped = _batch_length(p[self.center] * self.tau)
        self.clamped += clamped
        if self.restrict_switches and self.prev is not None and self.prev != self.center and a != self.center:
            a = self.prev
        self.prev = a
        self._p, self._played = p, a
        self.epochs += 1
        return EpochDecision(int(self.vertices[a]), length, int(self.vertices[self.center]))

    def end_epoch(self, batch: np.ndarray) -> None:
        """``batch`` has one row per played round, columns in ``vertices`` order."""
        if self._played == self.center:
            self.logw -= self.eta * star_estimate(batch, self._played, self.center, self._p)


class GeneralLearner(_EpochLearner):
    """Adaptive mini-batch exponential weights over a greedy star partition.

    Batch length follows the owner of the freshly drawn action even when the
    switch rule keeps the previous action.
    """

    def __init__(self, g: FeedbackGraph, eta: float, beta: float, tau: float, rng: np.random.Generator,
                 decomposition: StarDecomposition | None = None):
        d = decomposition or greedy_dominating_set(g)
        self.g, self.decomposition = g, d
        self.revealing = np.array(d.revealing, dtype=np.int64)
        self.owner = np.array(d.owner, dtype=np.int64)
        self.in_r = np.zeros(g.n, dtype=bool)
        self.in_r[self.revealing] = True
        if beta * tau < len(self.revealing) - FLOOR_SLACK:
            raise ValueError(
                f"need beta >= |R|/tau so every batch is non-empty (beta={beta}, tau={tau}, |R|={len(self.revealing)})"
            )
        self.eta, self.beta, self.tau = eta, beta, tau
        self.rng = rng
        self.u = self.in_r / self.in_r.sum()
        self.logw = np.zeros(g.n)
        self.prev = None
        self.clamped = 0
        self.epochs = 0
        self._reset_clock()

    @property
    def q(self) -> np.ndarray:
        return _softmax(self.logw)

    def distribution(self) -> np.ndarray:
        return mix(self.q, self.beta, self.u)

    def begin_epoch(self) -> EpochDecision:
        p = self.distribution()
        i = draw_index(p, self.rng.random())
        r = int(self.owner[i])
        length, clamped = _batch_length(p[r] * self.tau)
        self.clamped += clamped
        a = i
        if self.prev is not None and not self.in_r[self.prev] and not self.in_r[a]:
            a = self.prev
        self.prev = a
        self._p, self._played = p, a
        self.epochs += 1
        return EpochDecision(int(a), length, r)

    def end_epoch(self, batch: np.ndarray) -> None:
        if self.in_r[self._played]:
            self.logw -= self.eta * general_estimate(batch, self._played, self.owner, self._p)


def _drive(learner, losses: np.ndarray, T: int) -> RunTrace:
    actions = np.empty(T, dtype=np.int64)
    incurred = np.empty(T)
    lengths = []
    s = 0
    while s < T:
        dec = learner.begin_epoch()
        n = min(dec.batch_length, T - s)
        actions[s:s + n] = dec.action
        incurred[s:s + n] = losses[s:s + n, dec.action]
        learner.end_epoch(losses[s:s + n])
        lengths.append(n)
        s += n
    info = {"epochs": learner.epochs, "clamped_batches": learner.clamped, "mean_batch": float(np.mean(lengths))}
    return RunTrace(actions, incurred, info)


def run_star(g: FeedbackGraph, stream, eta: float, beta: float, tau: float,
             restrict_switches: bool = True, seed: int = 0) -> RunTrace:
    """Adaptive mini-batching on a star graph.

    ``restrict_switches=False`` drops the leaf-to-leaf switch guard.
    """
    center = g.star_center()
    if center is None:
        raise GraphError("run_star needs a star graph (one vertex adjacent to all, leaves adjacent only to it)")
    learner = StarLearner(range(g.n), center, eta, beta, tau, make_rng(seed), restrict_switches)
    trace = _drive(learner, stream.losses, stream.horizon)
    trace.info.update(algorithm="star" if restrict_switches else "star_unrestricted", center=center)
    return trace


def run_general(g: FeedbackGraph, stream, eta: float, beta: float, tau: float, seed: int = 0) -> RunTrace:
    learner = GeneralLearner(g, eta, beta, tau, make_rng(seed))
    trace = _drive(learner, stream.losses, stream.horizon)
    trace.info.update(algorithm="general", revealing=learner.revealing.tolist())
    return trace


# ---------------------------------------------------------------------------
# corralling


def log_barrier_omd(q, loss, eta, tol: float = 1e-12, max_steps: int = 200) -> np.ndarray:
    """One log-barrier mirror-descent step.

    Finds ``lam`` in ``[min loss, max loss]`` with
    ``sum_i 1 / (1/q_i + eta_i (loss_i - lam)) = 1`` by bisection and returns
    ``q'_i = 1 / (1/q_i + eta_i (loss_i - lam))``.
    """
    q = np.asarray(q, dtype=float)
    loss = np.asarray(loss, dtype=float)
    eta = np.broadcast_to(np.asarray(eta, dtype=float), q.shape)
    if np.any(q <= 0):
        raise ValueError("log-barrier step needs a strictly positive distribution")
    if np.any(eta <= 0):
        raise ValueError("learning rates must be positive")
    inv_q = 1.0 / q
    lo, hi = float(loss.min()), float(loss.max())
    if lo == hi:
        return q / q.sum()

    def total(lam):
        d = inv_q + eta * (loss - lam)
        if np.any(d <= 0):
            return math.inf
        return float(np.sum(1.0 / d))

    # past the first pole every larger lam is infeasible; cap the bracket there
    hi = min(hi, float(np.min(inv_q / eta + loss)))
    lam, resid = lo, total(lo) - 1.0
    for _ in range(max_steps):
        if abs(resid) <= tol:
            break
        lam = 0.5 * (lo + hi)
        f = total(lam)
        resid = f - 1.0
        if f > 1.0:
            hi = lam
        else:
            lo = lam
    if abs(resid) > tol:
        raise OMDConvergenceError("bisection did not converge", resid)
    out = 1.0 / (inv_q + eta * (loss - lam))
    return out / out.sum()


def run_corral(g: FeedbackGraph, stream, eta: float, eta_prime: float, tau: float, seed: int = 0) -> RunTrace:
    """Mini-batched corralling of one star learner per revealing vertex.

    Outer epochs last ``floor(tau)`` rounds (the last one is cut at the
    horizon). Base ``i`` draws from its own generator seeded
    ``derive_seed(seed, i)``; the outer sampler uses ``derive_seed(seed, |R|)``.
    """
    T = stream.horizon
    losses = stream.losses
    d = greedy_dominating_set(g)
    k = len(d.revealing)
    epoch_len = max(1, math.floor(tau + FLOOR_SLACK))
    t_outer = math.ceil(T / epoch_len)
    beta = 1.0 / t_outer
    beta_tilde = math.exp(1.0 / math.log(T)) if T > 1 else math.e
    etas = np.full(k, float(eta))
    rho = np.full(k, 2.0 * k)
    q = np.full(k, 1.0 / k)
    p = q.copy()
    bases = [
        StarLearner(d.members(r), r, eta_prime / (2 * k), 1.0 / tau, tau, make_rng(derive_seed(seed, i)))
        for i, r in enumerate(d.revealing)
    ]
    outer_rng = make_rng(derive_seed(seed, k))
    zero_rows = [np.zeros(len(b.vertices)) for b in bases]

    actions = np.empty(T, dtype=np.int64)
    incurred = np.empty(T)
    restarts = np.zeros(k, dtype=np.int64)
    rho_history = [rho.copy()]
    eta_history = [etas.copy()]
    chosen = []
    s = 0
    while s < T:
        i_t = draw_index(p, outer_rng.random())
        chosen.append(i_t)
        scale = 1.0 / p[i_t]
        lhat = np.zeros(k)
        for j in range(s, min(s + epoch_len, T)):
            picks = [b.act() for b in bases]
            a = picks[i_t]
            actions[j] = a
            incurred[j] = losses[j, a]
            for i, b in enumerate(bases):
                b.feed(losses[j, b.vertices] * scale if i == i_t else zero_rows[i])
            lhat[i_t] += losses[j, a] * scale / epoch_len
        s += epoch_len
        q = log_barrier_omd(q, lhat, etas)
        p_next = mix(q, beta, np.full(k, 1.0 / k))
        for i in range(k):
            if 1.0 / p[i] > rho[i]:
                rho[i] = 2.0 / p[i]
                etas[i] *= beta_tilde
                bases[i].restart(eta_prime / rho[i])
                restarts[i] += 1
        p = p_next
        rho_history.append(rho.copy())
        eta_history.append(etas.copy())

    info = {
        "algorithm": "corral",
        "revealing": list(d.revealing),
        "outer_epochs": len(chosen),
        "epoch_length": epoch_len,
        "restarts": restarts.tolist(),
        "rho_history": np.array(rho_history),
        "eta_history": np.array(eta_history),
        "chosen_bases": chosen,
        "beta": beta,
        "beta_tilde": beta_tilde,
    }
    return RunTrace(actions, incurred, info)


# ---------------------------------------------------------------------------
# policy regret


def run_policy_regret(g: FeedbackGraph, adv, m: int, seed: int = 0,
                      params: MiniBatchParams | None = None) -> RunTrace:
    """Blocks of ``m`` rounds driven by a general-graph learner.

    A block whose action differs from the previous block's feeds zero for
    the played action and its neighbours; otherwise each neighbour ``b``
    receives its block-averaged constant-play loss ``l_t(b, ..., b)``.
    Trailing rounds beyond the last full block repeat the last action.
    """
    if m < 1:
        raise ValueError(f"memory must be >= 1, got {m}")
    if g.n != adv.n_actions:
        raise GraphError(f"graph has {g.n} vertices, adversary has {adv.n_actions} actions")
    T = adv.horizon
    n_blocks = T // m
    if n_blocks < 1:
        raise ValueError(f"horizon {T} is shorter than one block of {m}")
    if params is None:
        params = general_default(n_blocks, len(greedy_dominating_set(g).revealing))
    learner = GeneralLearner(g, params.eta, params.beta, params.tau, make_rng(seed))
    bench = adv.benchmark_losses()
    block_means = bench[: n_blocks * m].reshape(n_blocks, m, g.n).mean(axis=1)
    nbr_mask = g.adjacency_matrix()

    actions: list[int] = []
    prev_block_action = None
    zeroed = 0
    b = 0
    while b < n_blocks:
        dec = learner.begin_epoch()
        n = min(dec.batch_length, n_blocks - b)
        a = dec.action
        fed = np.zeros((n, g.n))
        for k in range(n):
            actions.extend([a] * m)
            if a != prev_block_action:
                zeroed += 1
            else:
                fed[k, nbr_mask[a]] = block_means[b + k, nbr_mask[a]]
            prev_block_action = a
        learner.end_epoch(fed)
        b += n
    actions.extend([actions[-1]] * (T - len(actions)))
    trace = RunTrace(actions, adv.trace_losses(actions))
    inner_switches = int(np.count_nonzero(np.diff(trace.actions[: n_blocks * m : m]))) + 1
    trace.info.update(
        algorithm="policy_regret",
        memory=m,
        blocks=n_blocks,
        zeroed_blocks=zeroed,
        inner_switches=inner_switches,
        clamped_batches=learner.clamped,
    )
    return trace


# ---------------------------------------------------------------------------
# baselines


def baseline_default(kind: str, T: int, n: int) -> dict:
    tau = 1 if kind == "exp3" else max(1, round(T ** (1 / 3)))
    epochs = math.ceil(T / tau)
    eta = math.sqrt(math.log(max(n, 2)) / (n * epochs)) / tau
    return {"eta": eta, "gamma": min(0.5, n * eta * tau), "tau": tau}


def run_baseline(kind: str, g: FeedbackGraph, stream, eta: float, gamma: float = 0.0,
                 tau: int = 1, seed: int = 0) -> RunTrace:
    """Exponential weights with importance-weighted graph feedback.

    ``exp3`` ignores side observations and redraws every round;
    ``batched_exp3_set`` holds each draw for ``tau`` rounds and divides each
    observed loss by the probability of observing it.
    """
    if kind == "exp3":
        g, tau = bandit(g.n), 1
    elif kind != "batched_exp3_set":
        raise ValueError(f"unknown baseline {kind!r}")
    tau = int(tau)
    if tau < 1:
        raise ValueError("tau must be a positive integer")
    rng = make_rng(seed)
    adj = g.adjacency_matrix()
    T, n = stream.losses.shape
    losses = stream.losses
    logw = np.zeros(n)
    uniform = np.full(n, 1.0 / n)
    actions = np.empty(T, dtype=np.int64)
    for s in range(0, T, tau):
        p = mix(_softmax(logw), gamma, uniform)
        a = draw_index(p, rng.random())
        e = min(s + tau, T)
        actions[s:e] = a
        seen = adj[a]
        observe_prob = adj.astype(float) @ p
        est = np.zeros(n)
        est[seen] = losses[s:e, seen].sum(axis=0) / observe_prob[seen]
        logw -= eta * est
    trace = RunTrace(actions, losses[np.arange(T), actions])
    trace.info.update(algorithm=kind, tau=tau)
    return trace
