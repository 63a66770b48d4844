import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from switchgraph.adversary import oblivious_stream, switch_penalty
from switchgraph.metrics import HorizonMismatch, RunTrace, fit_exponent, policy_regret, regret_with_switching
from switchgraph.adversary import AdaptiveLossStream


def test_first_round_counts_as_switch():
    tr = RunTrace([1, 1, 0, 0, 2], np.zeros(5))
    assert tr.switched.tolist() == [True, False, True, False, True]
    assert tr.switches == 3
    assert [r[0] for r in tr.records()] == [1, 2, 3, 4, 5]


def test_always_best_action():
    losses = np.array([[0.2, 0.9], [0.1, 0.5], [0.4, 0.4]])
    tr = RunTrace([0, 0, 0], losses[:, 0])
    rep = regret_with_switching(tr, oblivious_stream(losses))
    assert rep.total_regret == pytest.approx(1.0)
    assert rep.switches == 1 and rep.best_action == 0


def test_alternating_equal_losses():
    T = 40
    losses = np.full((T, 2), 0.3)
    actions = np.arange(T) % 2
    rep = regret_with_switching(RunTrace(actions, losses[np.arange(T), actions]), losses)
    assert rep.total_regret == pytest.approx(T)


def test_hand_instance():
    # rounds are rows: l_1 = (0, 1), l_2 = (0, 1), l_3 = (1, 0); plays 0, 0, 1
    losses = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    actions = [0, 0, 1]
    rep = regret_with_switching(RunTrace(actions, losses[[0, 1, 2], actions]), losses)
    assert rep.trace_loss == 0.0
    assert rep.switches == 2
    assert rep.benchmark_losses.tolist() == [1.0, 2.0]
    assert rep.best_action == 0
    assert rep.total_regret == 1.0


def test_horizon_mismatch():
    with pytest.raises(HorizonMismatch):
        regret_with_switching(RunTrace([0, 0], [0.0, 0.0]), np.zeros((3, 2)))


def test_pinned_benchmark():
    losses = np.array([[0.0, 1.0], [0.0, 1.0]])
    rep = regret_with_switching(RunTrace([0, 0], [0.0, 0.0]), losses, benchmark_action=1)
    assert rep.best_action == 1 and rep.total_regret == pytest.approx(-1.0)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_regret_matches_bruteforce(data):
    n = data.draw(st.integers(1, 8))
    T = data.draw(st.integers(1, 64))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    losses = rng.random((T, n))
    actions = rng.integers(n, size=T)
    tr = RunTrace(actions, losses[np.arange(T), actions])
    rep = regret_with_switching(tr, losses)
    # oracle: explicit per-round loops
    incurred = 0.0
    prev = None
    switches = 0
    for t in range(T):
        incurred += losses[t][actions[t]]
        switches += prev is None or actions[t] != prev
        prev = actions[t]
    best = min(sum(losses[t][a] for t in range(T)) for a in range(n))
    assert rep.switches == switches
    assert rep.total_regret == pytest.approx(incurred + switches - best, abs=1e-9)
    assert rep.curve[-1] == pytest.approx(rep.total_regret)


def test_report_json_checkpoints():
    T = 5000
    losses = np.zeros((T, 2))
    rep = regret_with_switching(RunTrace(np.zeros(T, int), np.zeros(T)), losses)
    js = rep.to_json()
    assert set(js) == {"total_regret", "switches", "best_action", "curve_checkpoints"}
    assert len(js["curve_checkpoints"]) <= 1024
    assert js["curve_checkpoints"][-1][0] == T


# -- policy regret ---------------------------------------------------------

def test_memoryless_policy_regret_equals_external():
    rng = np.random.default_rng(3)
    losses = rng.random((30, 3))
    adv = AdaptiveLossStream(1, 3, 30, lambda t, w: float(losses[t - 1, w[-1]]))
    actions = rng.integers(3, size=30)
    tr = RunTrace(actions, adv.trace_losses(actions))
    p = policy_regret(tr, adv)
    e = regret_with_switching(tr, losses)
    assert p.total_regret == pytest.approx(e.total_regret - e.switches)


def test_constant_trace_policy_regret():
    adv = switch_penalty(2, 3, 20)
    tr = RunTrace([1] * 20, adv.trace_losses([1] * 20))
    rep = policy_regret(tr, adv)
    base = adv.meta["base"]
    assert rep.total_regret == pytest.approx(20 * (base[1] - min(base)))
    assert rep.total_regret >= 0


def test_switch_penalty_alternating():
    T = 50
    adv = switch_penalty(2, 2, T)
    actions = [t % 2 for t in range(T)]
    tr = RunTrace(actions, adv.trace_losses(actions))
    rep = policy_regret(tr, adv)
    base = adv.meta["base"]
    # round 1 sees a one-action window; every later window holds a switch
    assert rep.trace_loss == pytest.approx(base[0] + (T - 1))
    assert rep.benchmark_losses.min() == pytest.approx(T * min(base))
    assert rep.switches == T


def test_policy_regret_memory_too_long():
    adv = switch_penalty(5, 2, 3)
    with pytest.raises(HorizonMismatch):
        policy_regret(RunTrace([0, 0, 0], [0.0] * 3), adv)


# -- exponent fit ----------------------------------------------------------

def test_fit_exact_power_law():
    pts = [(T, T ** (2 / 3)) for T in (2**10, 2**11, 2**12, 2**13)]
    slope, _, _ = fit_exponent(pts)
    assert slope == pytest.approx(2 / 3, abs=1e-9)


def test_fit_constant():
    slope, intercept, _ = fit_exponent([(10, 3.0), (100, 3.0), (1000, 3.0)])
    assert slope == pytest.approx(0.0, abs=1e-12)
    assert intercept == pytest.approx(np.log(3.0))


def test_fit_noisy_power_law():
    rng = np.random.default_rng(1234)
    Ts = 2.0 ** np.arange(8, 16)
    pts = [(T, 5 * T**0.7 * (1 + 0.01 * rng.standard_normal())) for T in Ts]
    slope, _, _ = fit_exponent(pts)
    assert 0.68 <= slope <= 0.72


@pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 3)], [(0, 1), (2, 2), (3, 3)]])
def test_fit_rejects_bad_input(pts):
    with pytest.raises(ValueError):
        fit_exponent(pts)


def test_exhaustive_small_instance():
    # every action sequence of a 2-action, 4-round game against a brute-force oracle
    losses = np.array([[0.1, 0.7], [0.9, 0.2], [0.3, 0.3], [0.6, 0.0]])
    best = losses.sum(axis=0).min()
    for actions in itertools.product(range(2), repeat=4):
        tr = RunTrace(actions, losses[np.arange(4), actions])
        switches = 1 + sum(a != b for a, b in zip(actions, actions[1:]))
        expected = tr.total_loss + switches - best
        assert regret_with_switching(tr, losses).total_regret == pytest.approx(expected)
