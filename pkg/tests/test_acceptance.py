"""Acceptance criteria AC-1..AC-10. Each test prints one PASS/FAIL line; the
lines are repeated in the pytest terminal summary."""

import copy
import json
import math
import time

import numpy as np
from scipy.optimize import brentq

from conftest import ACCEPTANCE_LINES
from switchgraph import adversary as A
from switchgraph import policies as P
from switchgraph._rng import derive_seed
from switchgraph.graph import (
    build_graph,
    erdos_renyi,
    exact_stats,
    format_edge_list,
    greedy_bound,
    greedy_dominating_set,
    is_dominating,
    star,
    union_of_stars,
)
from switchgraph.harness import load_config, run_experiment
from switchgraph.metrics import fit_exponent, policy_regret

PATH3 = build_graph(3, [(0, 2), (1, 2)])


def record(ac, ok, detail):
    line = f"{ac} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def note(ac, detail):
    line = f"{ac} INFO: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


class FixedUniforms:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def test_ac1_greedy_approximation():
    start = time.perf_counter()
    worst = 0.0
    ok = True
    for seed in range(200):
        n = 6 + seed % 9
        g = erdos_renyi(n, (0.1, 0.3, 0.5)[seed % 3], seed=seed)
        d = greedy_dominating_set(g)
        gamma = exact_stats(g).gamma
        ok &= is_dominating(g, d.revealing)
        ok &= len(d.revealing) <= greedy_bound(g, gamma)
        worst = max(worst, len(d.revealing) / greedy_bound(g, gamma))
    elapsed = time.perf_counter() - start
    record("AC-1", ok and elapsed < 10, f"200 graphs, max |R|/bound = {worst:.3f}, {elapsed:.2f}s")


def test_ac2_walk_geometry():
    start = time.perf_counter()
    rows = []
    ok = True
    for k in (8, 10, 12, 14):
        T = 2**k
        depth, width = A.walk_depth_width(A.parent, T)
        limit = math.floor(math.log2(T)) + 1
        ok &= depth <= limit and width <= limit
        rows.append(f"T=2^{k}: d={depth} w={width} (<= {limit})")
    elapsed = time.perf_counter() - start
    record("AC-2", ok and elapsed < 5, "; ".join(rows) + f", {elapsed:.2f}s")


def _expected_estimate(learner, batch):
    """Exact expectation of the learner's loss estimate over its next draw.

    Every action ``a`` is forced through the real code path by feeding a
    uniform inside ``a``'s CDF interval; the estimate is read back from the
    weight change (``eta = 1``).
    """
    p = learner.distribution()
    cdf = np.concatenate([[0.0], np.cumsum(p)])
    total = np.zeros(batch.shape[1])
    for a in range(len(p)):
        if p[a] == 0:
            continue
        trial = copy.deepcopy(learner)
        trial.rng = FixedUniforms(0.5 * (cdf[a] + cdf[a + 1]) / cdf[-1])
        before = trial.logw.copy()
        trial.begin_epoch()
        trial.end_epoch(batch)
        total += p[a] * (before - trial.logw)
    return total


def test_ac3_estimator_unbiased():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 10))
        learner = P.StarLearner(range(k + 1), 0, 1.0, float(rng.uniform(0.05, 0.9)), 100.0, rng)
        learner.logw = rng.normal(0, 1, k + 1)
        learner.prev = int(rng.integers(k + 1))
        batch = rng.random((int(rng.integers(1, 20)), k + 1))
        worst = max(worst, np.abs(_expected_estimate(learner, batch) - batch.sum(axis=0)).max())
    star_worst = worst
    worst = 0.0
    for i in range(100):
        g = erdos_renyi(int(rng.integers(2, 13)), float(rng.uniform(0.05, 0.6)), seed=i)
        n_rev = len(greedy_dominating_set(g).revealing)
        learner = P.GeneralLearner(g, 1.0, float(rng.uniform(0.05, 0.9)), 1000.0, rng)
        learner.logw = rng.normal(0, 1, g.n)
        learner.prev = int(rng.integers(g.n))
        batch = rng.random((int(rng.integers(1, 20)), g.n))
        worst = max(worst, np.abs(_expected_estimate(learner, batch) - batch.sum(axis=0)).max())
        assert n_rev == len(learner.revealing)
    record("AC-3", star_worst <= 1e-9 and worst <= 1e-9,
           f"max |E[estimate] - batch sum| star {star_worst:.2e}, general {worst:.2e}")


def test_ac4_log_barrier_omd():
    rng = np.random.default_rng(7)
    worst_sum = 0.0
    positive = True
    for _ in range(1000):
        k = int(rng.integers(2, 16))
        q = rng.dirichlet(np.ones(k))
        q = np.maximum(q, 1e-12)
        q /= q.sum()
        out = P.log_barrier_omd(q, rng.random(k) * 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-3, 1, size=k))
        worst_sum = max(worst_sum, abs(out.sum() - 1))
        positive &= bool(np.all(out > 0))
    equal_ok = True
    for _ in range(50):
        k = int(rng.integers(2, 10))
        q = rng.dirichlet(np.ones(k))
        equal_ok &= np.allclose(P.log_barrier_omd(q, np.full(k, rng.random()), rng.random(k) + 0.1), q, atol=1e-15)
    lam = brentq(lambda x: 1 / (3 - x) + 1 / (2 - x) - 1, 0.0, 1.0, xtol=1e-15)
    oracle = np.array([1 / (3 - lam), 1 / (2 - lam)])
    two_arm = np.abs(P.log_barrier_omd([0.5, 0.5], [1.0, 0.0], [1.0, 1.0]) - oracle).max()
    ok = worst_sum <= 1e-9 and positive and equal_ok and two_arm <= 1e-8
    record("AC-4", ok, f"max |sum-1| {worst_sum:.1e}, positive {positive}, equal-loss fixed point {equal_ok}, "
                       f"2-arm error {two_arm:.1e}")


def test_ac5_switch_budgets():
    start = time.perf_counter()
    T = 2**12
    g1 = star(9)
    p1 = P.star_default(T)
    g2 = union_of_stars([4, 1, 1, 1])
    d2 = greedy_dominating_set(g2)
    p2 = P.general_default(T, len(d2.revealing))
    b1 = 2 * T / p1.tau * 1.1
    b2 = 2 * T * len(d2.revealing) / p2.tau * 1.1

    def mean_switches(run, g, streams):
        return float(np.mean([run(g, s, seed).switches for seed, s in enumerate(streams)]))

    run1 = lambda g, s, seed: P.run_star(g, s, p1.eta, p1.beta, p1.tau, seed=derive_seed(seed, 1))
    run2 = lambda g, s, seed: P.run_general(g, s, p2.eta, p2.beta, p2.tau, seed=derive_seed(seed, 1))
    m1 = mean_switches(run1, g1, [A.uniform_stream(g1.n, T, derive_seed(i, 0)) for i in range(50)])
    m2 = mean_switches(run2, g2, [A.uniform_stream(g2.n, T, derive_seed(i, 0)) for i in range(50)])
    # the same budgets on the lower-bound streams, reported but not asserted (see README)
    h1 = mean_switches(run1, g1, [A.star_union_lower_bound(g1, greedy_dominating_set(g1), T, derive_seed(i, 0))
                                  for i in range(50)])
    h2 = mean_switches(run2, g2, [A.star_union_lower_bound(g2, d2, T, derive_seed(i, 0)) for i in range(50)])
    elapsed = time.perf_counter() - start
    note("AC-5", f"star-union lower-bound streams: star learner {h1:.1f} (budget {b1:.1f}), "
                 f"general learner {h2:.1f} (budget {b2:.1f}){' EXCEEDS' if h2 > b2 or h1 > b1 else ''}")
    record("AC-5", m1 <= b1 and m2 <= b2 and elapsed < 120,
           f"uniform streams: star learner mean switches {m1:.1f} <= {b1:.1f}, general learner {m2:.1f} <= {b2:.1f}, {elapsed:.1f}s")


def test_ac6_regret_exponent(tmp_path):
    start = time.perf_counter()
    (tmp_path / "path3.txt").write_text(format_edge_list(PATH3))
    cfg_path = tmp_path / "ac6.json"
    cfg_path.write_text(json.dumps({
        "master_seed": 6,
        "horizons": [2**k for k in range(10, 15)],
        "repetitions": 20,
        "graph": {"edge_list": "path3.txt"},
        "adversary": {"kind": "noncomplete"},
        "algorithm": {"name": "general", "preset": "general-default"},
        "benchmark": "hidden",
        "timing": False,
    }))
    res = run_experiment(load_config(cfg_path), jobs=1)
    slope, _, se = res.exponent
    elapsed = time.perf_counter() - start
    means = ", ".join(f"{a['mean_regret']:.0f}" for a in res.aggregates)
    record("AC-6", 0.55 <= slope <= 0.85 and elapsed < 600,
           f"slope {slope:.3f} (stderr {se:.3f}) in [0.55, 0.85]; mean regrets {means}; {elapsed:.1f}s")


def test_ac7_restricted_equals_unrestricted():
    g = star(9)
    T = 1024
    s = A.star_union_lower_bound(g, greedy_dominating_set(g), T, 0)
    p = P.star_default(T)
    diffs = np.array([
        P.run_star(g, s, p.eta, p.beta, p.tau, True, seed=i).total_loss
        - P.run_star(g, s, p.eta, p.beta, p.tau, False, seed=i).total_loss
        for i in range(2000)
    ])
    se = diffs.std(ddof=1) / math.sqrt(len(diffs))
    record("AC-7", abs(diffs.mean()) <= 3 * se,
           f"mean paired loss difference {diffs.mean():.3f}, 3 SE = {3 * se:.3f}")


def _corral_checks(tr, n_rev):
    info = tr.info
    bound = math.ceil(math.log2(info["outer_epochs"])) + 1
    rho, etas = info["rho_history"], info["eta_history"]
    step = np.diff(rho, axis=0)
    grew = step > 0
    return (
        max(info["restarts"]) <= bound
        and np.all(rho >= 2 * n_rev)
        and np.all(step >= 0)
        and np.all(rho[1:][grew] >= 2 * rho[:-1][grew])
        and np.all(np.diff(etas, axis=0) >= 0)
    ), bound


def test_ac8_corral_bookkeeping():
    T = 4096
    ok = True
    restarts = 0
    stars = union_of_stars([4, 1, 1, 1])
    er = erdos_renyi(14, 0.25, seed=3)
    stars_stream = A.star_union_lower_bound(stars, greedy_dominating_set(stars), T, 1)
    er_stream = A.uniform_stream(er.n, T, 2)
    # (graph, stream, eta override); large eta forces restarts
    cases = [(stars, stars_stream, None), (stars, stars_stream, 1.0), (stars, stars_stream, 5.0),
             (er, er_stream, None), (er, er_stream, 3.0)]
    for g, s, eta in cases:
        d = greedy_dominating_set(g)
        c = P.corral_default(T, len(d.revealing), g.n)
        tr = P.run_corral(g, s, c.eta if eta is None else eta, c.eta_prime, c.tau, seed=4)
        good, _ = _corral_checks(tr, len(d.revealing))
        ok &= good and tr.horizon == T
        restarts += sum(tr.info["restarts"])
    same = True
    g = star(8)
    s = A.star_union_lower_bound(g, greedy_dominating_set(g), T, 2)
    c = P.corral_default(T, 1, g.n)
    for seed in range(5):
        a = P.run_corral(g, s, c.eta, c.eta_prime, c.tau, seed=seed)
        b = P.run_star(g, s, c.eta_prime / 2, 1 / c.tau, c.tau, True, seed=derive_seed(seed, 0))
        same &= np.array_equal(a.actions, b.actions) and np.array_equal(a.losses, b.losses)
    record("AC-8", ok and same and restarts > 0,
           f"{len(cases)} runs, {restarts} restarts, bounds and monotonicity hold: {ok}; |R|=1 trace identity: {same}")


def test_ac9_policy_regret():
    start = time.perf_counter()
    g = star(7)
    eps = 0.5
    points = []
    zero_ok = True
    for h, T in enumerate(2**k for k in range(10, 15)):
        adv = A.delayed_gap(2, 8, T, eps, best=7)
        regrets = []
        for rep in range(20):
            tr = P.run_policy_regret(g, adv, 2, seed=derive_seed(9, h * 20 + rep))
            zero_ok &= tr.info["zeroed_blocks"] <= tr.info["inner_switches"]
            regrets.append(policy_regret(tr, adv, benchmark_action=7).total_regret)
        points.append((T, float(np.mean(regrets))))
    slope, _, se = fit_exponent(points)
    elapsed = time.perf_counter() - start
    record("AC-9", 0.55 <= slope <= 0.9 and zero_ok,
           f"slope {slope:.3f} (stderr {se:.3f}) in [0.55, 0.9]; zeroed <= inner switches on all traces: {zero_ok}; "
           f"{elapsed:.1f}s")


def test_ac10_evolving_stream():
    T = 10_000
    ok = True
    details = []
    for alpha in range(2, 7):
        ev = A.evolving_graph_stream(alpha, T, seed=alpha)
        counts = np.bincount(ev.revealing - alpha, minlength=alpha)
        p = 1 / alpha
        tol = 3 * math.sqrt(T * p * (1 - p))
        uniform = bool(np.all(np.abs(counts - T * p) <= tol))
        stats = {}
        for t in range(1, T + 1):
            gt = ev.graph_at(t)
            if gt not in stats:
                stats[gt] = exact_stats(gt)
            s = stats[gt]
            if s.gamma != 1 or s.alpha != alpha + 1:
                ok = False
        ok &= uniform and len(stats) == alpha
        details.append(f"alpha={alpha}: max dev {np.abs(counts - T * p).max():.0f} <= {tol:.0f}")
    record("AC-10", ok, "; ".join(details) + "; gamma=1, alpha+1 on every round")
