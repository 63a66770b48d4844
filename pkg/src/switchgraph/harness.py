"""Experiment configs, seeded repetition sweeps and CSV/JSON export.

A config is one JSON document. Every run ``(horizon index h, repetition r)``
gets the seed ``derive_seed(master_seed, h * repetitions + r)``; the
adversary and the policy draw from seeds derived from it (indices 0 and 1),
so results do not depend on worker scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import adversary as adv_mod
from . import policies
from ._rng import derive_seed
from .graph import FeedbackGraph, GraphError, generate, greedy_dominating_set, read_edge_list
from .metrics import RegretReport, fit_exponent, policy_regret, regret_with_switching

OUT_ENV = "SWITCHGRAPH_OUT"
RUNS_COLUMNS = ["horizon", "rep", "seed", "total_regret", "switches", "best_action", "wallclock_ms"]

OBLIVIOUS = ("noncomplete", "star_union", "evolving", "uniform", "fixture")
ADAPTIVE = ("switch_penalty", "delayed_gap")
ALGORITHMS = ("star", "star_unrestricted", "general", "corral", "policy_regret", "exp3", "batched_exp3_set")
PRESETS = ("star-default", "general-default", "corral-default")
DEFAULT_PRESET = {
    "star": "star-default",
    "star_unrestricted": "star-default",
    "general": "general-default",
    "corral": "corral-default",
    "policy_regret": "general-default",
    "exp3": "baseline-default",
    "batched_exp3_set": "baseline-default",
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    horizons: list
    graph: dict | None = None
    adversary: dict = field(default_factory=lambda: {"kind": "uniform", "params": {}})
    algorithm: dict = field(default_factory=lambda: {"name": "general", "preset": None, "params": {}})
    master_seed: int = 0
    repetitions: int = 1
    out_dir: str = "results"
    benchmark: str = "hidden"  # "hidden" pins the construction's best action, else best in hindsight
    timing: bool = True  # False writes wallclock_ms = 0 so runs.csv is byte-reproducible
    base_dir: str = "."  # resolves relative edge-list and fixture paths

    def __post_init__(self):
        validate(self)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


@dataclass
class SweepResult:
    config: ExperimentConfig
    runs: list  # dicts: horizon, rep, seed, report, wallclock_ms, info
    aggregates: list  # one dict per horizon
    exponent: tuple | None  # (slope, intercept, stderr) when >= 3 horizons

    def summary(self) -> dict:
        slope = None
        if self.exponent is not None:
            slope = dict(zip(("slope", "intercept", "stderr"), self.exponent))
        return {"config": self.config.to_json(), "aggregates": self.aggregates, "exponent": slope}


# ---------------------------------------------------------------------------
# config parsing / validation


def _field(d: dict, name: str, kind, default=None, required=False):
    if name not in d:
        if required:
            raise ConfigError(f"field '{name}': missing")
        return default
    value = d[name]
    if value is None and not required:
        return default
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise ConfigError(f"field '{name}': expected {names}, got {type(value).__name__}")
    return value


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {"master_seed", "horizons", "repetitions", "graph", "adversary", "algorithm", "out_dir", "benchmark", "timing"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"field '{unknown[0]}': unknown field")
    algorithm = _field(raw, "algorithm", dict, required=True)
    adversary = _field(raw, "adversary", dict, required=True)
    return ExperimentConfig(
        horizons=_field(raw, "horizons", list, required=True),
        graph=_field(raw, "graph", dict),
        adversary={"kind": adversary.get("kind"), "params": adversary.get("params", {})},
        algorithm={"name": algorithm.get("name"), "preset": algorithm.get("preset"), "params": algorithm.get("params", {})},
        master_seed=_field(raw, "master_seed", int, 0),
        repetitions=_field(raw, "repetitions", int, 1),
        out_dir=_field(raw, "out_dir", str, "results"),
        benchmark=_field(raw, "benchmark", str, "hidden"),
        timing=_field(raw, "timing", bool, True),
        base_dir=str(base_dir),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        return parse_config(text, path.parent)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from None


def validate(cfg: ExperimentConfig) -> None:
    """Check field values and (algorithm, adversary, graph) compatibility
    before anything runs."""
    h = cfg.horizons
    if not h or not all(isinstance(x, int) and not isinstance(x, bool) and x >= 2 for x in h):
        raise ConfigError("field 'horizons': need a non-empty list of integers >= 2")
    if any(b <= a for a, b in zip(h, h[1:])):
        raise ConfigError("field 'horizons': must be strictly increasing")
    if cfg.repetitions < 1:
        raise ConfigError("field 'repetitions': must be >= 1")
    if cfg.benchmark not in ("hidden", "hindsight"):
        raise ConfigError("field 'benchmark': expected 'hidden' or 'hindsight'")
    kind = cfg.adversary.get("kind")
    if kind not in OBLIVIOUS + ADAPTIVE:
        raise ConfigError(f"field 'adversary.kind': unknown construction {kind!r}")
    if not isinstance(cfg.adversary.get("params"), dict):
        raise ConfigError("field 'adversary.params': expected object")
    name = cfg.algorithm.get("name")
    if name not in ALGORITHMS:
        raise ConfigError(f"field 'algorithm.name': unknown algorithm {name!r}")
    preset = cfg.algorithm.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"field 'algorithm.preset': unknown preset {preset!r}")
    if not isinstance(cfg.algorithm.get("params"), dict):
        raise ConfigError("field 'algorithm.params': expected object")
    if (name == "policy_regret") != (kind in ADAPTIVE):
        raise ConfigError("field 'algorithm.name': policy_regret pairs with adaptive adversaries and only with them")
    g = resolve_graph(cfg, cfg.horizons[0])
    if name in ("star", "star_unrestricted") and g.star_center() is None:
        raise ConfigError(f"field 'graph': algorithm {name} needs a star graph")
    if kind == "noncomplete" and g.is_complete():
        raise ConfigError("field 'graph': noncomplete construction needs a non-complete graph")
    if kind == "star_union":
        try:
            adv_mod._check_disjoint_stars(g, greedy_dominating_set(g))
        except (GraphError, ValueError) as e:
            raise ConfigError(f"field 'graph': {e}") from None
    try:
        make_stream(cfg, g, cfg.horizons[0], 0)
    except (TypeError, KeyError, ValueError) as e:
        raise ConfigError(f"field 'adversary': {kind} cannot be built: {e}") from None


def _adv_params(cfg: ExperimentConfig) -> dict:
    return dict(cfg.adversary.get("params") or {})


def resolve_graph(cfg: ExperimentConfig, T: int) -> FeedbackGraph:
    spec = cfg.graph
    kind = cfg.adversary["kind"]
    if kind == "evolving":
        alpha = _adv_params(cfg).get("alpha", 2)
        if spec is not None:
            raise ConfigError("field 'graph': the evolving construction fixes its own graph; omit it")
        if not isinstance(alpha, int) or alpha < 2:
            raise ConfigError("field 'adversary.params.alpha': need an integer >= 2")
        return adv_mod.evolving_graph_stream(alpha, 2, 0).static_graph()
    if spec is None:
        raise ConfigError("field 'graph': missing")
    try:
        if "edge_list" in spec:
            return read_edge_list(Path(cfg.base_dir) / spec["edge_list"])
        if "kind" not in spec:
            raise ConfigError("field 'graph': need 'kind' or 'edge_list'")
        return generate(spec["kind"], **spec.get("params", {}))
    except (GraphError, TypeError, OSError) as e:
        raise ConfigError(f"field 'graph': {e}") from None


# ---------------------------------------------------------------------------
# single runs


def make_stream(cfg: ExperimentConfig, g: FeedbackGraph, T: int, seed: int):
    kind = cfg.adversary["kind"]
    p = _adv_params(cfg)
    if kind == "noncomplete":
        return adv_mod.noncomplete_lower_bound(g, T, seed)
    if kind == "star_union":
        return adv_mod.star_union_lower_bound(g, greedy_dominating_set(g), T, seed)
    if kind == "evolving":
        return adv_mod.evolving_graph_stream(p.get("alpha", 2), T, seed).stream
    if kind == "uniform":
        return adv_mod.uniform_stream(g.n, T, seed)
    if kind == "fixture":
        stream = adv_mod.read_fixture(Path(cfg.base_dir) / p["path"])
        if stream.horizon < T or stream.n_actions != g.n:
            raise ConfigError(f"field 'adversary.params.path': fixture is {stream.horizon}x{stream.n_actions}, need {T}x{g.n}")
        return adv_mod.LossStream(stream.losses[:T], stream.meta)
    return adv_mod.memory_adversary(kind, g.n, T, **p)


def resolve_params(cfg: ExperimentConfig, g: FeedbackGraph, T: int) -> dict:
    """Preset values overridden by explicit params; echoed into summaries."""
    name = cfg.algorithm["name"]
    preset = cfg.algorithm.get("preset") or DEFAULT_PRESET[name]
    n_rev = len(greedy_dominating_set(g).revealing)
    if name == "policy_regret":
        m = _adv_params(cfg).get("m", 1)
        T = max(1, T // m)
    if preset == "star-default":
        values = asdict(policies.star_default(T))
    elif preset == "general-default":
        values = asdict(policies.general_default(T, n_rev))
    elif preset == "corral-default":
        values = asdict(policies.corral_default(T, n_rev, g.n))
    else:
        values = policies.baseline_default(name, T, g.n)
    values.update(cfg.algorithm.get("params") or {})
    return values


def _run_policy(name: str, g, stream, params: dict, seed: int, cfg: ExperimentConfig):
    if name in ("star", "star_unrestricted"):
        return policies.run_star(g, stream, params["eta"], params["beta"], params["tau"],
                                 restrict_switches=name == "star", seed=seed)
    if name == "general":
        return policies.run_general(g, stream, params["eta"], params["beta"], params["tau"], seed=seed)
    if name == "corral":
        return policies.run_corral(g, stream, params["eta"], params["eta_prime"], params["tau"], seed=seed)
    if name == "policy_regret":
        mb = policies.MiniBatchParams(params["eta"], params["beta"], params["tau"])
        return policies.run_policy_regret(g, stream, _adv_params(cfg).get("m", 1), seed=seed, params=mb)
    return policies.run_baseline(name, g, stream, params["eta"], params.get("gamma", 0.0), params.get("tau", 1), seed=seed)


def run_single(cfg: ExperimentConfig, h_index: int, rep: int) -> dict:
    T = cfg.horizons[h_index]
    seed = derive_seed(cfg.master_seed, h_index * cfg.repetitions + rep)
    g = resolve_graph(cfg, T)
    params = resolve_params(cfg, g, T)
    start = time.perf_counter()
    stream = make_stream(cfg, g, T, derive_seed(seed, 0))
    trace = _run_policy(cfg.algorithm["name"], g, stream, params, derive_seed(seed, 1), cfg)
    pinned = stream.meta.get("best_action") if cfg.benchmark == "hidden" else None
    if cfg.adversary["kind"] in ADAPTIVE:
        report = policy_regret(trace, stream, pinned)
    else:
        report = regret_with_switching(trace, stream, pinned)
    elapsed = (time.perf_counter() - start) * 1000.0 if cfg.timing else 0.0
    return {"horizon": T, "rep": rep, "seed": seed, "report": report, "wallclock_ms": elapsed,
            "params": params, "trace_loss": report.trace_loss}


def _run_task(args):
    cfg, h, r = args
    return run_single(cfg, h, r)


# ---------------------------------------------------------------------------
# sweeps


def _aggregate(cfg: ExperimentConfig, runs: list) -> list:
    out = []
    for T in cfg.horizons:
        rows = [r for r in runs if r["horizon"] == T]
        regrets = np.array([r["report"].total_regret for r in rows])
        switches = np.array([r["report"].switches for r in rows])
        # regret of the mean: average incurred cost against the best average benchmark
        costs = np.array([r["report"].trace_loss + (r["report"].switches if cfg.adversary["kind"] in OBLIVIOUS else 0)
                          for r in rows])
        bench = np.mean([r["report"].benchmark_losses for r in rows], axis=0)
        stderr = float(regrets.std(ddof=1) / math.sqrt(len(rows))) if len(rows) > 1 else 0.0
        out.append({
            "horizon": T,
            "repetitions": len(rows),
            "mean_regret": float(regrets.mean()),
            "stderr_regret": stderr,
            "regret_of_mean": float(costs.mean() - bench.min()),
            "mean_switches": float(switches.mean()),
            "params": rows[0]["params"],
        })
    return out


def run_experiment(cfg: ExperimentConfig, jobs: int | None = None) -> SweepResult:
    """Run every (horizon, repetition) pair; output order is (horizon, rep)
    regardless of ``jobs``."""
    validate(cfg)
    tasks = [(cfg, h, r) for h in range(len(cfg.horizons)) for r in range(cfg.repetitions)]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            runs = list(pool.map(_run_task, tasks))
    else:
        runs = [_run_task(t) for t in tasks]
    aggregates = _aggregate(cfg, runs)
    exponent = None
    means = [(a["horizon"], a["mean_regret"]) for a in aggregates]
    if len(means) >= 3 and all(m > 0 for _, m in means):
        exponent = fit_exponent(means)
    return SweepResult(cfg, runs, aggregates, exponent)


def runs_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_COLUMNS)
    for r in result.runs:
        rep = r["report"]
        w.writerow([r["horizon"], r["rep"], r["seed"], repr(rep.total_regret), rep.switches, rep.best_action,
                    f"{r['wallclock_ms']:.3f}"])
    return buf.getvalue()


def output_dir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUT_ENV) or cfg.out_dir)


def write_outputs(result: SweepResult, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``summary.json`` and ``runs.csv``; each file appears whole or not at all."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = result.summary()
    summary["runs"] = [dict(horizon=r["horizon"], rep=r["rep"], seed=r["seed"], **r["report"].to_json())
                       for r in result.runs]
    files = {
        out_dir / "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
        out_dir / "runs.csv": runs_csv(result),
    }
    for path, text in files.items():
        fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=f".{path.name}.")
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    return tuple(files)


def read_runs_csv(path: str | Path) -> list[tuple[int, float]]:
    """Mean total regret per horizon from a runs.csv file."""
    with Path(path).open(newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != RUNS_COLUMNS:
            raise ConfigError(f"{path}: header must be {','.join(RUNS_COLUMNS)}")
        by_h: dict[int, list[float]] = {}
        for lineno, row in enumerate(reader, 2):
            try:
                by_h.setdefault(int(row["horizon"]), []).append(float(row["total_regret"]))
            except (TypeError, ValueError):
                raise ConfigError(f"{path}: line {lineno}: malformed row") from None
    return [(T, float(np.mean(v))) for T, v in sorted(by_h.items())]
