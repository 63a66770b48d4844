"""``switchgraph`` command line."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import adversary as adv_mod
from .graph import GraphError, exact_stats, generate, greedy_dominating_set, read_edge_list
from .harness import ConfigError, load_config, output_dir, read_runs_csv, run_experiment, write_outputs
from .metrics import fit_exponent

EXACT_LIMIT = 20


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.master_seed = args.seed
    return cfg


def cmd_run(args, require_fit=False) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if require_fit and len(cfg.horizons) < 3:
        raise ConfigError(f"{args.config}: field 'horizons': a sweep needs at least 3 horizons")
    result = run_experiment(cfg, jobs=args.jobs)
    out = output_dir(cfg, args.out)
    write_outputs(result, out)
    for a in result.aggregates:
        print(f"T={a['horizon']:>7}  mean regret {a['mean_regret']:.3f} +- {a['stderr_regret']:.3f}  "
              f"switches {a['mean_switches']:.1f}")
    if result.exponent is not None:
        slope, _, se = result.exponent
        print(f"fitted exponent {slope:.4f} (stderr {se:.4f})")
    print(f"wrote {out / 'summary.json'} and {out / 'runs.csv'}")
    return 0


def cmd_graph_info(args) -> int:
    g = read_edge_list(args.edge_list)
    d = greedy_dominating_set(g)
    print(f"n = {g.n}")
    print(f"max degree = {g.max_degree}")
    print(f"greedy |R| = {len(d.revealing)}  R = {list(d.revealing)}")
    if g.n <= EXACT_LIMIT:
        s = exact_stats(g)
        print(f"gamma = {s.gamma}")
        print(f"alpha = {s.alpha}")
        print(f"phi = {s.phi}")
    else:
        print(f"exact gamma/alpha/phi skipped (n > {EXACT_LIMIT})")
    return 0


def cmd_make_adversary(args) -> int:
    """Spec JSON: {"kind", "T", "seed", "graph": {...} (not for evolving), "params": {...}}."""
    try:
        spec = json.loads(Path(args.spec).read_text())
    except OSError as e:
        raise ConfigError(f"{args.spec}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{args.spec}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    for key in ("kind", "T"):
        if key not in spec:
            raise ConfigError(f"{args.spec}: field '{key}': missing")
    kind, T = spec["kind"], spec["T"]
    seed = spec.get("seed", 0) if args.seed is None else args.seed
    params = spec.get("params", {})
    extra = None
    if kind == "evolving":
        ev = adv_mod.evolving_graph_stream(params.get("alpha", 2), T, seed)
        stream, extra = ev.stream, {"revealing": ev.revealing.tolist()}
    else:
        gspec = spec.get("graph")
        if not gspec or "kind" not in gspec:
            raise ConfigError(f"{args.spec}: field 'graph': need {{'kind', 'params'}}")
        g = generate(gspec["kind"], **gspec.get("params", {}))
        if kind == "noncomplete":
            stream = adv_mod.noncomplete_lower_bound(g, T, seed)
        elif kind == "star_union":
            stream = adv_mod.star_union_lower_bound(g, greedy_dominating_set(g), T, seed)
        elif kind == "uniform":
            stream = adv_mod.uniform_stream(g.n, T, seed)
        else:
            raise ConfigError(f"{args.spec}: field 'kind': no fixture export for {kind!r}")
    out = Path(args.out or ".")
    csv_path, meta_path = adv_mod.write_fixture(stream, out / f"{kind}_T{T}_s{seed}.csv", extra)
    print(f"wrote {csv_path} and {meta_path}")
    return 0


def cmd_fit(args) -> int:
    points = read_runs_csv(args.runs)
    slope, intercept, se = fit_exponent(points)
    print(f"slope {slope:.6f}  intercept {intercept:.6f}  stderr {se:.6f}  ({len(points)} horizons)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchgraph", description="Bandits with feedback graphs and switching costs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
        p.add_argument("--out", default=None, help="output directory (overrides $SWITCHGRAPH_OUT and the config)")

    p = sub.add_parser("run", help="run a config and write summary.json / runs.csv")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("sweep", help="like run, but requires >= 3 horizons and reports the fitted exponent")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("graph-info", help="print n, max degree, greedy |R| and exact gamma/alpha/phi")
    p.add_argument("edge_list")
    p = sub.add_parser("make-adversary", help="write a loss fixture CSV and metadata sidecar")
    p.add_argument("spec")
    common(p)
    p = sub.add_parser("fit", help="fit the log-log regret exponent from runs.csv")
    p.add_argument("runs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "sweep": lambda a: cmd_run(a, require_fit=True),
        "graph-info": cmd_graph_info,
        "make-adversary": cmd_make_adversary,
        "fit": cmd_fit,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, GraphError, ValueError, OSError) as e:
        print(f"switchgraph {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
