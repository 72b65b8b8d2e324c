"""Command line: run experiments, print bounds, verify traces, and try the
Levin oracle on a small game."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import bounds as B
from .experiment import SolverFailure, run_experiment
from .levin import BeliefGrid, GridTooCoarse, levin_oracle, random_relation
from .traces import emit_trace, verify_trace, write_summary


def list_presets() -> list[str]:
    root = resources.files(__package__) / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(ref: str) -> dict:
    """A path to a JSON file, or the name of a bundled preset."""
    p = Path(ref)
    if p.exists():
        return json.loads(p.read_text())
    name = ref[:-5] if ref.endswith(".json") else ref
    res = resources.files(__package__) / "presets" / f"{name}.json"
    if not res.is_file():
        raise FileNotFoundError(f"no config file or preset named {ref!r}; presets: {list_presets()}")
    return json.loads(res.read_text())


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_experiment(cfg)
    except SolverFailure as exc:
        dump = out / "failure.json"
        dump.write_text(json.dumps({"step": exc.t, "error": str(exc), "state": exc.state}, indent=2))
        print(f"solver failure: {exc} (state written to {dump})", file=sys.stderr)
        return 2
    trace = emit_trace(res.rows, out / f"trace.{args.format}", args.format)
    write_summary(res.summary, out)
    print(f"wrote {trace} and {out / 'summary.json'}")
    for k, v in res.summary["max_excess_bound17"].items():
        print(f"  eps={k}: max_t (R_t - bound17) = {v:.6g}")
    return 0


def cmd_bounds(args) -> int:
    print(f"{'eps':>10} " + " ".join(f"{k:>14}" for k in B.compute_bounds(B.BoundInputs(16)).keys()))
    for e in args.eps:
        table = B.compute_bounds(B.BoundInputs(args.T, args.N, e, args.delta, args.K, args.kappa))
        print(f"{e:>10.6g} " + " ".join(f"{v:>14.6f}" for v in table.values()))
    print("bound_14 is an asymptotic proxy (hidden constant set to kappa); "
          "bound_20 is shown for comparison only")
    return 0


def cmd_verify(args) -> int:
    try:
        rep = verify_trace(args.trace)
    except (OSError, ValueError) as exc:
        print(f"cannot verify: {exc}", file=sys.stderr)
        return 2
    print("\n".join(rep.lines()))
    return 0 if rep.ok else 1


def cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed)
    grid = BeliefGrid(args.outcomes, args.grid)
    rel = random_relation(rng, args.outcomes, n_terms=args.terms, n_branches=args.branches)
    print(f"belief grid: {len(grid)} points, step {args.grid}")
    print(f"relation: {args.branches} branch(es) of {args.terms} Hoeffding terms on the Brier game")
    print(f"C = {rel.C:.6f}, kappa = {rel.kappa:.6f}, target C + kappa*delta = "
          f"{rel.C + rel.kappa * grid.delta:.6f}")
    try:
        pi, g = levin_oracle(rel, grid, rel.C, rel.kappa)
    except GridTooCoarse as exc:
        print(str(exc))
        return 1
    print(f"pi = {np.array2string(pi, precision=4)}")
    print(f"g  = {np.array2string(g, precision=6)}  (max {g.max():.6f})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="defcast", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config and write a trace")
    p.add_argument("--config", required=True, help="JSON config path or preset name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="print the closed-form bounds")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--eps", type=float, nargs="+", default=[0.5, 0.25, 0.1])
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--K", type=int, default=1, help="number of rules")
    p.add_argument("--kappa", type=float, default=0.0)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="re-check a trace offline")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="Levin oracle on a random relation")
    p.add_argument("--outcomes", type=int, default=3)
    p.add_argument("--grid", type=float, default=1 / 64)
    p.add_argument("--terms", type=int, default=3)
    p.add_argument("--branches", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    sub.add_parser("presets", help="list bundled presets").set_defaults(
        func=lambda a: print("\n".join(list_presets())) or 0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
