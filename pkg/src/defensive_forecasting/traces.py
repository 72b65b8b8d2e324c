"""Trace files: CSV (or JSON) rows plus a ``summary.json`` beside them,
and an offline verifier that re-checks a trace without rerunning it."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import bounds as B
from .experiment import ANYTIME_GUARANTEED, TRACE_STYLE, TraceRow, eps_label
from .forecaster import verify_decrease

SUMMARY_NAME = "summary.json"
TOL = 1e-9


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def header(rows: list[TraceRow]) -> list[str]:
    eps = list(rows[0].Leps)
    n = len(rows[0].decision)
    return (["t", "learner_loss", "f_value", "threshold", "solver_mode"]
            + [f"decision_{i}" for i in range(n)]
            + [f"Leps_{eps_label(e)}" for e in eps]
            + [f"Reps_{eps_label(e)}" for e in eps]
            + [f"bound17_{eps_label(e)}" for e in eps])


def row_values(r: TraceRow) -> list:
    eps = list(r.Leps)
    return ([r.t, r.learner_loss, r.f_value, r.threshold, r.solver_mode] + list(r.decision)
            + [r.Leps[e] for e in eps] + [r.Reps[e] for e in eps] + [r.bound17[e] for e in eps])


def write_csv(rows: list[TraceRow], path) -> Path:
    if not rows:
        raise ValueError("nothing to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header(rows))
        for r in rows:
            w.writerow([str(r.t)] + [fmt(v) for v in row_values(r)[1:]])
    return path


def write_json(rows: list[TraceRow], path) -> Path:
    if not rows:
        raise ValueError("nothing to write")
    path = Path(path)
    cols = header(rows)
    data = [dict(zip(cols, row_values(r))) for r in rows]
    path.write_text(json.dumps(data, indent=1, allow_nan=True))
    return path


def emit_trace(rows, path, fmt_: str = "csv") -> Path:
    if fmt_ == "csv":
        return write_csv(rows, path)
    if fmt_ == "json":
        return write_json(rows, path)
    raise ValueError(f"unknown trace format {fmt_!r}")


def write_summary(summary: dict, directory) -> Path:
    path = Path(directory) / SUMMARY_NAME
    path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return path


def parse_rows(path) -> list[dict]:
    """Read a trace back as a list of ``{column: value}`` dicts."""
    path = Path(path)
    if path.suffix == ".json":
        rows = json.loads(path.read_text())
    else:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    out = []
    for raw in rows:
        row = {}
        for k, v in raw.items():
            if k == "solver_mode":
                row[k] = v
            elif k == "t":
                row[k] = int(v)
            else:
                row[k] = float(v)
        out.append(row)
    return out


def _columns(row, prefix):
    return {float(k[len(prefix):]): v for k, v in row.items() if k.startswith(prefix)}


def _decision(row):
    keys = sorted((k for k in row if k.startswith("decision_")), key=lambda k: int(k[9:]))
    return [row[k] for k in keys]


@dataclass
class TraceReport:
    path: str
    steps: int
    violations: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        head = f"{self.path}: {self.steps} steps, " + ("clean" if self.ok else
                                                      f"{len(self.violations)} violation(s)")
        return [head] + [f"  checked: {c}" for c in self.checks] + \
            [f"  t={t}: {msg}" for t, msg in self.violations]


def verify_trace(path, summary: dict | None = None) -> TraceReport:
    """Re-check decisions, the decrease property and the guaranteed bounds.

    The algorithm is read from ``summary.json`` beside the trace when no
    summary is passed; without one only algorithm-free checks run.
    """
    path = Path(path)
    try:
        rows = parse_rows(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ValueError(f"malformed trace {path}: {exc}") from exc
    if summary is None:
        sp = path.parent / SUMMARY_NAME
        summary = json.loads(sp.read_text()) if sp.exists() else {}
    alg = summary.get("algorithm")
    rep = TraceReport(str(path), len(rows))
    if not rows:
        rep.violations.append((0, "empty trace"))
        return rep
    for i, r in enumerate(rows, start=1):
        if r["t"] != i:
            rep.violations.append((i, f"row out of order (t={r['t']})"))
            return rep

    # decisions
    if alg == "two_loss":
        rep.checks.append("consistent (p, p_tilde) pairs")
        for r in rows:
            p, pt = _decision(r)
            if not (0 <= p <= 1 and 0 <= pt <= 1) or (p < 0.5 and pt != 0) or (p > 0.5 and pt != 1):
                rep.violations.append((r["t"], f"inconsistent pair p={p}, p_tilde={pt}"))
    else:
        rep.checks.append("decisions on the simplex")
        for r in rows:
            d = _decision(r)
            if any(x < -1e-12 or x > 1 + 1e-12 for x in d) or abs(math.fsum(d) - 1) > TOL:
                rep.violations.append((r["t"], f"decision off the simplex (sum {math.fsum(d):.17g})"))

    # supermartingale values
    trace = [(r["f_value"], r["threshold"]) for r in rows]
    if all(math.isfinite(f) for f, _ in trace):
        style = TRACE_STYLE.get(alg, "anytime")
        rep.checks.append(f"f trace ({style})")
        v = verify_decrease(trace, style, TOL)
        if v is not None:
            rep.violations.append((v.step, v.reason))

    # bounds
    if alg in ANYTIME_GUARANTEED:
        rep.checks.append("R_t^eps <= bound17 at every prefix")
        for r in rows:
            reps, b17 = _columns(r, "Reps_"), _columns(r, "bound17_")
            for e, R in reps.items():
                if abs(b17[e] - B.bound_17(r["t"], e)) > 1e-9 * b17[e]:
                    rep.violations.append((r["t"], f"bound17 column wrong at eps={e}"))
                if R > b17[e] + TOL:
                    rep.violations.append((r["t"], f"R^{e} = {R:.17g} > bound17 {b17[e]:.17g}"))
    if alg == "fixed_horizon":
        N = int(summary["config"]["N"])
        reps = _columns(rows[-1], "Reps_")
        e = min(reps)
        if abs(e - 1.0 / N) < 1e-12:
            rep.checks.append("final regret to the best expert <= sqrt(2 T ln N)")
            bound = B.bound_fixed(len(rows), N)
            if reps[e] > bound + TOL:
                rep.violations.append((len(rows), f"regret {reps[e]:.17g} > {bound:.17g}"))
    return rep
