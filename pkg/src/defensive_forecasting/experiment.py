"""Config-driven experiment runs.

A config is a JSON object::

    {"algorithm": "anytime", "environment": {"kind": "iid_bernoulli"},
     "T": 300, "N": 8, "seed": 0, "epsilon_grid": [0.5, 0.25],
     "eta_nodes": 16, "i_max": null,
     "solver": {"slack": 1e-9, "max_iter": 10000, "restarts": 16,
                "vertex_exact_max_n": 12}}

Rule learners also read ``rules``; the two-loss learner reads ``K`` and ``M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds as B
from . import game as G
from . import learners as L
from .environments import make_environment
from .forecaster import SolverConfig
from .supermartingale import grid_certificate

ALGORITHMS = ("fixed_horizon", "quantile", "anytime", "internal", "awake", "two_loss", "hedge")
DTOL_ALGORITHMS = ("fixed_horizon", "quantile", "anytime", "internal", "awake", "hedge")

# how verify_decrease reads each learner's trace
TRACE_STYLE = {"fixed_horizon": "decreasing", "quantile": "decreasing", "awake": "decreasing",
               "anytime": "anytime", "internal": "anytime", "two_loss": "anytime"}
# learners whose prefix regret is guaranteed below bound17 at every step
ANYTIME_GUARANTEED = ("anytime", "internal")


@dataclass
class TraceRow:
    t: int
    learner_loss: float
    f_value: float
    threshold: float
    solver_mode: str
    decision: list
    Leps: dict = field(default_factory=dict)
    Reps: dict = field(default_factory=dict)
    bound17: dict = field(default_factory=dict)


def eps_label(eps: float) -> str:
    return repr(float(eps))


def default_epsilon_grid(n_refs: int) -> list[float]:
    grid = [0.5, 0.25, 0.125, 1.0 / n_refs]
    out = []
    for e in grid:
        if e <= 1 and all(abs(e - o) > 1e-15 for o in out):
            out.append(e)
    return out


def solver_from_config(cfg: dict) -> SolverConfig:
    s = cfg.get("solver") or {}
    base = SolverConfig()
    return SolverConfig(
        feasibility_slack=float(s.get("slack", base.feasibility_slack)),
        max_iterations=int(s.get("max_iter", base.max_iterations)),
        vertex_exact_max_n=int(s.get("vertex_exact_max_n", base.vertex_exact_max_n)),
        heuristic_restarts=int(s.get("restarts", base.heuristic_restarts)),
        seed=int(cfg.get("seed", 0)),
    )


def _selection(spec, T):
    if spec is None or isinstance(spec, (int, float)):
        return 1.0 if spec is None else float(spec)
    if spec == "alternating":
        return lambda t: 1.0 if t % 2 == 1 else 0.0
    if isinstance(spec, dict) and "join" in spec:
        j = int(spec["join"])
        return lambda t: 1.0 if t >= j else 0.0
    raise ValueError(f"unknown selection {spec!r}")


def build_rules(cfg: dict, n: int, env=None) -> list[G.ModificationRule]:
    """Rules from ``cfg["rules"]``; without it, one constant-action rule per
    action (joining late when the environment says so)."""
    specs = cfg.get("rules")
    if specs is None:
        joins = getattr(env, "join_steps", None)
        if joins is not None:
            return [G.late_arrival_rule(n, a, joins[a]) for a in range(n)]
        return [G.constant_action_rule(n, a) for a in range(n)]
    out = []
    for s in specs:
        sel = _selection(s.get("selection"), cfg["T"])
        kind = s["type"]
        if kind == "identity":
            out.append(G.identity_rule(n, sel))
        elif kind == "swap":
            out.append(G.swap_rule(n, int(s["a"]), int(s["b"]), sel))
        elif kind == "internal":
            out.append(G.internal_rule(n, int(s["a"]), int(s["b"]), sel))
        elif kind == "constant":
            out.append(G.constant_action_rule(n, int(s["action"]), sel))
        else:
            raise ValueError(f"unknown rule type {kind!r}")
    return out


def build_learner(cfg: dict, env=None):
    alg = cfg["algorithm"]
    T, N = int(cfg["T"]), int(cfg.get("N", 0))
    solver = solver_from_config(cfg)
    eta_nodes = int(cfg.get("eta_nodes") or L.DEFAULT_ETA_NODES)
    i_max = cfg.get("i_max")
    weights = cfg.get("weights") or N
    if alg == "fixed_horizon":
        return L.make_fixed_horizon(T, N, solver=solver)
    if alg == "quantile":
        return L.make_quantile(weights, eta_nodes, solver)
    if alg == "anytime":
        return L.make_anytime(weights, i_max, solver)
    if alg == "internal":
        return L.make_internal(build_rules(cfg, N, env), N, i_max=i_max, solver=solver)
    if alg == "awake":
        return L.make_awake(build_rules(cfg, N, env), N, eta_nodes=eta_nodes, solver=solver)
    if alg == "two_loss":
        return L.make_two_loss(int(cfg["K"]), int(cfg["M"]), eta_nodes)
    if alg == "hedge":
        return L.make_hedge_baseline(N, cfg.get("mode", "anytime"), cfg.get("eta"), T)
    raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")


class SolverFailure(RuntimeError):
    """A learner step failed; ``state`` holds the dumped evaluator state."""

    def __init__(self, t, cause):
        super().__init__(f"step {t}: {cause}")
        self.t = t
        self.state = getattr(cause, "state", {})


@dataclass
class ExperimentResult:
    config: dict
    rows: list
    summary: dict
    learner: object


def _quantiles(learner, eps_grid):
    if isinstance(learner, L.TwoLossLearner):
        w = np.full(learner.M, 1.0 / (learner.K + learner.M))
        cum = learner.boolean_expert_cum
        out = {}
        for e in eps_grid:
            q = G.weighted_lower_quantile(cum, w, e) if e <= w.sum() + 1e-12 else math.nan
            out[e] = (q, learner.abs_cum - q)
        return out
    if isinstance(learner, L.RuleLearner):
        rl = learner.rule_ledger
        return {e: (rl.learner_cum - rl.quantile_regret(e), rl.quantile_regret(e)) for e in eps_grid}
    ledger = learner.ledger
    out = {}
    for e in eps_grid:
        q = G.weighted_lower_quantile(ledger.expert_cum, ledger.expert_weights, e)
        out[e] = (q, ledger.learner_cum - q)
    return out


def run_experiment(cfg: dict) -> ExperimentResult:
    """Run one config to completion.  Deterministic given the config."""
    alg = cfg["algorithm"]
    if alg not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")
    T, seed = int(cfg["T"]), int(cfg.get("seed", 0))
    env_spec = dict(cfg["environment"])
    if alg == "two_loss":
        env_spec.setdefault("kind", "binary_forecast")
        env_spec.setdefault("K", cfg["K"])
        env_spec.setdefault("M", cfg["M"])
        if env_spec["kind"] != "binary_forecast":
            raise ValueError("the two-loss learner needs a binary_forecast environment")
    env = make_environment(env_spec, int(cfg.get("N", 0)), seed)
    learner = build_learner(cfg, env)

    if alg == "two_loss":
        n_refs = learner.M
    elif alg in ("internal", "awake"):
        n_refs = len(learner.rules)
    else:
        n_refs = int(cfg["N"])
    eps_grid = [float(e) for e in (cfg.get("epsilon_grid") or default_epsilon_grid(n_refs))]

    rows = []
    for t in range(1, T + 1):
        try:
            if alg == "two_loss":
                sq, bl = env.experts(t)
                dec = learner.predict(sq, bl)
                rec = learner.update(env.outcome(t))
                decision = [dec.p, dec.p_tilde]
            else:
                gamma = learner.predict()
                rec = learner.update(env.step(t, gamma))
                decision = [float(x) for x in gamma]
        except (RuntimeError, FloatingPointError, ArithmeticError) as exc:
            raise SolverFailure(t, exc) from exc
        q = _quantiles(learner, eps_grid)
        rows.append(TraceRow(
            t, float(rec.learner_loss), float(rec.f_value), float(rec.threshold),
            rec.solver_mode, decision,
            {e: q[e][0] for e in eps_grid}, {e: q[e][1] for e in eps_grid},
            {e: B.bound_17(t, e) for e in eps_grid}))

    return ExperimentResult(cfg, rows, summarize(cfg, rows, learner, eps_grid), learner)


def summarize(cfg, rows, learner, eps_grid) -> dict:
    alg = cfg["algorithm"]
    T = len(rows)
    slack17 = {eps_label(e): max(r.Reps[e] - r.bound17[e] for r in rows) for e in eps_grid}
    s = {
        "config": cfg,
        "seed": int(cfg.get("seed", 0)),
        "algorithm": alg,
        "T": T,
        "epsilon_grid": eps_grid,
        "final_learner_loss": float(sum(r.learner_loss for r in rows)) if alg != "two_loss"
        else float(learner.square_cum),
        "final_regrets": {eps_label(e): rows[-1].Reps[e] for e in eps_grid},
        "max_excess_bound17": slack17,
        "solver_modes": sorted({r.solver_mode for r in rows}),
    }
    fs = [(r.f_value, r.threshold) for r in rows]
    if all(math.isfinite(f) for f, _ in fs):
        s["max_f_over_threshold"] = max(f / c for f, c in fs) - 1
        s["max_threshold"] = max(c for _, c in fs)
    if alg == "fixed_horizon":
        N = int(cfg["N"])
        best = float(learner.ledger.regrets.max())
        s["regret_to_best"] = best
        s["excess_bound_fixed"] = best - B.bound_fixed(T, N)
    if alg == "quantile":
        grid = learner.evaluator.grid
        s["certificate"] = {eps_label(e): grid_certificate(grid, rows[-1].Reps[e], T) * e
                            for e in eps_grid}
        if T >= 16:
            delta = min(1 / math.log(T), 0.2499)
            s["excess_bound13"] = {eps_label(e): rows[-1].Reps[e] - B.bound_13(T, e, delta)
                                   for e in eps_grid}
    if alg == "awake":
        grid = learner.evaluator.grid
        rl = learner.rule_ledger
        K = len(learner.rules)
        s["awake_time"] = rl.awake_time.tolist()
        s["certificate"] = [grid_certificate(grid, R, Tk) / K
                            for R, Tk in zip(rl.rule_regret, rl.awake_time)]
    if alg == "internal":
        s["rule_regrets"] = learner.rule_ledger.rule_regret.tolist()
        s["excess_bound_rules"] = float(learner.rule_ledger.rule_regret.max()
                                        - B.bound_rules(T, len(learner.rules)))
    if alg == "two_loss":
        s["square_regrets"] = learner.square_regrets().tolist()
        s["boolean_regrets"] = learner.boolean_regrets().tolist()
        s["excess_bound_square"] = float(learner.square_regrets().max()
                                         - B.bound_square(learner.K, learner.M))
    return s
