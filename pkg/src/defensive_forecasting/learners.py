"""Defensive-forecasting learners and an exponential-weights baseline.

Every learner follows the same two-call protocol per step::

    decision = learner.predict(...)      # may read this step's expert inputs
    record = learner.update(outcome)     # outcome revealed, state rolled

``predict`` only looks at history through the previous step plus the
current step's inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import supermartingale as sm
from .forecaster import (
    BisectionEndpointError,
    DTOLStep,
    ExpertReferences,
    RuleReferences,
    SolverConfig,
    bisection_binary,
    solve_defensive_step,
    two_loss_p,
    two_loss_p_tilde,
)
from .game import (
    DTOLGame,
    LossLedger,
    ModificationRule,
    RuleLedger,
    as_simplex,
    is_uniform,
    substitute_decision,
    uniform_weights,
    update_ledger,
)

DEFAULT_I_MAX = 64
DEFAULT_ETA_NODES = 16


@dataclass
class StepRecord:
    t: int
    decision: object
    learner_loss: float
    f_value: float
    threshold: float
    solver_mode: str
    achieved_sup: float = math.nan
    iterations: int = 0
    residual: float = math.nan
    tol_f: float = math.nan


def _weights(weights) -> np.ndarray:
    if isinstance(weights, (int, np.integer)):
        return uniform_weights(int(weights))
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w <= 0):
        raise ValueError("weights must be a nonempty vector of positive reals")
    if w.sum() > 1 + 1e-12:
        raise ValueError(f"weights sum to {w.sum()} > 1")
    return w


class DefensiveLearner:
    """DTOL learner that solves the defensive step against a mixture."""

    kind = "defensive"

    def __init__(self, evaluator: sm.MixtureEvaluator, n_actions: int,
                 solver: SolverConfig | None = None, horizon: int | None = None):
        self.evaluator = evaluator
        self.n_actions = n_actions
        self.solver = solver or SolverConfig()
        self.horizon = horizon
        self.rng = np.random.default_rng(self.solver.seed)
        self.ledger = LossLedger.fresh(n_actions)
        self._pending = None

    @property
    def t(self) -> int:
        return self.evaluator.t

    def references(self, t: int):
        raise NotImplementedError

    def predict(self) -> np.ndarray:
        t = self.t + 1
        if self.horizon is not None and t > self.horizon:
            raise RuntimeError(f"learner built for horizon {self.horizon}, asked for step {t}")
        refs = self.references(t)
        step = DTOLStep(self.evaluator, refs)
        res = solve_defensive_step(step, self.solver, self.rng)
        self._pending = (step, res)
        return res.decision

    def update(self, omega) -> StepRecord:
        if self._pending is None:
            raise RuntimeError("update() called before predict()")
        step, res = self._pending
        self._pending = None
        w = np.asarray(omega, dtype=float)
        gamma = res.decision
        d = step.increments(gamma, w)
        log_f = float(self.evaluator.log_value(d, step.refs.step_corr))
        loss = float(gamma @ w)
        self._after_step(step, gamma, w, d, loss)
        self.evaluator.advance(d, step.refs.step_corr)
        return StepRecord(self.t, gamma, loss, math.exp(log_f), res.threshold, res.mode,
                          res.achieved_sup, res.iterations)

    def _after_step(self, step, gamma, omega, increments, loss):
        self.ledger = update_ledger(self.ledger, loss, omega)

    # quantities the harness tabulates
    def reference_weights(self) -> np.ndarray:
        return np.exp(self.evaluator.ref_log_weights)

    def reference_regrets(self) -> np.ndarray:
        return self.ledger.regrets


class ExpertLearner(DefensiveLearner):
    def __init__(self, kind, evaluator, n_actions, solver=None, horizon=None):
        super().__init__(evaluator, n_actions, solver, horizon)
        self.kind = kind
        self.ledger = LossLedger.fresh(weights=np.exp(evaluator.ref_log_weights))
        self._refs = ExpertReferences(n_actions)

    def references(self, t):
        return self._refs


class RuleLearner(DefensiveLearner):
    def __init__(self, kind, evaluator, n_actions, rules: Sequence[ModificationRule],
                 awake: bool, solver=None):
        super().__init__(evaluator, n_actions, solver)
        self.kind = kind
        self.rules = list(rules)
        self.awake = awake
        self.rule_ledger = RuleLedger.fresh(len(self.rules), np.exp(evaluator.ref_log_weights))

    def references(self, t):
        mats, sels = zip(*(r.at(t) for r in self.rules))
        for M in mats:
            if M.shape != (self.n_actions, self.n_actions):
                raise ValueError("rule matrix does not match the action count")
        return RuleReferences(np.array(mats), np.array(sels), awake=self.awake)

    def _after_step(self, step, gamma, omega, increments, loss):
        super()._after_step(step, gamma, omega, increments, loss)
        self.rule_ledger = self.rule_ledger.update(loss, increments, step.refs.selections)

    def reference_regrets(self) -> np.ndarray:
        return self.rule_ledger.rule_regret


class PEALearner:
    """Run a DTOL learner over experts of a convex game and play the
    convex combination of expert decisions."""

    def __init__(self, inner: DefensiveLearner, game):
        self.inner = inner
        self.game = game
        self.kind = inner.kind
        self.learner_cum = 0.0
        self._experts = None

    def predict(self, expert_decisions):
        self._experts = np.asarray(expert_decisions, dtype=float)
        gamma = self.inner.predict()
        self._decision = substitute_decision(self.game, self._experts, gamma)
        return self._decision

    def update(self, outcome) -> StepRecord:
        losses = np.array([self.game.loss(d, outcome) for d in self._experts])
        rec = self.inner.update(losses)
        rec.learner_loss = self.game.loss(self._decision, outcome)
        rec.decision = self._decision
        self.learner_cum += rec.learner_loss
        return rec


def _maybe_pea(learner, game):
    if game is None or game.kind == "dtol":
        return learner
    return PEALearner(learner, game)


def make_fixed_horizon(T: int, N: int, game=None, solver: SolverConfig | None = None):
    """Single-rate mixture with ``eta = sqrt(2 ln N / T)``; guarantees
    ``L_T <= min_n L_T^n + sqrt(2 T ln N)`` at the known horizon."""
    grid = sm.build_grid_fixed(T, N)
    ev = sm.MixtureEvaluator.uniform(N, grid)
    return _maybe_pea(ExpertLearner("fixed_horizon", ev, N, solver, horizon=T), game)


def make_quantile(weights, eta_nodes: int = DEFAULT_ETA_NODES, solver=None, game=None):
    w = _weights(weights)
    ev = sm.MixtureEvaluator(np.log(w), sm.build_grid_mu(eta_nodes))
    return _maybe_pea(ExpertLearner("quantile", ev, w.size, solver), game)


def default_i_max(weights) -> int:
    w = _weights(weights)
    return sm.remark1_i_max(w.size) if is_uniform(w) else DEFAULT_I_MAX


def make_anytime(weights, i_max: int | None = None, solver=None, game=None):
    w = _weights(weights)
    i_max = default_i_max(w) if i_max is None else i_max
    ev = sm.MixtureEvaluator(np.log(w), sm.build_grid_anytime(1, i_max))
    return _maybe_pea(ExpertLearner("anytime", ev, w.size, solver), game)


def make_internal(rules: Sequence[ModificationRule], n_actions: int, weights=None,
                  i_max: int | None = None, solver=None):
    """Anytime mixture over rules; increments ``I_k (gamma.omega - (M_k gamma).omega)``."""
    w = _weights(len(rules) if weights is None else weights)
    i_max = default_i_max(w) if i_max is None else i_max
    ev = sm.MixtureEvaluator(np.log(w), sm.build_grid_anytime(1, i_max))
    return RuleLearner("internal", ev, n_actions, rules, awake=False, solver=solver)


def make_awake(rules: Sequence[ModificationRule], n_actions: int, weights=None,
               eta_nodes: int = DEFAULT_ETA_NODES, solver=None):
    """Learning-rate mixture over rules with per-step correction
    ``(eta I_k)^2 / 2``, so each rule is charged only for its awake time."""
    w = _weights(len(rules) if weights is None else weights)
    ev = sm.MixtureEvaluator(np.log(w), sm.build_grid_mu(eta_nodes), sm.AWAKE)
    return RuleLearner("awake", ev, n_actions, rules, awake=True, solver=solver)


# ---------------------------------------------------------------------------
# square loss and absolute loss at once
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoLossDecision:
    p: float
    p_tilde: float

    def __post_init__(self):
        if not (0 <= self.p <= 1 and 0 <= self.p_tilde <= 1):
            raise ValueError("predictions must lie in [0, 1]")
        if (self.p < 0.5 and self.p_tilde != 0) or (self.p > 0.5 and self.p_tilde != 1):
            raise ValueError(f"inconsistent pair p={self.p}, p_tilde={self.p_tilde}")


class TwoLossLearner:
    """Probability forecast under square loss plus a randomised boolean
    forecast under absolute loss, kept consistent with each other.

    Square-loss experts enter with the mixable rate 2 and no correction;
    boolean experts enter through a learning-rate mixture of Hoeffding terms.
    Each step is solved by bisection along the path ``x -> (p(x), p~(x))``.
    """

    kind = "two_loss"
    SQUARE_ETA = 2.0

    def __init__(self, K: int, M: int, eta_nodes: int = DEFAULT_ETA_NODES,
                 tol: float = 1e-12, threshold: float = 1.0):
        if K < 1 or M < 1:
            raise ValueError("need at least one expert of each type")
        self.K, self.M = K, M
        lw = -math.log(K + M)
        self.square = sm.MixtureEvaluator(np.full(K, lw), sm.single_eta_grid(self.SQUARE_ETA),
                                          sm.NO_CORRECTION)
        self.boolean = sm.MixtureEvaluator(np.full(M, lw), sm.build_grid_mu(eta_nodes))
        self.tol = tol
        self.threshold = threshold
        self.square_cum = 0.0
        self.abs_cum = 0.0
        self.square_expert_cum = np.zeros(K)
        self.boolean_expert_cum = np.zeros(M)
        self._pending = None

    @property
    def t(self) -> int:
        return self.square.t

    def _increments(self, p, p_tilde, omega, sq_preds, bool_preds):
        d_sq = (p - omega) ** 2 - (sq_preds - omega) ** 2
        d_ab = abs(p_tilde - omega) - (bool_preds != omega).astype(float)
        return d_sq, d_ab

    def _frozen_terms(self, sq_preds, bool_preds):
        """Accumulated log masses for this step, computed once per predict."""
        return (self.square.log_terms()[:, 0], self.boolean.log_terms(),
                self.boolean.etas(), sq_preds, bool_preds)

    def _masses(self, frozen, x: float, omega: int):
        """Square and boolean term masses at ``x`` scaled by ``exp(-shift)``."""
        b_sq, b_ab, eta, sq_preds, bool_preds = frozen
        d_sq, d_ab = self._increments(two_loss_p(x), two_loss_p_tilde(x), omega,
                                      sq_preds, bool_preds)
        e_sq = b_sq + self.SQUARE_ETA * d_sq
        e_ab = b_ab + np.outer(d_ab, eta) - eta * eta / 2
        # increments lie in [-1, 1], so this bounds every exponent
        shift = max(b_sq.max() + self.SQUARE_ETA, b_ab.max() + eta.max())
        return np.exp(e_sq - shift), np.exp(e_ab - shift), shift

    def _log_f(self, frozen, x: float, omega: int) -> float:
        m_sq, m_ab, shift = self._masses(frozen, x, omega)
        return shift + math.log(m_sq.sum() + m_ab.sum())

    def log_f(self, x: float, omega: int, sq_preds, bool_preds) -> float:
        frozen = self._frozen_terms(np.asarray(sq_preds, float), np.asarray(bool_preds, float))
        return self._log_f(frozen, x, omega)

    def _lipschitz(self, frozen, x: float) -> float:
        """Bound on ``|dg/dx|`` near ``x`` from the current term masses.

        ``|dp/dx|, |dp~/dx| <= 1``; the square exponent moves at rate at most
        ``2 * 2`` and the boolean ones at rate ``eta``.  A factor 2 covers the
        change of the masses across the final bracket.
        """
        eta = frozen[2]
        out = 0.0
        for w in (0, 1):
            m_sq, m_ab, shift = self._masses(frozen, x, w)
            out = max(out, math.exp(shift) * (4 * m_sq.sum() + float((m_ab @ eta).sum())))
        return 2 * out

    def lipschitz(self, x: float, sq_preds, bool_preds) -> float:
        frozen = self._frozen_terms(np.asarray(sq_preds, float), np.asarray(bool_preds, float))
        return self._lipschitz(frozen, x)

    def predict(self, square_preds, boolean_preds) -> TwoLossDecision:
        sq = np.asarray(square_preds, dtype=float)
        bl = np.asarray(boolean_preds, dtype=float)
        if sq.shape != (self.K,) or bl.shape != (self.M,):
            raise ValueError("wrong number of expert predictions")
        if np.any((sq < 0) | (sq > 1)) or np.any((bl != 0) & (bl != 1)):
            raise ValueError("square predictions in [0,1], boolean predictions in {0,1}")

        log_thr = math.log(self.threshold)
        frozen = self._frozen_terms(sq, bl)

        def g(x, w):
            return math.expm1(self._log_f(frozen, x, w) - log_thr) * self.threshold

        x0 = bisection_binary(g, self.tol)
        tol_f = self._lipschitz(frozen, x0) * self.tol
        residual = max(g(x0, 0), g(x0, 1))
        if residual > tol_f + 1e-15:
            raise BisectionEndpointError(
                f"bisection residual {residual} exceeds function tolerance {tol_f}")
        dec = TwoLossDecision(two_loss_p(x0), two_loss_p_tilde(x0))
        self._pending = (x0, sq, bl, dec, residual, tol_f)
        return dec

    def update(self, omega: int) -> StepRecord:
        if self._pending is None:
            raise RuntimeError("update() called before predict()")
        x0, sq, bl, dec, residual, tol_f = self._pending
        self._pending = None
        omega = int(omega)
        if omega not in (0, 1):
            raise ValueError("outcome must be 0 or 1")
        d_sq, d_ab = self._increments(dec.p, dec.p_tilde, omega, sq, bl)
        log_f = float(np.logaddexp(self.square.log_value(d_sq), self.boolean.log_value(d_ab)))
        self.square.advance(d_sq)
        self.boolean.advance(d_ab)
        self.square_cum += (dec.p - omega) ** 2
        self.abs_cum += abs(dec.p_tilde - omega)
        self.square_expert_cum += (sq - omega) ** 2
        self.boolean_expert_cum += (bl != omega)
        return StepRecord(self.t, dec, (dec.p - omega) ** 2, math.exp(log_f), self.threshold,
                          "bisection", residual=residual, tol_f=tol_f)

    def square_regrets(self) -> np.ndarray:
        return self.square_cum - self.square_expert_cum

    def boolean_regrets(self) -> np.ndarray:
        return self.abs_cum - self.boolean_expert_cum


def make_two_loss(K: int, M: int, eta_nodes: int = DEFAULT_ETA_NODES) -> TwoLossLearner:
    return TwoLossLearner(K, M, eta_nodes)


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------


class HedgeBaseline:
    """Classical exponential weights ``gamma_n ~ p_n exp(-eta L^n)``.

    ``mode="fixed"`` uses a constant ``eta``; ``mode="anytime"`` uses
    ``eta_t = sqrt(2 ln N / t)``.
    """

    kind = "hedge"

    def __init__(self, N: int, mode: str = "anytime", eta: float | None = None,
                 T: int | None = None, weights=None):
        if N < 2:
            raise ValueError("need N >= 2")
        if mode not in ("fixed", "anytime"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "fixed" and eta is None:
            if T is None:
                raise ValueError("fixed mode needs eta or T")
            eta = math.sqrt(8 * math.log(N) / T)
        self.N, self.mode, self.eta = N, mode, eta
        self.ledger = LossLedger.fresh(N, weights)
        self._gamma = None

    @property
    def t(self) -> int:
        return self.ledger.t

    def current_eta(self) -> float:
        if self.mode == "fixed":
            return self.eta
        return math.sqrt(2 * math.log(self.N) / (self.t + 1))

    def predict(self) -> np.ndarray:
        z = np.log(self.ledger.expert_weights) - self.current_eta() * self.ledger.expert_cum
        z = np.exp(z - z.max())
        self._gamma = z / z.sum()
        return self._gamma

    def update(self, omega) -> StepRecord:
        w = np.asarray(omega, dtype=float)
        loss = float(self._gamma @ w)
        self.ledger = update_ledger(self.ledger, loss, w)
        return StepRecord(self.t, self._gamma, loss, math.nan, math.nan, "closed_form")

    def reference_weights(self):
        return self.ledger.expert_weights

    def reference_regrets(self):
        return self.ledger.regrets


def make_hedge_baseline(N: int, mode: str = "anytime", eta: float | None = None,
                        T: int | None = None) -> HedgeBaseline:
    return HedgeBaseline(N, mode, eta, T)


def dtol_game(N: int) -> DTOLGame:
    return DTOLGame(N)


__all__ = [
    "StepRecord", "DefensiveLearner", "ExpertLearner", "RuleLearner", "PEALearner",
    "TwoLossDecision", "TwoLossLearner", "HedgeBaseline", "make_fixed_horizon",
    "make_quantile", "make_anytime", "make_internal", "make_awake", "make_two_loss",
    "make_hedge_baseline", "as_simplex",
]
