"""Games, decisions, loss ledgers and modification rules.

Everything here is shared vocabulary for the learners: DTOL decisions are
probability vectors over ``N`` actions, losses live in ``[0, 1]``, and
modification rules are column-stochastic matrices with a time-selection
factor attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

SIMPLEX_TOL = 1e-12
RULE_TOL = 1e-12
WEIGHT_TOL = 1e-12


class InvalidRuleError(ValueError):
    pass


def as_simplex(weights, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate ``weights`` as a point of the probability simplex."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("simplex vector must be a non-empty 1-d array")
    if not np.all(np.isfinite(w)):
        raise ValueError("simplex vector has non-finite entries")
    if np.any(w < -tol) or np.any(w > 1 + tol):
        raise ValueError(f"simplex weights outside [0, 1]: {w}")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"simplex weights sum to {w.sum():.17g}, not 1")
    return w


def is_simplex(weights, tol: float = SIMPLEX_TOL) -> bool:
    try:
        as_simplex(weights, tol)
    except ValueError:
        return False
    return True


def _check_unit(values, what: str, tol: float = SIMPLEX_TOL) -> np.ndarray:
    # the slack absorbs rounding in dot products of simplex vectors
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v < -tol) or np.any(v > 1 + tol):
        raise ValueError(f"{what} must lie in [0, 1], got {values!r}")
    return v


# ---------------------------------------------------------------------------
# games
# ---------------------------------------------------------------------------


class DTOLGame:
    """Decision-theoretic online learning: play ``gamma`` in the simplex,
    suffer ``gamma . omega`` for a loss vector ``omega`` in ``[0, 1]^N``."""

    kind = "dtol"

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError("need at least one action")
        self.n_actions = int(n_actions)

    def loss(self, decision, outcome) -> float:
        return dtol_loss(decision, outcome)

    def __repr__(self):
        return f"DTOLGame(n_actions={self.n_actions})"


class BinaryConvexGame:
    """Scalar decisions in ``[0, 1]`` against outcomes in ``{0, 1}``.

    ``loss(decision, outcome)`` must be convex in the decision and bounded in
    ``[0, 1]``; both are spot-checked on construction.
    """

    kind = "binary_convex"
    outcomes = (0, 1)

    def __init__(self, loss: Callable[[float, int], float], name: str = "custom"):
        self._loss = loss
        self.name = name
        xs = np.linspace(0.0, 1.0, 41)
        for w in self.outcomes:
            vals = np.array([loss(x, w) for x in xs])
            if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
                raise ValueError(f"{name} loss leaves [0, 1]")
            # midpoint convexity on the sample grid
            if np.any(vals[1:-1] > 0.5 * (vals[:-2] + vals[2:]) + 1e-12):
                raise ValueError(f"{name} loss is not convex in the decision")

    def loss(self, decision: float, outcome: int) -> float:
        return float(self._loss(float(decision), int(outcome)))

    def loss_profile(self, decision: float) -> np.ndarray:
        return np.array([self.loss(decision, w) for w in self.outcomes])

    def expected_loss(self, decision: float, pi) -> float:
        return float(np.dot(pi, self.loss_profile(decision)))

    def best_response(self, pi) -> float:
        """A minimiser of the expected loss under the belief ``pi``."""
        pi = as_simplex(pi)
        res = minimize_scalar(lambda x: self.expected_loss(x, pi),
                              bounds=(0.0, 1.0), method="bounded",
                              options={"xatol": 1e-12})
        cands = [0.0, 1.0, float(res.x)]
        return min(cands, key=lambda x: self.expected_loss(x, pi))

    def min_expected_loss(self, pi) -> float:
        return self.expected_loss(self.best_response(pi), pi)

    def __repr__(self):
        return f"BinaryConvexGame({self.name!r})"


def square_loss_game() -> BinaryConvexGame:
    return BinaryConvexGame(lambda x, w: (x - w) ** 2, "square")


def absolute_loss_game() -> BinaryConvexGame:
    return BinaryConvexGame(lambda x, w: abs(x - w), "absolute")


class MixtureGame:
    """Finite-outcome game whose decisions are mixtures of base decisions.

    ``loss_matrix[d, j]`` is the loss of base decision ``d`` on outcome ``j``.
    A decision is a probability vector over base decisions and its loss is
    linear in it, so the superprediction set is convex.
    """

    kind = "mixture"

    def __init__(self, loss_matrix):
        L = np.asarray(loss_matrix, dtype=float)
        if L.ndim != 2:
            raise ValueError("loss matrix must be 2-d")
        _check_unit(L, "losses")
        self.loss_matrix = L
        self.n_decisions, self.n_outcomes = L.shape

    def loss_profile(self, decision) -> np.ndarray:
        return as_simplex(decision) @ self.loss_matrix

    def expected_loss(self, decision, pi) -> float:
        return float(self.loss_profile(decision) @ as_simplex(pi))

    def min_expected_loss(self, pi) -> float:
        return float(np.min(self.loss_matrix @ as_simplex(pi)))

    def best_response(self, pi, tol: float = 1e-12) -> np.ndarray:
        """Uniform mixture over the lexicographically smallest argmin support,
        which is the singleton holding the first optimal base decision."""
        exp_loss = self.loss_matrix @ as_simplex(pi)
        best = np.flatnonzero(exp_loss <= exp_loss.min() + tol)
        gamma = np.zeros(self.n_decisions)
        gamma[best[0]] = 1.0
        return gamma


def brier_game(n_outcomes: int):
    """Probability forecasting on ``n_outcomes`` outcomes under half the
    squared Euclidean distance, which keeps the loss in ``[0, 1]``."""
    return BrierGame(n_outcomes)


class BrierGame:
    kind = "brier"

    def __init__(self, n_outcomes: int):
        if n_outcomes < 2:
            raise ValueError("need at least two outcomes")
        self.n_outcomes = int(n_outcomes)

    def loss_profile(self, decision) -> np.ndarray:
        g = as_simplex(decision)
        eye = np.eye(self.n_outcomes)
        return 0.5 * np.sum((g[None, :] - eye) ** 2, axis=1)

    def expected_loss(self, decision, pi) -> float:
        return float(self.loss_profile(decision) @ as_simplex(pi))

    def best_response(self, pi) -> np.ndarray:
        # proper scoring rule: the belief itself is the unique minimiser
        return as_simplex(pi).copy()

    def min_expected_loss(self, pi) -> float:
        return self.expected_loss(pi, pi)


# ---------------------------------------------------------------------------
# losses and ledgers
# ---------------------------------------------------------------------------


def dtol_loss(gamma, omega) -> float:
    g = np.asarray(gamma, dtype=float)
    w = np.asarray(omega, dtype=float)
    if g.shape != w.shape:
        raise ValueError(f"dimension mismatch: {g.shape} vs {w.shape}")
    return float(g @ w)


@dataclass(frozen=True)
class LossLedger:
    t: int
    learner_cum: float
    expert_cum: np.ndarray
    expert_weights: np.ndarray

    @classmethod
    def fresh(cls, n_experts: int | None = None, weights=None) -> "LossLedger":
        if weights is None:
            if n_experts is None:
                raise ValueError("give n_experts or weights")
            weights = np.full(n_experts, 1.0 / n_experts)
        w = np.asarray(weights, dtype=float)
        if np.any(w <= 0):
            raise ValueError("expert weights must be positive")
        if w.sum() > 1 + WEIGHT_TOL:
            raise ValueError(f"expert weights sum to {w.sum()} > 1")
        return cls(0, 0.0, np.zeros(w.size), w)

    @property
    def n_experts(self) -> int:
        return self.expert_cum.size

    @property
    def regrets(self) -> np.ndarray:
        return self.learner_cum - self.expert_cum


def update_ledger(ledger: LossLedger, learner_loss: float, expert_losses) -> LossLedger:
    _check_unit(learner_loss, "learner loss")
    el = _check_unit(expert_losses, "expert losses")
    if el.shape != ledger.expert_cum.shape:
        raise ValueError("wrong number of expert losses")
    return replace(ledger, t=ledger.t + 1,
                   learner_cum=ledger.learner_cum + float(learner_loss),
                   expert_cum=ledger.expert_cum + el)


@dataclass(frozen=True)
class QuantileReport:
    epsilon: float
    quantile_loss: float
    quantile_regret: float


def weighted_lower_quantile(values, weights, epsilon: float) -> float:
    """Smallest attained value ``v`` with ``weight{values <= v} >= epsilon``."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not 0 < epsilon <= w.sum() + WEIGHT_TOL:
        raise ValueError(f"epsilon={epsilon} outside (0, total weight={w.sum()}]")
    order = np.argsort(v, kind="stable")
    cum = np.cumsum(w[order])
    idx = int(np.searchsorted(cum, epsilon - WEIGHT_TOL, side="left"))
    return float(v[order][min(idx, v.size - 1)])


def quantile_loss(ledger: LossLedger, epsilon: float) -> QuantileReport:
    q = weighted_lower_quantile(ledger.expert_cum, ledger.expert_weights, epsilon)
    return QuantileReport(epsilon, q, ledger.learner_cum - q)


def u_mixture_value(ledger: LossLedger, u) -> tuple[float, float]:
    """Return ``(sum u_n L^n, KL(u || p))`` with ``0 ln 0 = 0``."""
    u = as_simplex(u)
    p = ledger.expert_weights
    if u.shape != p.shape:
        raise ValueError("u needs one entry per expert")
    support = u > 0
    if np.any(p[support] <= 0):
        raise ValueError("u puts mass on an expert with zero weight")
    div = float(np.sum(u[support] * np.log(u[support] / p[support])))
    return float(u @ ledger.expert_cum), div


# ---------------------------------------------------------------------------
# modification rules
# ---------------------------------------------------------------------------


def validate_rule(matrix, selection: float = 1.0) -> None:
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidRuleError(f"rule matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidRuleError("rule matrix has non-finite entries")
    neg = np.argwhere(M < 0)
    if neg.size:
        i, j = neg[0]
        raise InvalidRuleError(f"entry ({i}, {j}) is negative: {M[i, j]}")
    sums = M.sum(axis=0)
    bad = np.flatnonzero(np.abs(sums - 1.0) > RULE_TOL)
    if bad.size:
        j = bad[0]
        raise InvalidRuleError(f"column {j} sums to {sums[j]:.17g}, not 1")
    if not (np.isfinite(selection) and 0.0 <= selection <= 1.0):
        raise InvalidRuleError(f"time selection {selection} outside [0, 1]")


def rule_regret_step(gamma, omega, matrix, selection: float = 1.0) -> float:
    """``I * (gamma . omega - (M gamma) . omega)``."""
    validate_rule(matrix, selection)
    g = np.asarray(gamma, dtype=float)
    w = np.asarray(omega, dtype=float)
    M = np.asarray(matrix, dtype=float)
    if M.shape[0] != g.size or g.shape != w.shape:
        raise ValueError("dimension mismatch")
    return float(selection * (g @ w - (M @ g) @ w))


def _as_provider(value):
    if callable(value):
        return value
    return lambda t, _v=value: _v


@dataclass
class ModificationRule:
    """A (possibly time-varying) modification rule with a time-selection
    function.  Providers take the 1-based step index."""

    matrix_provider: Callable[[int], np.ndarray]
    selection_provider: Callable[[int], float] = field(default=lambda t: 1.0)
    name: str = "rule"

    def __post_init__(self):
        self.matrix_provider = _as_provider(self.matrix_provider)
        self.selection_provider = _as_provider(self.selection_provider)

    def at(self, t: int) -> tuple[np.ndarray, float]:
        M = np.asarray(self.matrix_provider(t), dtype=float)
        sel = float(self.selection_provider(t))
        validate_rule(M, sel)
        return M, sel


def identity_matrix(n: int) -> np.ndarray:
    return np.eye(n)


def swap_matrix(n: int, a: int, b: int) -> np.ndarray:
    """Permutation exchanging actions ``a`` and ``b``."""
    M = np.eye(n)
    M[[a, b]] = M[[b, a]]
    return M


def internal_matrix(n: int, a: int, b: int) -> np.ndarray:
    """"Whenever ``a`` was played, play ``b`` instead"."""
    M = np.eye(n)
    M[a, a] = 0.0
    M[b, a] = 1.0
    return M


def constant_action_matrix(n: int, action: int) -> np.ndarray:
    """Row ``action`` all ones: the rule "always play ``action``"."""
    M = np.zeros((n, n))
    M[action, :] = 1.0
    return M


def identity_rule(n: int, selection=1.0) -> ModificationRule:
    return ModificationRule(identity_matrix(n), selection, "identity")


def swap_rule(n: int, a: int, b: int, selection=1.0) -> ModificationRule:
    return ModificationRule(swap_matrix(n, a, b), selection, f"swap({a},{b})")


def internal_rule(n: int, a: int, b: int, selection=1.0) -> ModificationRule:
    return ModificationRule(internal_matrix(n, a, b), selection, f"{a}->{b}")


def constant_action_rule(n: int, action: int, selection=1.0) -> ModificationRule:
    return ModificationRule(constant_action_matrix(n, action), selection, f"always({action})")


def late_arrival_rule(n: int, action: int, join_step: int) -> ModificationRule:
    """An expert that joins at ``join_step``: asleep before, awake after."""
    return ModificationRule(constant_action_matrix(n, action),
                            lambda t, s=join_step: 1.0 if t >= s else 0.0,
                            f"late({action}@{join_step})")


@dataclass(frozen=True)
class RuleLedger:
    t: int
    learner_cum: float
    rule_regret: np.ndarray
    awake_time: np.ndarray
    awake_time_sq: np.ndarray
    rule_weights: np.ndarray

    @classmethod
    def fresh(cls, n_rules: int, weights=None) -> "RuleLedger":
        w = np.full(n_rules, 1.0 / n_rules) if weights is None else np.asarray(weights, float)
        z = np.zeros(n_rules)
        return cls(0, 0.0, z, z.copy(), z.copy(), w)

    def update(self, learner_loss: float, step_regrets, selections) -> "RuleLedger":
        sel = _check_unit(selections, "selections")
        return replace(self, t=self.t + 1, learner_cum=self.learner_cum + learner_loss,
                       rule_regret=self.rule_regret + np.asarray(step_regrets, float),
                       awake_time=self.awake_time + sel,
                       awake_time_sq=self.awake_time_sq + sel ** 2)

    def quantile_regret(self, epsilon: float) -> float:
        """Largest ``R`` such that rules of total weight ``>= epsilon`` have
        regret at least ``R``."""
        return -weighted_lower_quantile(-self.rule_regret, self.rule_weights, epsilon)


def substitute_decision(game, expert_decisions, gamma_prime):
    """Turn a DTOL weight vector over experts into a decision of ``game``
    whose loss never exceeds the ``gamma_prime``-mixture of expert losses."""
    gp = as_simplex(gamma_prime)
    if game.kind == "dtol":
        return gp
    if game.kind == "binary_convex":
        d = np.asarray(expert_decisions, dtype=float)
        if d.shape != gp.shape:
            raise ValueError("one expert decision per weight expected")
        return float(gp @ d)
    raise ValueError(f"unsupported game kind {game.kind!r}")


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def is_uniform(weights: Sequence[float]) -> bool:
    w = np.asarray(weights, dtype=float)
    return bool(np.allclose(w, w[0], rtol=0, atol=1e-15) and abs(w.sum() - 1) < 1e-12)
