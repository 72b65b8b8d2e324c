"""Hoeffding mixture supermartingales in log domain.

A mixture is indexed by a reference ``r`` (an expert or a modification rule)
and a grid node ``k`` carrying a learning rate ``eta_k``.  Its value at the
current step is

    f(gamma, omega) = sum_{r,k} p_r w_k exp(E[r, k] + eta_k d_r - c eta_k^2 s_r / 2)

where ``E`` is the exponent accumulated over past steps, ``d_r`` is this
step's increment (a loss difference in ``[-1, 1]``), ``s_r`` the per-step
correction factor (1, or the squared time selection for awake rules) and
``c`` is 1 for Hoeffding terms and 0 for mixable square-loss terms.
The threshold is the same sum with the current-step factor dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

BASEL_C = 6.0 / math.pi ** 2

FIXED, MU, ANYTIME = "fixed", "mu", "anytime"
HOEFFDING, AWAKE, NO_CORRECTION = "hoeffding", "awake", "none"


@dataclass(frozen=True)
class EtaGrid:
    """Learning-rate nodes with log mixture weights.

    ``weights`` optionally keeps the linear weights as built, so grids whose
    weights are exact in floating point report their mass without the
    rounding of ``exp(log w)``.

    For the anytime kind ``index`` holds the integers ``i`` and the actual
    learning rates at step ``T`` are ``i / sqrt(T)``; ``etas`` then records
    the rates at the step the grid was built for.
    """

    kind: str
    etas: np.ndarray
    log_weights: np.ndarray
    index: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (FIXED, MU, ANYTIME):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if np.any(self.etas < 0):
            raise ValueError("learning rates must be nonnegative")
        if self.total_weight() > 1 + 1e-9:
            raise ValueError(f"grid mass {self.total_weight()} exceeds 1")

    def __len__(self):
        return self.etas.size

    def linear_weights(self) -> np.ndarray:
        return np.exp(self.log_weights) if self.weights is None else self.weights

    def total_weight(self) -> float:
        return math.fsum(self.linear_weights())

    def etas_at(self, step: int) -> np.ndarray:
        if self.kind == ANYTIME:
            return self.index / math.sqrt(step)
        return self.etas


def hoeffding_increment(eta: float, loss: float, ref_loss: float) -> float:
    return eta * (loss - ref_loss) - eta * eta / 2


def build_grid_fixed(T: int, N: int) -> EtaGrid:
    """Single node ``eta = sqrt(2 ln N / T)`` with unit weight."""
    if N < 2:
        raise ValueError("fixed-horizon grid needs N >= 2 (ln N > 0)")
    if T < 1:
        raise ValueError("horizon must be positive")
    return EtaGrid(FIXED, np.array([math.sqrt(2 * math.log(N) / T)]), np.zeros(1))


def single_eta_grid(eta: float) -> EtaGrid:
    return EtaGrid(FIXED, np.array([float(eta)]), np.zeros(1))


def build_grid_mu(nodes: int = 16) -> EtaGrid:
    """Midpoint rule for the measure ``d eta / (eta ln^2(1/eta))`` on
    ``(0, 1/e]``.

    Under ``u = 1 / ln(1/eta)`` the measure is uniform on ``(0, 1]``, so the
    nodes are ``eta_j = exp(-1/u_j)`` at ``u_j = (j - 1/2)/M`` with equal
    weights ``1/M``.
    """
    if nodes < 1:
        raise ValueError("need at least one node")
    u = (np.arange(1, nodes + 1) - 0.5) / nodes
    w = np.full(nodes, 1.0 / nodes)
    return EtaGrid(MU, np.exp(-1.0 / u), np.log(w), weights=w)


def mu_antiderivative(eta: float) -> float:
    """``1 / ln(1/eta)``; its increase over ``(0, 1/e]`` is the mass of mu."""
    if eta <= 0:
        return 0.0
    return 1.0 / math.log(1.0 / eta)


def build_grid_anytime(T: int = 1, i_max: int = 64) -> EtaGrid:
    """Nodes ``i / sqrt(T)`` for ``i = 1..i_max`` with weights ``c / i^2``,
    ``c = 6 / pi^2``."""
    if T < 1 or i_max < 1:
        raise ValueError("need T >= 1 and i_max >= 1")
    i = np.arange(1, i_max + 1, dtype=float)
    return EtaGrid(ANYTIME, i / math.sqrt(T), math.log(BASEL_C) - 2 * np.log(i), i)


def remark1_i_max(n: int) -> int:
    """Truncation ``ceil(sqrt(ln N)) + 1`` for a finite uniform pool."""
    return math.ceil(math.sqrt(math.log(n))) + 1 if n > 1 else 2


class MixtureEvaluator:
    """Accumulated state of a Hoeffding mixture plus its evaluation.

    ``advance`` mutates the evaluator in place; use ``copy`` to branch.
    """

    def __init__(self, ref_log_weights, grid: EtaGrid, correction: str = HOEFFDING):
        lw = np.asarray(ref_log_weights, dtype=float)
        if lw.ndim != 1 or not np.all(np.isfinite(lw)):
            raise ValueError("reference log weights must be finite")
        if correction not in (HOEFFDING, AWAKE, NO_CORRECTION):
            raise ValueError(f"unknown correction {correction!r}")
        if grid.kind == ANYTIME and correction != HOEFFDING:
            raise ValueError("anytime grids use the plain Hoeffding correction")
        self.ref_log_weights = lw
        self.grid = grid
        self.correction = correction
        self.t = 0  # completed steps
        self.regret = np.zeros(lw.size)  # accumulated increments A_r
        self.corr_count = np.zeros(lw.size)  # sum of s_r (steps, or sum I^2)
        self.inv_sqrt_sum = 0.0  # B = sum_{s<=t} 1/sqrt(s)

    @classmethod
    def uniform(cls, n_refs: int, grid: EtaGrid, correction: str = HOEFFDING):
        return cls(np.full(n_refs, -math.log(n_refs)), grid, correction)

    @property
    def n_refs(self) -> int:
        return self.ref_log_weights.size

    @property
    def step(self) -> int:
        """1-based index of the step about to be played."""
        return self.t + 1

    @property
    def coef(self) -> float:
        return 0.0 if self.correction == NO_CORRECTION else 1.0

    def copy(self) -> "MixtureEvaluator":
        new = MixtureEvaluator.__new__(MixtureEvaluator)
        new.__dict__.update(self.__dict__)
        new.regret = self.regret.copy()
        new.corr_count = self.corr_count.copy()
        return new

    def etas(self) -> np.ndarray:
        return self.grid.etas_at(self.step)

    def log_terms(self) -> np.ndarray:
        """``(R, K)`` log masses ``log p_r + log w_k + E[r, k]``."""
        eta = self.etas()
        if self.grid.kind == ANYTIME:
            i = self.grid.index
            corr = (i * i) * self.inv_sqrt_sum / (2 * math.sqrt(self.step))
            acc = np.outer(self.regret, eta) - corr[None, :]
        else:
            acc = np.outer(self.regret, eta) - self.coef * np.outer(self.corr_count, eta * eta) / 2
        out = self.ref_log_weights[:, None] + self.grid.log_weights[None, :] + acc
        if np.any(np.isnan(out)) or np.any(out == np.inf):
            raise FloatingPointError("non-finite mixture exponent; ledger corrupted")
        return out

    def step_exponents(self, increments, step_corr=None) -> np.ndarray:
        """Current-step exponents; ``increments`` is ``(R,)`` or ``(R, V)``,
        result is ``(R, K)`` or ``(R, K, V)``."""
        d = np.asarray(increments, dtype=float)
        eta = self.etas()
        s = np.ones(self.n_refs) if step_corr is None else np.asarray(step_corr, float)
        half_sq = self.coef * np.outer(s, eta * eta) / 2
        if d.ndim == 1:
            return np.outer(d, eta) - half_sq
        return eta[None, :, None] * d[:, None, :] - half_sq[:, :, None]

    def log_value(self, increments, step_corr=None):
        """log f at this step for one outcome (``(R,)`` increments) or many
        (``(R, V)`` increments, returns ``(V,)``)."""
        base = self.log_terms()
        ex = self.step_exponents(increments, step_corr)
        if ex.ndim == 2:
            return float(logsumexp(base + ex))
        return logsumexp(base[:, :, None] + ex, axis=(0, 1))

    def log_threshold(self) -> float:
        return float(logsumexp(self.log_terms()))

    def threshold(self) -> float:
        return math.exp(self.log_threshold())

    def advance(self, increments, step_corr=None) -> "MixtureEvaluator":
        d = np.asarray(increments, dtype=float)
        if d.shape != (self.n_refs,):
            raise ValueError("one increment per reference expected")
        s = np.ones(self.n_refs) if step_corr is None else np.asarray(step_corr, float)
        self.inv_sqrt_sum += 1.0 / math.sqrt(self.step)
        self.regret = self.regret + d
        self.corr_count = self.corr_count + s
        self.t += 1
        return self


def eval_mixture_log(ev: MixtureEvaluator, increments, step_corr=None):
    return ev.log_value(increments, step_corr)


def anytime_threshold(ev: MixtureEvaluator) -> float:
    if ev.grid.kind != ANYTIME:
        raise ValueError("anytime threshold needs an anytime grid")
    return ev.threshold()


def advance_state(ev: MixtureEvaluator, increments, step_corr=None) -> MixtureEvaluator:
    return ev.advance(increments, step_corr)


def lemma5_certificate(game, pi, gamma, gamma_ref, eta: float, tol: float = 1e-12) -> float:
    """``E_pi exp(eta (loss(gamma) - loss(gamma_ref)) - eta^2/2)`` for a
    finite-outcome game.

    ``gamma`` must minimise the expected loss under ``pi``; the returned
    expectation is then at most 1.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    pi = np.asarray(pi, dtype=float)
    lg = np.asarray(game.loss_profile(gamma), dtype=float)
    if float(lg @ pi) > game.min_expected_loss(pi) + tol:
        raise ValueError("gamma does not minimise the expected loss under pi")
    lr = np.asarray(game.loss_profile(gamma_ref), dtype=float)
    return float(pi @ np.exp(eta * (lg - lr) - eta * eta / 2))


def grid_certificate(grid: EtaGrid, regret: float, time: float) -> float:
    """``sum_j w_j exp(eta_j R - time * eta_j^2 / 2)`` over a fixed grid.

    A learner whose mixture never exceeds 1 keeps this at most ``1/eps`` for
    its realised eps-quantile regret ``R`` (and at most ``1/p_k`` for a rule
    with weight ``p_k`` and awake time ``time``).
    """
    if grid.kind == ANYTIME:
        raise ValueError("the certificate is defined for fixed grids")
    eta = grid.etas
    return float(np.exp(logsumexp(grid.log_weights + eta * regret - time * eta * eta / 2)))
