"""The defensive step: pick a decision that keeps the mixture below its
threshold for every possible outcome.

For DTOL every increment is affine in the loss vector, so each term of the
mixture is the exponential of an affine function of ``omega`` and the
supremum over ``[0, 1]^N`` sits at a vertex.  The objective
``Phi(gamma) = max_omega f(gamma, omega)`` is convex in ``gamma`` and we
drive it under the threshold with Polyak-step projected subgradient descent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .supermartingale import MixtureEvaluator

EXACT, HEURISTIC = "exact_vertices", "heuristic"


class NotFeasible(RuntimeError):
    """The solver ran out of iterations above the threshold.

    Existence of a feasible decision is a theorem, so this always points at
    numerical tolerance or a corrupted evaluator.  ``state`` carries a dump
    of the evaluator for post-mortem.
    """

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state or {}


class BisectionEndpointError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    feasibility_slack: float = 1e-9
    max_iterations: int = 10000
    vertex_exact_max_n: int = 12
    heuristic_restarts: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.feasibility_slack <= 0:
            raise ValueError("feasibility slack must be positive")
        if self.vertex_exact_max_n < 1:
            raise ValueError("vertex_exact_max_n must be at least 1")


@dataclass
class SolverResult:
    decision: np.ndarray
    achieved_sup: float
    threshold: float
    mode: str
    iterations: int
    witness: np.ndarray
    certificate: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def margin(self) -> float:
        return self.threshold - self.achieved_sup


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite vector")
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


@lru_cache(maxsize=16)
def box_vertices(n: int) -> np.ndarray:
    """All ``2^n`` vertices of ``[0, 1]^n`` as rows, lexicographic order."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)))


# ---------------------------------------------------------------------------
# references: how increments depend on (gamma, omega)
# ---------------------------------------------------------------------------


class ExpertReferences:
    """DTOL actions as experts: increment ``gamma . omega - omega_n``."""

    step_corr = None

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self._eye = np.eye(n_actions)

    def affine(self, gamma) -> np.ndarray:
        return np.asarray(gamma, float)[None, :] - self._eye

    def grad(self, coeffs, omega) -> np.ndarray:
        # d/dgamma of (gamma . omega - omega_n) is omega for every n
        return coeffs.sum() * np.asarray(omega, float)

    def flip_masses(self, W, P, eta, sgn, D) -> np.ndarray:
        """``sum_{r,k} W_rk exp(eta_k (P_r + sgn_j D_rj))`` for every ``j``.

        With ``D_rj = gamma_j - [r == j]`` this factorises and costs
        ``O(N K)`` instead of ``O(N^2 K)``.
        """
        gamma = D[0] + self._eye[0]
        H = W * np.exp(np.outer(P, eta))  # (R, K)
        F = H.sum(0)
        shift = np.exp(np.outer(sgn * gamma, eta))  # (N, K)
        own = H * np.expm1(-np.outer(sgn, eta))
        return np.sum(shift * (F[None, :] + own), axis=1)

    def warm_start(self, coeffs) -> np.ndarray:
        total = coeffs.sum()
        if not total > 0:
            return np.full(self.n_actions, 1.0 / self.n_actions)
        return coeffs / total


class RuleReferences:
    """Modification rules ``M_r`` with selections ``I_r`` at one step:
    increment ``I_r (gamma . omega - (M_r gamma) . omega)``."""

    def __init__(self, matrices, selections, awake: bool = False):
        self.matrices = np.asarray(matrices, dtype=float)
        self.selections = np.asarray(selections, dtype=float)
        self.n_actions = self.matrices.shape[1]
        self.step_corr = self.selections ** 2 if awake else None

    def affine(self, gamma) -> np.ndarray:
        g = np.asarray(gamma, float)
        return self.selections[:, None] * (g[None, :] - self.matrices @ g)

    def grad(self, coeffs, omega) -> np.ndarray:
        w = np.asarray(omega, float)
        rows = w[None, :] - np.einsum("rij,i->rj", self.matrices, w)
        return (coeffs * self.selections) @ rows

    def warm_start(self, coeffs) -> np.ndarray:
        """Stationary point of the weighted rule mixture: the first-order
        part of every increment then cancels in the mixture."""
        c = coeffs * self.selections
        n = self.n_actions
        if not c.sum() > 0:
            return np.full(n, 1.0 / n)
        Q = np.einsum("r,rij->ij", c / c.sum(), self.matrices)
        A = np.vstack([Q - np.eye(n), np.ones((1, n))])
        b = np.zeros(n + 1)
        b[-1] = 1.0
        g, *_ = np.linalg.lstsq(A, b, rcond=None)
        return project_to_simplex(g)


class DTOLStep:
    """One step's mixture as a function of decision and loss vector."""

    def __init__(self, evaluator: MixtureEvaluator, refs):
        self.ev = evaluator
        self.refs = refs
        self.n_actions = refs.n_actions
        self.base = evaluator.log_terms()
        self.etas = evaluator.etas()
        self.log_C = float(logsumexp(self.base))

    def increments(self, gamma, omega) -> np.ndarray:
        return self.refs.affine(gamma) @ np.asarray(omega, float)

    def _exponents(self, D, omegas):
        ex = self.ev.step_exponents(D @ omegas.T, self.refs.step_corr)
        return self.base[:, :, None] + ex

    def log_values(self, gamma, omegas) -> np.ndarray:
        omegas = np.atleast_2d(np.asarray(omegas, float))
        return logsumexp(self._exponents(self.refs.affine(gamma), omegas), axis=(0, 1))

    def log_value(self, gamma, omega) -> float:
        return float(self.log_values(gamma, omega)[0])

    def gradient(self, gamma, omega) -> np.ndarray:
        """Gradient in ``gamma`` of ``f(gamma, omega)`` (not of log f)."""
        d = self.increments(gamma, omega)
        terms = np.exp(self.base + self.ev.step_exponents(d, self.refs.step_corr))
        return self.refs.grad(terms @ self.etas, omega)

    def warm_start(self) -> np.ndarray:
        mass = np.exp(self.base - self.base.max())
        return self.refs.warm_start(mass @ self.etas)


# ---------------------------------------------------------------------------
# supremum over outcomes
# ---------------------------------------------------------------------------


def _heuristic_sup(step: DTOLStep, gamma, restarts: int, rng) -> tuple[float, np.ndarray]:
    """Vertex ascent from several starts; the result is a lower bound on the sup.

    Each walk alternates two moves.  Jumping to the vertex picked by the sign
    of the gradient never decreases ``f`` (it is convex in ``omega``) and is
    cheap; a best single flip then escapes the fixed points of that jump.
    The starts are the vertices maximising each of the heaviest single terms,
    the all-ones and all-zeros vertices, and random vertices.
    """
    D = step.refs.affine(gamma)
    n = step.n_actions
    eta = step.etas
    corr = step.ev.step_exponents(np.zeros(D.shape[0]), step.refs.step_corr)
    base = step.base + corr  # (R, K)

    # |P_r| <= 1, so factoring out the largest base term cannot overflow
    shift = float(base.max())
    W = np.exp(base - shift)  # (R, K)
    flip = getattr(step.refs, "flip_masses", None)

    def log_f(P):
        return shift + math.log(float(np.sum(W * np.exp(np.outer(P, eta)))))

    def jump(w, P, cur):
        while True:
            coeff = (W * np.exp(np.outer(P, eta))) @ eta
            g = coeff @ D
            w_new = np.where(g > 0, 1.0, np.where(g < 0, 0.0, w))
            if np.array_equal(w_new, w):
                return w, P, cur
            P_new = D @ w_new
            val = log_f(P_new)
            if val <= cur:
                return w, P, cur
            w, P, cur = w_new, P_new, val

    heavy = np.argsort(step.base.max(axis=1))[::-1][: max(1, restarts // 2)]
    starts = [(D[r] > 0).astype(float) for r in heavy]
    starts += [np.ones(n), np.zeros(n)]
    starts += list((rng.random((restarts, n)) < 0.5).astype(float))

    best_val, best_w = -np.inf, None
    seen = set()
    for w in starts:
        key = w.tobytes()
        if key in seen:
            continue
        seen.add(key)
        w = w.copy()
        P = D @ w
        cur = log_f(P)
        while True:
            w, P, cur = jump(w, P, cur)
            sgn = 1.0 - 2.0 * w  # +1 flips 0->1, -1 flips 1->0
            if flip is not None:
                mass = flip(W, P, eta, sgn, D)
            else:
                Pf = P[:, None] + D * sgn[None, :]  # (R, n)
                mass = np.einsum("rk,krj->j", W, np.exp(eta[:, None, None] * Pf[None, :, :]))
            j = int(np.argmax(mass))
            vals = shift + np.log(mass)
            if vals[j] <= cur + 1e-15 * max(1.0, abs(cur)):
                break
            P = P + sgn[j] * D[:, j]
            w[j] = 1.0 - w[j]
            cur = float(vals[j])
        if cur > best_val:
            best_val, best_w = cur, w
    return best_val, best_w


def sup_over_outcomes(step: DTOLStep, gamma, mode: str = EXACT, restarts: int = 16,
                      rng=None, with_certificate: bool = False):
    """Return ``(log sup_omega f, witness, certificate)``.

    In exact mode the certificate is ``(vertices, log values)`` over all
    ``2^N`` box vertices; heuristic mode gives a lower bound and no
    certificate.
    """
    if mode == EXACT:
        V = box_vertices(step.n_actions)
        vals = step.log_values(gamma, V)
        j = int(np.argmax(vals))
        cert = (V, vals) if with_certificate else None
        return float(vals[j]), V[j].copy(), cert
    rng = np.random.default_rng(0) if rng is None else rng
    val, w = _heuristic_sup(step, gamma, restarts, rng)
    return val, w, None


# ---------------------------------------------------------------------------
# the defensive step
# ---------------------------------------------------------------------------


def solve_defensive_step(step: DTOLStep, cfg: SolverConfig | None = None, rng=None,
                         log_threshold: float | None = None) -> SolverResult:
    """Find ``gamma`` with ``sup_omega f(gamma, omega) <= C (1 + slack)``.

    Starts from the learning-rate-weighted exponential-weights vector and
    runs Polyak-step projected subgradient descent on the convex objective
    ``Phi``, stopping at the first feasible point.
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n = step.n_actions
    log_C = step.log_C if log_threshold is None else log_threshold
    log_target = log_C + math.log1p(cfg.feasibility_slack)
    mode = EXACT if n <= cfg.vertex_exact_max_n else HEURISTIC
    C = math.exp(log_C)

    if n == 1:
        gamma = np.ones(1)
        val, w, cert = sup_over_outcomes(step, gamma, EXACT, with_certificate=True)
        if val > log_target:
            raise NotFeasible("single action above threshold", _dump(step, gamma, val))
        return SolverResult(gamma, math.exp(val), C, EXACT, 0, w, cert)

    gamma = step.warm_start()
    best = (np.inf, gamma, None)
    for it in range(cfg.max_iterations + 1):
        val, w, _ = sup_over_outcomes(step, gamma, mode, cfg.heuristic_restarts, rng)
        if val < best[0]:
            best = (val, gamma, w)
        if val <= log_target:
            break
        if it == cfg.max_iterations:
            raise NotFeasible(
                f"no feasible decision after {it} iterations: "
                f"log sup {best[0]:.17g} > log threshold {log_C:.17g}",
                _dump(step, best[1], best[0]))
        g = step.gradient(gamma, w)
        g = g - g.mean()
        gn = float(g @ g)
        if gn <= 0:
            raise NotFeasible("zero subgradient above threshold", _dump(step, gamma, val))
        excess = math.exp(val) - C
        gamma = project_to_simplex(gamma - (excess / gn) * g)

    val, w, cert = sup_over_outcomes(step, gamma, mode, cfg.heuristic_restarts, rng,
                                     with_certificate=True)
    return SolverResult(gamma, math.exp(val), C, mode, it, w, cert)


def _dump(step: DTOLStep, gamma, log_sup) -> dict:
    ev = step.ev
    return {"t": ev.t, "regret": ev.regret.tolist(), "corr_count": ev.corr_count.tolist(),
            "inv_sqrt_sum": ev.inv_sqrt_sum, "grid_kind": ev.grid.kind,
            "etas": step.etas.tolist(), "gamma": np.asarray(gamma).tolist(),
            "log_sup": float(log_sup), "log_threshold": step.log_C}


# ---------------------------------------------------------------------------
# binary outcomes
# ---------------------------------------------------------------------------


def two_loss_p(x: float) -> float:
    """Square-loss component of the ``[0, 2]`` path through the consistent
    prediction pairs."""
    if x < 0.5:
        return x
    if x <= 1.5:
        return 0.5
    return x - 1.0


def two_loss_p_tilde(x: float) -> float:
    return min(1.0, max(x - 0.5, 0.0))


def bisection_binary(g: Callable[[float, int], float], tol: float = 1e-12,
                     endpoint_tol: float = 1e-9) -> float:
    """Find ``x`` in ``[0, 2]`` with ``g(x, 0) <= 0`` and ``g(x, 1) <= 0``
    (up to the function tolerance implied by ``tol``).

    Requires ``g(0, 0) <= 0`` and ``g(2, 1) <= 0``.  Bisects
    ``phi(x) = g(x, 1) - g(x, 0)``, which is positive at 0 and negative at 2
    once the easy endpoint cases are excluded.
    """
    g00, g21 = g(0.0, 0), g(2.0, 1)
    if g00 > endpoint_tol or g21 > endpoint_tol:
        raise BisectionEndpointError(f"endpoint precondition violated: g(0,0)={g00}, g(2,1)={g21}")
    if g(0.0, 1) <= 0:
        return 0.0
    if g(2.0, 0) <= 0:
        return 2.0
    lo, hi = 0.0, 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid, 1) - g(mid, 0) > 0:
            lo = mid
        else:
            hi = mid
    cands = (lo, 0.5 * (lo + hi), hi)
    return min(cands, key=lambda x: max(g(x, 0), g(x, 1)))


# ---------------------------------------------------------------------------
# trace checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    step: int
    reason: str


def verify_decrease(trace: Sequence[tuple[float, float]], style: str = "decreasing",
                    tol: float = 1e-9) -> Violation | None:
    """Check a trace of ``(f at played move, threshold)`` pairs.

    ``style="decreasing"``: f never increases and stays at most 1.
    ``style="anytime"``: f at most its threshold and threshold at most 1.
    Steps are reported 1-based.
    """
    prev = 1.0
    for t, (f, C) in enumerate(trace, start=1):
        if not (math.isfinite(f) and math.isfinite(C)):
            return Violation(t, "non-finite value")
        if C > 1 + tol:
            return Violation(t, f"threshold {C:.17g} > 1")
        if f > C * (1 + tol):
            return Violation(t, f"f {f:.17g} > threshold {C:.17g}")
        if style == "decreasing" and f > prev * (1 + tol):
            return Violation(t, f"f increased from {prev:.17g} to {f:.17g}")
        prev = f
    return None
