"""Brute-force Levin oracle over a discretised belief simplex.

Given a relation ``q`` that maps each belief ``pi`` on a finite outcome set
to a finite set of payoff vectors with ``E_pi g <= C`` for every member,
some belief admits a member bounded by ``C`` at every outcome.  On a grid of
step ``delta`` we can only certify ``C + kappa * delta`` where ``kappa``
bounds how fast the relation moves with ``pi`` (sup-norm).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .game import BrierGame


class SupermartingaleViolation(ValueError):
    pass


class GridTooCoarse(RuntimeError):
    pass


@dataclass(frozen=True)
class BeliefGrid:
    n_outcomes: int
    delta: float

    def __post_init__(self):
        if self.n_outcomes < 1:
            raise ValueError("need at least one outcome")
        m = round(1.0 / self.delta)
        if m < 1 or abs(m * self.delta - 1.0) > 1e-9:
            raise ValueError("grid step must be 1/m for a positive integer m")

    @property
    def resolution(self) -> int:
        return round(1.0 / self.delta)

    def points(self) -> np.ndarray:
        """All beliefs with coordinates in multiples of ``delta``, in
        lexicographic order of their integer numerators."""
        m, k = self.resolution, self.n_outcomes
        rows = [c + (m - sum(c),) for c in itertools.product(range(m + 1), repeat=k - 1)
                if sum(c) <= m]
        return np.array(rows, dtype=float) / m

    def __len__(self):
        return math.comb(self.resolution + self.n_outcomes - 1, self.n_outcomes - 1)


Relation = Callable[[np.ndarray], np.ndarray]


def levin_oracle(q: Relation, grid: BeliefGrid, C: float, kappa: float = 0.0,
                 check_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Scan the grid for ``(pi, g)`` with ``g`` in ``q(pi)`` and
    ``max g <= C + kappa * delta``.

    Every supplied ``g`` is checked for ``E_pi g <= C``; a failure raises
    :class:`SupermartingaleViolation`.  Returns the first qualifying pair.
    """
    bound = C + kappa * grid.delta
    for pi in grid.points():
        gs = np.atleast_2d(np.asarray(q(pi), dtype=float))
        if gs.shape[1] != grid.n_outcomes:
            raise ValueError("payoff vectors must have one entry per outcome")
        exp = gs @ pi
        if np.any(exp > C + check_tol * max(1.0, abs(C))):
            raise SupermartingaleViolation(
                f"E_pi g = {exp.max():.17g} > C = {C:.17g} at pi = {pi}")
        ok = np.flatnonzero(gs.max(axis=1) <= bound)
        if ok.size:
            return pi, gs[ok[0]]
    raise GridTooCoarse(f"no grid belief certifies C + kappa*delta = {bound}")


@dataclass
class HoeffdingRelation:
    """``q(pi) = { sum_k p_k exp(eta_k (l(pi) - l(ref_k)) - eta_k^2/2) }``
    for the Brier forecasting game, whose best response is ``pi`` itself.

    With several branches (each its own reference set) the relation is
    multivalued: every convex combination of branch payoffs on a fixed
    mixing grid belongs to ``q(pi)``.
    """

    game: BrierGame
    branches: list  # each: (weights (K,), etas (K,), reference decisions (K, n))
    mix_levels: int = 1

    @property
    def C(self) -> float:
        return max(float(np.sum(w)) for w, _, _ in self.branches)

    @property
    def kappa(self) -> float:
        """Sup-norm Lipschitz bound of every payoff in ``pi``.

        ``|d loss / d pi_j| <= 1`` for the Brier loss and each exponent is
        at most ``eta - eta^2/2``; summing over coordinates gives the factor
        ``n_outcomes``.
        """
        n = self.game.n_outcomes
        return max(n * float(np.sum(w * e * np.exp(e - e * e / 2)))
                   for w, e, _ in self.branches)

    def _branch(self, pi, w, e, refs):
        lp = self.game.loss_profile(pi)
        lr = np.array([self.game.loss_profile(r) for r in refs])
        return (w[:, None] * np.exp(e[:, None] * (lp[None, :] - lr) - (e * e)[:, None] / 2)).sum(0)

    def __call__(self, pi) -> np.ndarray:
        g = np.array([self._branch(pi, *b) for b in self.branches])
        # every branch has the same total weight, so mixtures keep E_pi g <= C
        if len(g) == 1 or self.mix_levels <= 1:
            return g
        combos = [a for a in itertools.product(range(self.mix_levels + 1), repeat=len(g))
                  if sum(a) == self.mix_levels]
        alphas = np.array(combos, dtype=float) / self.mix_levels
        return alphas @ g


def random_relation(rng, n_outcomes: int = 3, n_terms: int = 3, n_branches: int = 1,
                    mix_levels: int = 2, C: float = 1.0) -> HoeffdingRelation:
    """A random Hoeffding relation on the Brier game with threshold ``C``."""
    game = BrierGame(n_outcomes)
    branches = []
    for _ in range(n_branches):
        w = rng.dirichlet(np.ones(n_terms)) * C
        e = rng.uniform(0.0, 1.0, n_terms)
        refs = rng.dirichlet(np.ones(n_outcomes), size=n_terms)
        branches.append((w, e, refs))
    return HoeffdingRelation(game, branches, mix_levels)
