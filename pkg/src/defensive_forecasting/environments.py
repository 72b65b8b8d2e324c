"""Loss-generating environments for DTOL runs, plus a binary-outcome
environment for the two-loss learner.

An environment is called once per step as ``env.step(t, decision)`` and
returns the loss vector (or, for binary forecasting, a dict of expert inputs
before the decision and the outcome after).  The decision argument lets the
adversary react to the learner's move, which the protocol order allows.
"""

from __future__ import annotations

import math

import numpy as np

KINDS = ("iid_bernoulli", "adversarial_leader", "duplicated", "many_good", "late_arrival",
         "zero_loss", "binary_forecast")


class IIDBernoulli:
    """Expert ``n`` suffers loss 1 with probability ``means[n]``."""

    def __init__(self, means, seed: int = 0):
        self.means = np.asarray(means, dtype=float)
        if np.any((self.means < 0) | (self.means > 1)):
            raise ValueError("means must lie in [0, 1]")
        self.n_actions = self.means.size
        self.rng = np.random.default_rng(seed)

    def step(self, t, decision=None):
        return (self.rng.random(self.n_actions) < self.means).astype(float)


class AdversarialLeader:
    """Charge loss 1 to the ``ceil(N/2)`` actions the learner currently
    weights most; ties are broken by a fixed seeded permutation."""

    def __init__(self, n_actions: int, seed: int = 0):
        if n_actions < 1:
            raise ValueError("need at least one action")
        self.n_actions = n_actions
        self.tiebreak = np.random.default_rng(seed).permutation(n_actions)

    def step(self, t, decision):
        g = np.asarray(decision, dtype=float)
        order = np.lexsort((self.tiebreak, -g))
        out = np.zeros(self.n_actions)
        out[order[: math.ceil(self.n_actions / 2)]] = 1.0
        return out


class Duplicated:
    """Every column of ``base`` repeated ``copies`` times (copies adjacent).

    The base environment sees the per-group total of the learner's decision,
    so it behaves exactly as it would against a learner over the base pool.
    """

    def __init__(self, base, copies: int):
        if copies < 1:
            raise ValueError("copies must be positive")
        self.base = base
        self.copies = copies
        self.n_actions = base.n_actions * copies

    def step(self, t, decision=None):
        grouped = None
        if decision is not None:
            grouped = np.asarray(decision, float).reshape(self.base.n_actions, self.copies).sum(1)
        return np.repeat(self.base.step(t, grouped), self.copies)


class ManyGood:
    """A ``fraction`` of experts with mean loss ``0.5 - gap/2``, the rest at
    ``0.5 + gap/2``; good experts come first."""

    def __init__(self, n_actions: int, fraction: float, gap: float, seed: int = 0):
        if not 0 < fraction <= 1 or not 0 <= gap <= 1:
            raise ValueError("fraction in (0, 1], gap in [0, 1]")
        n_good = max(1, round(fraction * n_actions))
        means = np.full(n_actions, 0.5 + gap / 2)
        means[:n_good] = 0.5 - gap / 2
        self.n_good = n_good
        self.inner = IIDBernoulli(means, seed)
        self.n_actions = n_actions

    def step(self, t, decision=None):
        return self.inner.step(t, decision)


class LateArrival:
    """Bernoulli losses where expert ``n`` only becomes relevant from step
    ``join_steps[n]`` on; ``selection(n, t)`` is its 0/1 time selection."""

    def __init__(self, means, join_steps, seed: int = 0):
        self.inner = IIDBernoulli(means, seed)
        self.join_steps = [int(j) for j in join_steps]
        if len(self.join_steps) != self.inner.n_actions:
            raise ValueError("one join step per expert")
        self.n_actions = self.inner.n_actions

    def selection(self, n: int, t: int) -> float:
        return 1.0 if t >= self.join_steps[n] else 0.0

    def step(self, t, decision=None):
        return self.inner.step(t, decision)


class ZeroLoss:
    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def step(self, t, decision=None):
        return np.zeros(self.n_actions)


class BinaryForecast:
    """Outcomes ``omega_t ~ Bernoulli(theta_t)`` with a slowly drifting
    hidden ``theta_t``.

    Square-loss experts report ``theta_t`` plus expert-specific noise
    (clipped to [0, 1]); boolean experts threshold their noisy view at 1/2.
    """

    def __init__(self, K: int, M: int, seed: int = 0, noise=None):
        self.K, self.M = K, M
        self.rng = np.random.default_rng(seed)
        self.noise = (np.linspace(0.05, 0.3, K + M) if noise is None
                      else np.asarray(noise, float))
        self.theta = self.rng.uniform(0.2, 0.8)
        self._theta_now = None

    def experts(self, t):
        self.theta = float(np.clip(self.theta + self.rng.normal(0, 0.05), 0.02, 0.98))
        view = np.clip(self.theta + self.rng.normal(0, 1, self.K + self.M) * self.noise, 0, 1)
        return view[: self.K], (view[self.K:] > 0.5).astype(float)

    def outcome(self, t):
        return int(self.rng.random() < self.theta)


def make_environment(spec: dict, n_actions: int, seed: int):
    """Build an environment from a JSON-style spec ``{"kind": ..., ...}``."""
    kind = spec.get("kind")
    if kind == "iid_bernoulli":
        means = spec.get("means")
        if means is None:
            means = np.random.default_rng(seed + 7919).uniform(0.1, 0.9, n_actions)
        if len(means) != n_actions:
            raise ValueError("iid_bernoulli: one mean per action")
        return IIDBernoulli(means, seed)
    if kind == "adversarial_leader":
        return AdversarialLeader(n_actions, seed)
    if kind == "duplicated":
        copies = int(spec["copies"])
        if n_actions % copies:
            raise ValueError("duplicated: N must be a multiple of copies")
        return Duplicated(make_environment(spec["base"], n_actions // copies, seed), copies)
    if kind == "many_good":
        return ManyGood(n_actions, float(spec.get("fraction", 0.25)), float(spec.get("gap", 0.2)), seed)
    if kind == "late_arrival":
        joins = spec["join_steps"]
        means = spec.get("means") or [0.5] * len(joins)
        return LateArrival(means, joins, seed)
    if kind == "zero_loss":
        return ZeroLoss(n_actions)
    if kind == "binary_forecast":
        return BinaryForecast(int(spec["K"]), int(spec["M"]), seed, spec.get("noise"))
    raise ValueError(f"unknown environment kind {kind!r}; expected one of {KINDS}")
