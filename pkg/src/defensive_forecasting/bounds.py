"""Closed-form regret bounds used as comparison targets."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundInputs:
    T: int
    N: int = 2
    epsilon: float = 0.5
    delta: float = 0.25
    K: int = 1
    kappa: float = 0.0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.N < 1 or self.K < 1:
            raise ValueError("N and K must be positive")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")


def bound_fixed(T: int, N: int) -> float:
    """``sqrt(2 T ln N)`` for the single-rate learner at known horizon."""
    return math.sqrt(2 * T * math.log(N))


def bound_17(T: int, epsilon: float) -> float:
    """Anytime quantile bound ``2 sqrt(T ln(1/eps)) + 7 sqrt(T)``."""
    _eps(epsilon)
    return 2 * math.sqrt(T * math.log(1 / epsilon)) + 7 * math.sqrt(T)


def bound_19(T: int, N: int) -> float:
    """Best uniform-in-T bound for Hedge, ``sqrt(2 T ln N) + sqrt(ln N / 8)``."""
    return math.sqrt(2 * T * math.log(N)) + math.sqrt(math.log(N) / 8)


def bound_13(T: int, epsilon: float, delta: float) -> float:
    """Explicit quantile bound; the ``max{4, 400 ln(1/eps)}`` term sits
    outside the radical."""
    _eps(epsilon)
    if not 0 < delta < 0.25:
        raise ValueError("delta must lie in (0, 1/4)")
    if T < 16:
        raise ValueError("needs T >= 16 so that ln ln T > 0")
    inner = T * math.log(1 / epsilon) + 0.5 * T * math.log(1 / delta) + 2 * T * math.log(math.log(T))
    return 2 / math.sqrt(2 - delta) * math.sqrt(inner) + max(4.0, 400 * math.log(1 / epsilon))


def bound_14(T: int, epsilon: float, kappa: float = 0.0) -> float:
    """Asymptotic form with its hidden ``O(ln(1/eps))`` constant set to
    ``kappa``.  With the default ``kappa = 0`` this is a lower proxy, not a
    guarantee."""
    _eps(epsilon)
    if T < 16:
        raise ValueError("needs T >= 16 so that ln ln T > 0")
    inner = 2 * T * math.log(1 / epsilon) + 5 * T * math.log(math.log(T)) + kappa * math.log(1 / epsilon)
    return (1 + 1 / math.log(T)) * math.sqrt(inner)


def bound_20(T: int, epsilon: float, N: int, delta: float) -> float:
    """NormalHedge-style quantile bound, valid for ``delta`` in ``(0, 1/2]``."""
    _eps(epsilon)
    if not 0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 1/2]")
    lnN = math.log(N)
    inner = 3 * (1 + 50 * delta) * T + 16 * lnN ** 2 / delta * (10.2 / delta ** 2 + lnN)
    return math.sqrt((1 + math.log(1 / epsilon)) * inner)


def bound_rules(T: int, K: int, epsilon: float | None = None) -> float:
    """Rule-regret bound at quantile ``epsilon`` (default ``1/K``)."""
    return bound_17(T, 1.0 / K if epsilon is None else epsilon)


def bound_remark2(T: int, mixture_loss: float, divergence: float) -> float:
    """``sum_n u_n L^n + 2 sqrt(T KL(u||p)) + 7 sqrt(T)``; a bound on the
    learner's loss, not on its regret."""
    if divergence < 0:
        raise ValueError("divergence must be nonnegative")
    return mixture_loss + 2 * math.sqrt(T * divergence) + 7 * math.sqrt(T)


def bound_square(K: int, M: int) -> float:
    """Square-loss regret of the two-loss learner, ``ln(K + M) / 2``."""
    return 0.5 * math.log(K + M)


def _eps(epsilon):
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")


def compute_bounds(inputs: BoundInputs) -> dict[str, float]:
    """Every bound defined at ``inputs``; ones whose domain excludes the
    inputs come back as ``nan``."""
    T, N, eps, delta = inputs.T, inputs.N, inputs.epsilon, inputs.delta

    def safe(fn, *args):
        try:
            return fn(*args)
        except (ValueError, ZeroDivisionError):
            return math.nan

    return {
        "bound_fixed": safe(bound_fixed, T, N),
        "bound_17": safe(bound_17, T, eps),
        "bound_19": safe(bound_19, T, N),
        "bound_13": safe(bound_13, T, eps, delta),
        "bound_14": safe(bound_14, T, eps, inputs.kappa),
        "bound_20": safe(bound_20, T, eps, N, delta),
        "bound_rules": safe(bound_rules, T, inputs.K),
    }


# bound_14 carries this label wherever it is printed
PROXY_LABELS = {"bound_14": "asymptotic proxy"}
