"""A belief that defends against a random supermartingale.

For a payoff whose expectation under every belief is at most C, some belief
keeps the payoff at most C whatever the outcome.  Scanning a grid of
beliefs finds one, up to a slack proportional to the grid step.

    python demos/levin_oracle.py
"""

import numpy as np

from defensive_forecasting.levin import BeliefGrid, levin_oracle, random_relation

rng = np.random.default_rng(7)
for delta in (1 / 4, 1 / 16, 1 / 64):
    rel = random_relation(rng, 3, n_terms=4, n_branches=2)
    pi, g = levin_oracle(rel, BeliefGrid(3, delta), rel.C, rel.kappa)
    print(f"delta={delta:<8.4g} pi={np.round(pi, 3)}  max g={g.max():.4f}  "
          f"allowed {rel.C + rel.kappa * delta:.4f}")
