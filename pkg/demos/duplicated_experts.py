"""Renaming experts does not change the learner.

Four behaviours are offered once each, then 25 times each.  A quantile bound
only sees the weight of the good behaviours, so the two runs should produce
the same mixture value and the same grouped decision at every step.

    python demos/duplicated_experts.py
"""

import numpy as np

from defensive_forecasting.cli import load_config
from defensive_forecasting.experiment import run_experiment


def main(T=40):
    small, big = load_config("duplicated_n4"), load_config("duplicated_n100")
    small["T"] = big["T"] = T
    a, b = run_experiment(small), run_experiment(big)

    print(f"{'t':>4} {'f (N=4)':>20} {'f (N=100)':>20} {'R^0.25':>8} {'bound':>8}")
    gap = 0.0
    for x, y in zip(a.rows, b.rows):
        grouped = np.reshape(y.decision, (4, 25)).sum(1)
        gap = max(gap, abs(x.f_value - y.f_value), np.abs(grouped - x.decision).max())
        if x.t % 5 == 0:
            print(f"{x.t:>4} {x.f_value:>20.15f} {y.f_value:>20.15f} "
                  f"{y.Reps[0.25]:>8.3f} {y.bound17[0.25]:>8.2f}")
    print(f"largest disagreement over {T} steps: {gap:.2e}")


if __name__ == "__main__":
    main()
