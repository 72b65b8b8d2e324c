"""Regret against modification rules, with and without time selection.

Four rules act on a two-action game: keep the decision, swap the actions,
or always play one action.  The second run lets every rule sleep on
alternate steps; its guarantee then scales with each rule's awake time.

    python demos/internal_regret.py
"""

from defensive_forecasting.bounds import bound_rules
from defensive_forecasting.cli import load_config
from defensive_forecasting.experiment import run_experiment
from defensive_forecasting.supermartingale import grid_certificate

NAMES = ["identity", "swap", "always 0", "always 1"]

res = run_experiment(load_config("internal_rules"))
T = len(res.rows)
print(f"always-awake rules, T={T}, bound {bound_rules(T, 4):.1f}")
for name, r in zip(NAMES, res.learner.reference_regrets()):
    print(f"  {name:<9} regret {r:8.2f}")

res = run_experiment(load_config("awake_alternating"))
rl, grid = res.learner.rule_ledger, res.learner.evaluator.grid
print("alternating rules: certificate must stay below K = 4")
for name, r, tk in zip(NAMES, rl.rule_regret, rl.awake_time):
    print(f"  {name:<9} regret {r:8.2f}  awake {tk:5.0f}  certificate {grid_certificate(grid, r, tk):.3f}")
