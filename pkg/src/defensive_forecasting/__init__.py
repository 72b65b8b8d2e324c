"""Defensive forecasting for online learning with quantile regret.

The learners keep a mixture of Hoeffding supermartingales from growing and
read regret bounds off the mixture; none of the bounds depend on the
nominal number of experts, only on the weight of the good ones.
"""

from .bounds import (
    BoundInputs,
    bound_13,
    bound_14,
    bound_17,
    bound_19,
    bound_20,
    bound_fixed,
    bound_remark2,
    compute_bounds,
)
from .experiment import run_experiment
from .forecaster import (
    NotFeasible,
    SolverConfig,
    SolverResult,
    bisection_binary,
    project_to_simplex,
    solve_defensive_step,
    sup_over_outcomes,
    verify_decrease,
)
from .game import (
    DTOLGame,
    LossLedger,
    ModificationRule,
    QuantileReport,
    RuleLedger,
    absolute_loss_game,
    dtol_loss,
    quantile_loss,
    rule_regret_step,
    square_loss_game,
    substitute_decision,
    u_mixture_value,
    update_ledger,
    validate_rule,
)
from .learners import (
    TwoLossDecision,
    make_anytime,
    make_awake,
    make_fixed_horizon,
    make_hedge_baseline,
    make_internal,
    make_quantile,
    make_two_loss,
)
from .levin import BeliefGrid, levin_oracle
from .supermartingale import (
    EtaGrid,
    MixtureEvaluator,
    build_grid_anytime,
    build_grid_fixed,
    build_grid_mu,
    hoeffding_increment,
    lemma5_certificate,
)
from .traces import emit_trace, verify_trace

__version__ = "0.1.0"
