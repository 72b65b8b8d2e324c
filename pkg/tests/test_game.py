import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defensive_forecasting.game import (
    InvalidRuleError,
    LossLedger,
    RuleLedger,
    absolute_loss_game,
    as_simplex,
    constant_action_matrix,
    constant_action_rule,
    dtol_loss,
    identity_matrix,
    late_arrival_rule,
    quantile_loss,
    rule_regret_step,
    square_loss_game,
    substitute_decision,
    swap_matrix,
    u_mixture_value,
    update_ledger,
    validate_rule,
    weighted_lower_quantile,
    DTOLGame,
    BinaryConvexGame,
)


def ledger_with(losses, weights=None):
    losses = np.asarray(losses, float)
    led = LossLedger.fresh(losses.size, weights)
    return LossLedger(1, 0.0, losses, led.expert_weights)


# --- dtol_loss ------------------------------------------------------------


@pytest.mark.parametrize("gamma,omega,expected", [
    ((1, 0), (0.3, 0.9), 0.3),
    ((0.5, 0.5), (0, 1), 0.5),
    ((0.3, 0.7), (1, 0), 0.3),
])
def test_dtol_loss_examples(gamma, omega, expected):
    assert dtol_loss(gamma, omega) == pytest.approx(expected, abs=1e-15)


def test_dtol_loss_dimension_mismatch():
    with pytest.raises(ValueError):
        dtol_loss((0.5, 0.5), (1, 0, 0))


def test_simplex_validation():
    as_simplex([0.25, 0.75])
    with pytest.raises(ValueError):
        as_simplex([0.5, 0.4])
    with pytest.raises(ValueError):
        as_simplex([1.5, -0.5])


# --- ledgers --------------------------------------------------------------


def test_update_ledger_one_step():
    led = update_ledger(LossLedger.fresh(2), 0.3, [0.3, 0.9])
    assert led.t == 1
    assert led.learner_cum == 0.3
    np.testing.assert_array_equal(led.expert_cum, [0.3, 0.9])


def test_update_ledger_zero_losses_only_advance_time():
    led = update_ledger(LossLedger.fresh(3), 0.0, [0, 0, 0])
    assert led.t == 1 and led.learner_cum == 0.0
    assert not led.expert_cum.any()


def test_update_ledger_additive():
    led = LossLedger.fresh(1)
    for _ in range(2):
        led = update_ledger(led, 0.5, [0.5])
    assert led.learner_cum == 1.0


def test_update_ledger_rejects_bad_losses():
    with pytest.raises(ValueError):
        update_ledger(LossLedger.fresh(2), 1.5, [0, 0])
    with pytest.raises(ValueError):
        update_ledger(LossLedger.fresh(2), 0.5, [0, -0.1])


def test_ledger_weights_checked():
    with pytest.raises(ValueError):
        LossLedger.fresh(weights=[0.6, 0.6])
    with pytest.raises(ValueError):
        LossLedger.fresh(weights=[0.5, 0.0])


# --- quantiles ------------------------------------------------------------


@pytest.mark.parametrize("losses,weights,eps,expected", [
    ((1, 2, 3, 4), None, 0.5, 2),
    ((1, 2, 3, 4), None, 0.25, 1),
    ((5, 1), (0.9, 0.1), 0.05, 1),
])
def test_quantile_loss_examples(losses, weights, eps, expected):
    rep = quantile_loss(ledger_with(losses, weights), eps)
    assert rep.quantile_loss == expected
    assert rep.quantile_regret == -expected


def test_quantile_loss_rejects_eps_above_weight():
    with pytest.raises(ValueError):
        quantile_loss(ledger_with((1, 2), (0.3, 0.3)), 0.7)


def test_quantile_uses_given_weights_without_renormalising():
    # leftover mass 0.4 has no expert; eps up to 0.6 is admissible
    rep = quantile_loss(ledger_with((3, 1), (0.3, 0.3)), 0.6)
    assert rep.quantile_loss == 3


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=12))
def test_quantile_at_one_over_n_is_the_minimum(losses):
    n = len(losses)
    assert quantile_loss(ledger_with(losses), 1.0 / n).quantile_loss == min(losses)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=1, max_size=12),
       st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_quantile_monotone_in_eps(losses, e1, e2):
    led = ledger_with(losses)
    lo, hi = sorted((e1, e2))
    assert quantile_loss(led, lo).quantile_loss <= quantile_loss(led, hi).quantile_loss


@settings(max_examples=150, deadline=None)
@given(st.lists(st.floats(0, 50), min_size=1, max_size=8), st.integers(1, 5),
       st.floats(0.05, 1.0))
def test_quantile_duplicate_invariance(losses, m, eps):
    n = len(losses)
    base = quantile_loss(ledger_with(losses), eps)
    dup = quantile_loss(ledger_with(np.repeat(losses, m), np.full(n * m, 1.0 / (n * m))), eps)
    assert dup.quantile_loss == base.quantile_loss


def test_weighted_lower_quantile_ties():
    # the closed lower quantile returns an attained value
    assert weighted_lower_quantile([2, 2, 5], [1 / 3] * 3, 2 / 3) == 2
    assert weighted_lower_quantile([2, 2, 5], [1 / 3] * 3, 1.0) == 5


# --- u mixture ------------------------------------------------------------


def test_u_mixture_divergence_examples():
    led = ledger_with((1.0, 2.0, 3.0, 4.0))
    mix, div = u_mixture_value(led, [0.25] * 4)
    assert div == pytest.approx(0.0, abs=1e-15)
    assert mix == pytest.approx(2.5)
    _, div = u_mixture_value(led, [0, 0, 1, 0])
    assert div == pytest.approx(math.log(4))
    _, div = u_mixture_value(led, [0.5, 0.5, 0, 0])
    assert div == pytest.approx(0.6931471805599453, rel=1e-12)


def test_u_mixture_wrong_length():
    with pytest.raises(ValueError):
        u_mixture_value(ledger_with((1, 2)), [1.0, 0, 0])


# --- rules ----------------------------------------------------------------


def test_rule_regret_identity_is_zero():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = rng.dirichlet(np.ones(3))
        assert rule_regret_step(g, rng.random(3), identity_matrix(3), rng.random()) == pytest.approx(0, abs=1e-15)


def test_rule_regret_swap_example():
    assert rule_regret_step((0.3, 0.7), (0, 1), swap_matrix(2, 0, 1), 0.5) == pytest.approx(0.2)


def test_rule_regret_asleep():
    assert rule_regret_step((0.3, 0.7), (0, 1), swap_matrix(2, 0, 1), 0.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000), st.floats(0, 1))
def test_constant_action_rule_is_expert_regret(n, seed, sel):
    rng = np.random.default_rng(seed)
    g, w = rng.dirichlet(np.ones(n)), rng.random(n)
    a = int(rng.integers(n))
    got = rule_regret_step(g, w, constant_action_matrix(n, a), sel)
    assert got == pytest.approx(sel * (g @ w - w[a]), abs=1e-14)
    assert -1 <= got <= 1


def test_validate_rule_examples():
    validate_rule(np.eye(2), 1.0)
    validate_rule([[0.5, 0.5], [0.5, 0.5]], 0.3)
    with pytest.raises(InvalidRuleError, match="sums to 1.1"):
        validate_rule([[1, 0], [0.1, 1]])


def test_validate_rule_reports_first_problem():
    with pytest.raises(InvalidRuleError, match="negative"):
        validate_rule([[1.5, 0], [-0.5, 1]])
    with pytest.raises(InvalidRuleError, match="time selection"):
        validate_rule(np.eye(2), 1.2)
    with pytest.raises(InvalidRuleError, match="square"):
        validate_rule(np.ones((2, 3)) / 2)


def test_late_arrival_rule_selection():
    r = late_arrival_rule(3, 1, 50)
    assert r.at(49)[1] == 0.0
    assert r.at(50)[1] == 1.0
    np.testing.assert_array_equal(r.at(50)[0], constant_action_matrix(3, 1))


def test_rule_ledger_awake_times():
    rl = RuleLedger.fresh(2)
    for t in range(1, 101):
        sel = np.array([1.0, 1.0 if t % 2 else 0.0])
        rl = rl.update(0.5, [0.1, 0.0], sel)
    np.testing.assert_array_equal(rl.awake_time, [100, 50])
    assert np.all(rl.awake_time_sq <= rl.awake_time)


def test_rule_ledger_quantile_regret():
    rl = RuleLedger(1, 0.0, np.array([3.0, -1.0, 2.0, 0.0]), np.ones(4), np.ones(4), np.full(4, 0.25))
    assert rl.quantile_regret(0.25) == 3.0
    assert rl.quantile_regret(0.5) == 2.0


def test_time_varying_rule_provider():
    r = constant_action_rule(2, 0, selection=lambda t: 0.5 if t > 3 else 1.0)
    assert r.at(2)[1] == 1.0 and r.at(4)[1] == 0.5


# --- games and substitution -----------------------------------------------


def test_substitute_decision_dtol_identity():
    np.testing.assert_array_equal(substitute_decision(DTOLGame(2), None, [0.2, 0.8]), [0.2, 0.8])


def test_substitute_decision_square_loss_convexity():
    game = square_loss_game()
    d = substitute_decision(game, [0.0, 1.0], [0.5, 0.5])
    assert d == 0.5
    for w in (0, 1):
        assert game.loss(d, w) == 0.25
        assert game.loss(d, w) <= 0.5 * game.loss(0, w) + 0.5 * game.loss(1, w)


def test_substitute_decision_single_expert():
    assert substitute_decision(absolute_loss_game(), [0.7], [1.0]) == pytest.approx(0.7)


def test_substitute_decision_unknown_game():
    class Other:
        kind = "other"

    with pytest.raises(ValueError):
        substitute_decision(Other(), [0.1], [1.0])


def test_binary_convex_game_rejects_nonconvex_or_out_of_range():
    with pytest.raises(ValueError):
        BinaryConvexGame(lambda x, w: math.sin(6 * x) ** 2, "wiggly")
    with pytest.raises(ValueError):
        BinaryConvexGame(lambda x, w: 2 * abs(x - w), "steep")


def test_binary_convex_best_response():
    assert square_loss_game().best_response([0.3, 0.7]) == pytest.approx(0.7, abs=1e-6)
    assert absolute_loss_game().best_response([0.3, 0.7]) == 1.0
