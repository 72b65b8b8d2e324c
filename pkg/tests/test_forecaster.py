import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defensive_forecasting import supermartingale as sm
from defensive_forecasting.forecaster import (
    EXACT,
    HEURISTIC,
    BisectionEndpointError,
    DTOLStep,
    ExpertReferences,
    NotFeasible,
    RuleReferences,
    SolverConfig,
    bisection_binary,
    box_vertices,
    project_to_simplex,
    solve_defensive_step,
    sup_over_outcomes,
    two_loss_p,
    two_loss_p_tilde,
    verify_decrease,
)
from defensive_forecasting.game import constant_action_matrix, swap_matrix
from defensive_forecasting.levin import (
    BeliefGrid,
    GridTooCoarse,
    SupermartingaleViolation,
    levin_oracle,
    random_relation,
)


def random_step(rng, n, kind="mu", steps=None, refs=None):
    grid = {"mu": sm.build_grid_mu(6), "anytime": sm.build_grid_anytime(1, 4),
            "fixed": sm.single_eta_grid(0.5)}[kind]
    refs = refs or ExpertReferences(n)
    R = refs.affine(np.full(n, 1 / n)).shape[0]
    ev = sm.MixtureEvaluator(np.log(rng.dirichlet(np.ones(R))), grid)
    for _ in range(int(rng.integers(0, 30)) if steps is None else steps):
        ev.advance(refs.affine(rng.dirichlet(np.ones(n))) @ rng.random(n))
    return DTOLStep(ev, refs)


# --- projection -----------------------------------------------------------


@pytest.mark.parametrize("v,expected", [
    ((0.5, 0.5), (0.5, 0.5)),
    ((2.0, 0.0), (1.0, 0.0)),
    ((0.2, 0.2, 0.2), (1 / 3, 1 / 3, 1 / 3)),
])
def test_projection_examples(v, expected):
    np.testing.assert_allclose(project_to_simplex(v), expected, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10))
def test_projection_is_nearest_point(v):
    v = np.array(v)
    p = project_to_simplex(v)
    assert p.min() >= 0 and abs(p.sum() - 1) < 1e-12
    # KKT: v - p is constant on the support and no larger off it
    r = v - p
    on = p > 1e-12
    if on.any():
        assert np.ptp(r[on]) < 1e-9
        assert np.all(r[~on] <= r[on].max() + 1e-9)


# --- sup over outcomes ----------------------------------------------------


def one_expert_step(eta=1.0):
    ev = sm.MixtureEvaluator(np.zeros(1), sm.single_eta_grid(eta))
    refs = RuleReferences(constant_action_matrix(2, 0)[None], np.ones(1))
    return DTOLStep(ev, refs)


def test_sup_collapses_when_following_the_expert():
    step = one_expert_step()
    val, _, (V, vals) = sup_over_outcomes(step, np.array([1.0, 0.0]), with_certificate=True)
    assert math.exp(val) == pytest.approx(math.exp(-0.5), rel=1e-14)
    np.testing.assert_allclose(np.exp(vals), math.exp(-0.5), rtol=1e-14)


def test_sup_witness_against_the_expert():
    val, w, _ = sup_over_outcomes(one_expert_step(), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(w, [0.0, 1.0])
    assert math.exp(val) == pytest.approx(1.6487212707001282, rel=1e-14)


class MonotoneRefs:
    """Increments with nonnegative slopes in every loss coordinate."""

    step_corr = None

    def __init__(self, D):
        self.D = np.asarray(D, float)
        self.n_actions = self.D.shape[1]

    def affine(self, gamma):
        return self.D


def test_sup_monotone_case_hits_all_ones():
    ev = sm.MixtureEvaluator(np.log([0.5, 0.5]), sm.build_grid_mu(3))
    step = DTOLStep(ev, MonotoneRefs([[0.2, 0.0, 0.3], [0.1, 0.4, 0.0]]))
    for mode in (EXACT, HEURISTIC):
        _, w, _ = sup_over_outcomes(step, np.full(3, 1 / 3), mode)
        np.testing.assert_array_equal(w, np.ones(3))


def test_box_vertices_cover_the_cube():
    V = box_vertices(4)
    assert V.shape == (16, 4)
    assert len({tuple(r) for r in V}) == 16


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7), st.sampled_from(["mu", "anytime", "fixed"]))
def test_phi_midpoint_convex(seed, n, kind):
    rng = np.random.default_rng(seed)
    step = random_step(rng, n, kind)
    g1, g2 = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))

    def phi(g):
        return math.exp(sup_over_outcomes(step, g, EXACT)[0])

    assert phi((g1 + g2) / 2) <= (phi(g1) + phi(g2)) / 2 + 1e-9


def test_heuristic_never_exceeds_exact_and_usually_agrees():
    rng = np.random.default_rng(2024)
    agree, trials = 0, 300
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        step = random_step(rng, n, str(rng.choice(["mu", "anytime"])))
        g = rng.dirichlet(np.ones(n) * 0.5)
        ex = sup_over_outcomes(step, g, EXACT)[0]
        he = sup_over_outcomes(step, g, HEURISTIC, 16, rng)[0]
        assert he <= ex + 1e-12
        agree += he >= ex - 1e-12
    print(f"heuristic/exact agreement: {agree}/{trials}")
    assert agree / trials >= 0.99


# --- defensive step -------------------------------------------------------


def test_single_eta_warm_start_is_feasible():
    rng = np.random.default_rng(7)
    for _ in range(30):
        step = random_step(rng, int(rng.integers(2, 8)), "fixed")
        res = solve_defensive_step(step)
        assert res.iterations == 0
        assert res.achieved_sup <= res.threshold * (1 + 1e-9)
        assert res.mode == EXACT
        assert len(res.certificate[0]) == 2 ** step.n_actions


def test_single_action():
    ev = sm.MixtureEvaluator(np.zeros(1), sm.build_grid_mu(4))
    res = solve_defensive_step(DTOLStep(ev, ExpertReferences(1)))
    np.testing.assert_array_equal(res.decision, [1.0])
    assert res.achieved_sup <= res.threshold


def test_identical_histories_give_symmetric_decision():
    ev = sm.MixtureEvaluator.uniform(3, sm.build_grid_mu(8))
    for d in ([0.3, 0.3, -0.2], [-0.1, -0.1, 0.4], [0.5, 0.5, 0.0]):
        ev.advance(np.array(d))
    res = solve_defensive_step(DTOLStep(ev, ExpertReferences(3)))
    assert res.decision[0] == res.decision[1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.sampled_from(["mu", "anytime"]))
def test_solver_reaches_threshold(seed, n, kind):
    rng = np.random.default_rng(seed)
    step = random_step(rng, n, kind)
    res = solve_defensive_step(step, SolverConfig(seed=seed))
    assert abs(res.decision.sum() - 1) < 1e-12 and res.decision.min() >= 0
    assert res.achieved_sup <= res.threshold * (1 + 1e-9)
    assert res.margin >= -1e-9


def test_solver_reaches_threshold_for_rules():
    rng = np.random.default_rng(11)
    mats = np.array([np.eye(3), swap_matrix(3, 0, 2), constant_action_matrix(3, 1)])
    for _ in range(20):
        refs = RuleReferences(mats, rng.random(3), awake=True)
        ev = sm.MixtureEvaluator(np.log(np.full(3, 1 / 3)), sm.build_grid_mu(6), sm.AWAKE)
        for _ in range(10):
            ev.advance(refs.affine(rng.dirichlet(np.ones(3))) @ rng.random(3), refs.step_corr)
        res = solve_defensive_step(DTOLStep(ev, refs))
        assert res.achieved_sup <= res.threshold * (1 + 1e-9)


def test_not_feasible_dumps_state():
    step = random_step(np.random.default_rng(0), 3, "mu", steps=5)
    with pytest.raises(NotFeasible) as err:
        solve_defensive_step(step, SolverConfig(max_iterations=5), log_threshold=step.log_C - 5)
    assert err.value.state["t"] == 5
    assert len(err.value.state["gamma"]) == 3


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(feasibility_slack=0)
    with pytest.raises(ValueError):
        SolverConfig(vertex_exact_max_n=0)


def test_heuristic_mode_above_exact_limit():
    step = random_step(np.random.default_rng(4), 6, "mu")
    res = solve_defensive_step(step, SolverConfig(vertex_exact_max_n=4))
    assert res.mode == HEURISTIC and res.certificate is None


# --- bisection ------------------------------------------------------------


def test_bisection_easy_left_endpoint():
    assert bisection_binary(lambda x, w: -1.0) == 0.0


def test_bisection_easy_right_endpoint():
    g = lambda x, w: (1.0 if x < 2 else -1.0) if w == 1 else (-1.0 if x == 0 else -0.5 if x == 2 else 1.0)
    assert bisection_binary(g) == 2.0


def test_bisection_linear_phi():
    # phi(x) = g(x, 1) - g(x, 0) = 1 - x
    g = lambda x, w: (1 - x) / 2 if w == 1 else (x - 1) / 2
    x0 = bisection_binary(g, tol=1e-12)
    assert abs(x0 - 1.0) <= 1e-12
    assert max(g(x0, 0), g(x0, 1)) <= 1e-12


def test_bisection_endpoint_violation():
    with pytest.raises(BisectionEndpointError):
        bisection_binary(lambda x, w: 1.0)


@pytest.mark.parametrize("x,p,pt", [(0.3, 0.3, 0.0), (1.0, 0.5, 0.5), (1.8, 0.8, 1.0),
                                    (0.0, 0.0, 0.0), (2.0, 1.0, 1.0)])
def test_two_loss_path(x, p, pt):
    assert two_loss_p(x) == pytest.approx(p, abs=1e-15)
    assert two_loss_p_tilde(x) == pytest.approx(pt, abs=1e-15)


# --- decrease checks ------------------------------------------------------


def test_verify_decrease_constant_losses():
    eta = 0.6
    ev = sm.MixtureEvaluator.uniform(3, sm.single_eta_grid(eta))
    trace = []
    for _ in range(20):
        C = ev.threshold()
        f = math.exp(ev.log_value(np.zeros(3)))
        assert f == pytest.approx(C * math.exp(-eta ** 2 / 2), rel=1e-13)
        trace.append((f, C))
        ev.advance(np.zeros(3))
    assert verify_decrease(trace) is None
    assert verify_decrease(trace, "anytime") is None


def test_verify_decrease_empty_and_corrupted():
    assert verify_decrease([]) is None
    trace = [(0.9, 1.0), (0.8, 0.9), (0.85, 0.8), (0.7, 0.85)]
    v = verify_decrease(trace)
    assert v.step == 3
    assert verify_decrease([(0.9, 1.0), (0.9, 1.0 + 1e-6)], "anytime").step == 2


# --- Levin oracle ---------------------------------------------------------


def test_belief_grid():
    g = BeliefGrid(3, 1 / 4)
    pts = g.points()
    assert len(pts) == len(g) == 15
    np.testing.assert_allclose(pts.sum(1), 1, atol=1e-12)
    with pytest.raises(ValueError):
        BeliefGrid(3, 0.3)


def test_oracle_constant_relation():
    grid = BeliefGrid(3, 1 / 8)
    pi, g = levin_oracle(lambda p: np.full(3, 0.7), grid, 0.7)
    np.testing.assert_array_equal(pi, grid.points()[0])


def test_oracle_binary_example():
    q = lambda p: np.array([0.0 - p[1], 1.0 - p[1]])
    pi, g = levin_oracle(q, BeliefGrid(2, 1 / 64), 0.0)
    assert pi[1] >= 1 - 1e-12
    assert g.max() <= 0


def test_oracle_detects_broken_supermartingale():
    with pytest.raises(SupermartingaleViolation):
        levin_oracle(lambda p: np.array([1.0, 1.0]), BeliefGrid(2, 1 / 4), 0.5)


def test_oracle_grid_too_coarse():
    # zero crossing at pi(1) = 1/3, which a quarter grid misses
    q = lambda p: np.array([(w - p[1]) * (1 / 3 - p[1]) for w in (0, 1)])
    with pytest.raises(GridTooCoarse):
        levin_oracle(q, BeliefGrid(2, 1 / 4), 0.0)
    pi, _ = levin_oracle(q, BeliefGrid(2, 1 / 3), 0.0)
    assert pi[1] == pytest.approx(1 / 3)


@pytest.mark.parametrize("delta", [1 / 4, 1 / 8, 1 / 16, 1 / 32])
def test_oracle_hoeffding_relation_every_resolution(delta):
    rng = np.random.default_rng(int(1 / delta))
    for _ in range(10):
        rel = random_relation(rng, 3, n_terms=3, n_branches=2)
        pi, g = levin_oracle(rel, BeliefGrid(3, delta), rel.C, rel.kappa)
        assert g.max() <= rel.C + rel.kappa * delta
