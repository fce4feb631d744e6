import numpy as np
import pytest

from mfg_uzawa import (
    ConstraintSet,
    EllipticOperator,
    Field,
    JumpOperator,
    RunningCost,
    TorusGrid,
    apply_elliptic,
    apply_jump,
    inner_product,
    norm,
    project_multiplier,
    solve_density_vi,
    solve_elliptic,
)
from conftest import random_field

import oracles


class TestConstraintSet:
    def test_kinds(self):
        assert ConstraintSet.zero_obstacle().kind == "zero"
        assert ConstraintSet.unconstrained().kind == "none"
        jump = JumpOperator(k0=1.0, offsets=((1, 0),))
        assert ConstraintSet.jump_obstacle(jump).jump is jump

    def test_validation(self):
        with pytest.raises(ValueError):
            ConstraintSet("jump")
        with pytest.raises(ValueError):
            ConstraintSet("zero", JumpOperator(k0=1.0, offsets=((1, 0),)))
        with pytest.raises(ValueError):
            ConstraintSet("banana")


class TestDensityVI:
    def test_no_smoothing_closed_form(self, grid4, rng):
        cost = RunningCost(f0=Field.zeros(grid4), identity_coeff=1.0, smoothing_coeff=0.0)
        q = random_field(grid4, rng)
        sol = solve_density_vi(cost, q)
        np.testing.assert_allclose(sol.m.values, np.maximum(q.values, 0.0))

    def test_shifted_closed_form(self, grid4, rng):
        f0 = random_field(grid4, rng)
        cost = RunningCost(f0=f0, identity_coeff=1.0, smoothing_coeff=0.0)
        q = random_field(grid4, rng)
        sol = solve_density_vi(cost, q)
        np.testing.assert_allclose(sol.m.values, np.maximum(q.values - f0.values, 0.0))

    def test_full_cost_matches_dual_oracles(self, grid4, rng):
        # two independent oracles (long-run tiny-step projected gradient and a
        # dense semismooth Newton) must agree with the solver to 1e-9
        cost = RunningCost(f0=random_field(grid4, rng))
        q = random_field(grid4, rng, scale=2.0)
        sol = solve_density_vi(cost, q, tol=1e-12)

        b_cost = oracles.dense_cost_linear(4)
        f0_flat = cost.f0.values.reshape(-1)
        q_flat = q.values.reshape(-1)
        m_pg = oracles.density_longrun_pg(b_cost, f0_flat, q_flat, 4)

        def residual(m):
            return np.minimum(m, f0_flat + b_cost @ m - q_flat)

        def jacobian(m):
            s = f0_flat + b_cost @ m - q_flat
            pick = m <= s
            return np.where(pick[:, None], np.eye(16), b_cost)

        m_ssn = oracles.semismooth_newton(residual, jacobian, np.zeros(16))
        assert np.abs(m_pg - m_ssn).max() < 1e-9
        assert np.abs(sol.m.values.reshape(-1) - m_ssn).max() < 1e-9

    def test_residual_contract(self, grid8, rng):
        cost = RunningCost(f0=random_field(grid8, rng))
        q = random_field(grid8, rng, scale=3.0)
        sol = solve_density_vi(cost, q, tol=1e-11)
        assert np.all(sol.m.values >= 0.0)
        assert sol.residual_feasibility <= 1e-11
        assert sol.residual_complementarity <= 1e-11
        # recompute independently
        r = cost.eval_values(sol.m.values) - q.values
        assert np.all(r >= -1e-10)
        assert abs(inner_product(Field(grid8, r), sol.m)) <= 1e-10

    def test_newton_path_agrees(self, grid8, rng):
        cost = RunningCost(f0=random_field(grid8, rng))
        q = random_field(grid8, rng, scale=2.0)
        a = solve_density_vi(cost, q, tol=1e-12)
        b = solve_density_vi(cost, q, tol=1e-12, method="newton")
        assert norm(a.m - b.m) < 1e-10

    def test_monotone_in_q_closed_form(self, grid4, rng):
        cost = RunningCost(f0=random_field(grid4, rng), smoothing_coeff=0.0)
        q = random_field(grid4, rng)
        bump = Field(grid4, rng.random((4, 4)))
        m1 = solve_density_vi(cost, q).m
        m2 = solve_density_vi(cost, q + bump).m
        assert np.all(m1.values <= m2.values + 1e-14)

    def test_alpha_zero_rejected(self, grid4):
        cost = RunningCost(f0=Field.zeros(grid4), identity_coeff=0.0, smoothing_coeff=1.0)
        with pytest.raises(ValueError):
            solve_density_vi(cost, Field.zeros(grid4))


class TestProjectMultiplier:
    def test_already_feasible_is_identity(self, grid8, rng):
        op = EllipticOperator(nu=0.02, lam=1.0, grid=grid8)
        v = Field(grid8, -0.5 - rng.random((8, 8)))
        g_t = apply_elliptic(op, v)
        for method in ("dual", "active_set"):
            res = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-12,
                                     method=method)
            assert norm(res.g - g_t) < 1e-11
            assert norm(res.u - v) < 1e-11

    def test_feasible_av_returned_exactly(self, grid4, op4, rng):
        v = Field(grid4, -rng.random((4, 4)))
        g_t = apply_elliptic(op4, v)
        res = project_multiplier(op4, g_t, ConstraintSet.zero_obstacle(), tol=1e-12)
        assert norm(res.u - v) < 1e-12
        assert norm(res.g - g_t) < 1e-12

    def test_unconstrained_identity(self, grid4, op4, rng):
        g_t = random_field(grid4, rng)
        res = project_multiplier(op4, g_t, ConstraintSet.unconstrained())
        assert res.g is g_t
        assert norm(res.u - solve_elliptic(op4, g_t)) < 1e-12

    def test_three_violated_nodes_vs_enumeration(self, grid4, rng):
        op = EllipticOperator(nu=0.3, lam=1.0, grid=grid4)
        # v negative everywhere except three nodes
        vals = -1.0 - rng.random((4, 4))
        hot = [(0, 1), (2, 2), (3, 0)]
        for i, j in hot:
            vals[i, j] = 0.5 + rng.random()
        g_t = apply_elliptic(op, Field(grid4, vals))
        u_star, g_star = oracles.projection_enumeration(
            4, 0.3, 1.0, g_t.values.reshape(-1), [oracles.idx(i, j, 4) for i, j in hot]
        )
        for method in ("dual", "active_set"):
            res = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-12,
                                     method=method)
            assert np.abs(res.g.values.reshape(-1) - g_star).max() < 1e-8
            assert np.abs(res.u.values.reshape(-1) - u_star).max() < 1e-8

    def test_methods_agree_zero_obstacle(self, grid8, rng):
        op = EllipticOperator(nu=0.02, lam=1.0, grid=grid8)
        g_t = random_field(grid8, rng, scale=2.0)
        a = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-12)
        b = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-12,
                               method="active_set")
        assert norm(a.g - b.g) < 1e-8

    def test_methods_agree_jump(self, grid8, rng):
        op = EllipticOperator(nu=0.02, lam=1.0, grid=grid8)
        jump = JumpOperator(k0=0.3, offsets=((1, 0), (0, 2)))
        g_t = random_field(grid8, rng, scale=2.0)
        k = ConstraintSet.jump_obstacle(jump)
        a = project_multiplier(op, g_t, k, tol=1e-12)
        b = project_multiplier(op, g_t, k, tol=1e-12, method="active_set")
        assert norm(a.g - b.g) < 1e-8
        mv = apply_jump(jump, a.u)
        assert np.all(a.u.values <= mv.values + 1e-10)

    def test_idempotent(self, grid8, rng):
        op = EllipticOperator(nu=0.05, lam=1.0, grid=grid8)
        g_t = random_field(grid8, rng, scale=2.0)
        tol = 1e-11
        first = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=tol)
        second = project_multiplier(op, first.g, ConstraintSet.zero_obstacle(), tol=tol)
        assert norm(second.g - first.g) <= 10 * tol

    def test_contraction_on_random_pairs(self, grid4, rng):
        op = EllipticOperator(nu=0.4, lam=1.0, grid=grid4)
        tol = 1e-11
        for _ in range(10):
            g1 = random_field(grid4, rng, scale=2.0)
            g2 = random_field(grid4, rng, scale=2.0)
            p1 = project_multiplier(op, g1, ConstraintSet.zero_obstacle(), tol=tol)
            p2 = project_multiplier(op, g2, ConstraintSet.zero_obstacle(), tol=tol)
            assert norm(p1.g - p2.g) <= norm(g1 - g2) + 10 * tol

    def test_obtuse_angle_against_sampled_feasible_points(self, grid4, rng):
        # <g_target - g_next, g - g_next> <= tol for feasible g
        op = EllipticOperator(nu=0.3, lam=1.0, grid=grid4)
        g_t = random_field(grid4, rng, scale=2.0)
        res = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-12)
        for _ in range(100):
            v = Field(grid4, -rng.random((4, 4)) * 2)
            g_feas = apply_elliptic(op, v)
            assert inner_product(g_t - res.g, g_feas - res.g) <= 1e-9

    def test_warm_start_reduces_iterations(self, grid8, rng):
        op = EllipticOperator(nu=0.02, lam=1.0, grid=grid8)
        g_t = random_field(grid8, rng, scale=2.0)
        cold = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-11)
        warm = project_multiplier(op, g_t, ConstraintSet.zero_obstacle(), tol=1e-11,
                                  warm_multiplier=cold.multiplier)
        assert warm.iterations < cold.iterations
        assert norm(warm.g - cold.g) < 1e-9

    def test_jump_single_offset_k0_feasibility(self, grid8, rng):
        op = EllipticOperator(nu=0.02, lam=1.0, grid=grid8)
        jump = JumpOperator(k0=0.5, offsets=((1, 0),))
        g_t = random_field(grid8, rng, scale=3.0)
        res = project_multiplier(op, g_t, ConstraintSet.jump_obstacle(jump), tol=1e-11)
        mv = apply_jump(jump, res.u)
        assert np.all(res.u.values <= mv.values + 1e-9)
