import numpy as np
import pytest

from mfg_uzawa import (
    Box,
    GeneralVIProblem,
    MaxIterationsExceeded,
    NonContraction,
    check_step,
    inner_vi_solve,
    nonneg_orthant,
    operator_norm,
    uzawa_iterate,
    whole_space,
)
from mfg_uzawa.uzawa import vi_residual

import oracles


def random_monotone_instance(rng, n1, n3, alpha=1.0, potential=False):
    """alpha-monotone affine f (nonsymmetric unless potential=True), random
    affine coupling, orthant multiplier set."""
    sym = rng.standard_normal((n1, n1))
    sym = sym @ sym.T / n1 + alpha * np.eye(n1)
    if potential:
        b_mat = sym
    else:
        skew = rng.standard_normal((n1, n1))
        skew = (skew - skew.T) / 2.0
        b_mat = sym + skew
    c_vec = rng.standard_normal(n1)
    a_mat = rng.standard_normal((n3, n1)) / np.sqrt(n1)
    a_off = rng.standard_normal(n3) * 0.3
    problem = GeneralVIProblem(
        n1=n1,
        n3=n3,
        f=lambda x: b_mat @ x + c_vec,
        a_linear=a_mat,
        a_offset=a_off,
        k1=nonneg_orthant(),
        k2_image=nonneg_orthant(),
        alpha=alpha,
        lip_f=operator_norm(b_mat),
    )
    return problem, b_mat, c_vec


class TestProblemConstruction:
    def test_c_computed_by_power_iteration(self, rng):
        a_mat = rng.standard_normal((3, 5))
        p = GeneralVIProblem(
            n1=5, n3=3, f=lambda x: x, a_linear=a_mat, a_offset=np.zeros(3),
            k1=whole_space(), k2_image=whole_space(), alpha=1.0,
        )
        assert p.C == pytest.approx(np.linalg.norm(a_mat, 2), abs=1e-8)

    def test_wrong_c_rejected(self, rng):
        a_mat = rng.standard_normal((3, 5))
        with pytest.raises(ValueError):
            GeneralVIProblem(
                n1=5, n3=3, f=lambda x: x, a_linear=a_mat, a_offset=np.zeros(3),
                k1=whole_space(), k2_image=whole_space(), alpha=1.0,
                C=np.linalg.norm(a_mat, 2) + 0.1,
            )

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            GeneralVIProblem(
                n1=2, n3=1, f=lambda x: x, a_linear=np.ones((1, 2)),
                a_offset=np.zeros(1), k1=whole_space(), k2_image=whole_space(),
                alpha=0.0,
            )


class TestCheckStep:
    def _problem(self, alpha, c_norm):
        return GeneralVIProblem(
            n1=2, n3=1, f=lambda x: alpha * x, a_linear=np.array([[c_norm, 0.0]]),
            a_offset=np.zeros(1), k1=whole_space(), k2_image=whole_space(), alpha=alpha,
        )

    def test_boundary_excluded(self):
        p = self._problem(1.0, 1.0)
        assert check_step(p, 1.9)
        assert not check_step(p, 2.0)

    def test_quarter_bound(self):
        p = self._problem(1.0, 2.0)  # 2*alpha/C^2 = 0.5
        assert check_step(p, 0.49)
        assert not check_step(p, 0.5)


class TestInnerVISolve:
    def test_unconstrained_root(self, rng):
        c = rng.standard_normal(6)
        p = GeneralVIProblem(
            n1=6, n3=2, f=lambda x: x - c, a_linear=np.zeros((2, 6)),
            a_offset=np.zeros(2), k1=whole_space(), k2_image=whole_space(),
            alpha=1.0, lip_f=1.0,
        )
        x = inner_vi_solve(p, np.zeros(2), tol=1e-13)
        np.testing.assert_allclose(x, c, atol=1e-11)

    def test_orthant_projection_of_origin(self, rng):
        p = GeneralVIProblem(
            n1=4, n3=1, f=lambda x: x, a_linear=np.zeros((1, 4)),
            a_offset=np.zeros(1), k1=nonneg_orthant(), k2_image=whole_space(),
            alpha=1.0, lip_f=1.0,
        )
        x = inner_vi_solve(p, np.zeros(1), x0=rng.standard_normal(4) * 5, tol=1e-13)
        np.testing.assert_allclose(x, 0.0, atol=1e-11)

    def test_box_matches_active_set_enumeration(self, rng):
        n = 6
        for _ in range(5):
            q = rng.standard_normal((n, n))
            q = q @ q.T / n + np.eye(n)
            shift = rng.standard_normal(n)
            a_mat = rng.standard_normal((3, n)) / 2
            y = rng.random(3)
            p = GeneralVIProblem(
                n1=n, n3=3, f=lambda x, Q=q, s=shift: Q @ x + s,
                a_linear=a_mat, a_offset=np.zeros(3),
                k1=Box(0.0, 50.0), k2_image=nonneg_orthant(),
                alpha=1.0, lip_f=operator_norm(q),
            )
            x = inner_vi_solve(p, y, tol=1e-13)
            expected = oracles.box_vi_enumerate(q, shift + a_mat.T @ y, 0.0, 50.0, n)
            np.testing.assert_allclose(x, expected, atol=1e-9)
            # post-condition: sampled VI violation above -tol
            assert vi_residual(p, x, y, samples=100) >= -1e-9

    def test_non_contraction_detected(self):
        p = GeneralVIProblem(
            n1=2, n3=1, f=lambda x: x, a_linear=np.zeros((1, 2)),
            a_offset=np.zeros(1), k1=whole_space(), k2_image=whole_space(),
            alpha=1.0, lip_f=1.0,
        )
        with pytest.raises(NonContraction):
            inner_vi_solve(p, np.zeros(1), eps=2.5, x0=np.ones(2), tol=1e-15)


class TestUzawaIterate:
    def test_decoupled_constant_after_first(self, rng):
        # a == 0: x_n is the same inner solution every iteration
        c = rng.standard_normal(5)
        p = GeneralVIProblem(
            n1=5, n3=2, f=lambda x: 2 * x - c, a_linear=np.zeros((2, 5)),
            a_offset=np.zeros(2), k1=whole_space(), k2_image=nonneg_orthant(),
            alpha=2.0, lip_f=2.0,
        )
        x, state = uzawa_iterate(p, delta=0.5, y0_image=np.ones(2), outer_tol=1e-12, max_outer=50)
        np.testing.assert_allclose(x, c / 2, atol=1e-10)
        assert state.iteration == 2  # second iterate already matches the first

    def test_equality_constrained_qp(self):
        # min 1/2 |x|^2 s.t. x_1 = 1 -> x = e1, multiplier image -1
        n = 3
        p = GeneralVIProblem(
            n1=n, n3=1, f=lambda x: x, a_linear=np.array([[1.0, 0.0, 0.0]]),
            a_offset=np.array([-1.0]), k1=whole_space(), k2_image=whole_space(),
            alpha=1.0, lip_f=1.0,
        )
        x, state = uzawa_iterate(p, delta=1.0, y0_image=np.zeros(1), outer_tol=1e-13, max_outer=500)
        np.testing.assert_allclose(x, [1.0, 0.0, 0.0], atol=1e-10)
        assert state.y_image[0] == pytest.approx(-1.0, abs=1e-10)

    def test_matches_monolithic_newton_oracle(self, rng):
        p, b_mat, c_vec = random_monotone_instance(rng, n1=8, n3=4)
        delta = p.alpha / p.C**2
        x, state = uzawa_iterate(
            p, delta=delta, y0_image=np.zeros(4), outer_tol=1e-11, max_outer=5000
        )
        x_star, y_star = oracles.saddle_ssn(
            p.f, lambda x_: b_mat, p.a_linear, p.a_offset,
            lo1=0.0, hi1=np.inf, n1=8, n3=4,
        )
        assert np.linalg.norm(x - x_star) < 1e-6

    def test_descent_quantity_nonincreasing(self, rng):
        p, b_mat, _ = random_monotone_instance(rng, n1=8, n3=4)
        delta = p.alpha / p.C**2
        _, y_star = oracles.saddle_ssn(
            p.f, lambda x_: b_mat, p.a_linear, p.a_offset, lo1=0.0, hi1=np.inf, n1=8, n3=4
        )
        _, state = uzawa_iterate(p, delta, np.zeros(4), outer_tol=1e-11, max_outer=3000)
        trail = state.y_trail + [state.y_image]
        dists = [np.linalg.norm(y - y_star) ** 2 for y in trail]
        for a, b in zip(dists, dists[1:]):
            assert b <= a + 1e-10

    def test_beta_contraction_per_step(self, rng):
        p, b_mat, _ = random_monotone_instance(rng, n1=8, n3=4)
        delta = p.alpha / p.C**2
        beta = 2 * delta * p.alpha - delta**2 * p.C**2
        assert beta > 0
        x_star, y_star = oracles.saddle_ssn(
            p.f, lambda x_: b_mat, p.a_linear, p.a_offset, lo1=0.0, hi1=np.inf, n1=8, n3=4
        )
        _, state = uzawa_iterate(p, delta, np.zeros(4), outer_tol=1e-11, max_outer=3000)
        trail = state.y_trail + [state.y_image]
        # recompute the x_n sequence from the recorded multiplier images
        for y_n, y_next in list(zip(trail, trail[1:]))[:50]:
            x_n = inner_vi_solve(p, y_n, tol=1e-13)
            lhs = beta * np.linalg.norm(x_n - x_star) ** 2
            rhs = np.linalg.norm(y_n - y_star) ** 2 - np.linalg.norm(y_next - y_star) ** 2
            assert lhs <= rhs + 1e-9

    def test_multiplier_image_feasible_every_step(self, rng):
        p, _, _ = random_monotone_instance(rng, n1=6, n3=3)
        _, state = uzawa_iterate(
            p, p.alpha / p.C**2, y0_image=-np.ones(3), outer_tol=1e-10, max_outer=2000
        )
        for y in state.y_trail + [state.y_image]:
            assert np.all(y >= -1e-14)

    def test_classical_case_recovery(self, rng):
        # f = grad of quadratic: same trajectory as a textbook saddle-point
        # iteration with exact primal minimization
        n1, n3 = 6, 3
        q = rng.standard_normal((n1, n1))
        q = q @ q.T / n1 + np.eye(n1)
        c = rng.standard_normal(n1)
        a_mat = rng.standard_normal((n3, n1)) / 2
        a_off = rng.standard_normal(n3) * 0.2
        p = GeneralVIProblem(
            n1=n1, n3=n3, f=lambda x: q @ x - c, a_linear=a_mat, a_offset=a_off,
            k1=whole_space(), k2_image=nonneg_orthant(), alpha=1.0,
            lip_f=operator_norm(q),
        )
        delta = 0.8 * 2 * p.alpha / p.C**2
        _, state = uzawa_iterate(p, delta, np.zeros(n3), outer_tol=1e-12, max_outer=200)
        # hand-rolled reference: x_n = Q^{-1}(c - a^T y_n); y projected ascent
        y = np.zeros(n3)
        for k, y_rec in enumerate(state.y_trail):
            np.testing.assert_allclose(y, y_rec, atol=1e-8)
            x = np.linalg.solve(q, c - a_mat.T @ y)
            y = np.maximum(0.0, y + delta * (a_mat @ x + a_off))
            if k > 30:
                break

    def test_inadmissible_step_warns_and_proceeds(self, rng):
        p, _, _ = random_monotone_instance(rng, n1=5, n3=2)
        delta = 4 * p.alpha / p.C**2
        try:
            _, state = uzawa_iterate(p, delta, np.zeros(2), outer_tol=1e-9, max_outer=400)
        except MaxIterationsExceeded as err:
            state = err.trace
        assert not state.step_admissible
        assert state.warnings
