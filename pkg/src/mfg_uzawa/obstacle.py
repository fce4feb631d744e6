"""The two constrained subproblems of every MFG Uzawa step.

Density step: the monotone complementarity problem
    m >= 0,  f(m) - q >= 0,  <f(m) - q, m> = 0,
solved by a projected fixed point (with a semi-smooth Newton fast path).

Multiplier step: the h-norm projection of a target g onto
    {g : A^{-1} g in K},
a bi-laplacian obstacle problem, solved by dual ascent on the pointwise
constraints (with a primal-dual active-set fast path).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .costs import RunningCost
from .errors import MaxIterationsExceeded, NonMonotoneCost
from .grid import (
    EllipticOperator,
    Field,
    JumpOperator,
    _check_same_grid,
    values_norm,
)

__all__ = [
    "ConstraintSet",
    "ComplementaritySolution",
    "ProjectionResult",
    "solve_density_vi",
    "project_multiplier",
]


@dataclass(frozen=True)
class ConstraintSet:
    """Admissible multiplier set: u <= 0 ("zero"), u <= Mu ("jump"), or none."""

    kind: str
    jump: Optional[JumpOperator] = None

    def __post_init__(self):
        if self.kind not in ("zero", "jump", "none"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "jump" and self.jump is None:
            raise ValueError("jump constraint needs a JumpOperator")
        if self.kind != "jump" and self.jump is not None:
            raise ValueError(f"constraint kind {self.kind!r} does not take a JumpOperator")

    @classmethod
    def zero_obstacle(cls) -> "ConstraintSet":
        return cls("zero")

    @classmethod
    def jump_obstacle(cls, jump: JumpOperator) -> "ConstraintSet":
        return cls("jump", jump)

    @classmethod
    def unconstrained(cls) -> "ConstraintSet":
        return cls("none")


@dataclass(frozen=True)
class ComplementaritySolution:
    """Density m >= 0 with its complementarity-system residuals."""

    m: Field
    residual_feasibility: float  # ||min(f(m) - q, 0)||_h
    residual_complementarity: float  # |<f(m) - q, m>_h|
    iterations: int


def _density_residuals(cost, q_vals, m_vals, h):
    r = cost.eval_values(m_vals) - q_vals
    feas = values_norm(np.minimum(r, 0.0), h)
    comp = abs(float(h * h * np.sum(r * m_vals)))
    return r, feas, comp


def solve_density_vi(
    cost: RunningCost,
    q: Field,
    tol: float = 1e-10,
    max_iter: int = 100000,
    method: str = "fixed_point",
    m0: Optional[Field] = None,
) -> ComplementaritySolution:
    """Solve m >= 0, f(m) - q >= 0, <f(m) - q, m> = 0.

    The projected fixed point m <- max(0, m - tau*(f(m) - q)) uses the
    spectral step tau = 2/(lmin+lmax) of the affine cost map, a strict
    contraction.  method="newton" runs a semi-smooth Newton on
    min(m, f(m) - q) = 0 with reduced conjugate-gradient solves; both paths
    must agree and are cross-validated in the tests.
    """
    _check_same_grid(cost.f0, q)
    if cost.alpha <= 0:
        raise ValueError("density step needs identity_coeff > 0 (alpha-monotone cost)")
    h = q.grid.h
    q_vals = q.values

    if cost.smoothing_coeff == 0.0:
        # closed form: complementarity decouples componentwise
        m_vals = np.maximum(0.0, (q_vals - cost.f0.values) / cost.identity_coeff)
        _, feas, comp = _density_residuals(cost, q_vals, m_vals, h)
        return ComplementaritySolution(Field(q.grid, m_vals), feas, comp, 0)

    if method == "newton":
        return _density_newton(cost, q, tol, max_iter)
    if method != "fixed_point":
        raise ValueError(f"unknown density method {method!r}")

    lo, hi = cost.linear_eig_range()
    tau = 2.0 / (lo + hi)
    m = (
        np.maximum(0.0, (q_vals - cost.f0.values) / cost.identity_coeff)
        if m0 is None
        else np.maximum(0.0, m0.values)
    )
    prev_step = np.inf
    for it in range(1, max_iter + 1):
        r = cost.eval_values(m) - q_vals
        m_next = np.maximum(0.0, m - tau * r)
        step = values_norm(m_next - m, h)
        if step > 10.0 * prev_step and prev_step > 0:
            raise NonMonotoneCost(
                f"density iteration residual jumped {step / prev_step:.1f}x at iteration {it}"
            )
        prev_step = step
        m = m_next
        if step <= 0.25 * tol:
            _, feas, comp = _density_residuals(cost, q_vals, m, h)
            if feas <= tol and comp <= tol:
                return ComplementaritySolution(Field(q.grid, m), feas, comp, it)
    _, feas, comp = _density_residuals(cost, q_vals, m, h)
    raise MaxIterationsExceeded(
        f"solve_density_vi: residuals ({feas:.3e}, {comp:.3e}) > {tol:.1e} "
        f"after {max_iter} iterations",
        residual=max(feas, comp),
    )


def _reduced_cg(apply_full, rhs, inactive, h, rtol, max_iter, precond=None):
    """CG for the principal submatrix of an SPD map on the inactive index set.

    apply_full acts on full (d, d) arrays; active entries are pinned to 0.
    """
    x = np.zeros_like(rhs)
    mask = inactive
    b = np.where(mask, rhs, 0.0)
    r = b.copy()
    nb = values_norm(b, h)
    if nb == 0:
        return x
    z = np.where(mask, precond(r), 0.0) if precond else r
    p = z.copy()
    rz = float(np.sum(r * z))
    for _ in range(max_iter):
        ap = np.where(mask, apply_full(p), 0.0)
        pap = float(np.sum(p * ap))
        if pap <= 0:
            break
        a = rz / pap
        x += a * p
        r -= a * ap
        if values_norm(r, h) <= rtol * nb:
            return x
        z = np.where(mask, precond(r), 0.0) if precond else r
        rz_next = float(np.sum(r * z))
        p = z + (rz_next / rz) * p
        rz = rz_next
    return x


def _density_newton(cost, q, tol, max_iter):
    """Semi-smooth Newton on min(m, f(m) - q) = 0 with active-set pinning."""
    h = q.grid.h
    q_vals = q.values
    ci, cs = cost.identity_coeff, cost.smoothing_coeff

    def b_apply(x):
        return ci * x + cs * cost.smoothing_op.solve_values(x)

    # (ci*I + cs*S)^{-1} is diagonal in Fourier space: hat = sym/(ci*sym + cs)
    smoothing = cost.smoothing_op
    d = q.grid.d
    sym = smoothing._symbol_half

    def b_inverse(r):
        return np.fft.irfft2(np.fft.rfft2(r) * sym / (ci * sym + cs), s=(d, d))

    m = np.maximum(0.0, (q_vals - cost.f0.values) / ci)
    for it in range(1, 80):
        r = cost.eval_values(m) - q_vals
        active = m <= r  # min picks m: pin these to zero
        inactive = ~active
        rhs = np.where(inactive, q_vals - cost.f0.values, 0.0)

        def reduced_apply(x):
            return b_apply(np.where(inactive, x, 0.0))

        m = np.maximum(
            0.0,
            _reduced_cg(
                reduced_apply, rhs, inactive, h, 1e-13, 4 * q.grid.d**2, precond=b_inverse
            ),
        )
        _, feas, comp = _density_residuals(cost, q_vals, m, h)
        if feas <= tol and comp <= tol:
            return ComplementaritySolution(Field(q.grid, m), feas, comp, it)
    raise MaxIterationsExceeded(
        f"density Newton: residuals ({feas:.3e}, {comp:.3e}) > {tol:.1e}",
        residual=max(feas, comp),
    )


@dataclass(frozen=True)
class ProjectionResult:
    """Projected point g, its pre-image u = A^{-1} g, the constraint
    multiplier (one field per pointwise constraint), and the KKT residuals."""

    u: Field
    g: Field
    multiplier: np.ndarray
    iterations: int
    feasibility: float
    complementarity: float


def _constraint_data(constraint: ConstraintSet):
    """(offsets, bound): constraints are u - shift_off(u) <= bound per offset,
    with the zero obstacle encoded as the trivial shift and bound 0."""
    if constraint.kind == "zero":
        return [None], 0.0
    jump = constraint.jump
    return list(jump.offsets), jump.k0


def _apply_constraint(u, offset):
    if offset is None:
        return u
    return u - np.roll(u, (-offset[0], -offset[1]), axis=(0, 1))


def _apply_constraint_adjoint(w, offset):
    if offset is None:
        return w
    return w - np.roll(w, (offset[0], offset[1]), axis=(0, 1))


def project_multiplier(
    op: EllipticOperator,
    g_target: Field,
    constraint: ConstraintSet,
    tol: float = 1e-10,
    max_iter: int = 500000,
    sigma: Optional[float] = None,
    method: str = "dual",
    warm_multiplier: Optional[np.ndarray] = None,
) -> ProjectionResult:
    """Project g_target in the h-norm onto {g : A^{-1} g in K}.

    Dual ascent on the pointwise constraints: with multipliers p >= 0 the
    stationary primal point is g = g_target - A^{-1} C^T p, and p is updated
    by p <- max(0, p + sigma * (C u - bound)), u = A^{-1} g.  The default
    step sigma = lam^2/2 is safe for the constraint map composed with A^{-1}.
    method="active_set" runs a primal-dual active-set solve instead.

    Stops when the constraint violation and the complementarity gap are both
    <= tol; raises MaxIterationsExceeded carrying the achieved residuals.
    """
    _check_same_grid(op, g_target)
    if constraint.kind == "none":
        u = Field(g_target.grid, op.solve_values(g_target.values))
        return ProjectionResult(u, g_target, np.zeros((0,)), 0, 0.0, 0.0)
    if method == "active_set":
        return _project_active_set(op, g_target, constraint, tol, max_iter, warm_multiplier)
    if method != "dual":
        raise ValueError(f"unknown projection method {method!r}")

    offsets, bound = _constraint_data(constraint)
    n_con = len(offsets)
    d = op.grid.d
    h = op.grid.h
    if sigma is None:
        sigma = op.lam**2 / 2.0
    u_free = op.solve_values(g_target.values)
    if warm_multiplier is not None and warm_multiplier.shape == (n_con, d, d):
        p = np.maximum(0.0, warm_multiplier.copy())
    else:
        p = np.zeros((n_con, d, d))

    viol = np.empty_like(p)
    for it in range(1, max_iter + 1):
        w = np.zeros((d, d))
        for k, off in enumerate(offsets):
            w += _apply_constraint_adjoint(p[k], off)
        u = u_free - op.solve_squared_values(w)
        for k, off in enumerate(offsets):
            viol[k] = _apply_constraint(u, off) - bound
        feas = values_norm(np.maximum(viol, 0.0), h)
        comp = abs(float(h * h * np.sum(p * viol)))
        if feas <= tol and comp <= tol:
            g = Field(op.grid, g_target.values - op.solve_values(w))
            return ProjectionResult(Field(op.grid, u), g, p, it, feas, comp)
        p = np.maximum(0.0, p + sigma * viol)
    raise MaxIterationsExceeded(
        f"project_multiplier: KKT residuals (feas {feas:.3e}, comp {comp:.3e}) > {tol:.1e} "
        f"after {max_iter} iterations",
        residual=max(feas, comp),
    )


def _project_active_set(op, g_target, constraint, tol, max_iter, warm_multiplier=None):
    """Primal-dual active-set solve of the projection KKT system.

    On the active constraints C u = bound; the multiplier block solves
    [C A^{-2} C^T]_AA pi = (C u_free - bound)_A by reduced CG.
    """
    offsets, bound = _constraint_data(constraint)
    n_con = len(offsets)
    d = op.grid.d
    h = op.grid.h
    u_free = op.solve_values(g_target.values)

    def h_apply(pi):
        w = np.zeros((d, d))
        for k, off in enumerate(offsets):
            w += _apply_constraint_adjoint(pi[k], off)
        a2w = op.solve_squared_values(w)
        out = np.empty_like(pi)
        for k, off in enumerate(offsets):
            out[k] = _apply_constraint(a2w, off)
        return out

    base = np.empty((n_con, d, d))
    for k, off in enumerate(offsets):
        base[k] = _apply_constraint(u_free, off) - bound

    # restricted full-domain inverse of C A^{-2} C^T as the CG preconditioner;
    # for the zero obstacle (C = I) that inverse is A^2
    precond = None
    if constraint.kind == "zero":
        precond = lambda r: op.apply_squared_values(r[0])[None, :, :]  # noqa: E731

    pi = np.zeros((n_con, d, d))
    if warm_multiplier is not None and warm_multiplier.shape == (n_con, d, d):
        active = (warm_multiplier > 0) | (base > 0)
    else:
        active = base > 0
    for it in range(1, 80):
        if active.any():
            pi = _reduced_cg(
                h_apply, np.where(active, base, 0.0), active, h, 1e-13, 8 * d * d, precond
            )
        else:
            pi = np.zeros((n_con, d, d))
        w = np.zeros((d, d))
        for k, off in enumerate(offsets):
            w += _apply_constraint_adjoint(pi[k], off)
        u = u_free - op.solve_squared_values(w)
        viol = np.empty_like(pi)
        for k, off in enumerate(offsets):
            viol[k] = _apply_constraint(u, off) - bound
        feas = values_norm(np.maximum(viol, 0.0), h)
        comp = abs(float(h * h * np.sum(pi * viol)))
        new_active = (pi + viol) > 0
        if (
            np.array_equal(new_active, active)
            and feas <= tol
            and comp <= tol
            and float(pi.min(initial=0.0)) >= -tol
        ):
            g = Field(op.grid, g_target.values - op.solve_values(w))
            return ProjectionResult(Field(op.grid, u), g, np.maximum(pi, 0.0), it, feas, comp)
        active = new_active
    raise MaxIterationsExceeded(
        f"projection active-set: KKT residuals (feas {feas:.3e}, comp {comp:.3e}) > {tol:.1e}",
        residual=max(feas, comp),
    )
