"""Uzawa drivers for the three stationary mean field games on the periodic
grid: optimal stopping, impulse control and continuous control.

Each outer step solves the density complementarity problem at the frozen
multiplier, then updates the multiplier by a projected (stopping/impulse) or
Hamilton-Jacobi-Bellman (continuous) step.  Includes the damped Newton HJB
solver, the adjoint Fokker-Planck solve, residual diagnostics and the
a-posteriori error estimator for the stopping system.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .costs import RunningCost, eval_cost
from .errors import Infeasible, LineSearchStalled, MaxIterationsExceeded
from .grid import (
    EllipticOperator,
    Field,
    JumpOperator,
    apply_jump_values,
    grad_numerical_hamiltonian,
    numerical_hamiltonian,
    stencil_values,
    values_norm,
)
from .krylov import KrylovConfig, KrylovResult, LinearMap, bicgstab_solve
from .obstacle import ConstraintSet, solve_density_vi, project_multiplier

__all__ = [
    "MFGProblem",
    "UzawaConfig",
    "MFGSolution",
    "IterationTrace",
    "TraceRow",
    "MFGIterationState",
    "eval_cost",
    "newton_hjb",
    "solve_fp_adjoint",
    "transport_apply",
    "transport_adjoint_apply",
    "uzawa_step_stopping",
    "uzawa_step_impulse",
    "uzawa_step_continuous",
    "run",
    "error_bound",
    "ErrorBound",
]

KINDS = ("stopping", "impulse", "continuous")


@dataclass
class MFGProblem:
    """One discrete stationary MFG instance: operator, cost, entry rate and
    the multiplier constraint matching the kind."""

    kind: str
    op: EllipticOperator
    cost: RunningCost
    rho: Field
    constraint: ConstraintSet

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        expected = {"stopping": "zero", "impulse": "jump", "continuous": "none"}[self.kind]
        if self.constraint.kind != expected:
            raise ValueError(
                f"{self.kind} problem needs a {expected!r} constraint, "
                f"got {self.constraint.kind!r}"
            )
        if not (self.op.grid == self.cost.grid == self.rho.grid):
            raise ValueError("operator, cost and entry rate must share one grid")
        if self.rho.values.min() < 0:
            raise ValueError("entry rate rho must be >= 0")

    @property
    def jump(self) -> Optional[JumpOperator]:
        return self.constraint.jump

    @classmethod
    def stopping(cls, op, cost, rho):
        return cls("stopping", op, cost, rho, ConstraintSet.zero_obstacle())

    @classmethod
    def impulse(cls, op, cost, rho, jump: JumpOperator):
        return cls("impulse", op, cost, rho, ConstraintSet.jump_obstacle(jump))

    @classmethod
    def continuous(cls, op, cost, rho):
        return cls("continuous", op, cost, rho, ConstraintSet.unconstrained())


@dataclass
class UzawaConfig:
    """Outer step size and tolerances; inner tolerances default to a tenth of
    the outer one so inner error does not dominate the convergence
    diagnostics."""

    delta: float
    max_outer: int = 500
    tol_outer: float = 1e-8
    tol_inner: Optional[float] = None
    max_inner: int = 500000
    u0: Optional[Field] = None
    projection_sigma: Optional[float] = None
    projection_method: str = "dual"
    density_method: str = "fixed_point"
    newton_max_iter: int = 60
    krylov_rtol: float = 1e-11
    krylov_max_iter: int = 20000

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.max_outer < 0:
            raise ValueError("max_outer must be >= 0")
        if self.tol_outer <= 0:
            raise ValueError("tol_outer must be > 0")

    @property
    def inner_tol(self) -> float:
        return self.tol_outer / 10.0 if self.tol_inner is None else self.tol_inner


@dataclass(frozen=True)
class TraceRow:
    n: int
    dm: float
    comp_res: float
    feas_res: float
    fp_res: Optional[float]
    delta_n: float


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass(frozen=True)
class MFGSolution:
    u: Field
    m: Field
    trace: IterationTrace
    converged: bool


@dataclass
class MFGIterationState:
    """Mutable per-run state: current multiplier u, last density m, and the
    projection dual multiplier kept warm across outer iterations."""

    u: Field
    m: Optional[Field] = None
    iteration: int = 0
    proj_multiplier: Optional[np.ndarray] = None


# --- transport operator L_u v = A v + grad_g(D_h u) . D_h v ----------------


def _transport_coefficients(u_vals: np.ndarray, h: float):
    return grad_numerical_hamiltonian(*stencil_values(u_vals, h))


def _transport_apply_values(op, gamma, v):
    g1, g2, g3, g4 = gamma
    h = op.grid.h
    adv = (
        g1 * (np.roll(v, -1, 0) - v)
        + g2 * (v - np.roll(v, 1, 0))
        + g3 * (np.roll(v, -1, 1) - v)
        + g4 * (v - np.roll(v, 1, 1))
    )
    return op.apply_values(v) + adv / h


def _transport_adjoint_apply_values(op, gamma, w):
    g1, g2, g3, g4 = gamma
    h = op.grid.h
    adv = (
        np.roll(g1 * w, 1, 0)
        - g1 * w
        + g2 * w
        - np.roll(g2 * w, -1, 0)
        + np.roll(g3 * w, 1, 1)
        - g3 * w
        + g4 * w
        - np.roll(g4 * w, -1, 1)
    )
    return op.apply_values(w) + adv / h


def transport_apply(op: EllipticOperator, u: Field, v: Field) -> Field:
    """L_u v = A v + grad_g(D_h u) . D_h v."""
    gamma = _transport_coefficients(u.values, op.grid.h)
    return Field(v.grid, _transport_apply_values(op, gamma, v.values))


def transport_adjoint_apply(op: EllipticOperator, u: Field, w: Field) -> Field:
    """Adjoint of transport_apply in the h inner product."""
    gamma = _transport_coefficients(u.values, op.grid.h)
    return Field(w.grid, _transport_adjoint_apply_values(op, gamma, w.values))


def _hjb_residual_values(op, u_vals, rhs_vals):
    return (
        op.apply_values(u_vals)
        + numerical_hamiltonian(*stencil_values(u_vals, op.grid.h))
        - rhs_vals
    )


def newton_hjb(
    op: EllipticOperator,
    rhs: Field,
    u_init: Field,
    tol: float = 1e-10,
    max_iter: int = 60,
    krylov_rtol: float = 1e-12,
    krylov_max_iter: int = 20000,
    residual_history: Optional[list] = None,
) -> Field:
    """Solve A u + g(D_h u) = rhs by damped Newton.

    The Newton direction solves the matrix-free Jacobian system
    (A + grad_g . D_h) d = -residual with BiCGStab preconditioned by the
    elliptic inverse; the step is halved until the h-norm residual decreases.
    Pass a list as residual_history to record the h-norm residual at every
    iteration.
    """
    h = op.grid.h
    u = u_init.values.copy()
    res_vals = _hjb_residual_values(op, u, rhs.values)
    res = values_norm(res_vals, h)
    precond = lambda r: Field(op.grid, op.solve_values(r.values))  # noqa: E731
    for _ in range(max_iter):
        if residual_history is not None:
            residual_history.append(res)
        if res <= tol:
            return Field(op.grid, u)
        gamma = _transport_coefficients(u, h)
        jac = LinearMap(
            apply=lambda v: Field(op.grid, _transport_apply_values(op, gamma, v.values)),
            grid=op.grid,
            symmetric=False,
            precond=precond,
        )
        cfg = KrylovConfig(
            rtol=krylov_rtol, atol=1e-300, max_iter=krylov_max_iter, precondition=True
        )
        direction = bicgstab_solve(jac, Field(op.grid, -res_vals), cfg).x.values
        step = 1.0
        while step >= 2.0**-40:
            trial = u + step * direction
            trial_res_vals = _hjb_residual_values(op, trial, rhs.values)
            trial_res = values_norm(trial_res_vals, h)
            if trial_res < res:
                u, res_vals, res = trial, trial_res_vals, trial_res
                break
            step *= 0.5
        else:
            raise LineSearchStalled(
                f"newton_hjb: no residual decrease at residual {res:.3e}"
            )
    if residual_history is not None:
        residual_history.append(res)
    if res <= tol:
        return Field(op.grid, u)
    raise MaxIterationsExceeded(
        f"newton_hjb: residual {res:.3e} > tol {tol:.1e} after {max_iter} iterations",
        residual=res,
    )


def solve_fp_adjoint(
    op: EllipticOperator,
    u: Field,
    rho: Field,
    cfg: Optional[KrylovConfig] = None,
) -> KrylovResult:
    """Stationary density induced by the control in u: solve L_u^* m = rho.

    The transport operator is an M-matrix, so the solution inherits the
    discrete maximum principle (m >= 0 up to solver tolerance).
    """
    if rho.values.min() < 0:
        raise ValueError("rho must be >= 0")
    gamma = _transport_coefficients(u.values, op.grid.h)
    linmap = LinearMap(
        apply=lambda w: Field(op.grid, _transport_adjoint_apply_values(op, gamma, w.values)),
        grid=op.grid,
        symmetric=False,
        precond=lambda r: Field(op.grid, op.solve_values(r.values)),
    )
    if cfg is None:
        cfg = KrylovConfig(rtol=1e-11, atol=1e-300, max_iter=20000, precondition=True)
    return bicgstab_solve(linmap, rho, cfg)


# --- outer steps ------------------------------------------------------------


def _obstacle_step(problem, config, state):
    """Shared stopping/impulse step: density solve at q = A u, then the
    projected multiplier update g <- P_K(A u - delta*(m - A^{-1} rho))."""
    op = problem.op
    q = Field(op.grid, op.apply_values(state.u.values))
    dens = solve_density_vi(
        problem.cost,
        q,
        tol=config.inner_tol,
        max_iter=config.max_inner,
        method=config.density_method,
        m0=state.m,
    )
    l_inv_rho = op.solve_values(problem.rho.values)
    g_target = Field(op.grid, q.values - config.delta * (dens.m.values - l_inv_rho))
    proj = project_multiplier(
        op,
        g_target,
        problem.constraint,
        tol=config.inner_tol,
        max_iter=config.max_inner,
        sigma=config.projection_sigma,
        method=config.projection_method,
        warm_multiplier=state.proj_multiplier,
    )
    dm = np.inf if state.m is None else values_norm(dens.m.values - state.m.values, op.grid.h)
    row = TraceRow(
        n=state.iteration,
        dm=dm,
        comp_res=max(dens.residual_feasibility, dens.residual_complementarity),
        feas_res=proj.feasibility,
        fp_res=None,
        delta_n=config.delta,
    )
    new_state = MFGIterationState(
        u=proj.u,
        m=dens.m,
        iteration=state.iteration + 1,
        proj_multiplier=proj.multiplier,
    )
    return new_state, row


def uzawa_step_stopping(problem: MFGProblem, config: UzawaConfig, state: MFGIterationState):
    """One outer iteration of the optimal-stopping scheme (u <= 0 obstacle)."""
    if problem.kind != "stopping":
        raise ValueError("uzawa_step_stopping needs a stopping problem")
    return _obstacle_step(problem, config, state)


def uzawa_step_impulse(problem: MFGProblem, config: UzawaConfig, state: MFGIterationState):
    """One outer iteration of the impulse-control scheme (u <= Mu obstacle)."""
    if problem.kind != "impulse":
        raise ValueError("uzawa_step_impulse needs an impulse problem")
    return _obstacle_step(problem, config, state)


def uzawa_step_continuous(
    problem: MFGProblem,
    config: UzawaConfig,
    state: MFGIterationState,
    delta_n: Optional[float] = None,
):
    """One outer iteration of the continuous-control scheme.

    m_n solves the density problem at q = A u + g(D_h u); the multiplier
    update solves HJB(u_{n+1}) = HJB(u_n) - delta_n*(m_n - L_u^{*-1} rho).
    """
    if problem.kind != "continuous":
        raise ValueError("uzawa_step_continuous needs a continuous problem")
    if delta_n is None:
        delta_n = config.delta
    op = problem.op
    h = op.grid.h
    u_vals = state.u.values
    q_vals = op.apply_values(u_vals) + numerical_hamiltonian(*stencil_values(u_vals, h))
    dens = solve_density_vi(
        problem.cost,
        Field(op.grid, q_vals),
        tol=config.inner_tol,
        max_iter=config.max_inner,
        method=config.density_method,
        m0=state.m,
    )
    fp = solve_fp_adjoint(
        op,
        state.u,
        problem.rho,
        KrylovConfig(
            rtol=config.krylov_rtol,
            atol=1e-300,
            max_iter=config.krylov_max_iter,
            precondition=True,
        ),
    )
    rhs = Field(op.grid, q_vals - delta_n * (dens.m.values - fp.x.values))
    u_next = newton_hjb(
        op,
        rhs,
        u_init=state.u,
        tol=config.inner_tol,
        max_iter=config.newton_max_iter,
        krylov_rtol=config.krylov_rtol,
        krylov_max_iter=config.krylov_max_iter,
    )
    dm = np.inf if state.m is None else values_norm(dens.m.values - state.m.values, h)
    row = TraceRow(
        n=state.iteration,
        dm=dm,
        comp_res=max(dens.residual_feasibility, dens.residual_complementarity),
        feas_res=0.0,
        fp_res=fp.residual,
        delta_n=delta_n,
    )
    new_state = MFGIterationState(u=u_next, m=dens.m, iteration=state.iteration + 1)
    return new_state, row


def run(problem: MFGProblem, config: UzawaConfig) -> MFGSolution:
    """Iterate the scheme for the problem kind until ||m_n - m_{n-1}||_h
    drops below tol_outer or max_outer is hit; the converged flag reports
    which happened.  Inner-solver failures propagate with the iteration
    index attached."""
    trace = IterationTrace()
    u0 = config.u0 if config.u0 is not None else Field.zeros(problem.op.grid)
    if u0.grid != problem.op.grid:
        raise ValueError("u0 grid does not match the problem grid")
    if problem.kind in ("stopping", "impulse") and not config.delta < 2 * problem.cost.alpha:
        trace.warnings.append(
            f"delta={config.delta} is not < 2*alpha={2 * problem.cost.alpha}: "
            "convergence is not guaranteed"
        )
    state = MFGIterationState(u=u0)
    if config.max_outer == 0:
        q_vals = problem.op.apply_values(u0.values)
        if problem.kind == "continuous":
            q_vals = q_vals + numerical_hamiltonian(
                *stencil_values(u0.values, problem.op.grid.h)
            )
        dens = solve_density_vi(
            problem.cost,
            Field(problem.op.grid, q_vals),
            tol=config.inner_tol,
            max_iter=config.max_inner,
            method=config.density_method,
        )
        return MFGSolution(u=u0, m=dens.m, trace=trace, converged=False)

    step_fn = {
        "stopping": uzawa_step_stopping,
        "impulse": uzawa_step_impulse,
        "continuous": uzawa_step_continuous,
    }[problem.kind]
    converged = False
    for _ in range(config.max_outer):
        try:
            state, row = step_fn(problem, config, state)
        except MaxIterationsExceeded as exc:
            raise MaxIterationsExceeded(
                f"inner solver failed at outer iteration {state.iteration}: {exc}",
                residual=exc.residual,
                trace=trace,
            ) from exc
        trace.rows.append(row)
        if row.dm < config.tol_outer:
            converged = True
            break
    return MFGSolution(u=state.u, m=state.m, trace=trace, converged=converged)


# --- a-posteriori error estimator (stopping form) ---------------------------


class ErrorBound(NamedTuple):
    eps1: float
    eps2: float
    bound: float


def error_bound(problem: MFGProblem, v: Field, mu: Field, tol: float = 1e-9) -> ErrorBound:
    """Certified distance bound ||m_exact - mu||_h^2 <= (eps1 + eps2)/alpha
    for the stopping system, from the alpha-monotonicity of the cost.

    Requires v <= 0 and mu >= 0 plus the two pointwise feasibility
    conditions below; otherwise the defining supremum is unbounded and
    Infeasible is raised:
      * f(mu) - Av >= -tol   (density side; worst case mu' = 0 gives
        eps1 = <f(mu) - Av, mu>),
      * rho - A mu >= -tol   (multiplier side, the direction the exact
        solution satisfies; eps2 = <Av, mu> - <v, rho> >= 0).
    """
    if problem.kind != "stopping":
        raise ValueError("error_bound applies to the stopping form")
    op = problem.op
    if v.values.max() > tol:
        raise ValueError(f"v must be <= 0 (max entry {v.values.max():.3e})")
    if mu.values.min() < -tol:
        raise ValueError(f"mu must be >= 0 (min entry {mu.values.min():.3e})")
    h2 = op.grid.h**2
    a_v = op.apply_values(v.values)
    r1 = problem.cost.eval_values(mu.values) - a_v
    if r1.min() < -tol:
        raise Infeasible(
            f"f(mu) - Av has entries below -tol (min {r1.min():.3e}): "
            "the density-side supremum is unbounded"
        )
    eps1 = float(h2 * np.sum(r1 * mu.values))
    r2 = problem.rho.values - op.apply_values(mu.values)
    if r2.min() < -tol:
        raise Infeasible(
            f"rho - A*mu has entries below -tol (min {r2.min():.3e}): "
            "the multiplier-side supremum is unbounded"
        )
    eps2 = float(h2 * np.sum(a_v * mu.values) - h2 * np.sum(v.values * problem.rho.values))
    return ErrorBound(eps1, eps2, (eps1 + eps2) / problem.cost.alpha)
