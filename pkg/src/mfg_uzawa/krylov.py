"""Matrix-free Krylov solvers on grid fields.

Conjugate gradient for symmetric positive definite maps and biconjugate
gradient stabilized for nonsymmetric ones (the adjoint transport operator).
Residuals and tolerances are measured in the h-weighted norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BreakdownDetected, MaxIterationsExceeded
from .grid import Field, TorusGrid, norm

__all__ = ["LinearMap", "KrylovConfig", "KrylovResult", "cg_solve", "bicgstab_solve"]


@dataclass
class LinearMap:
    """Opaque linear operator on fields.

    apply      : Field -> Field
    symmetric  : self-adjointness flag (in the h inner product)
    diagonal   : optional diagonal for the Jacobi preconditioner
    precond    : optional approximate inverse, used when a KrylovConfig asks
                 for preconditioning and no diagonal is given
    """

    apply: Callable[[Field], Field]
    grid: TorusGrid
    symmetric: bool = False
    diagonal: Optional[Field] = None
    precond: Optional[Callable[[Field], Field]] = None


@dataclass(frozen=True)
class KrylovConfig:
    rtol: float = 1e-10
    atol: float = 0.0
    max_iter: int = 1000
    precondition: bool = False

    def __post_init__(self):
        if self.rtol < 0 or self.atol < 0:
            raise ValueError("tolerances must be >= 0")
        if self.rtol == 0 and self.atol == 0:
            raise ValueError("rtol and atol cannot both be 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class KrylovResult:
    """Solution plus the solver's report: iterations used and the final
    independently recomputed residual ||A x - b||_h."""

    x: Field
    iterations: int
    residual: float


def _preconditioner(linmap: LinearMap, cfg: KrylovConfig):
    if not cfg.precondition:
        return None
    if linmap.diagonal is not None:
        dvals = linmap.diagonal.values
        if np.any(dvals == 0):
            raise ValueError("Jacobi preconditioner requires a nonzero diagonal")
        inv = 1.0 / dvals
        return lambda r: Field(linmap.grid, inv * r.values)
    if linmap.precond is not None:
        return linmap.precond
    return None


def _final_residual(linmap, x, b):
    return norm(linmap.apply(x) - b)


def cg_solve(linmap: LinearMap, b: Field, cfg: KrylovConfig) -> KrylovResult:
    """Conjugate gradient for a symmetric positive definite map.

    Returns x with ||A x - b||_h <= max(rtol * ||b||_h, atol).  Raises
    MaxIterationsExceeded (carrying the last residual) on the iteration cap.
    """
    if b.grid != linmap.grid:
        raise ValueError("right-hand side grid does not match the operator grid")
    apply_m = _preconditioner(linmap, cfg)

    x = Field.zeros(b.grid)
    r = b
    threshold = max(cfg.rtol * norm(b), cfg.atol)
    res = norm(r)
    if res <= threshold:
        return KrylovResult(x, 0, _final_residual(linmap, x, b))

    z = apply_m(r) if apply_m else r
    p = z
    rz = _dot(r, z)
    for it in range(1, cfg.max_iter + 1):
        ap = linmap.apply(p)
        pap = _dot(p, ap)
        if pap <= 0:
            raise ValueError("cg_solve: operator is not positive definite on the grid")
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        res = norm(r)
        if res <= threshold:
            return KrylovResult(x, it, _final_residual(linmap, x, b))
        z = apply_m(r) if apply_m else r
        rz_next = _dot(r, z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise MaxIterationsExceeded(
        f"cg_solve: no convergence in {cfg.max_iter} iterations (residual {res:.3e})",
        residual=res,
    )


def _dot(x: Field, y: Field) -> float:
    return float(x.grid.h**2 * np.sum(x.values * y.values))


def bicgstab_solve(linmap: LinearMap, b: Field, cfg: KrylovConfig) -> KrylovResult:
    """Biconjugate gradient stabilized for a general invertible map.

    Same residual contract as cg_solve.  On a rho ~ 0 breakdown the solver
    restarts once from the current iterate with a randomized shadow residual,
    then raises BreakdownDetected.
    """
    if b.grid != linmap.grid:
        raise ValueError("right-hand side grid does not match the operator grid")
    apply_m = _preconditioner(linmap, cfg)
    threshold = max(cfg.rtol * norm(b), cfg.atol)

    x = Field.zeros(b.grid)
    r = b
    res = norm(r)
    if res <= threshold:
        return KrylovResult(x, 0, _final_residual(linmap, x, b))

    rng = np.random.default_rng(1729)  # deterministic restart shadow vectors
    restarts = 0
    r_hat = r
    rho = alpha = omega = 1.0
    v = p = Field.zeros(b.grid)
    it = 0
    scale = max(res, 1.0)
    while it < cfg.max_iter:
        it += 1
        rho_next = _dot(r_hat, r)
        if abs(rho_next) < 1e-30 * scale * scale or (it > 1 and abs(omega) < 1e-300):
            if restarts >= 1:
                raise BreakdownDetected(
                    f"bicgstab_solve: rho breakdown persisted after restart (iter {it})"
                )
            restarts += 1
            r = b - linmap.apply(x)
            r_hat = Field(b.grid, rng.standard_normal((b.grid.d, b.grid.d)))
            rho = alpha = omega = 1.0
            v = p = Field.zeros(b.grid)
            continue
        if it == 1:
            p = r
        else:
            beta = (rho_next / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
        rho = rho_next
        p_hat = apply_m(p) if apply_m else p
        v = linmap.apply(p_hat)
        denom = _dot(r_hat, v)
        if denom == 0.0:
            if restarts >= 1:
                raise BreakdownDetected("bicgstab_solve: (r_hat, v) breakdown after restart")
            restarts += 1
            r = b - linmap.apply(x)
            r_hat = Field(b.grid, rng.standard_normal((b.grid.d, b.grid.d)))
            rho = alpha = omega = 1.0
            v = p = Field.zeros(b.grid)
            continue
        alpha = rho / denom
        s = r - alpha * v
        if norm(s) <= threshold:
            x = x + alpha * p_hat
            return KrylovResult(x, it, _final_residual(linmap, x, b))
        s_hat = apply_m(s) if apply_m else s
        t = linmap.apply(s_hat)
        tt = _dot(t, t)
        if tt == 0.0:
            x = x + alpha * p_hat
            res = _final_residual(linmap, x, b)
            if res <= threshold:
                return KrylovResult(x, it, res)
            raise BreakdownDetected("bicgstab_solve: t vanished away from the solution")
        omega = _dot(t, s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        res = norm(r)
        if res <= threshold:
            true_res = _final_residual(linmap, x, b)
            if true_res <= max(threshold, 10 * res):
                return KrylovResult(x, it, true_res)
    raise MaxIterationsExceeded(
        f"bicgstab_solve: no convergence in {cfg.max_iter} iterations (residual {res:.3e})",
        residual=res,
    )
