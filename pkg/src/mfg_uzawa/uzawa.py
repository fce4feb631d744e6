"""Uzawa iterations for monotone variational-inequality saddle systems in
finite dimensions.

The primal step is defined by a variational inequality for an alpha-monotone
map f (no potential needed); the multiplier image is updated by a projected
gradient step.  The classical saddle-point algorithm is the special case
where f is the gradient of a convex function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import MaxIterationsExceeded, NonContraction

__all__ = [
    "Box",
    "whole_space",
    "nonneg_orthant",
    "GeneralVIProblem",
    "UzawaGeneralState",
    "check_step",
    "inner_vi_solve",
    "uzawa_iterate",
    "operator_norm",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with clip projection; use +-inf for unbounded sides."""

    lo: object
    hi: object

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


def whole_space() -> Box:
    return Box(-np.inf, np.inf)


def nonneg_orthant() -> Box:
    return Box(0.0, np.inf)


def operator_norm(mat: np.ndarray, tol: float = 1e-13, max_iter: int = 20000) -> float:
    """Spectral norm by power iteration on mat^T mat."""
    n = mat.shape[1]
    rng = np.random.default_rng(7)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iter):
        w = mat.T @ (mat @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v_next = w / nw
        value_next = float(v_next @ (mat.T @ (mat @ v_next)))
        if abs(value_next - value) <= tol * max(1.0, value_next):
            return float(np.sqrt(value_next))
        v, value = v_next, value_next
    return float(np.sqrt(value))


@dataclass
class GeneralVIProblem:
    """Monotone saddle system data (f, a, K1, K2-image, alpha, C).

    f         : alpha-monotone map on R^n1
    a_linear  : (n3, n1) linear part of the affine coupling a
    a_offset  : (n3,) offset of a
    k1        : primal constraint set with a .project routine
    k2_image  : multiplier-image set (the image b(K2)) with a .project routine
    alpha     : monotonicity constant of f
    C         : Lipschitz constant of a; None computes the operator norm of
                a_linear, a given value is cross-checked against it
    lip_f     : optional known Lipschitz bound for f (else estimated by
                sampling when the inner solve needs it)
    """

    n1: int
    n3: int
    f: Callable[[np.ndarray], np.ndarray]
    a_linear: np.ndarray
    a_offset: np.ndarray
    k1: Box
    k2_image: Box
    alpha: float
    C: Optional[float] = None
    lip_f: Optional[float] = None
    n2: Optional[int] = None  # dimension of the pre-image multiplier space

    def __post_init__(self):
        self.a_linear = np.asarray(self.a_linear, dtype=float)
        self.a_offset = np.asarray(self.a_offset, dtype=float)
        if self.a_linear.shape != (self.n3, self.n1):
            raise ValueError(f"a_linear must be ({self.n3}, {self.n1})")
        if self.a_offset.shape != (self.n3,):
            raise ValueError(f"a_offset must be ({self.n3},)")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        est = operator_norm(self.a_linear)
        if self.C is None:
            self.C = est
        elif abs(self.C - est) > 1e-6 * max(1.0, est):
            raise ValueError(
                f"C={self.C} does not match the operator norm of a_linear ({est:.12g})"
            )
        if self.n2 is None:
            self.n2 = self.n3

    def a(self, x: np.ndarray) -> np.ndarray:
        return self.a_linear @ x + self.a_offset


@dataclass
class UzawaGeneralState:
    """Iteration record: final primal point, multiplier image, and per-step
    history of (||x_k - x_{k-1}||, multiplier-image change)."""

    x: np.ndarray
    y_image: np.ndarray
    iteration: int = 0
    history: list = field(default_factory=list)
    y_trail: list = field(default_factory=list)  # multiplier images per step
    step_admissible: bool = True
    warnings: list = field(default_factory=list)


def check_step(problem: GeneralVIProblem, delta: float) -> bool:
    """Admissibility of the multiplier step: delta < 2*alpha / C^2."""
    if problem.C == 0:
        return delta > 0
    return delta < 2.0 * problem.alpha / (problem.C**2)


def _estimate_lipschitz(f, n, samples=30, seed=23):
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        dx = np.linalg.norm(x - y)
        if dx == 0:
            continue
        best = max(best, np.linalg.norm(f(x) - f(y)) / dx)
    return best


def inner_vi_solve(
    problem: GeneralVIProblem,
    y_image: np.ndarray,
    eps: Optional[float] = None,
    tol: float = 1e-12,
    max_iter: int = 200000,
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Solve the primal variational inequality at a frozen multiplier image:
    find x in K1 with (f(x), x'-x) + <a(x') - a(x), y_image> >= 0 for all
    x' in K1, by the projected-gradient fixed point
        x <- P_K1(x - eps*(f(x) + a_linear^T y_image)).

    eps defaults to alpha / Lip^2 with Lip the (estimated) Lipschitz constant
    of f, which makes the iteration a contraction.  Raises NonContraction
    when successive changes keep growing, signalling an eps too large.
    """
    const = problem.a_linear.T @ np.asarray(y_image, dtype=float)
    if eps is None:
        lip = problem.lip_f
        if lip is None:
            lip = 1.2 * _estimate_lipschitz(problem.f, problem.n1)
        lip = max(lip, problem.alpha)
        eps = problem.alpha / (lip**2)
    x = np.zeros(problem.n1) if x0 is None else np.array(x0, dtype=float)
    x = problem.k1.project(x)
    prev_change = np.inf
    growth_streak = 0
    for _ in range(max_iter):
        x_next = problem.k1.project(x - eps * (problem.f(x) + const))
        change = float(np.linalg.norm(x_next - x))
        x = x_next
        if change <= tol:
            return x
        if change > prev_change * (1.0 + 1e-12):
            growth_streak += 1
            if growth_streak >= 50:
                raise NonContraction(
                    f"inner_vi_solve: successive changes kept growing (eps={eps:.3e})"
                )
        else:
            growth_streak = 0
        prev_change = change
    raise MaxIterationsExceeded(
        f"inner_vi_solve: change {prev_change:.3e} > tol {tol:.1e} after {max_iter} iterations",
        residual=prev_change,
    )


def vi_residual(
    problem: GeneralVIProblem,
    x: np.ndarray,
    y_image: np.ndarray,
    samples: int = 100,
    radius: float = 1.0,
    seed: int = 5,
) -> float:
    """Worst violation of the primal VI over sampled feasible points
    (most negative value of (f(x), x'-x) + <a(x')-a(x), y_image>)."""
    g = problem.f(x) + problem.a_linear.T @ y_image
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        xp = problem.k1.project(x + radius * rng.standard_normal(problem.n1))
        worst = min(worst, float(g @ (xp - x)))
    return worst


def uzawa_iterate(
    problem: GeneralVIProblem,
    delta: float,
    y0_image: np.ndarray,
    outer_tol: float = 1e-10,
    max_outer: int = 10000,
    inner_tol: Optional[float] = None,
    inner_eps: Optional[float] = None,
    inner_max_iter: int = 200000,
) -> tuple[np.ndarray, UzawaGeneralState]:
    """Alternate the primal VI solve with the projected multiplier update
        y <- P_{K2-image}(y + delta * a(x)),
    stopping when ||x_n - x_{n-1}|| < outer_tol.

    An inadmissible delta (check_step false) proceeds with a warning recorded
    in the state.  Raises MaxIterationsExceeded with the state attached.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if inner_tol is None:
        inner_tol = max(outer_tol / 100.0, 1e-14)
    y = problem.k2_image.project(np.asarray(y0_image, dtype=float))
    state = UzawaGeneralState(x=np.zeros(problem.n1), y_image=y)
    if not check_step(problem, delta):
        state.step_admissible = False
        state.warnings.append(
            f"step delta={delta} violates delta < 2*alpha/C^2 = {2*problem.alpha/problem.C**2:.6g}"
        )
    x_prev = None
    for n in range(max_outer):
        x = inner_vi_solve(
            problem, y, eps=inner_eps, tol=inner_tol, max_iter=inner_max_iter, x0=x_prev
        )
        y_next = problem.k2_image.project(y + delta * problem.a(x))
        dx = np.inf if x_prev is None else float(np.linalg.norm(x - x_prev))
        dy = float(np.linalg.norm(y_next - y))
        state.x = x
        state.y_image = y_next
        state.iteration = n + 1
        state.history.append((dx, dy))
        state.y_trail.append(y.copy())
        x_prev, y = x, y_next
        if dx < outer_tol:
            return x, state
    raise MaxIterationsExceeded(
        f"uzawa_iterate: ||x_n - x_(n-1)|| = {state.history[-1][0]:.3e} after {max_outer} iterations",
        residual=state.history[-1][0],
        trace=state,
    )
