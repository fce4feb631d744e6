"""Periodic 2-D grid arithmetic: fields, weighted inner product, the discrete
elliptic operator, one-sided derivative stencils, the jump operator and the
Godunov numerical Hamiltonian.

All index arithmetic is modulo d in both coordinates; node (i, j) with
1 <= i, j <= d sits at ((i-1)h, (j-1)h), h = 1/d.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np


class GridMismatchError(ValueError):
    """Raised when operands live on different grids."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform d x d discretization of the unit 2-torus with mesh size h = 1/d."""

    d: int

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 2:
            raise ValueError(f"grid side must be an integer >= 2, got {self.d!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.d

    def nodes(self):
        """Coordinate arrays (X, Y), node (i, j) at ((i-1)h, (j-1)h)."""
        c = np.arange(self.d) * self.h
        return np.meshgrid(c, c, indexing="ij")


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: d={a.grid.d} vs d={b.grid.d}")


@dataclass(frozen=True)
class Field:
    """Real values on a TorusGrid; entry [i-1, j-1] is the value at node (i, j)."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.d, self.grid.d):
            raise ValueError(
                f"field values must have shape {(self.grid.d, self.grid.d)}, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite entries")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "Field":
        return cls(grid, np.zeros((grid.d, grid.d)))

    @classmethod
    def full(cls, grid: TorusGrid, value: float) -> "Field":
        return cls(grid, np.full((grid.d, grid.d), float(value)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn: Callable) -> "Field":
        """Evaluate fn(X, Y) at the grid nodes."""
        x, y = grid.nodes()
        return cls(grid, np.broadcast_to(fn(x, y), (grid.d, grid.d)))

    def copy(self) -> "Field":
        return Field(self.grid, self.values)

    def __add__(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Field(self.grid, self.values / float(scalar))

    def __neg__(self):
        return Field(self.grid, -self.values)


def inner_product(x: Field, y: Field) -> float:
    """Weighted scalar product  sum_{i,j} h^2 x_{i,j} y_{i,j}."""
    _check_same_grid(x, y)
    return float(x.grid.h**2 * np.sum(x.values * y.values))


def norm(x: Field) -> float:
    """h-weighted Euclidean norm induced by inner_product."""
    return float(x.grid.h * np.linalg.norm(x.values))


def values_norm(values: np.ndarray, h: float) -> float:
    """h-norm of a raw (d, d) array (internal fast path)."""
    return float(h * np.linalg.norm(values))


# periodic one-cell shifts: xp(v)[i,j] = v[i+1,j] etc., indices mod d
def _xp(v):
    return np.roll(v, -1, axis=0)


def _xm(v):
    return np.roll(v, 1, axis=0)


def _yp(v):
    return np.roll(v, -1, axis=1)


def _ym(v):
    return np.roll(v, 1, axis=1)


@dataclass
class EllipticOperator:
    """A = -nu * Laplacian_h + lam * Id with the periodic 5-point stencil.

    scaling selects the stencil denominator: "h2" (consistent with the
    continuum Laplacian, default) or "h" (literal one-power variant, kept
    behind this flag for comparison runs).
    """

    nu: float
    lam: float
    grid: TorusGrid
    scaling: str = "h2"

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.lam <= 0:
            raise ValueError(f"lam must be > 0, got {self.lam}")
        if self.scaling not in ("h", "h2"):
            raise ValueError(f"scaling must be 'h' or 'h2', got {self.scaling!r}")

    @property
    def _denominator(self) -> float:
        h = self.grid.h
        return h * h if self.scaling == "h2" else h

    @cached_property
    def _symbol(self) -> np.ndarray:
        # Fourier symbol of A on the full (d, d) frequency grid
        d = self.grid.d
        c = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(d) / d)
        lap = c[:, None] + c[None, :]
        return self.nu * lap / self._denominator + self.lam

    @cached_property
    def _symbol_half(self) -> np.ndarray:
        # symbol restricted to the rfft2 half-spectrum
        return self._symbol[:, : self.grid.d // 2 + 1]

    def eig_range(self) -> tuple[float, float]:
        """(smallest, largest) eigenvalue of A."""
        return float(self._symbol.min()), float(self._symbol.max())

    def apply_values(self, v: np.ndarray) -> np.ndarray:
        stencil = 4.0 * v - _xp(v) - _xm(v) - _yp(v) - _ym(v)
        return self.nu * stencil / self._denominator + self.lam * v

    def solve_values(self, b: np.ndarray) -> np.ndarray:
        d = self.grid.d
        return np.fft.irfft2(np.fft.rfft2(b) / self._symbol_half, s=(d, d))

    def solve_squared_values(self, b: np.ndarray) -> np.ndarray:
        """Apply A^{-2} (one transform pair)."""
        d = self.grid.d
        return np.fft.irfft2(np.fft.rfft2(b) / self._symbol_half**2, s=(d, d))

    def apply_squared_values(self, v: np.ndarray) -> np.ndarray:
        """Apply A^2 (one transform pair)."""
        d = self.grid.d
        return np.fft.irfft2(np.fft.rfft2(v) * self._symbol_half**2, s=(d, d))

    def apply(self, v: Field) -> Field:
        return apply_elliptic(self, v)

    def solve(self, b: Field, **kwargs) -> Field:
        return solve_elliptic(self, b, **kwargs)


def apply_elliptic(op: EllipticOperator, v: Field) -> Field:
    """(Av)_{i,j} = nu*(4v_{i,j} - v_{i±1,j} - v_{i,j±1})/h^2 + lam*v_{i,j}."""
    _check_same_grid(op, v)
    return Field(v.grid, op.apply_values(v.values))


def solve_elliptic(
    op: EllipticOperator,
    b: Field,
    rtol: float = 1e-10,
    method: str = "fft",
    max_iter: int = 10000,
) -> Field:
    """Solve A v = b to ||Av - b||_h <= rtol * ||b||_h.

    The default path diagonalizes the periodic constant-coefficient stencil by
    FFT (exact to rounding).  method="cg" runs the matrix-free conjugate
    gradient instead.
    """
    _check_same_grid(op, b)
    if method == "fft":
        return Field(b.grid, op.solve_values(b.values))
    if method == "cg":
        from .krylov import KrylovConfig, LinearMap, cg_solve

        linmap = LinearMap(apply=op.apply, grid=op.grid, symmetric=True)
        cfg = KrylovConfig(rtol=rtol, atol=0.0, max_iter=max_iter)
        return cg_solve(linmap, b, cfg).x
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class DerivativeStencil:
    """Per-node one-sided difference quotients (forward-x, backward-x,
    forward-y, backward-y), each of shape (d, d)."""

    grid: TorusGrid
    forward_x: np.ndarray
    backward_x: np.ndarray
    forward_y: np.ndarray
    backward_y: np.ndarray

    def at(self, i: int, j: int) -> tuple[float, float, float, float]:
        """The 4-tuple (p1, p2, p3, p4) at 1-based node (i, j)."""
        a, b = i - 1, j - 1
        return (
            float(self.forward_x[a, b]),
            float(self.backward_x[a, b]),
            float(self.forward_y[a, b]),
            float(self.backward_y[a, b]),
        )


def stencil_values(v: np.ndarray, h: float):
    """Raw (p1, p2, p3, p4) arrays of the one-sided differences."""
    p1 = (_xp(v) - v) / h
    p2 = (v - _xm(v)) / h
    p3 = (_yp(v) - v) / h
    p4 = (v - _ym(v)) / h
    return p1, p2, p3, p4


def derivative_stencil(v: Field) -> DerivativeStencil:
    """One-sided difference quotients of v with periodic wraparound."""
    p1, p2, p3, p4 = stencil_values(v.values, v.grid.h)
    return DerivativeStencil(v.grid, p1, p2, p3, p4)


@dataclass(frozen=True)
class JumpOperator:
    """(Mv)_{i,j} = min over offsets xi of (k0 + v_{(i,j)+xi}), offsets mod d."""

    k0: float
    offsets: tuple

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError(f"jump cost k0 must be > 0, got {self.k0}")
        offs = tuple((int(a), int(b)) for a, b in self.offsets)
        if not offs:
            raise ValueError("jump operator needs at least one offset")
        object.__setattr__(self, "offsets", offs)


def _shifted(v: np.ndarray, offset) -> np.ndarray:
    """w with w[i,j] = v[(i,j) + offset mod d]."""
    ox, oy = offset
    return np.roll(v, (-ox, -oy), axis=(0, 1))


def apply_jump_values(op: JumpOperator, v: np.ndarray) -> np.ndarray:
    out = op.k0 + _shifted(v, op.offsets[0])
    for off in op.offsets[1:]:
        np.minimum(out, op.k0 + _shifted(v, off), out=out)
    return out


def apply_jump(op: JumpOperator, v: Field) -> Field:
    return Field(v.grid, apply_jump_values(op, v.values))


def numerical_hamiltonian(p1, p2, p3, p4):
    """Godunov upwind discretization of H(p) = sqrt(1 + |p|^2).

    g(p1, p2, p3, p4) = sqrt(1 + min(p1,0)^2 + max(p2,0)^2
                               + min(p3,0)^2 + max(p4,0)^2);
    consistent (g(a,a,b,b) = sqrt(1+a^2+b^2)), nonincreasing in the forward
    and nondecreasing in the backward differences.  Accepts scalars or arrays.
    """
    a = np.minimum(p1, 0.0)
    b = np.maximum(p2, 0.0)
    c = np.minimum(p3, 0.0)
    e = np.maximum(p4, 0.0)
    return np.sqrt(1.0 + a * a + b * b + c * c + e * e)


def grad_numerical_hamiltonian(p1, p2, p3, p4):
    """Componentwise derivative of the Godunov Hamiltonian.

    At the kinks (clipped argument equal to 0) the derivative is 0, which is
    the subgradient selection that keeps the transport coefficients
    continuous.
    """
    a = np.minimum(p1, 0.0)
    b = np.maximum(p2, 0.0)
    c = np.minimum(p3, 0.0)
    e = np.maximum(p4, 0.0)
    g = np.sqrt(1.0 + a * a + b * b + c * c + e * e)
    return a / g, b / g, c / g, e / g
