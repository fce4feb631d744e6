"""Running cost of the players: f(m) = f0 + c_id * m + c_sm * (-Lap_h + I)^{-1} m.

The smoothing term is positive semidefinite, so the map is c_id-monotone;
c_id is the certified monotonicity constant used by the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import EllipticOperator, Field, _check_same_grid


@dataclass
class RunningCost:
    f0: Field
    identity_coeff: float = 1.0
    smoothing_coeff: float = 1.0
    scaling: str = "h2"

    def __post_init__(self):
        if self.identity_coeff < 0 or self.smoothing_coeff < 0:
            raise ValueError("cost coefficients must be >= 0")

    @property
    def alpha(self) -> float:
        """Certified monotonicity constant."""
        return self.identity_coeff

    @property
    def grid(self):
        return self.f0.grid

    @cached_property
    def smoothing_op(self) -> EllipticOperator:
        return EllipticOperator(nu=1.0, lam=1.0, grid=self.f0.grid, scaling=self.scaling)

    def eval_values(self, m: np.ndarray) -> np.ndarray:
        out = self.f0.values + self.identity_coeff * m
        if self.smoothing_coeff != 0.0:
            out = out + self.smoothing_coeff * self.smoothing_op.solve_values(m)
        return out

    def linear_eig_range(self) -> tuple[float, float]:
        """Eigenvalue range of the linear part c_id*I + c_sm*S."""
        lo_s, hi_s = self.smoothing_op.eig_range()
        # S = smoothing_op^{-1}: eigenvalues [1/hi_s, 1/lo_s]
        return (
            self.identity_coeff + self.smoothing_coeff / hi_s,
            self.identity_coeff + self.smoothing_coeff / lo_s,
        )


def eval_cost(cost: RunningCost, m: Field) -> Field:
    """f0 + identity_coeff * m + smoothing_coeff * S m with S = (-Lap_h + I)^{-1}."""
    _check_same_grid(cost.f0, m)
    return Field(m.grid, cost.eval_values(m.values))
