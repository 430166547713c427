# lab/services/grid_function.py
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Finite-volume density on [0, x_max]: cell averages on a uniform grid."""
    values: np.ndarray
    x_max: float

    @property
    def n(self):
        return len(self.values)

    @property
    def dx(self):
        return self.x_max / self.n

    @property
    def centers(self):
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def faces(self):
        return np.arange(self.n + 1) * self.dx

    @classmethod
    def zeros(cls, n, x_max):
        return cls(np.zeros(n), float(x_max))

    @classmethod
    def from_function(cls, fn, n, x_max):
        grid = cls.zeros(n, x_max)
        return cls(np.asarray(fn(grid.centers), dtype=float), float(x_max))

    def with_values(self, values):
        return GridFunction(np.asarray(values, dtype=float), self.x_max)

    def integrate(self, phi):
        """Midpoint quadrature of <u, phi>."""
        return float(self.dx * np.dot(self.values, np.asarray(phi(self.centers), dtype=float)))

    def mass(self):
        return float(self.dx * self.values.sum())

    def moment(self, p):
        return self.integrate(lambda x: x ** p)

    def mass_beyond(self, x):
        return float(self.dx * self.values[self.centers > x].sum())

    def cumulative(self):
        """Antiderivative at the faces, exact for the piecewise-constant reading."""
        return np.concatenate([[0.0], np.cumsum(self.values) * self.dx])

    def l1_distance(self, other):
        return float(self.dx * np.abs(self.values - other.values).sum())

    def coarsen(self, factor):
        """Average groups of ``factor`` cells; trailing cells are dropped."""
        usable = (self.n // factor) * factor
        values = self.values[:usable].reshape(-1, factor).mean(axis=1)
        return GridFunction(values, self.dx * usable)
