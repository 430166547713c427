# lab/services/initial_conditions.py
import logging

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid, trapezoid

from lab.services.grid_function import GridFunction

logger = logging.getLogger(__name__)

PROFILE_RESOLUTION = 4097


class InitialLaw:
    """The initial measure nu_0: a total mass times a probability law on R+."""

    def __init__(self, shape, mass, x0=1.0, mean=1.0, std=0.25, profile=None):
        self.shape = shape
        self.mass = float(mass)
        self.x0 = float(x0)
        self._dist = None
        self._profile_x = None
        self._profile_cdf = None

        if shape == "truncated_gaussian":
            self._dist = stats.truncnorm((0.0 - mean) / std, np.inf, loc=mean, scale=std)
        elif shape == "grid_profile":
            knots = np.asarray(profile, dtype=float).reshape(-1, 2)
            if len(knots) < 2:
                raise ValueError("grid_profile needs at least two knots")
            order = np.argsort(knots[:, 0])
            xs, ws = knots[order, 0], np.clip(knots[order, 1], 0.0, None)
            if xs[0] < 0:
                raise ValueError("grid_profile knots must lie in [0, inf)")
            fine = np.linspace(xs[0], xs[-1], PROFILE_RESOLUTION)
            cdf = cumulative_trapezoid(np.interp(fine, xs, ws), fine, initial=0.0)
            if cdf[-1] <= 0:
                raise ValueError("grid_profile has zero total weight")
            self._profile_x = fine
            self._profile_cdf = cdf / cdf[-1]
        elif shape != "point":
            raise ValueError(f"Unknown initial shape: {shape}")

    @classmethod
    def from_config(cls, section):
        return cls(section.shape, section.mass, x0=section.x0, mean=section.mean,
                   std=section.std, profile=section.profile)

    def _cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.shape == "point":
            return (x >= self.x0).astype(float)
        if self.shape == "truncated_gaussian":
            return self._dist.cdf(x)
        return np.interp(x, self._profile_x, self._profile_cdf, left=0.0, right=1.0)

    def tail_fraction(self, x):
        """Fraction of the law strictly beyond x."""
        if self.shape == "point":
            return 1.0 if self.x0 > x else 0.0
        return float(1.0 - self._cdf(x))

    def first_moment(self):
        if self.shape == "point":
            return self.mass * self.x0
        if self.shape == "truncated_gaussian":
            return self.mass * float(self._dist.mean())
        density = np.gradient(self._profile_cdf, self._profile_x)
        return self.mass * float(trapezoid(self._profile_x * density, self._profile_x))

    def sample(self, rng, n):
        if n <= 0:
            return np.empty(0)
        if self.shape == "point":
            return np.full(n, self.x0)
        if self.shape == "truncated_gaussian":
            return np.asarray(self._dist.rvs(size=n, random_state=rng), dtype=float)
        return np.interp(rng.random(n), self._profile_cdf, self._profile_x)

    def density(self, n, x_max):
        """Cell averages of mass * law on an n-cell grid over [0, x_max]."""
        grid = GridFunction.zeros(n, x_max)
        if self.shape == "point":
            values = np.zeros(n)
            cell = min(int(self.x0 / grid.dx), n - 1)
            values[cell] = self.mass / grid.dx
            return grid.with_values(values)
        cell_mass = np.diff(self._cdf(grid.faces))
        return grid.with_values(self.mass * cell_mass / grid.dx)
