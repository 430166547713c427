# lab/services/trait_sde.py
"""Single-trait SDE toolkit under a frozen resource path.

Paths use the reflected Euler step x <- |x + zeta h + sqrt(2 D) sqrt(h) xi|,
vectorized over the ensemble. One generator drives a whole ensemble and
draws its increments in a fixed order, so results are reproducible.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from lab.exceptions import FamilyNotDifferentiable
from lab.services.grid_function import GridFunction
from lab.services.random_streams import MILD_STREAM, substream

logger = logging.getLogger(__name__)

MIN_DENSITY_BINS = 10


@dataclass(frozen=True, eq=False)
class ResourcePath:
    """Piecewise-linear resource values on a strictly increasing time grid."""
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("resource path times must be strictly increasing")
        if np.any(np.asarray(self.values) < 0):
            raise ValueError("resource path values must be non-negative")

    @classmethod
    def constant(cls, value, horizon=1.0):
        return cls(np.array([0.0, float(horizon)]), np.array([float(value), float(value)]))

    def at(self, t):
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    n: int

    @classmethod
    def of(cls, samples):
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), stderr, n)


@dataclass(eq=False)
class PathEnsemble:
    values: np.ndarray
    running_max: np.ndarray
    x0: float
    s: float
    t: float
    dt: float
    seed: Optional[int] = None
    path: Optional[np.ndarray] = None

    @property
    def n_paths(self):
        return len(self.values)

    def mean(self):
        return MonteCarloEstimate.of(self.values)


@dataclass(frozen=True)
class CoupledGap:
    mean: float
    stderr: float
    n: int
    order_violations: float


@dataclass(eq=False)
class TransitionDensityEstimate:
    """Normalized histogram of terminal values started from x at time s."""
    density: GridFunction
    counts: np.ndarray
    n_paths: int
    below_eps: dict = field(default_factory=dict)
    tail_mass: float = 0.0

    @property
    def bin_width(self):
        return self.density.dx

    def probabilities(self):
        """Bin probabilities out of all paths, tail included in the denominator."""
        return self.counts / self.n_paths

    def bin_sd(self):
        p = self.probabilities()
        return np.sqrt(p * (1.0 - p) / self.n_paths)

    def integrate(self, phi):
        return self.density.integrate(phi)


def _steps(s, t, dt):
    if t <= s:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    n = max(int(math.ceil((t - s) / dt - 1e-9)), 1)
    return n, (t - s) / n


def _reflected_step(x, drift, diffusion, h, noise):
    return np.abs(x + drift * h + np.sqrt(2.0 * np.maximum(diffusion, 0.0)) * math.sqrt(h) * noise)


def integrate_trait(x0, s, t, rpath, c, dt, rng, n_paths=1, record_path=False):
    """Euler paths of dX = zeta dt + sqrt(2D) dW from x0 over [s, t]."""
    if np.any(np.asarray(x0) < 0):
        raise ValueError("start trait must be non-negative")
    n_steps, h = _steps(s, t, dt)
    x = np.full(n_paths, x0, dtype=float) if np.ndim(x0) == 0 else np.array(x0, dtype=float)
    running_max = x.copy()
    path = [x.copy()] if record_path else None

    for k in range(n_steps):
        r = rpath.at(s + k * h)
        x = _reflected_step(x, c.zeta_at(x, r), c.diff_at(x, r), h, rng.standard_normal(len(x)))
        np.maximum(running_max, x, out=running_max)
        if record_path:
            path.append(x.copy())

    return PathEnsemble(
        values=x, running_max=running_max, x0=float(np.mean(x0)), s=s, t=t, dt=h,
        path=np.array(path) if record_path else None,
    )


def coupled_gap(x, y, s, t, rpath, c, dt, n_paths, rng):
    """E|X^x - X^y| with both paths driven by the same increments."""
    n_steps, h = _steps(s, t, dt)
    a = np.full(n_paths, x, dtype=float)
    b = np.full(n_paths, y, dtype=float)
    direction = np.sign(x - y)
    violations = 0

    for k in range(n_steps):
        r = rpath.at(s + k * h)
        noise = rng.standard_normal(n_paths)
        a = _reflected_step(a, c.zeta_at(a, r), c.diff_at(a, r), h, noise)
        b = _reflected_step(b, c.zeta_at(b, r), c.diff_at(b, r), h, noise)
        if direction != 0:
            violations += int(np.count_nonzero((a - b) * direction < 0))

    gap = MonteCarloEstimate.of(np.abs(a - b))
    return CoupledGap(gap.mean, gap.stderr, n_paths, violations / (n_paths * n_steps))


def feynman_kac(phi, x, s, t, rpath, c, dt, n_paths, rng):
    """E[phi(X_t^{s,x})] with its standard error."""
    ensemble = integrate_trait(x, s, t, rpath, c, dt, rng, n_paths=n_paths)
    return MonteCarloEstimate.of(np.asarray(phi(ensemble.values), dtype=float) * np.ones(n_paths))


def weighted_feynman_kac(phi_prime, x, s, t, rpath, c, dt, n_paths, rng):
    """E[phi'(Y_t) exp(int_s^t dx zeta(Y_u, R_u) du)] where Y has drift zeta + dx D."""
    if not c.differentiable:
        raise FamilyNotDifferentiable(
            f"coefficient family {c.family} has no analytic x-derivatives of zeta and D"
        )
    n_steps, h = _steps(s, t, dt)
    y = np.full(n_paths, x, dtype=float)
    log_weight = np.zeros(n_paths)

    for k in range(n_steps):
        r = rpath.at(s + k * h)
        log_weight += c.zeta_dx_at(y, r) * h
        drift = c.zeta_at(y, r) + c.diff_dx_at(y, r)
        y = _reflected_step(y, drift, c.diff_at(y, r), h, rng.standard_normal(n_paths))

    values = np.asarray(phi_prime(y), dtype=float) * np.exp(log_weight)
    return MonteCarloEstimate.of(values * np.ones(n_paths))


def simulate_comparison_z(c_lower, t, x0, n_paths, dt, rng):
    """Paths of dZ = c dt + sqrt(2 c Z) dW on [0, t]."""
    if c_lower <= 0:
        raise ValueError("comparison rate must be positive")
    n_steps, h = _steps(0.0, t, dt)
    z = np.full(n_paths, float(x0))
    running_max = z.copy()
    for _ in range(n_steps):
        z = _reflected_step(z, c_lower, c_lower * z, h, rng.standard_normal(n_paths))
        np.maximum(running_max, z, out=running_max)
    return PathEnsemble(values=z, running_max=running_max, x0=float(x0), s=0.0, t=t, dt=h)


def comparison_cdf(y, c_lower, t):
    """Law of the comparison process started at 0: exponential with mean c t."""
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, -np.expm1(-np.maximum(y, 0.0) / (c_lower * t)), 0.0)


def moment_envelope(ensembles, p):
    """Smallest C_p with E[sup X^p] <= C_p (1 + x0^p) over the given ensembles."""
    ratios = np.array([
        float(np.mean(e.running_max ** p)) / (1.0 + e.x0 ** p) for e in ensembles
    ])
    return float(ratios.max()), ratios


def estimate_transition_density(x, s, t, rpath, c, dt, n_paths, bins, rng,
                                x_max=None, epsilons=(1e-2, 1e-3, 1e-4)):
    if bins < MIN_DENSITY_BINS:
        raise ValueError(f"need at least {MIN_DENSITY_BINS} bins, got {bins}")
    x_max = float(x_max if x_max is not None else c.x_max)
    terminal = integrate_trait(x, s, t, rpath, c, dt, rng, n_paths=n_paths).values
    return density_from_samples(terminal, bins, x_max, epsilons)


def density_from_samples(terminal, bins, x_max, epsilons=(1e-2, 1e-3, 1e-4)):
    """Histogram normalized over [0, x_max]; samples beyond count as tail mass."""
    terminal = np.asarray(terminal, dtype=float)
    n_paths = len(terminal)
    inside = terminal <= x_max
    counts, _ = np.histogram(terminal[inside], bins=bins, range=(0.0, x_max))
    n_inside = int(counts.sum())
    width = x_max / bins
    values = counts / (n_inside * width) if n_inside else np.zeros(bins)
    below = {float(eps): float(np.count_nonzero(terminal <= eps)) / n_paths for eps in epsilons}
    return TransitionDensityEstimate(
        density=GridFunction(values, x_max),
        counts=counts,
        n_paths=n_paths,
        below_eps=below,
        tail_mass=1.0 - n_inside / n_paths,
    )


class TransitionDensityProvider:
    """Callable (x, s, t, node) -> TransitionDensityEstimate on a fixed path and grid.

    Each node index gets its own substream, so estimates do not depend on
    the order in which nodes are requested.
    """

    def __init__(self, rpath, c, dt, n_paths, bins, x_max, run_seed,
                 stream=MILD_STREAM, epsilons=(1e-2, 1e-3, 1e-4)):
        self.rpath = rpath
        self.c = c
        self.dt = dt
        self.n_paths = int(n_paths)
        self.bins = int(bins)
        self.x_max = float(x_max)
        self.run_seed = int(run_seed)
        self.stream = stream
        self.epsilons = tuple(epsilons)

    def __call__(self, x, s, t, node):
        rng = substream(self.run_seed, self.stream, node)
        return estimate_transition_density(
            x, s, t, self.rpath, self.c, self.dt, self.n_paths, self.bins, rng,
            x_max=self.x_max, epsilons=self.epsilons,
        )
