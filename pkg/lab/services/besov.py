# lab/services/besov.py
"""Finite differences, Besov B^s_{1,inf} norms and empirical smoothness fits.

Densities on the half line are extended by zero to the whole line before
any shift is applied.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from lab.exceptions import HTooSmallForGrid, ParamOutOfRange
from lab.services.grid_function import GridFunction

logger = logging.getLogger(__name__)

DEFAULT_H_POINTS = 16
H_FLOOR = 1e-3
GAUSSIAN_SPAN = 10.0


# ======================
# Difference operator
# ======================

def _coefficients(m):
    return [(-1) ** (m - j) * math.comb(m, j) for j in range(m + 1)]


def _shift(values, s):
    """values[i + s], reading zero outside the array."""
    out = np.zeros_like(values)
    n = len(values)
    if s >= 0:
        out[:n - s] = values[s:]
    else:
        out[-s:] = values[:n + s]
    return out


def _grid_shift(f, h):
    cells = int(round(h / f.dx))
    return cells, cells * f.dx


def _grid_difference(f, m, h, method):
    cells, _ = _grid_shift(f, h)
    pad = m * abs(cells)
    padded = np.concatenate([np.zeros(2 * pad), f.values, np.zeros(2 * pad)])
    if method == "binomial":
        result = sum(coef * _shift(padded, j * cells) for j, coef in enumerate(_coefficients(m)))
    else:
        result = padded
        for _ in range(m):
            result = _shift(result, cells) - result
    # cells -pad .. n-1+pad carry the whole support of the difference
    return np.asarray(result, dtype=float)[pad:pad + f.n + 2 * pad]


def _callable_difference(f, m, h, x, method):
    x = np.asarray(x, dtype=float)
    if method == "binomial":
        return sum(coef * np.asarray(f(x + j * h), dtype=float)
                   for j, coef in enumerate(_coefficients(m)))
    if m == 0:
        return np.asarray(f(x), dtype=float)
    return (_callable_difference(f, m - 1, h, x + h, method)
            - _callable_difference(f, m - 1, h, x, method))


def delta_m_h(f, m, h, x=None, method="binomial"):
    """Delta^m_h f = sum_j (-1)^(m-j) C(m, j) f(. + j h).

    For a GridFunction, h is rounded to a whole number of cells and the
    result covers every cell where the zero-extended difference can be
    nonzero. For a callable, it is evaluated at ``x``.
    """
    if m < 1:
        raise ValueError(f"difference order must be >= 1, got {m}")
    if method not in ("binomial", "recursive"):
        raise ValueError(f"Unknown difference method: {method}")
    if isinstance(f, GridFunction):
        return _grid_difference(f, m, h, method)
    if x is None:
        raise ValueError("evaluation points are required for a callable")
    return _callable_difference(f, m, h, x, method)


def difference_l1(f, m, h):
    return float(f.dx * np.abs(delta_m_h(f, m, h)).sum())


def default_h_grid(dx):
    floor = max(2.0 * dx, H_FLOOR)
    if floor >= 0.5:
        raise HTooSmallForGrid(f"grid step {dx} leaves no resolvable shifts below 0.5")
    return np.geomspace(0.5, floor, DEFAULT_H_POINTS)


def _effective_shifts(f, h_grid):
    """Unique shifts realizable on the grid, strictly decreasing."""
    cells = sorted({int(round(h / f.dx)) for h in h_grid}, reverse=True)
    return np.array([k * f.dx for k in cells if k > 0])


def besov_norm(f, s, m, h_grid=None):
    """||f||_1 + max over the h-grid of h^(-s) ||Delta^m_h f||_1."""
    if not 0 < s < m:
        raise ValueError(f"need 0 < s < m, got s={s}, m={m}")
    shifts = _effective_shifts(f, default_h_grid(f.dx) if h_grid is None else h_grid)
    l1 = float(f.dx * np.abs(f.values).sum())
    seminorm = max((h ** (-s) * difference_l1(f, m, h) for h in shifts), default=0.0)
    return l1 + seminorm


@dataclass
class DifferenceProfile:
    m: int
    h_grid: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    ci: tuple
    r_squared: float

    def as_dict(self):
        return {
            "m": self.m,
            "h_grid": self.h_grid.tolist(),
            "values": self.values.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "ci": list(self.ci),
            "r_squared": self.r_squared,
        }


def _fit(log_h, log_v, confidence):
    fit = stats.linregress(log_h, log_v)
    spread = stats.t.ppf(0.5 + confidence / 2.0, len(log_h) - 2) * fit.stderr if len(log_h) > 2 else math.inf
    return fit, (fit.slope - spread, fit.slope + spread)


def smoothness_exponent(f, m, h_grid=None, confidence=0.95):
    """Least-squares slope of log ||Delta^m_h f||_1 against log h."""
    h_grid = default_h_grid(f.dx) if h_grid is None else np.asarray(h_grid, dtype=float)
    too_small = [h for h in h_grid if h < 2.0 * f.dx * (1 - 1e-9)]
    if too_small:
        raise HTooSmallForGrid(
            f"shift {min(too_small):.3g} is below twice the grid step {f.dx:.3g}"
        )
    shifts = _effective_shifts(f, h_grid)
    values = np.array([difference_l1(f, m, h) for h in shifts])
    positive = values > 0
    if positive.sum() < 3:
        raise ValueError("need at least three shifts with nonzero differences to fit a slope")
    fit, ci = _fit(np.log(shifts[positive]), np.log(values[positive]), confidence)
    logger.debug(f"Smoothness fit m={m}: slope {fit.slope:.4f} over {positive.sum()} shifts")
    return DifferenceProfile(
        m=m, h_grid=shifts, values=values, slope=float(fit.slope),
        intercept=float(fit.intercept), slope_stderr=float(fit.stderr),
        ci=(float(ci[0]), float(ci[1])), r_squared=float(fit.rvalue ** 2),
    )


# ======================
# Predicted exponents
# ======================

@dataclass(frozen=True)
class BesovExponents:
    alpha: float
    beta: float
    m: int
    k: int
    c_alpha_k: float
    eta: float
    s: float

    @property
    def total(self):
        """alpha + s, the exponent of the weighted density bound."""
        return self.alpha + self.s

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "m": self.m, "k": self.k,
                "c_alpha_k": self.c_alpha_k, "eta": self.eta, "s": self.s}


def predicted_exponents(alpha, beta, m, k):
    if not 0 < alpha < 1:
        raise ParamOutOfRange(f"alpha must lie in (0, 1), got {alpha}")
    if m < 1 or m <= 3 * alpha:
        raise ParamOutOfRange(f"need m >= 1 and m > 3 alpha, got m={m}, alpha={alpha}")
    if not 0 < beta <= 1:
        raise ParamOutOfRange(f"beta must lie in (0, 1], got {beta}")
    if k < 0:
        raise ParamOutOfRange(f"k must be non-negative, got {k}")
    c_alpha_k = max(alpha, max(k - 1, 0) / 2.0)
    eta = min(beta, 0.5, alpha * (m - 3 * alpha) / (2.0 * m))
    s = 2.0 * m / (2.0 * m + 3.0 * alpha) * eta
    return BesovExponents(float(alpha), float(beta), int(m), int(k), c_alpha_k, eta, s)


def lambda_max():
    """Maximizer and maximum of alpha (1 - 3 alpha) / (2 + 3 alpha) on (0, 1/3)."""
    result = optimize.minimize_scalar(
        lambda a: -a * (1.0 - 3.0 * a) / (2.0 + 3.0 * a),
        bounds=(0.0, 1.0 / 3.0), method="bounded", options={"xatol": 1e-12},
    )
    return float(result.x), float(-result.fun)


def gaussian_derivative_l1(m, sigma):
    """int |d^m/dx^m g_sigma| dx via the Hermite form He_m(x/sigma) g_sigma / sigma^m."""
    if m < 1 or sigma <= 0:
        raise ValueError("need m >= 1 and sigma > 0")
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def integrand(x):
        z = x / sigma
        return abs(special.eval_hermitenorm(m, z)) * norm * math.exp(-0.5 * z * z) / sigma ** m

    roots = special.roots_hermitenorm(m)[0] * sigma if m > 1 else np.array([0.0])
    span = GAUSSIAN_SPAN * sigma
    value, _ = integrate.quad(integrand, -span, span, points=list(roots), limit=200,
                              epsabs=0.0, epsrel=1e-10)
    return float(value)


# ======================
# Hoelder test family and the density criterion
# ======================

class HolderBump:
    """1 - min(1, (|x - a| / scale)^alpha), with ||phi||_{C^alpha} <= 1 + scale^(-alpha)."""

    def __init__(self, a, alpha, scale=1.0):
        if not 0 < alpha <= 1 or scale <= 0:
            raise ValueError("need 0 < alpha <= 1 and scale > 0")
        self.a, self.alpha, self.scale = float(a), float(alpha), float(scale)
        self.norm = 1.0 + scale ** (-alpha)

    def __call__(self, x):
        z = np.abs(np.asarray(x, dtype=float) - self.a) / self.scale
        return 1.0 - np.minimum(1.0, z ** self.alpha)


class WeierstrassPartialSum:
    """sum_{n < N} 2^(-n alpha) cos(2^n x)."""

    def __init__(self, alpha, terms=8):
        if not 0 < alpha <= 1 or terms < 1:
            raise ValueError("need 0 < alpha <= 1 and at least one term")
        self.alpha, self.terms = float(alpha), int(terms)
        self.norm = float(sum(2.0 ** (-n * alpha) for n in range(terms)) + terms * 2.0 ** (1 - alpha))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return sum(2.0 ** (-n * self.alpha) * np.cos(2.0 ** n * x) for n in range(self.terms))


def holder_difference_constant(m):
    """C_m in ||Delta^m_h phi||_inf <= C_m |h|^alpha ||phi||_{C^alpha}."""
    return 2.0 ** (m - 1)


@dataclass(frozen=True)
class CriterionStatistic:
    mean: float
    stderr: float
    n: int
    h: float
    normalized: float


def _sample_values(samples):
    return np.asarray(getattr(samples, "values", samples), dtype=float)


def _criterion_terms(x, sigma_fn, phi, m, h):
    return np.asarray(sigma_fn(x), dtype=float) * delta_m_h(phi, m, h, x=x)


def density_criterion_statistic(samples, sigma_fn, phi, alpha, m, h):
    """Sample mean of sigma(X) Delta^m_h phi(X); ``normalized`` divides by |h|^alpha ||phi||."""
    x = _sample_values(samples)
    if len(x) == 0:
        raise ValueError("need at least one sample")
    terms = _criterion_terms(x, sigma_fn, phi, m, h)
    mean = float(terms.mean())
    stderr = float(terms.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    norm = getattr(phi, "norm", 1.0)
    return CriterionStatistic(mean, stderr, len(x), float(h), abs(mean) / (abs(h) ** alpha * norm))


@dataclass
class CriterionSlope:
    slope: float
    ci: tuple
    h_grid: np.ndarray
    statistics: np.ndarray

    def as_dict(self):
        return {"slope": self.slope, "ci": list(self.ci), "h_grid": self.h_grid.tolist(),
                "statistics": self.statistics.tolist()}


def density_criterion_slope(samples, sigma_fn, phi, m, h_grid, n_boot, rng, level=0.95):
    """Slope of log |statistic| against log h with a percentile bootstrap interval."""
    x = _sample_values(samples)
    h_grid = np.asarray(h_grid, dtype=float)
    terms = np.array([_criterion_terms(x, sigma_fn, phi, m, h) for h in h_grid])
    log_h = np.log(h_grid)

    def slope_of(means):
        return float(stats.linregress(log_h, np.log(np.abs(means) + 1e-300)).slope)

    statistics = terms.mean(axis=1)
    slope = slope_of(statistics)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        index = rng.integers(0, len(x), len(x))
        boot[b] = slope_of(terms[:, index].mean(axis=1))
    tail = 50.0 * (1.0 - level)
    ci = (float(np.percentile(boot, tail)), float(np.percentile(boot, 100.0 - tail)))
    return CriterionSlope(slope, ci, h_grid, statistics)
