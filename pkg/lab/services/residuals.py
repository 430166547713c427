# lab/services/residuals.py
"""Consistency checks of a solved trajectory against the weak and mild formulations."""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from lab.exceptions import InsufficientPaths
from lab.services.fragmentation import fragment_dual, fragment_primal
from lab.services.grid_function import GridFunction

logger = logging.getLogger(__name__)

SUPPORT_CUTOFF = 1e-10
BUDGET_FACTOR = 3.0


class SmoothBump:
    """amplitude * exp(1 - 1/(1 - z^2)) with z = (x - center)/width, zero for |z| >= 1."""

    def __init__(self, center, width, amplitude=1.0):
        if width <= 0:
            raise ValueError("bump width must be positive")
        self.center = float(center)
        self.width = float(width)
        self.amplitude = float(amplitude)

    @property
    def support(self):
        return self.center - self.width, self.center + self.width

    def _parts(self, x):
        z = (np.asarray(x, dtype=float) - self.center) / self.width
        inside = np.abs(z) < 1.0
        q = np.where(inside, 1.0 - z ** 2, 1.0)
        f = np.where(inside, self.amplitude * np.exp(1.0 - 1.0 / q), 0.0)
        g = -2.0 * z / q ** 2
        g_prime = -2.0 / q ** 2 - 8.0 * z ** 2 / q ** 3
        return f, g, g_prime

    def __call__(self, x):
        return self._parts(x)[0]

    def derivative(self, x):
        f, g, _ = self._parts(x)
        return f * g / self.width

    def second_derivative(self, x):
        f, g, g_prime = self._parts(x)
        return f * (g ** 2 + g_prime) / self.width ** 2


def bump_battery(x_max, count=4):
    """Bumps spread over the bulk of [0, x_max / 2], supported inside (0, x_max)."""
    centers = np.linspace(0.5, x_max / 4.0, count)
    return [SmoothBump(center, 0.45) for center in centers]


def _generator_pairing(u, r, f, c, kernel):
    x = u.centers
    integrand = (
        c.zeta_at(x, r) * f.derivative(x)
        + c.diff_at(x, r) * f.second_derivative(x)
        + c.birth_at(x, r) * fragment_dual(f, kernel, x)
        - c.death_at(x) * f(x)
    )
    return u.dx * float(np.dot(u.values, integrand))


def weak_form_residual(traj, f, c, kernel):
    """|<u_t, f> - <u_0, f> - int_0^t <u_s, L f + b G[f] - d f> ds| at every stored time."""
    pairings = np.array([u.integrate(f) for u in traj.states])
    generator = np.array([
        _generator_pairing(u, r, f, c, kernel) for u, r in zip(traj.states, traj.resources)
    ])
    integral = cumulative_trapezoid(generator, traj.times, initial=0.0)
    return np.abs(pairings - pairings[0] - integral)


# ======================
# Mild formulation
# ======================

@dataclass
class MildResidual:
    residual: float
    mc_error: float
    histogram_bias: float
    quadrature_bound: float
    n_nodes: int
    target: GridFunction
    right_side: GridFunction

    @property
    def budget(self):
        return BUDGET_FACTOR * (self.mc_error + self.histogram_bias + self.quadrature_bound)

    @property
    def within_budget(self):
        return self.residual <= self.budget

    def as_dict(self):
        return {
            "residual": self.residual,
            "mc_error": self.mc_error,
            "histogram_bias": self.histogram_bias,
            "quadrature_bound": self.quadrature_bound,
            "budget": self.budget,
            "n_nodes": self.n_nodes,
        }


def _state_at(traj, s):
    """Linear interpolation of the stored states at time s."""
    hi = int(np.searchsorted(traj.times, s))
    if hi <= 0:
        return traj.states[0], float(traj.resources[0])
    if hi >= len(traj.times):
        return traj.states[-1], float(traj.resources[-1])
    lo = hi - 1
    w = (s - traj.times[lo]) / (traj.times[hi] - traj.times[lo])
    values = (1.0 - w) * traj.states[lo].values + w * traj.states[hi].values
    resource = (1.0 - w) * traj.resources[lo] + w * traj.resources[hi]
    return traj.states[lo].with_values(values), float(resource)


def start_nodes(grid, n_bins):
    """Aggregate signed cell masses into contiguous bins over the support.

    Returns (mass, location) pairs; the location is the |mass|-weighted
    center of the bin.
    """
    weights = np.abs(grid.values) * grid.dx
    total = weights.sum()
    if total <= 0:
        return []
    cumulative = np.cumsum(weights) / total
    lo = int(np.searchsorted(cumulative, SUPPORT_CUTOFF))
    hi = int(np.searchsorted(cumulative, 1.0 - SUPPORT_CUTOFF))
    hi = min(max(hi, lo), grid.n - 1)
    nodes = []
    for cells in np.array_split(np.arange(lo, hi + 1), n_bins):
        if len(cells) == 0 or weights[cells].sum() <= 0:
            continue
        mass = float(grid.values[cells].sum() * grid.dx)
        location = float(np.dot(weights[cells], grid.centers[cells]) / weights[cells].sum())
        nodes.append((mass, location))
    return nodes


def _bin_averages(u, edges):
    at_edges = np.interp(edges, u.faces, u.cumulative())
    return np.diff(at_edges) / np.diff(edges)


def mild_residual(traj, density_source, c, kernel, t, time_nodes=8, space_nodes=16, tolerance=None):
    """L1 gap between u_t and the mild right side assembled from transition densities.

    The reaction part uses <b u_s, G[p]> = <G-dagger[b u_s], p>, so the
    source rho_s = G-dagger[b u_s] - d u_s is moved by the estimated kernels.
    """
    n_out = density_source.bins
    width = density_source.x_max / n_out
    edges = np.linspace(0.0, density_source.x_max, n_out + 1)
    node_id = 0

    def transport(nodes, s):
        nonlocal node_id
        contributions = []
        for mass, location in nodes:
            estimate = density_source(location, s, t, node_id)
            node_id += 1
            contributions.append((mass, estimate.probabilities()))
        return contributions

    initial = transport(start_nodes(traj.states[0], space_nodes), 0.0)

    step = t / time_nodes
    reaction = []
    for k in range(time_nodes):
        s = (k + 0.5) * step
        u_s, r_s = _state_at(traj, s)
        birth = c.birth_at(u_s.centers, r_s)
        source = fragment_primal(u_s.with_values(birth * u_s.values), kernel).values
        source = source - c.death_at(u_s.centers) * u_s.values
        reaction.append(transport(start_nodes(u_s.with_values(source), space_nodes), s))

    def assemble(groups, weight):
        total = np.zeros(n_out)
        variance = np.zeros(n_out)
        for group in groups:
            for mass, probabilities in group:
                w = weight * mass
                total += w * probabilities
                variance += w ** 2 * probabilities * (1.0 - probabilities)
        return total, variance

    n_paths = getattr(density_source, "n_paths", 1)
    init_part, init_var = assemble([initial], 1.0)
    react_part, react_var = assemble(reaction, step)
    half = reaction[::2]
    half_part, _ = assemble(half, t / len(half)) if half else (np.zeros(n_out), None)

    right = (init_part + react_part) / width
    target = _bin_averages(traj.at(t)[0], edges)
    residual = float(width * np.abs(target - right).sum())
    mc_error = float(np.sqrt((init_var + react_var) / n_paths).sum())
    histogram_bias = float(width * np.abs(np.diff(right, n=2)).sum() / 24.0) if n_out > 2 else 0.0
    quadrature_bound = float(np.abs(react_part - half_part).sum())

    result = MildResidual(
        residual=residual,
        mc_error=mc_error,
        histogram_bias=histogram_bias,
        quadrature_bound=quadrature_bound,
        n_nodes=node_id,
        target=GridFunction(target, density_source.x_max),
        right_side=GridFunction(right, density_source.x_max),
    )
    logger.info(f"✅ Mild residual {residual:.4g} (budget {result.budget:.4g}, {node_id} nodes)")

    if tolerance is not None and mc_error > 0.5 * tolerance:
        logger.error(f"❌ Monte Carlo error {mc_error:.4g} too large for tolerance {tolerance:.4g}")
        raise InsufficientPaths(
            f"Monte Carlo error {mc_error:.4g} exceeds half the tolerance {tolerance:.4g}; "
            f"raise numerics.mild.paths"
        )
    return result
