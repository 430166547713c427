# lab/services/pde_solver.py
"""Finite-volume solver for the density-resource system.

Cell averages on a uniform grid over [0, x_max]. The diffusion term is
kept in divergence form d2x(D u) and treated implicitly; transport and
reaction are explicit. Both boundary faces carry zero total flux.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from lab.exceptions import CflViolation, NegativityOverflow, TruncationTolExceeded
from lab.services.coefficients import build_coefficients
from lab.services.fragmentation import fragment_primal
from lab.services.grid_function import GridFunction
from lab.services.initial_conditions import InitialLaw
from lab.services.kernels import FragmentationKernel
from lab.services.trait_sde import ResourcePath

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.9
NEGATIVITY_TOL = 1e-8
SCHEMES = ("imex_heun", "imex_euler")
BOUNDARY_NOTE = (
    "right boundary at x_max is zero-flux; mass beyond x_max/2 is monitored "
    "against numerics.truncation_tol"
)


@dataclass(eq=False)
class PdeTrajectory:
    times: np.ndarray
    states: list
    resources: np.ndarray
    diagnostics: dict
    scheme: str
    dt: float
    metadata: dict = field(default_factory=dict)

    @property
    def x_max(self):
        return self.states[0].x_max

    def index_of(self, t):
        return int(np.argmin(np.abs(self.times - t)))

    def at(self, t):
        index = self.index_of(t)
        return self.states[index], float(self.resources[index])

    def resource_path(self):
        return ResourcePath(self.times, self.resources)

    def series(self):
        return {
            "time": self.times,
            "mass": self.diagnostics["mass"],
            "moment1": self.diagnostics["moment1"],
            "resource": self.resources,
            "tail_mass": self.diagnostics["tail_mass"],
            "clipped_mass": self.diagnostics["clipped_mass"],
        }


# ======================
# Spatial operators
# ======================

def diffusion_matrix(diff_values, dx):
    """Sparse A with (A u)_j = (D u)_{j+1} - 2 (D u)_j + (D u)_{j-1}, over dx^2.

    Rows at both ends drop the missing neighbour, so every column sums to
    zero and the operator conserves mass.
    """
    n = len(diff_values)
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    stencil = sparse.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1], format="csr")
    return (stencil @ sparse.diags(diff_values)) / dx ** 2


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def transport_term(u, zeta_faces, dx, limited):
    """-dx(zeta u) with upwind fluxes on interior faces and zero flux at both ends.

    ``limited`` switches from first-order upwind to a minmod reconstruction;
    boundary cells keep a zero slope.
    """
    slopes = np.zeros_like(u)
    if limited and len(u) > 2:
        slopes[1:-1] = _minmod(u[1:-1] - u[:-2], u[2:] - u[1:-1])
    right_edge = u[:-1] + 0.5 * slopes[:-1]
    left_edge = u[1:] - 0.5 * slopes[1:]
    flux = np.maximum(zeta_faces, 0.0) * right_edge + np.minimum(zeta_faces, 0.0) * left_edge
    padded = np.concatenate([[0.0], flux, [0.0]])
    return -(padded[1:] - padded[:-1]) / dx


def reaction_term(grid, r, c, kernel):
    """G-dagger[b u] - d u on cell averages."""
    birth = c.birth_at(grid.centers, r)
    gained = fragment_primal(grid.with_values(birth * grid.values), kernel)
    return gained.values - c.death_at(grid.centers) * grid.values


def resource_rate(grid, r, c):
    """r_in - R - <u, chi(., R)> by midpoint quadrature over the cells."""
    # midpoint rule on cell averages, in place of the trapezoid rule on face values
    consumption = grid.dx * float(np.dot(grid.values, c.chi_at(grid.centers, r)))
    return c.r_in - r - consumption


def _explicit(grid, r, c, kernel, limited):
    zeta_faces = c.zeta_at(grid.faces[1:-1], r)
    return transport_term(grid.values, zeta_faces, grid.dx, limited) + reaction_term(grid, r, c, kernel)


def _diffusion(grid, r, c):
    return diffusion_matrix(c.diff_at(grid.centers, r), grid.dx)


def check_cfl(zeta_sup, dt, dx):
    courant = dt * zeta_sup / dx
    if courant > CFL_LIMIT:
        logger.error(f"❌ CFL guard: dt*|zeta|/dx = {courant:.4g}")
        raise CflViolation(f"dt*|zeta|/dx = {courant:.4g} exceeds {CFL_LIMIT}; reduce numerics.dt_pde")
    return courant


# ======================
# Time stepping
# ======================

def _advance(u, r, c, kernel, dt, scheme):
    """One step; returns (values, resource, clipped mass)."""
    if scheme not in SCHEMES:
        raise ValueError(f"Unknown PDE scheme: {scheme}")
    identity = sparse.identity(u.n, format="csr")
    a_now = _diffusion(u, r, c)
    explicit_now = _explicit(u, r, c, kernel, limited=scheme == "imex_heun")
    rate_now = resource_rate(u, r, c)

    predictor = spsolve((identity - dt * a_now).tocsc(), u.values + dt * explicit_now)
    r_pred = r + dt * rate_now
    if scheme == "imex_euler":
        values, r_new = predictor, r_pred
    else:
        u_pred = u.with_values(predictor)
        r_pred = min(max(r_pred, 0.0), c.r_bar)
        a_pred = _diffusion(u_pred, r_pred, c)
        explicit_pred = _explicit(u_pred, r_pred, c, kernel, limited=True)
        rhs = u.values + 0.5 * dt * (explicit_now + explicit_pred) + 0.5 * dt * (a_now @ u.values)
        values = spsolve((identity - 0.5 * dt * a_pred).tocsc(), rhs)
        r_new = r + 0.5 * dt * (rate_now + resource_rate(u_pred, r_pred, c))

    negative = values < 0
    clipped = float(-values[negative].sum() * u.dx) if negative.any() else 0.0
    if clipped:
        reference = max(u.mass(), np.finfo(float).tiny)
        if clipped > NEGATIVITY_TOL * reference:
            logger.error(f"❌ Negativity clipping removed {clipped:.3g} of mass {reference:.3g}")
            raise NegativityOverflow(
                f"clipping removed {clipped:.3g}, above {NEGATIVITY_TOL} of mass {reference:.3g}"
            )
        values = np.where(negative, 0.0, values)

    if r_new < 0.0 or r_new > c.r_bar:
        logger.warning(f"⚠️ PDE resource clamp at R={r_new:.6g}")
        r_new = min(max(r_new, 0.0), c.r_bar)
    return values, r_new, clipped


def pde_step(u, r, c, kernel, dt, scheme="imex_heun"):
    """Advance (u, R) by dt; returns the new GridFunction and resource."""
    zeta_faces = c.zeta_at(u.faces, r)
    check_cfl(float(np.abs(zeta_faces).max()), dt, u.dx)
    values, r_new, _ = _advance(u, r, c, kernel, dt, scheme)
    return u.with_values(values), r_new


def solve_pde(config, coefficients=None, kernel=None, initial=None):
    """Solve on [0, T] from the configured initial law, storing every step."""
    numerics = config.numerics
    c = coefficients or build_coefficients(config.model, numerics.x_max, config.r_bar)
    kernel = kernel or FragmentationKernel.from_config(config.kernel, numerics.n_quad)
    u = initial if initial is not None else InitialLaw.from_config(config.initial).density(
        config.n_cells, numerics.x_max)
    r = float(config.initial.resource)

    horizon = config.experiment.horizon
    n_steps = max(int(round(horizon / numerics.dt_pde)), 1)
    dt = horizon / n_steps
    courant = check_cfl(c.bounds.zeta_sup, dt, u.dx)
    scheme = numerics.pde_scheme
    cutoff = numerics.x_max / 2.0

    states = [u]
    resources = [r]
    mass = [u.mass()]
    moment1 = [u.moment(1)]
    tails = [u.mass_beyond(cutoff)]
    clipped_series = [0.0]

    logger.info(f"🔄 PDE solve ({scheme}): {u.n} cells, {n_steps} steps, courant {courant:.3g}")
    for step in range(1, n_steps + 1):
        values, r, clipped = _advance(u, r, c, kernel, dt, scheme)
        u = u.with_values(values)
        tail = u.mass_beyond(cutoff)
        total = u.mass()
        if total > 0 and tail > numerics.truncation_tol * total:
            logger.error(f"❌ Truncation tail {tail:.3g} at t={step * dt:.4g}")
            raise TruncationTolExceeded(
                f"mass {tail:.3g} beyond x_max/2 at t={step * dt:.4g} exceeds "
                f"{numerics.truncation_tol} of total {total:.3g}; enlarge numerics.x_max"
            )
        states.append(u)
        resources.append(r)
        mass.append(total)
        moment1.append(u.moment(1))
        tails.append(tail)
        clipped_series.append(clipped)
        if step % max(n_steps // 10, 1) == 0:
            logger.debug(f"PDE t={step * dt:.4g} mass={total:.6g} R={r:.6g}")

    logger.info(f"✅ PDE solve done: mass {mass[-1]:.6g}, R_T {r:.6g}")
    return PdeTrajectory(
        times=np.arange(n_steps + 1) * dt,
        states=states,
        resources=np.array(resources),
        diagnostics={
            "mass": np.array(mass),
            "moment1": np.array(moment1),
            "tail_mass": np.array(tails),
            "clipped_mass": np.array(clipped_series),
        },
        scheme=scheme,
        dt=dt,
        metadata={"n_cells": u.n, "courant": courant, "boundary_note": BOUNDARY_NOTE},
    )


# ======================
# Dual solve and resource bracket
# ======================

def _generator_matrix(zeta, diff, dx):
    """zeta f' (upwind) + D f'' (centered), reflecting at 0 and zero slope at x_max."""
    n = len(zeta)
    forward = np.maximum(zeta, 0.0) / dx
    backward = -np.minimum(zeta, 0.0) / dx
    curvature = diff / dx ** 2
    upper = forward + curvature
    lower = backward + curvature
    main = -(upper + lower)
    # mirror ghosts: f_{-1} = f_0 and f_n = f_{n-1}
    main[0] += lower[0]
    main[-1] += upper[-1]
    return sparse.diags([lower[1:], main, upper[:-1]], [-1, 0, 1], format="csr")


def solve_backward_kolmogorov(phi, rpath, c, x_max, dx, s, t, dt):
    """f_s for d_s f + zeta f' + D f'' = 0 with f_t = phi, implicit in time."""
    if t <= s:
        raise ValueError(f"need s < t, got s={s}, t={t}")
    n = int(round(x_max / dx))
    grid = GridFunction.zeros(n, x_max)
    x = grid.centers
    values = np.asarray(phi(x), dtype=float) * np.ones(n)
    n_steps = max(int(math.ceil((t - s) / dt - 1e-9)), 1)
    h = (t - s) / n_steps
    identity = sparse.identity(n, format="csr")

    for k in range(n_steps):
        time = t - (k + 1) * h
        r = rpath.at(time)
        generator = _generator_matrix(c.zeta_at(x, r), c.diff_at(x, r), grid.dx)
        values = spsolve((identity - h * generator).tocsc(), values)
    return grid.with_values(values)


def resource_bracket(c, r0, horizon, sup_mass):
    """(R0 e^{-(1+rho) T}, r_in v R0) with rho = Lip_r(chi) * sup mass."""
    rho = c.consumption_lipschitz() * sup_mass
    return r0 * math.exp(-(1.0 + rho) * horizon), max(c.r_in, r0)
