# lab/services/coefficients.py
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

logger = logging.getLogger(__name__)

# Relative slack when comparing grid-measured quantities to declared bounds
BOUND_TOLERANCE = 1e-6
ZERO_TOLERANCE = 1e-12
# Max growth of a finite-difference derivative under grid refinement
DERIVATIVE_REFINEMENT_RATIO = 1.25


def saturating(x, amplitude, half_sat):
    """Bounded smooth factor 1 + a*x/(theta + x), values in [1, 1 + a]."""
    x = np.asarray(x, dtype=float)
    return 1.0 + amplitude * x / (half_sat + x)


def saturating_dx(x, amplitude, half_sat):
    x = np.asarray(x, dtype=float)
    return amplitude * half_sat / (half_sat + x) ** 2


def _broadcast(value, *args):
    shape = np.broadcast(*[np.asarray(a) for a in args]).shape
    return np.broadcast_to(np.asarray(value, dtype=float), shape)


@dataclass(frozen=True)
class CoefficientBounds:
    """Declared sup-norms and Lipschitz constants on [0, x_max] x [0, r_bar].

    Lipschitz constants are split per variable:
    |g(x, r) - g(y, s)| <= lip_x * |x - y| + lip_r * |r - s|.
    """
    zeta_sup: float
    diff_sup: float
    birth_sup: float
    death_sup: float
    chi_sup: float
    zeta_lip: tuple = (0.0, 0.0)
    diff_lip: tuple = (0.0, 0.0)
    birth_lip: tuple = (0.0, 0.0)
    death_lip: float = 0.0
    chi_lip: tuple = (0.0, 0.0)
    zeta_dx_sup: float = 0.0

    def sup(self, name):
        return getattr(self, f"{name}_sup")

    def lipschitz(self, name):
        value = getattr(self, f"{name}_lip")
        if name == "death":
            return (value, 0.0)
        return tuple(value)


@dataclass(frozen=True)
class CoefficientSet:
    """The model functions zeta, D, b, d, chi plus the inflow r_in.

    All callables take numpy arrays and broadcast; ``death`` depends on the
    trait only. ``zeta_dx``/``diff_dx`` are analytic x-derivatives, present
    only for families that have them.
    """
    zeta: Callable
    diff: Callable
    birth: Callable
    death: Callable
    chi: Callable
    r_in: float
    bounds: CoefficientBounds
    x_max: float
    r_bar: float
    family: str = "custom"
    params: dict = field(default_factory=dict)
    zeta_dx: Optional[Callable] = None
    diff_dx: Optional[Callable] = None
    degenerate_at_zero: bool = True

    @property
    def differentiable(self):
        return self.zeta_dx is not None and self.diff_dx is not None

    def zeta_at(self, x, r):
        return _broadcast(self.zeta(x, r), x, r)

    def diff_at(self, x, r):
        return _broadcast(self.diff(x, r), x, r)

    def birth_at(self, x, r):
        return _broadcast(self.birth(x, r), x, r)

    def death_at(self, x):
        return _broadcast(self.death(x), x)

    def chi_at(self, x, r):
        return _broadcast(self.chi(x, r), x, r)

    def zeta_dx_at(self, x, r):
        return _broadcast(self.zeta_dx(x, r), x, r)

    def diff_dx_at(self, x, r):
        return _broadcast(self.diff_dx(x, r), x, r)

    def consumption_lipschitz(self):
        """Lipschitz constant of chi in the resource variable (rho = this * mass)."""
        return self.bounds.lipschitz("chi")[1]


# ======================
# Preset families
# ======================

def _zeta_family(block, x_max, r_bar):
    if block.family != "affine":
        raise ValueError(f"Unknown drift family: {block.family}")
    z0, z1, z2, theta = block.zeta0, block.zeta1, block.zeta2, block.theta

    def zeta(x, r):
        return z0 + z1 * np.asarray(r, dtype=float) + z2 * np.asarray(x, dtype=float) / (theta + np.asarray(x, dtype=float))

    def zeta_dx(x, r):
        return _broadcast(z2 * theta / (theta + np.asarray(x, dtype=float)) ** 2, x, r)

    sup = max(abs(z0), abs(z0 + z1 * r_bar)) + z2 * x_max / (theta + x_max)
    return zeta, zeta_dx, sup, (z2 / theta, abs(z1)), z2 / theta


def _diffusion_family(block, x_max, r_bar):
    if block.family == "multiplicative":
        d0, d1 = block.delta0, block.delta1

        def diff(x, r):
            return d0 * np.asarray(x, dtype=float) * (d1 + np.asarray(r, dtype=float))

        def diff_dx(x, r):
            return _broadcast(d0 * (d1 + np.asarray(r, dtype=float)), x, r)

        return diff, diff_dx, d0 * x_max * (d1 + r_bar), (d0 * (d1 + r_bar), d0 * x_max)

    if block.family == "resource_free":
        d0, amp, theta = block.delta0, block.amplitude, block.theta

        def diff(x, r):
            x = np.asarray(x, dtype=float)
            return _broadcast(d0 * x * saturating(x, amp, theta), x, r)

        def diff_dx(x, r):
            x = np.asarray(x, dtype=float)
            return _broadcast(d0 * (saturating(x, amp, theta) + x * saturating_dx(x, amp, theta)), x, r)

        sat_max = saturating(x_max, amp, theta)
        # x * theta / (theta + x)^2 peaks at 1/4
        return diff, diff_dx, d0 * x_max * sat_max, (d0 * (1.0 + amp + amp / 4.0), 0.0)

    raise ValueError(f"Unknown diffusion family: {block.family}")


def _uptake_family(block, x_max, r_bar, rate):
    """Shared by birth and consumption: Monod, constant, or none."""
    amp = getattr(block, "amplitude", 0.0)
    theta = getattr(block, "theta", 1.0)
    sat_max = float(saturating(x_max, amp, theta))
    sat_lip = amp / theta

    if block.family == "monod":
        kappa = block.kappa

        def fn(x, r):
            r = np.asarray(r, dtype=float)
            return rate * r / (kappa + r) * saturating(x, amp, theta)

        monod_max = r_bar / (kappa + r_bar)
        return fn, rate * monod_max * sat_max, (rate * monod_max * sat_lip, rate * sat_max / kappa)

    if block.family == "constant":
        def fn(x, r):
            return _broadcast(rate * saturating(x, amp, theta), x, r)

        return fn, rate * sat_max, (rate * sat_lip, 0.0)

    if block.family == "none":
        def fn(x, r):
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(r)).shape)

        return fn, 0.0, (0.0, 0.0)

    raise ValueError(f"Unknown rate family: {block.family}")


def _death_family(block, x_max):
    if block.family != "constant_plus_bounded":
        raise ValueError(f"Unknown death family: {block.family}")
    d0, d1, theta = block.d0, block.d1, block.theta

    def death(x):
        x = np.asarray(x, dtype=float)
        return d0 + d1 * x / (theta + x)

    return death, d0 + d1 * x_max / (theta + x_max), d1 / theta


def build_coefficients(model, x_max, r_bar):
    """Build a CoefficientSet from the ``model`` section of a run config."""
    zeta, zeta_dx, zeta_sup, zeta_lip, zeta_dx_sup = _zeta_family(model.zeta, x_max, r_bar)
    diff, diff_dx, diff_sup, diff_lip = _diffusion_family(model.diffusion, x_max, r_bar)
    birth, birth_sup, birth_lip = _uptake_family(model.birth, x_max, r_bar, model.birth.b0)
    chi_rate = getattr(model.consumption, "chi0", 0.0)
    chi, chi_sup, chi_lip = _uptake_family(model.consumption, x_max, r_bar, chi_rate)
    death, death_sup, death_lip = _death_family(model.death, x_max)

    bounds = CoefficientBounds(
        zeta_sup=zeta_sup, diff_sup=diff_sup, birth_sup=birth_sup,
        death_sup=death_sup, chi_sup=chi_sup,
        zeta_lip=zeta_lip, diff_lip=diff_lip, birth_lip=birth_lip,
        death_lip=death_lip, chi_lip=chi_lip, zeta_dx_sup=zeta_dx_sup,
    )
    family = "/".join([
        model.zeta.family, model.diffusion.family, model.birth.family,
        model.death.family, model.consumption.family,
    ])
    coefficients = CoefficientSet(
        zeta=zeta, diff=diff, birth=birth, death=death, chi=chi,
        r_in=model.r_in, bounds=bounds, x_max=x_max, r_bar=r_bar,
        family=family, params=model.model_dump() if hasattr(model, "model_dump") else {},
        zeta_dx=zeta_dx, diff_dx=diff_dx,
    )
    logger.debug(f"Built coefficients {family} on [0, {x_max}] x [0, {r_bar}]")
    return coefficients


def custom_coefficients(zeta, diff, birth, death, chi, r_in, x_max, r_bar,
                        grid_n=401, zeta_dx=None, diff_dx=None, margin=0.01):
    """CoefficientSet from plain callables, bounds measured on a grid.

    Declared bounds are the measured ones inflated by ``margin``, so a
    later validation on the same box only checks the structural clauses.
    """
    xs = np.linspace(0.0, x_max, grid_n)
    rs = np.linspace(0.0, r_bar, grid_n)
    X, R = np.meshgrid(xs, rs, indexing="ij")
    inflate = 1.0 + margin

    def measure(fn, with_r=True):
        values = _broadcast(fn(X, R), X, R) if with_r else _broadcast(fn(xs), xs)
        sup = float(np.max(np.abs(values)))
        if with_r:
            lip_x = float(np.max(np.abs(np.diff(values, axis=0)))) / (xs[1] - xs[0])
            lip_r = float(np.max(np.abs(np.diff(values, axis=1)))) / (rs[1] - rs[0]) if r_bar > 0 else 0.0
            return sup * inflate, (lip_x * inflate, lip_r * inflate)
        lip = float(np.max(np.abs(np.diff(values)))) / (xs[1] - xs[0])
        return sup * inflate, lip * inflate

    zeta_sup, zeta_lip = measure(zeta)
    diff_sup, diff_lip = measure(diff)
    birth_sup, birth_lip = measure(birth)
    chi_sup, chi_lip = measure(chi)
    death_sup, death_lip = measure(death, with_r=False)
    zeta_dx_sup = 0.0
    if zeta_dx is not None:
        zeta_dx_sup = float(np.max(np.abs(_broadcast(zeta_dx(X, R), X, R)))) * inflate

    bounds = CoefficientBounds(
        zeta_sup=zeta_sup, diff_sup=diff_sup, birth_sup=birth_sup,
        death_sup=death_sup, chi_sup=chi_sup,
        zeta_lip=zeta_lip, diff_lip=diff_lip, birth_lip=birth_lip,
        death_lip=death_lip, chi_lip=chi_lip, zeta_dx_sup=zeta_dx_sup,
    )
    return CoefficientSet(
        zeta=zeta, diff=diff, birth=birth, death=death, chi=chi,
        r_in=r_in, bounds=bounds, x_max=x_max, r_bar=r_bar,
        zeta_dx=zeta_dx, diff_dx=diff_dx,
    )


# ======================
# Validation
# ======================

@dataclass(frozen=True)
class ValidationEntry:
    assumption: str
    passed: bool
    witness: Optional[tuple] = None
    magnitude: float = 0.0
    severity: str = "error"
    detail: str = ""

    def as_dict(self):
        return {
            "assumption": self.assumption,
            "passed": self.passed,
            "witness": list(self.witness) if self.witness is not None else None,
            "magnitude": self.magnitude,
            "severity": self.severity,
            "detail": self.detail,
        }


@dataclass
class ValidationReport:
    entries: list
    c_lower: float = 0.0

    @property
    def passed(self):
        return all(e.passed for e in self.entries if e.severity == "error")

    def failures(self):
        return [e for e in self.entries if not e.passed and e.severity == "error"]

    def warnings(self):
        return [e for e in self.entries if not e.passed and e.severity == "warning"]

    def entry(self, assumption):
        for e in self.entries:
            if e.assumption == assumption:
                return e
        raise KeyError(assumption)

    def as_dict(self):
        return {
            "passed": self.passed,
            "c_lower": self.c_lower,
            "entries": [e.as_dict() for e in self.entries],
        }


class _Grid:
    def __init__(self, x_max, r_bar, n):
        self.xs = np.linspace(0.0, x_max, n)
        self.rs = np.linspace(0.0, r_bar, n)
        self.X, self.R = np.meshgrid(self.xs, self.rs, indexing="ij")
        self.dx = self.xs[1] - self.xs[0]
        self.dr = self.rs[1] - self.rs[0]

    def point(self, index):
        i, j = np.unravel_index(index, self.X.shape)
        return (float(self.xs[i]), float(self.rs[j]))


def _values(c, name, grid):
    if name == "death":
        return _broadcast(c.death_at(grid.X[:, :1]), grid.X)
    return getattr(c, f"{name}_at")(grid.X, grid.R)


def _lipschitz_entry(c, name, grid):
    values = _values(c, name, grid)
    declared_x, declared_r = c.bounds.lipschitz(name)
    slopes_x = np.abs(np.diff(values, axis=0)) / grid.dx
    worst_x = float(slopes_x.max())
    worst_r = 0.0
    if name != "death" and grid.dr > 0:
        worst_r = float((np.abs(np.diff(values, axis=1)) / grid.dr).max())
    ok_x = worst_x <= declared_x * (1 + BOUND_TOLERANCE) + ZERO_TOLERANCE
    ok_r = worst_r <= declared_r * (1 + BOUND_TOLERANCE) + ZERO_TOLERANCE
    witness = None
    if not ok_x:
        i, j = np.unravel_index(int(np.argmax(slopes_x)), slopes_x.shape)
        witness = (float(grid.xs[i]), float(grid.rs[j]))
    elif not ok_r:
        slopes_r = np.abs(np.diff(values, axis=1)) / grid.dr
        i, j = np.unravel_index(int(np.argmax(slopes_r)), slopes_r.shape)
        witness = (float(grid.xs[i]), float(grid.rs[j]))
    return ValidationEntry(
        assumption=f"lipschitz.{name}",
        passed=ok_x and ok_r,
        witness=witness,
        magnitude=max(worst_x - declared_x, worst_r - declared_r, 0.0),
        detail=f"measured ({worst_x:.4g}, {worst_r:.4g}) declared ({declared_x:.4g}, {declared_r:.4g})",
    )


def _bounded_entry(c, name, grid):
    values = _values(c, name, grid)
    declared = c.bounds.sup(name)
    low = float(values.min())
    high = float(values.max())
    if low < -ZERO_TOLERANCE:
        return ValidationEntry(f"bounded.{name}", False, grid.point(int(np.argmin(values))),
                               -low, detail="negative rate")
    if high > declared * (1 + BOUND_TOLERANCE) + ZERO_TOLERANCE:
        return ValidationEntry(f"bounded.{name}", False, grid.point(int(np.argmax(values))),
                               high - declared, detail=f"exceeds declared sup {declared:.4g}")
    return ValidationEntry(f"bounded.{name}", True, magnitude=high,
                           detail=f"sup {high:.6g} declared {declared:.6g}")


def _finite_difference_derivatives(fn, x_max, r_bar, n):
    grid = _Grid(x_max, r_bar, n)
    values = fn(grid.X, grid.R)
    derivs = [np.abs(np.diff(values, axis=0)) / grid.dx,
              np.abs(np.diff(values, n=2, axis=0)) / grid.dx ** 2]
    if grid.dr > 0:
        derivs += [np.abs(np.diff(values, axis=1)) / grid.dr,
                   np.abs(np.diff(values, n=2, axis=1)) / grid.dr ** 2,
                   np.abs(np.diff(np.diff(values, axis=0), axis=1)) / (grid.dx * grid.dr)]
    return [float(d.max()) if d.size else 0.0 for d in derivs], grid


def _derivative_entry(c, name, x_max, r_bar, n):
    fn = getattr(c, f"{name}_at")
    coarse, _ = _finite_difference_derivatives(fn, x_max, r_bar, n)
    fine, fine_grid = _finite_difference_derivatives(fn, x_max, r_bar, 2 * n - 1)
    ratios = [f / (co + ZERO_TOLERANCE) for f, co in zip(fine, coarse)]
    blowups = [f > DERIVATIVE_REFINEMENT_RATIO * co + 1e-9 for f, co in zip(fine, coarse)]
    passed = not any(blowups) and all(np.isfinite(fine))
    witness = None
    if not passed:
        # derivative blow-up concentrates at the trait origin for degenerate shapes
        witness = (0.0, float(fine_grid.rs[0]))
    return ValidationEntry(
        assumption=f"derivatives.{name}",
        passed=passed,
        witness=witness,
        magnitude=max(ratios) if ratios else 0.0,
        detail="finite-difference derivatives stable under refinement" if passed
        else "finite-difference derivative grows under refinement",
    )


def validate_coefficients(c, x_max, r_bar, grid_n=201):
    """Audit regularity, boundary behaviour and lower bounds on a uniform (x, r) grid."""
    if x_max <= 0 or r_bar <= 0 or grid_n < 2:
        raise ValueError("validate_coefficients needs x_max > 0, r_bar > 0 and grid_n >= 2")

    grid = _Grid(x_max, r_bar, grid_n)
    entries = []

    # Lipschitz, bounded rates, boundary behaviour
    for name in ("zeta", "diff", "birth", "death", "chi"):
        entries.append(_lipschitz_entry(c, name, grid))
    for name in ("birth", "death", "chi"):
        entries.append(_bounded_entry(c, name, grid))

    diff_values = c.diff_at(grid.X, grid.R)
    low = float(diff_values.min())
    entries.append(ValidationEntry(
        "nonnegative.diff", low >= -ZERO_TOLERANCE,
        None if low >= -ZERO_TOLERANCE else grid.point(int(np.argmin(diff_values))),
        max(-low, 0.0),
    ))

    zeta_origin = c.zeta_at(np.zeros_like(grid.rs), grid.rs)
    worst = int(np.argmin(zeta_origin))
    entries.append(ValidationEntry(
        "drift_positive_at_origin", bool(zeta_origin[worst] > 0),
        None if zeta_origin[worst] > 0 else (0.0, float(grid.rs[worst])),
        float(zeta_origin[worst]),
    ))

    diff_origin = np.abs(c.diff_at(np.zeros_like(grid.rs), grid.rs))
    worst = int(np.argmax(diff_origin))
    ok = bool(diff_origin[worst] <= ZERO_TOLERANCE)
    entries.append(ValidationEntry(
        "diffusion_zero_at_origin", ok,
        None if ok else (0.0, float(grid.rs[worst])),
        float(diff_origin[worst]),
    ))

    chi_empty = np.abs(c.chi_at(grid.xs, np.zeros_like(grid.xs)))
    worst = int(np.argmax(chi_empty))
    ok = bool(chi_empty[worst] <= ZERO_TOLERANCE)
    entries.append(ValidationEntry(
        "consumption_zero_without_resource", ok,
        None if ok else (float(grid.xs[worst]), 0.0),
        float(chi_empty[worst]),
    ))

    # C2 regularity via refinement-stable finite differences
    for name in ("zeta", "diff", "birth", "chi"):
        entries.append(_derivative_entry(c, name, x_max, r_bar, grid_n))

    interior = diff_values[1:, 1:]
    low = float(interior.min()) if interior.size else 0.0
    ok = low > 0
    witness = None
    if not ok:
        i, j = np.unravel_index(int(np.argmin(interior)), interior.shape)
        witness = (float(grid.xs[i + 1]), float(grid.rs[j + 1]))
    entries.append(ValidationEntry("diffusion_positive_interior", ok, witness, low))

    # zeta >= c and D >= c*x, report the largest feasible c
    zeta_values = c.zeta_at(grid.X, grid.R)
    zeta_min = float(zeta_values.min())
    ratio = diff_values[1:, :] / grid.X[1:, :]
    ratio_min = float(ratio.min()) if ratio.size else 0.0
    c_lower = min(zeta_min, ratio_min)
    ok = c_lower > 0
    witness = None
    if not ok:
        if zeta_min <= ratio_min:
            witness = grid.point(int(np.argmin(zeta_values)))
        else:
            i, j = np.unravel_index(int(np.argmin(ratio)), ratio.shape)
            witness = (float(grid.xs[i + 1]), float(grid.rs[j]))
    entries.append(ValidationEntry("lower_bound", ok, witness, c_lower,
                                   detail=f"c_lower = {c_lower:.6g}"))

    death_values = c.death_at(grid.xs)
    worst = int(np.argmin(death_values))
    ok = bool(death_values[worst] >= 1.0 - ZERO_TOLERANCE)
    entries.append(ValidationEntry(
        "death_at_least_one", ok,
        None if ok else (float(grid.xs[worst]), 0.0),
        float(death_values[worst]), severity="warning",
    ))

    report = ValidationReport(entries=entries, c_lower=max(c_lower, 0.0))
    if report.passed:
        logger.info(f"✅ Coefficients {c.family} pass validation, c_lower={report.c_lower:.4g}")
    else:
        names = ", ".join(e.assumption for e in report.failures())
        logger.warning(f"⚠️ Coefficients {c.family} fail: {names}")
    return report
