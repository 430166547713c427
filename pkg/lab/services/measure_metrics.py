# lab/services/measure_metrics.py
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

CERTIFICATION_SLACK = 1e-9
CERTIFICATION_X_MAX = 64.0
CERTIFICATION_POINTS = 64_001

RAMP_CENTERS = (0.5, 0.25, 1.0, 2.0, 4.0, 8.0)
RAMP_WIDTHS = (0.5, 0.25, 1.0, 2.0)


class EmpiricalMeasure:
    """(1/K) sum of Dirac masses at the support points."""

    def __init__(self, points, capacity):
        self.points = np.asarray(points, dtype=float)
        self.capacity = int(capacity)
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")

    def integrate(self, phi):
        if len(self.points) == 0:
            return 0.0
        return float(np.asarray(phi(self.points), dtype=float).sum()) / self.capacity

    def mass(self):
        return len(self.points) / self.capacity


@dataclass(frozen=True)
class TestFunction:
    name: str
    fn: Callable
    declared_norm: float

    def __call__(self, x):
        return np.broadcast_to(np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float),
                               np.shape(x))


def _constant():
    return TestFunction("const", lambda x: np.full_like(x, 0.5), 0.5)


def _ramp(a, w):
    # sup w/(1+w) plus Lipschitz 1/(1+w) sums to one
    scale = w / (1.0 + w)
    return TestFunction(f"ramp(a={a:g},w={w:g})",
                        lambda x: scale * np.clip((x - a) / w, -1.0, 1.0), 1.0)


def _cosine(k):
    return TestFunction(f"cos(k={k:.4g})", lambda x: np.cos(k * x) / (1.0 + k), 1.0)


def _exponential(lam):
    return TestFunction(f"exp(lambda={lam:.4g})", lambda x: np.exp(-lam * x) / (1.0 + lam), 1.0)


class TestDictionary:
    """Finite family of functions with ||phi||_inf + ||phi||_Lip <= 1, each checked on a grid."""

    def __init__(self, size=64):
        if size < 2:
            raise ValueError("dictionary needs at least two members")
        members = [_constant()]
        members += [_ramp(a, w) for a in RAMP_CENTERS for w in RAMP_WIDTHS]
        rest = max(size - len(members), 0)
        n_cos = (rest + 1) // 2
        n_exp = rest - n_cos
        if n_cos:
            members += [_cosine(k) for k in np.geomspace(0.25, 16.0, n_cos)]
        if n_exp:
            members += [_exponential(lam) for lam in np.geomspace(0.05, 20.0, n_exp)]
        self.members = members[:size]
        self.certification_grid = np.linspace(0.0, CERTIFICATION_X_MAX, CERTIFICATION_POINTS)
        self._certify()

    def _certify(self):
        xs = self.certification_grid
        step = xs[1] - xs[0]
        for member in self.members:
            values = member(xs)
            norm = float(np.abs(values).max() + np.abs(np.diff(values)).max() / step)
            if norm > member.declared_norm + CERTIFICATION_SLACK:
                raise ValueError(f"test function {member.name} has norm {norm:.6g} above "
                                 f"its declared {member.declared_norm:.6g}")
        logger.debug(f"Certified {len(self.members)} test functions on [0, {CERTIFICATION_X_MAX}]")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def discrepancies(self, mu1, mu2):
        """<mu1 - mu2, phi> for every member, in member order."""
        return np.array([mu1.integrate(phi) - mu2.integrate(phi) for phi in self.members])

    def describe(self):
        return {
            "size": len(self.members),
            "members": [m.name for m in self.members],
            "certification_grid": [0.0, CERTIFICATION_X_MAX, CERTIFICATION_POINTS],
        }


def bl_distance(mu1, mu2, dictionary):
    """Largest |<mu1 - mu2, phi>| over the dictionary; a lower bound of the BL distance."""
    return float(np.abs(dictionary.discrepancies(mu1, mu2)).max())


def moments(mu, p):
    """<mu, 1 + x^p>, with x^0 read as 1."""
    return mu.integrate(lambda x: 1.0 + np.power(x, p))


def smooth_ramp(x):
    """C2 bridge: 0 on [0, 1/2], 1 on [1, inf), quintic smoothstep between."""
    t = np.clip((np.asarray(x, dtype=float) - 0.5) / 0.5, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t ** 2)


def tail_mass(mu, n):
    """<mu, f_n> with f_n(x) = f(x / n)."""
    if n <= 0:
        raise ValueError("threshold scale must be positive")
    return mu.integrate(lambda x: smooth_ramp(x / n))
