# lab/services/kernels.py
import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)

VARIANTS = ("dirac_half", "uniform", "symmetric_beta", "discrete")
ALPHA_CLIP = 1e-12


def _symmetrize(nodes, weights):
    """Merge a node set with its reflection, each copy carrying half the weight."""
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    # 1 - u is exact for u in [1/2, 1), so the pair is closed under reflection bit for bit
    upper = np.maximum(nodes, 1.0 - nodes)
    merged_nodes = np.concatenate([1.0 - upper, upper])
    merged_weights = np.concatenate([weights, weights]) / 2.0
    merged_weights = merged_weights / merged_weights.sum()
    order = np.argsort(merged_nodes, kind="stable")
    return merged_nodes[order], merged_weights[order]


@dataclass(frozen=True, eq=False)
class FragmentationKernel:
    """Symmetric probability measure M(d alpha) on (0, 1) with quadrature access.

    ``nodes``/``weights`` integrate against M; the node set is closed under
    alpha -> 1 - alpha so symmetric identities hold exactly.
    """
    variant: str
    nodes: np.ndarray
    weights: np.ndarray
    shape: float = 1.0

    @property
    def n_quad(self):
        return len(self.nodes)

    @classmethod
    def dirac_half(cls):
        return cls("dirac_half", np.array([0.5]), np.array([1.0]))

    @classmethod
    def uniform(cls, n_quad=16):
        t, w = special.roots_legendre(max(n_quad // 2, 1))
        nodes, weights = _symmetrize((t + 1.0) / 2.0, w)
        return cls("uniform", nodes, weights)

    @classmethod
    def symmetric_beta(cls, shape, n_quad=16):
        if shape <= 0:
            raise ValueError(f"Beta shape must be positive, got {shape}")
        # Gauss-Jacobi weight (1-t)^(a-1) (1+t)^(a-1) is Beta(a, a) on (0, 1)
        t, w = special.roots_jacobi(max(n_quad // 2, 1), shape - 1.0, shape - 1.0)
        nodes, weights = _symmetrize((t + 1.0) / 2.0, w)
        return cls("symmetric_beta", nodes, weights, shape=float(shape))

    @classmethod
    def discrete(cls, atoms):
        atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
        alphas, masses = atoms[:, 0], atoms[:, 1]
        if np.any(alphas <= 0) or np.any(alphas >= 1):
            raise ValueError("Discrete kernel atoms must lie strictly inside (0, 1)")
        if np.any(masses < 0) or masses.sum() <= 0:
            raise ValueError("Discrete kernel weights must be non-negative with positive total")
        nodes, weights = _symmetrize(alphas, masses)
        return cls("discrete", nodes, weights)

    @classmethod
    def from_config(cls, section, n_quad=16):
        if section.variant == "dirac_half":
            kernel = cls.dirac_half()
        elif section.variant == "uniform":
            kernel = cls.uniform(n_quad)
        elif section.variant == "symmetric_beta":
            kernel = cls.symmetric_beta(section.shape, n_quad)
        elif section.variant == "discrete":
            kernel = cls.discrete(section.atoms)
        else:
            raise ValueError(f"Unknown kernel variant: {section.variant}")
        logger.debug(f"Kernel {kernel.variant} with {kernel.n_quad} nodes")
        return kernel

    def integrate(self, g):
        """Sum of w_q g(alpha_q)."""
        return float(np.dot(self.weights, g(self.nodes)))

    def sample(self, rng, size):
        """Draws from M itself (not from the quadrature rule)."""
        if self.variant == "dirac_half":
            alphas = np.full(size, 0.5)
        elif self.variant == "uniform":
            alphas = rng.random(size)
        elif self.variant == "symmetric_beta":
            alphas = rng.beta(self.shape, self.shape, size)
        else:
            alphas = rng.choice(self.nodes, size=size, p=self.weights)
        return np.clip(alphas, ALPHA_CLIP, 1.0 - ALPHA_CLIP)

    def describe(self):
        return {"variant": self.variant, "n_quad": self.n_quad, "shape": self.shape}
