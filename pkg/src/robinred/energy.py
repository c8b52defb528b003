"""Discrete energy functional: value, gradient, Hessian action.

phi(u) = 0.5 u^T G u - int F(z, u_h) dz on coefficient vectors.  The
gradient is the Euclidean coefficient representative G u - load(u);
consumers pair it with test vectors as h^T grad.  Block projections of
the gradient use the M-inner product throughout, so the coordinates of
the projected gradient on an M-orthonormal basis Y are simply Y^T grad.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .fem import Mesh, SymmetricForm
from .reactions import Reaction, nemytskii_energy, nemytskii_jacobian, nemytskii_load


@dataclass
class EnergyContext:
    G: SymmetricForm
    M: SymmetricForm
    A: SymmetricForm
    mesh: Mesh
    reaction: Reaction

    _m_factor: object = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.G.n == self.M.n == self.A.n == self.mesh.n_nodes):
            raise ValueError("form orders and mesh size must match")

    def m_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.M.quad(u), 0.0)))

    def a_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.A.quad(u), 0.0)))

    def m_solve(self, r: np.ndarray) -> np.ndarray:
        if self._m_factor is None:
            self._m_factor = spla.splu(self.M.matrix.tocsc())
        return self._m_factor.solve(r)

    def dual_norm(self, r: np.ndarray) -> float:
        """M^{-1}-weighted dual norm sqrt(r^T M^{-1} r)."""
        return float(np.sqrt(max(r @ self.m_solve(r), 0.0)))


def phi(ctx: EnergyContext, u: np.ndarray) -> float:
    """0.5 gamma(u) - int F(z, u_h)."""
    return 0.5 * ctx.G.quad(u) - nemytskii_energy(ctx.mesh, ctx.reaction, u)


def grad_phi(ctx: EnergyContext, u: np.ndarray) -> np.ndarray:
    """G u - load(u), the coefficient representative of the derivative."""
    return ctx.G.dot(u) - nemytskii_load(ctx.mesh, ctx.reaction, u)


def hess_phi_action(ctx: EnergyContext, u: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(G - J(u)) h with J the Nemytskii jacobian at u."""
    return ctx.G.dot(h) - nemytskii_jacobian(ctx.mesh, ctx.reaction, u).dot(h)


def hess_phi(ctx: EnergyContext, u: np.ndarray):
    """Sparse Hessian G - J(u); useful for restricted solves and polishing."""
    return ctx.G.matrix - nemytskii_jacobian(ctx.mesh, ctx.reaction, u).matrix


def residual_norm(ctx: EnergyContext, u: np.ndarray) -> float:
    """Weak residual ||G u - load(u)|| in the M^{-1}-dual norm."""
    return ctx.dual_norm(grad_phi(ctx, u))
