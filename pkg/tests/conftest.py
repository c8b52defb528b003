"""Shared fixtures: assembled reference problems and closed-form oracles."""

import functools
from types import SimpleNamespace

import numpy as np
import pytest

from robinred.energy import EnergyContext
from robinred.fem import (CoefficientField, assemble_boundary, assemble_mass,
                          assemble_potential, assemble_stiffness,
                          build_interval_mesh, build_rectangle_mesh,
                          compose_gamma, compose_h1)
from robinred.pipeline import make_reaction
from robinred.reactions import LinearReaction, SpectralRefs
from robinred.reduction import certify_reduction
from robinred.spectrum import solve_pencil
from robinred.subspaces import split

PI = np.pi


@functools.lru_cache(maxsize=None)
def assembled_interval(a: float, b: float, n: int, xi_const: float,
                       beta_const: float) -> SimpleNamespace:
    mesh = build_interval_mesh(a, b, n)
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh)
    Xi = assemble_potential(mesh, CoefficientField.constant(xi_const))
    B = assemble_boundary(mesh, CoefficientField.constant(beta_const))
    G = compose_gamma(K, Xi, B)
    A = compose_h1(M, K)
    decomp = solve_pencil(G, M, k=n)
    return SimpleNamespace(mesh=mesh, M=M, K=K, Xi=Xi, B=B, G=G, A=A,
                           decomp=decomp)


@functools.lru_cache(maxsize=None)
def reference_setup(n: int = 129, l: int = 3, kind: str = "model",
                    slope: float = 0.0) -> SimpleNamespace:
    """Neumann interval (0, pi) with xi = -0.5 and the configured reaction."""
    base = assembled_interval(0.0, PI, n, -0.5, 0.0)
    refs = SpectralRefs.from_decomposition(base.decomp, 1, l)
    if kind == "model":
        from robinred.reactions import ModelReaction
        a_s = 0.3 * (refs.lam_m1 - refs.lam_m)
        reaction = ModelReaction(refs.lam_m, refs.lam_m1, refs.lam_lm1,
                                 refs.lam_l, a_s=a_s, delta=0.1, refs=refs)
    else:
        reaction = LinearReaction(slope)
        reaction.spectral_refs = refs
    spl = split(base.decomp, base.M, 1, l)
    ectx = EnergyContext(base.G, base.M, base.A, base.mesh, reaction)
    rctx = certify_reduction(ectx, spl, base.decomp)
    return SimpleNamespace(refs=refs, reaction=reaction, split=spl, ectx=ectx,
                           rctx=rctx, **vars(base))


@pytest.fixture(scope="session")
def neumann_pi():
    """Plain Neumann Laplacian on (0, pi), n=129, complete decomposition."""
    return assembled_interval(0.0, PI, 129, 0.0, 0.0)


@pytest.fixture(scope="session")
def reference():
    """Reference resonant problem, degenerate-branch flavour (l=3)."""
    return reference_setup(129, 3)


@pytest.fixture(scope="session")
def reference_l4():
    """Minimizer-branch flavour: near-zero slope pinned two clusters up."""
    return reference_setup(129, 4)


def robin_interval_eigenvalues(count: int, beta: float = 1.0) -> np.ndarray:
    """Oracle for -u'' = lambda u on (0,1), u' = beta*u at 0, u' = -beta*u at 1.

    Separation of variables gives lambda = w^2 with w a positive root of
    (beta^2 - w^2) sin w + 2 beta w cos w = 0; roots are isolated by a
    fine scan and polished by bisection.
    """
    def h(w):
        return (beta**2 - w * w) * np.sin(w) + 2.0 * beta * w * np.cos(w)

    roots = []
    grid = np.linspace(1e-9, (count + 2) * np.pi, 200001)
    vals = h(grid)
    for i in range(len(grid) - 1):
        if vals[i] * vals[i + 1] < 0:
            lo, hi = grid[i], grid[i + 1]
            flo = h(lo)
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                fmid = h(mid)
                if flo * fmid <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            roots.append(0.5 * (lo + hi))
            if len(roots) == count:
                break
    return np.asarray(roots) ** 2


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-12,
                     depth: int = 30) -> float:
    """Independent quadrature oracle for primitives."""
    def simp(x0, x2):
        x1 = 0.5 * (x0 + x2)
        return (x2 - x0) / 6.0 * (f(x0) + 4.0 * f(x1) + f(x2)), x1

    def rec(x0, x2, whole, d):
        x1 = 0.5 * (x0 + x2)
        left, _ = simp(x0, x1)
        right, _ = simp(x1, x2)
        if d <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(x0, x1, left, d - 1) + rec(x1, x2, right, d - 1)

    whole, _ = simp(a, b)
    return rec(a, b, whole, depth)


@pytest.fixture(scope="session")
def rectangle_2d():
    """Unit square with Robin coefficient 1."""
    mesh = build_rectangle_mesh(1.0, 1.0, 9, 9)
    M = assemble_mass(mesh)
    K = assemble_stiffness(mesh)
    Xi = assemble_potential(mesh, CoefficientField.constant(0.0))
    B = assemble_boundary(mesh, CoefficientField.constant(1.0))
    G = compose_gamma(K, Xi, B)
    A = compose_h1(M, K)
    decomp = solve_pencil(G, M, k=mesh.n_nodes)
    return SimpleNamespace(mesh=mesh, M=M, K=K, Xi=Xi, B=B, G=G, A=A,
                           decomp=decomp)
