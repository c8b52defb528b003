"""Reduction of the energy onto V by maximizing over the negative block.

For v in V the inner problem  max { phi(v + y) : y in H_minus }  is
strongly concave once the gap certificate c1 > 0 holds for the
reaction's monotone floor, so it has a unique maximizer tau(v).  The
reduced functional  phi_tilde(v) = phi(v + tau(v))  then has gradient
equal to the V-block projection of the full gradient at v + tau(v).

The inner solver is damped Newton on the restricted problem with a
Barzilai-Borwein ascent fallback for iterates sitting on the kinks of
the reaction, where the restricted Hessian may fail to be negative
definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .energy import EnergyContext, grad_phi, phi
from .errors import CertificateError
from .fem import CoefficientField
from .reactions import nemytskii_jacobian
from .spectrum import EigenDecomposition, GapCertificate, lemma_gap_constant
from .subspaces import SubspaceSplit

DEFAULT_GRAD_TOL = 1e-10
DEFAULT_MAX_ITER = 100


class TauDivergenceError(RuntimeError):
    """Inner maximization failed to reach tolerance.

    Carries the best iterate and its gradient norm; usually signals a
    violated concavity certificate or a quadrature failure.
    """

    def __init__(self, message: str, best_y: np.ndarray, grad_norm: float):
        super().__init__(message)
        self.best_y = best_y
        self.grad_norm = grad_norm


@dataclass
class TauResult:
    y: np.ndarray            # H_minus coefficients of the maximizer
    iterations: int
    grad_norm: float         # A-norm of the lifted restricted gradient
    energy: float            # phi(v + tau(v))
    fallback_used: bool = False


@dataclass
class ReductionContext:
    ectx: EnergyContext
    split: SubspaceSplit
    certificate: GapCertificate
    grad_tol: float = DEFAULT_GRAD_TOL
    max_iter: int = DEFAULT_MAX_ITER

    _A_mm: np.ndarray = field(default=None, repr=False)
    _v_diag_a: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.certificate.side != "a" or self.certificate.constant <= 0.0:
            raise CertificateError(
                "reduction needs a positive side-(a) gap certificate before any "
                "inner maximization")
        Y = self.split.basis("H_minus")
        self._A_mm = Y.T @ (self.ectx.A.matrix @ Y)

    @property
    def c1(self) -> float:
        return self.certificate.constant

    def restricted_grad_norm(self, g: np.ndarray) -> float:
        """A-norm of the lift of restricted-gradient coefficients g."""
        return float(np.sqrt(max(g @ (self._A_mm @ g), 0.0)))

    def v_precond(self) -> np.ndarray:
        """Diagonal of the A-Gram of the V basis (descent preconditioner).

        The reduced Hessian is dominated by these diagonal entries, which
        grow like the eigenvalues; plain Euclidean descent in V coordinates
        would otherwise crawl at the discrete spectral condition number.
        """
        if self._v_diag_a is None:
            Yv = self.split.basis("V")
            self._v_diag_a = np.maximum(
                np.einsum("ij,ij->j", Yv, self.ectx.A.matrix @ Yv), 1e-12)
        return self._v_diag_a


def certify_reduction(ectx: EnergyContext, split: SubspaceSplit,
                      decomp: EigenDecomposition,
                      grad_tol: float = DEFAULT_GRAD_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> ReductionContext:
    """Build a ReductionContext, certifying strong concavity first.

    The certificate is the side-(a) gap constant at index m for the
    constant field equal to the reaction's monotone floor.
    """
    eta = CoefficientField.constant(ectx.reaction.monotonicity_floor)
    cert = lemma_gap_constant("a", decomp, split.m, eta, ectx.mesh, ectx.G, ectx.A)
    return ReductionContext(ectx=ectx, split=split, certificate=cert,
                            grad_tol=grad_tol, max_iter=max_iter)


def _restricted_pieces(rctx: ReductionContext, u_v: np.ndarray, y: np.ndarray):
    Y = rctx.split.basis("H_minus")
    u = u_v + Y @ y
    g_full = grad_phi(rctx.ectx, u)
    return u, Y.T @ g_full


def tau(rctx: ReductionContext, v: np.ndarray, y0: np.ndarray | None = None,
        grad_tol: float | None = None) -> TauResult:
    """Maximizer coefficients of y -> phi(v + y) over the negative block.

    ``v`` holds V-block coordinates.  Newton with damping on the gradient
    norm; Barzilai-Borwein ascent steps when the restricted Hessian is
    not negative definite.  Multi-start agreement is inherited from the
    certified strong concavity.  The iteration aims two digits below the
    tolerance so downstream projections see no tolerance-level slack.
    """
    ectx = rctx.ectx
    split = rctx.split
    Y = split.basis("H_minus")
    d = Y.shape[1]
    u_v = split.lift("V", v)
    target = rctx.grad_tol if grad_tol is None else grad_tol
    aim = 1e-2 * target

    y = np.zeros(d) if y0 is None else np.asarray(y0, dtype=float).copy()
    u, g = _restricted_pieces(rctx, u_v, y)
    gn = rctx.restricted_grad_norm(g)
    fallback_used = False
    prev_y, prev_g = None, None
    it = 0

    # Damping works on the gradient norm: with a negative definite (or
    # concave-consistent) Hessian both the Newton and the ascent direction
    # strictly decrease it, and unlike the energy it stays resolvable in
    # floating point all the way to the tolerance.
    for it in range(rctx.max_iter):
        if gn <= aim:
            break

        step = None
        Hr = Y.T @ (ectx.G.matrix @ Y) - Y.T @ (
            nemytskii_jacobian(ectx.mesh, ectx.reaction, u).matrix @ Y)
        try:
            la.cholesky(-Hr, lower=True)
            step = la.solve(Hr, -g, assume_a="sym")
        except la.LinAlgError:
            fallback_used = True
        if step is None or not np.all(np.isfinite(step)) or g @ step <= 0.0:
            # Barzilai-Borwein ascent step on the concave restricted problem
            fallback_used = True
            if prev_y is not None:
                s = y - prev_y
                zdiff = g - prev_g
                denom = -(s @ zdiff)
                alpha = (s @ s) / denom if denom > 0 else 1.0
            else:
                alpha = 1.0 / (1.0 + rctx.c1)
            alpha = float(np.clip(alpha, 1e-12, 1e6))
            step = alpha * g

        t = 1.0
        accepted = False
        for _ in range(30):
            new_y = y + t * step
            u_new, g_new = _restricted_pieces(rctx, u_v, new_y)
            gn_new = rctx.restricted_grad_norm(g_new)
            if np.isfinite(gn_new) and (gn_new <= aim
                                        or gn_new < (1.0 - 1e-4 * t) * gn):
                prev_y, prev_g = y, g
                y, u, g, gn = new_y, u_new, g_new, gn_new
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break   # numerical floor reached; the final check decides

    val = phi(ectx, u)
    if gn <= target:
        return TauResult(y=y, iterations=it, grad_norm=gn, energy=val,
                         fallback_used=fallback_used)
    raise TauDivergenceError(
        f"inner maximization stalled at gradient norm {gn:.3e} "
        f"(tolerance {target:.1e}, certificate c1={rctx.c1:.3e})",
        best_y=y, grad_norm=gn)


def reduced_eval(rctx: ReductionContext, v: np.ndarray,
                 y0: np.ndarray | None = None):
    """(phi_tilde(v), grad in V coordinates, TauResult) in one pass."""
    res = tau(rctx, v, y0=y0)
    u = rctx.split.lift("V", v) + rctx.split.lift("H_minus", res.y)
    g_full = grad_phi(rctx.ectx, u)
    g_v = rctx.split.basis("V").T @ g_full
    return res.energy, g_v, res


def phi_tilde(rctx: ReductionContext, v: np.ndarray,
              y0: np.ndarray | None = None) -> float:
    """phi(v + tau(v))."""
    return tau(rctx, v, y0=y0).energy


def grad_phi_tilde(rctx: ReductionContext, v: np.ndarray,
                   y0: np.ndarray | None = None) -> np.ndarray:
    """V-coordinates of the projected gradient at v + tau(v)."""
    _, g_v, _ = reduced_eval(rctx, v, y0=y0)
    return g_v


def reduced_grad_norm(rctx: ReductionContext, g_v: np.ndarray) -> float:
    """A-norm of the lifted reduced gradient."""
    r = rctx.split.lift("V", g_v)
    return rctx.ectx.a_norm(r)


@dataclass
class RayProbe:
    direction: int
    radii: list
    values: list
    tail_increasing: bool


@dataclass
class CoercivityReport:
    rays: list               # list[RayProbe]
    radii: list

    @property
    def all_ok(self) -> bool:
        return all(r.tail_increasing for r in self.rays)

    def as_dict(self) -> dict:
        return {
            "radii": list(self.radii),
            "all_tail_increasing": self.all_ok,
            "rays": [{"direction": r.direction, "values": r.values,
                      "tail_increasing": r.tail_increasing} for r in self.rays],
        }


def coercivity_probe(rctx: ReductionContext, directions: int, radii,
                     rng: np.random.Generator) -> CoercivityReport:
    """Sample phi_tilde along random V rays at increasing radii.

    A ray is flagged unless its largest-radius value is the maximum of
    the sampled values.  An empty radii list yields an empty report.
    """
    radii = list(radii)
    if any(radii[i] >= radii[i + 1] for i in range(len(radii) - 1)):
        raise ValueError("radii must be strictly increasing")
    if not radii:
        return CoercivityReport(rays=[], radii=[])
    dimV = rctx.split.dim("V")
    rays = []
    for k in range(directions):
        c = rng.standard_normal(dimV)
        c /= rctx.ectx.a_norm(rctx.split.lift("V", c))
        values = []
        warm = None
        for t in radii:
            res = tau(rctx, t * c, y0=warm)
            warm = res.y
            values.append(res.energy)
        tail_ok = values[-1] >= max(values) - 1e-12 * (1.0 + abs(max(values)))
        rays.append(RayProbe(direction=k, radii=radii, values=values,
                             tail_increasing=tail_ok))
    return CoercivityReport(rays=rays, radii=radii)
