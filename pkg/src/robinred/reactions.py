"""Reaction terms f(z,x), their primitives, and the hypothesis auditor.

The model reaction is built from four spectral values
lam_m < lam_m1 <= lam_lm1 < lam_l:

    f(x) = lam_lm1 * x                                       for |x| <= delta
    f(x) = lam_m1 * x - a_s * x * (1+x^2)^(-1/4) + c_j*sgn x  for |x| >  delta

with c_j = (lam_lm1 - lam_m1)*delta + a_s*delta*(1+delta^2)^(-1/4) chosen
so f is continuous at the band edges.  It is odd, grows linearly with
asymptotic slope approaching lam_m1 from below, satisfies the monotone
floor eta = min(lam_lm1, lam_m1 - a_s) > lam_m, and f(x)x - 2F(x) grows
like (a_s/3)|x|^{3/2}.

The auditor samples a deterministic grid and returns per-clause verdicts
with concrete witnesses on failure; it never raises on a failed clause.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import HypothesisViolation
from .fem import (Mesh, SymmetricForm, accumulate_load, accumulate_local,
                  interior_tables)


@dataclass(frozen=True)
class SpectralRefs:
    """Distinct eigenvalues referenced by the growth hypotheses."""

    m: int
    l: int
    lam_m: float
    lam_m1: float
    lam_lm1: float
    lam_l: float

    @staticmethod
    def from_decomposition(decomp, m: int, l: int) -> "SpectralRefs":
        if l < m + 2:
            raise HypothesisViolation("H(f)(iv)", f"need l >= m+2, got m={m}, l={l}")
        if decomp.n_clusters < l:
            raise ValueError(f"need at least {l} distinct eigenvalues, "
                             f"got {decomp.n_clusters}")
        cv = decomp.cluster_values
        return SpectralRefs(m=m, l=l, lam_m=float(cv[m - 1]), lam_m1=float(cv[m]),
                            lam_lm1=float(cv[l - 2]), lam_l=float(cv[l - 1]))


class Reaction:
    """Base reaction: vectorised f, primitive F with F(z,0)=0, and fx.

    Subclasses fill in the declared parameters used by the auditor:
    growth_bound (a), monotonicity_floor (eta), band_delta, low_slope
    (the lower near-zero slope), theta_bound (the upper one).
    """

    name = "reaction"
    autonomous = True

    growth_bound: float
    monotonicity_floor: float
    band_delta: float
    low_slope: float
    theta_bound: float
    spectral_refs: SpectralRefs | None = None

    def f(self, x, z=None):
        raise NotImplementedError

    def F(self, x, z=None):
        raise NotImplementedError

    def fx(self, x, z=None):
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def suggested_x_max(self) -> float:
        """Far end of the default audit grid."""
        return 1e3 * self.band_delta

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": self.params(),
            "growth_bound": self.growth_bound,
            "monotonicity_floor": self.monotonicity_floor,
            "band_delta": self.band_delta,
            "low_slope": self.low_slope,
            "theta_bound": self.theta_bound,
        }


class ModelReaction(Reaction):
    """Piecewise reaction resonant at infinity and linear in the band."""

    name = "model"

    def __init__(self, lam_m: float, lam_m1: float, lam_lm1: float, lam_l: float,
                 a_s: float, delta: float, refs: SpectralRefs | None = None):
        if not lam_m < lam_m1:
            raise HypothesisViolation(
                "H(f)(ii)", f"need lam_m < lam_m1, got {lam_m} >= {lam_m1}")
        if not lam_m1 <= lam_lm1:
            raise HypothesisViolation(
                "H(f)(iii)", f"need lam_m1 <= lam_lm1, got {lam_m1} > {lam_lm1}")
        if not lam_lm1 < lam_l:
            raise HypothesisViolation(
                "H(f)(iv)", f"need lam_lm1 < lam_l, got {lam_lm1} >= {lam_l}")
        if not 0.0 < a_s < lam_m1 - lam_m:
            raise HypothesisViolation(
                "H(f)(ii)", f"softening amplitude must lie in (0, {lam_m1 - lam_m}), "
                f"got {a_s}")
        if delta <= 0.0:
            raise HypothesisViolation("H(f)(iv)", f"band delta must be > 0, got {delta}")
        self.lam_m = lam_m
        self.lam_m1 = lam_m1
        self.lam_lm1 = lam_lm1
        self.lam_l = lam_l
        self.a_s = a_s
        self.delta = delta
        self.c_j = (lam_lm1 - lam_m1) * delta + a_s * delta * (1 + delta**2) ** (-0.25)
        self.spectral_refs = refs

        self.band_delta = delta
        self.low_slope = lam_lm1
        self.theta_bound = lam_lm1
        self.monotonicity_floor = min(lam_lm1, lam_m1 - a_s)
        self.growth_bound = max(abs(lam_lm1), abs(lam_m1)) + a_s + abs(self.c_j)

    def params(self) -> dict:
        return {"lam_m": self.lam_m, "lam_m1": self.lam_m1,
                "lam_lm1": self.lam_lm1, "lam_l": self.lam_l,
                "a_s": self.a_s, "delta": self.delta, "c_j": self.c_j}

    def suggested_x_max(self) -> float:
        """Reach past the dip of f(x)x - 2F(x).

        That quantity has derivative a_s x^3 (1+x^2)^{-5/4}/2 - c_j for
        |x| > delta, so it climbs only beyond roughly (2 c_j/a_s)^2; the
        audit decades must sit past that point.
        """
        turn = (2.0 * abs(self.c_j) / self.a_s) ** 2
        return max(1e3 * self.delta, 200.0 * turn)

    def f(self, x, z=None):
        x = np.asarray(x, dtype=float)
        inner = self.lam_lm1 * x
        outer = (self.lam_m1 * x - self.a_s * x * (1 + x**2) ** (-0.25)
                 + self.c_j * np.sign(x))
        return np.where(np.abs(x) <= self.delta, inner, outer)

    def F(self, x, z=None):
        x = np.asarray(x, dtype=float)
        t = np.abs(x)
        d = self.delta
        Fd = 0.5 * self.lam_lm1 * d**2
        inner = 0.5 * self.lam_lm1 * x**2
        ts = np.maximum(t, d)  # keep the outer branch finite where unused
        outer = (Fd + 0.5 * self.lam_m1 * (ts**2 - d**2)
                 - (2.0 * self.a_s / 3.0) * ((1 + ts**2) ** 0.75 - (1 + d**2) ** 0.75)
                 + self.c_j * (ts - d))
        return np.where(t <= d, inner, outer)

    def fx(self, x, z=None):
        """Derivative in x; at the band edges the right-sided value is used."""
        x = np.asarray(x, dtype=float)
        inner = np.full_like(x, self.lam_lm1)
        outer = self.lam_m1 - self.a_s * (1 + 0.5 * x**2) * (1 + x**2) ** (-1.25)
        return np.where((x >= -self.delta) & (x < self.delta), inner, outer)


class LinearReaction(Reaction):
    """f(z,x) = slope * x; useful as a decoupled or negative-control case."""

    name = "linear"

    def __init__(self, slope: float, band_delta: float = 1.0):
        self.slope = slope
        self.growth_bound = abs(slope)
        self.monotonicity_floor = slope
        self.band_delta = band_delta
        self.low_slope = slope
        self.theta_bound = slope

    def params(self) -> dict:
        return {"slope": self.slope}

    def f(self, x, z=None):
        return self.slope * np.asarray(x, dtype=float)

    def F(self, x, z=None):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.slope * x**2

    def fx(self, x, z=None):
        return np.full_like(np.asarray(x, dtype=float), self.slope)


class SquareReaction(Reaction):
    """f(z,x) = x^2; violates linear growth (negative control)."""

    name = "square"

    def __init__(self, band_delta: float = 1.0):
        self.growth_bound = 1.0
        self.monotonicity_floor = 0.0
        self.band_delta = band_delta
        self.low_slope = 0.0
        self.theta_bound = 0.0

    def f(self, x, z=None):
        x = np.asarray(x, dtype=float)
        return x**2

    def F(self, x, z=None):
        x = np.asarray(x, dtype=float)
        return x**3 / 3.0

    def fx(self, x, z=None):
        return 2.0 * np.asarray(x, dtype=float)


class CallableReaction(Reaction):
    """User-supplied triple (f, F, fx) with declared audit parameters."""

    name = "callable"

    def __init__(self, f, F, fx, growth_bound: float, monotonicity_floor: float,
                 band_delta: float, low_slope: float, theta_bound: float,
                 autonomous: bool = True, name: str = "callable"):
        self._f, self._F, self._fx = f, F, fx
        self.growth_bound = growth_bound
        self.monotonicity_floor = monotonicity_floor
        self.band_delta = band_delta
        self.low_slope = low_slope
        self.theta_bound = theta_bound
        self.autonomous = autonomous
        self.name = name

    def f(self, x, z=None):
        return np.asarray(self._f(x, z) if not self.autonomous else self._f(x),
                          dtype=float)

    def F(self, x, z=None):
        return np.asarray(self._F(x, z) if not self.autonomous else self._F(x),
                          dtype=float)

    def fx(self, x, z=None):
        return np.asarray(self._fx(x, z) if not self.autonomous else self._fx(x),
                          dtype=float)


@dataclass
class AuditGrid:
    """Deterministic sampling plan for the hypothesis audit.

    Covers the band [-delta, delta] linearly, decades out to x_max
    geometrically, and difference pairs down to the given spacing.
    """

    delta: float
    x_max: float = None
    band_points: int = 41
    outer_points: int = 120
    pair_spacings: tuple = (1e-4, 1e-2, 1.0)
    q_threshold: float = 1.0
    z_points: np.ndarray | None = None

    def __post_init__(self):
        if self.x_max is None:
            self.x_max = 1e3 * self.delta
        if self.x_max < 1e3 * self.delta:
            raise ValueError(
                f"grid must cover |x| up to 1e3*delta = {1e3 * self.delta}, "
                f"got x_max = {self.x_max}")

    def band(self) -> np.ndarray:
        return np.linspace(-self.delta, self.delta, self.band_points)

    def all_points(self) -> np.ndarray:
        outer = np.geomspace(self.delta, self.x_max, self.outer_points)
        return np.unique(np.concatenate([self.band(), outer, -outer, [0.0]]))

    def decades(self) -> np.ndarray:
        return np.array([self.x_max / 100.0, self.x_max / 10.0, self.x_max])

    def describe(self) -> str:
        return (f"band [-{self.delta}, {self.delta}] x {self.band_points}, "
                f"geometric out to {self.x_max} x {self.outer_points}, "
                f"pair spacings {list(self.pair_spacings)}")


@dataclass
class ClauseVerdict:
    passed: bool
    detail: str
    witness: dict | None = None

    def as_dict(self) -> dict:
        return {"passed": self.passed, "detail": self.detail, "witness": self.witness}


@dataclass
class HypothesisReport:
    clauses: dict            # "(i)".."(iv)" -> ClauseVerdict
    grid: str
    caveats: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.clauses.values())

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "clauses": {k: v.as_dict() for k, v in self.clauses.items()},
            "grid": self.grid,
            "caveats": self.caveats,
        }

    def table(self) -> str:
        names = {"(i)": "linear growth bound",
                 "(ii)": "monotone floor above lambda_m",
                 "(iii)": "resonance from below at infinity",
                 "(iv)": "near-zero sandwich"}
        lines = [f"{'clause':8s} {'verdict':8s} description"]
        for k in ("(i)", "(ii)", "(iii)", "(iv)"):
            v = self.clauses[k]
            verdict = "pass" if v.passed else "FAIL"
            lines.append(f"{k:8s} {verdict:8s} {names[k]}: {v.detail}")
            if v.witness is not None:
                lines.append(f"{'':8s} {'':8s} witness: {v.witness}")
        for c in self.caveats:
            lines.append(f"caveat: {c}")
        return "\n".join(lines)


def _zs_for(reaction: Reaction, grid: AuditGrid):
    if reaction.autonomous:
        return [None]
    if grid.z_points is None:
        raise ValueError("non-autonomous reaction needs z sample points in the grid")
    return list(grid.z_points)


def audit_hypotheses(reaction: Reaction, grid: AuditGrid | None = None,
                     refs: SpectralRefs | None = None) -> HypothesisReport:
    """Sample-check the four growth hypotheses against the spectrum refs.

    Failures are verdicts carrying a concrete witness, never exceptions.
    """
    if grid is None:
        grid = AuditGrid(delta=reaction.band_delta,
                         x_max=reaction.suggested_x_max())
    if refs is None:
        refs = reaction.spectral_refs
    if refs is None:
        raise ValueError("audit needs spectral reference values "
                         "(pass refs or attach them to the reaction)")
    slack = 1e-9
    clauses = {}
    caveats = []
    zs = _zs_for(reaction, grid)
    if not reaction.autonomous:
        caveats.append(
            "z-dependent reaction: uniformity over z is sampled at finitely many "
            "points and cannot be certified")

    xs = grid.all_points()
    a = reaction.growth_bound
    # (i) |f| <= a(1+|x|)
    verdict_i = ClauseVerdict(True, f"|f| <= {a:.6g}(1+|x|) on {xs.size} samples")
    for z in zs:
        fv = reaction.f(xs, z)
        bound = a * (1.0 + np.abs(xs)) * (1.0 + slack) + slack
        bad = np.abs(fv) > bound
        if np.any(bad):
            i = int(np.argmax(bad))
            verdict_i = ClauseVerdict(
                False, "growth bound violated",
                {"z": z, "x": float(xs[i]), "f": float(fv[i]),
                 "bound": float(a * (1 + abs(xs[i])))})
            break
    clauses["(i)"] = verdict_i

    # (ii) difference quotients >= eta, and eta strictly above lam_m somewhere
    eta = reaction.monotonicity_floor
    verdict_ii = ClauseVerdict(
        True, f"difference quotients >= eta = {eta:.6g} > lambda_m = {refs.lam_m:.6g}")
    if not eta > refs.lam_m:
        verdict_ii = ClauseVerdict(
            False, "declared monotone floor does not exceed lambda_m on the grid",
            {"eta": eta, "lam_m": refs.lam_m})
    else:
        done = False
        for z in zs:
            for s in grid.pair_spacings:
                q = (reaction.f(xs + s, z) - reaction.f(xs, z)) / s
                bad = q < eta - slack * (1.0 + abs(eta))
                if np.any(bad):
                    i = int(np.argmax(bad))
                    verdict_ii = ClauseVerdict(
                        False, "difference quotient below the monotone floor",
                        {"z": z, "x": float(xs[i]), "x_prime": float(xs[i] + s),
                         "quotient": float(q[i]), "eta": eta})
                    done = True
                    break
            if done:
                break
    clauses["(ii)"] = verdict_ii

    # (iii) 2F/x^2 <= lam_m1 at the far samples; f(x)x - 2F(x) climbing decades
    verdict_iii = None
    far = xs[np.abs(xs) >= grid.x_max / 10.0]
    tol_iii = 1e-6 * (1.0 + abs(refs.lam_m1))
    for z in zs:
        ratio = 2.0 * reaction.F(far, z) / far**2
        bad = ratio > refs.lam_m1 + tol_iii
        if np.any(bad):
            i = int(np.argmax(bad))
            verdict_iii = ClauseVerdict(
                False, "2F/x^2 exceeds lambda_{m+1} at a far sample",
                {"z": z, "x": float(far[i]), "ratio": float(ratio[i]),
                 "lam_m1": refs.lam_m1})
            break
        for sign in (1.0, -1.0):
            d = sign * grid.decades()
            Q = reaction.f(d, z) * d - 2.0 * reaction.F(d, z)
            if not (Q[1] > Q[0] + 1e-12 and Q[2] > Q[1] + 1e-12):
                verdict_iii = ClauseVerdict(
                    False, "f(x)x - 2F(x) is not increasing over the largest decades",
                    {"z": z, "x_decades": d.tolist(), "values": Q.tolist()})
                break
            if Q[2] <= grid.q_threshold:
                verdict_iii = ClauseVerdict(
                    False, f"f(x)x - 2F(x) stays below threshold {grid.q_threshold}",
                    {"z": z, "x": float(d[2]), "value": float(Q[2])})
                break
        if verdict_iii is not None:
            break
    if verdict_iii is None:
        verdict_iii = ClauseVerdict(
            True, f"2F/x^2 <= {refs.lam_m1:.6g} at far samples and f(x)x-2F(x) "
            f"climbs past {grid.q_threshold:.6g} over the sampled decades")
    clauses["(iii)"] = verdict_iii

    # (iv) near-zero sandwich between lam_{l-1} and theta <= lam_l
    theta = reaction.theta_bound
    band = grid.band()
    band = band[band != 0.0]
    verdict_iv = None
    if theta > refs.lam_l + slack:
        verdict_iv = ClauseVerdict(
            False, "declared theta exceeds lambda_l",
            {"theta": theta, "lam_l": refs.lam_l})
    elif not theta < refs.lam_l - slack:
        verdict_iv = ClauseVerdict(
            False, "theta does not drop below lambda_l anywhere on the grid",
            {"theta": theta, "lam_l": refs.lam_l})
    else:
        for z in zs:
            fxv = reaction.f(band, z) * band
            lo = refs.lam_lm1 * band**2
            hi = theta * band**2
            tol = slack * (1.0 + np.abs(lo))
            bad_lo = fxv < lo - tol
            bad_hi = fxv > hi + tol
            if np.any(bad_lo | bad_hi):
                i = int(np.argmax(bad_lo | bad_hi))
                verdict_iv = ClauseVerdict(
                    False, "near-zero sandwich fails inside the band",
                    {"z": z, "x": float(band[i]), "f_x": float(fxv[i]),
                     "lower": float(lo[i]), "upper": float(hi[i])})
                break
    if verdict_iv is None:
        verdict_iv = ClauseVerdict(
            True, f"lam_lm1 x^2 <= f(x)x <= theta x^2 on |x| <= {grid.delta} with "
            f"theta = {theta:.6g} < lambda_l = {refs.lam_l:.6g}")
    clauses["(iv)"] = verdict_iv

    return HypothesisReport(clauses=clauses, grid=grid.describe(), caveats=caveats)


def _interp_at_quadrature(mesh: Mesh, u: np.ndarray):
    tab = interior_tables(mesh)
    return tab, u[mesh.elements] @ tab["phi"]


def nemytskii_load(mesh: Mesh, reaction: Reaction, u: np.ndarray) -> np.ndarray:
    """load_i = int f(z, u_h) phi_i dz with u_h the P1 interpolant."""
    tab, U = _interp_at_quadrature(mesh, u)
    fv = reaction.f(U, tab["pts"])
    contrib = np.einsum("eq,iq->ei", tab["w"] * fv, tab["phi"])
    return accumulate_load(mesh.elements.ravel(), contrib.ravel(), mesh.n_nodes)


def nemytskii_energy(mesh: Mesh, reaction: Reaction, u: np.ndarray) -> float:
    """int F(z, u_h) dz."""
    tab, U = _interp_at_quadrature(mesh, u)
    return float(np.sum(tab["w"] * reaction.F(U, tab["pts"])))


def nemytskii_jacobian(mesh: Mesh, reaction: Reaction, u: np.ndarray) -> SymmetricForm:
    """jacobian_ij = int fx(z, u_h) phi_i phi_j dz."""
    tab, U = _interp_at_quadrature(mesh, u)
    w = tab["w"] * reaction.fx(U, tab["pts"])
    local = np.einsum("eq,iq,jq->eij", w, tab["phi"], tab["phi"])
    return SymmetricForm(accumulate_local(mesh.elements, local, mesh.n_nodes))
