"""Spectrum of the gamma-form pencil (G, M) and the derived certificates.

The operator -Laplace + xi(z)I with the Robin boundary term discretises
to the generalized symmetric eigenproblem G v = lambda M v with M the
mass matrix.  Eigenvalues are clustered into distinct values so that
multiple eigenvalues split by discretisation noise are treated as one
eigenspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CertificateError, HypothesisViolation, SpectralStructureError
from .fem import CoefficientField, Mesh, SymmetricForm

DENSE_LIMIT = 2000
DEFAULT_CLUSTER_TOL = 1e-6


@dataclass
class EigenDecomposition:
    """Ascending eigenpairs of (G, M) with an eigenvalue clustering.

    ``vectors`` columns are M-orthonormal.  ``clusters`` holds index
    slices into the eigenvalue array; ``cluster_values`` is the distinct
    eigenvalue sequence (mean over each cluster).
    """

    eigenvalues: np.ndarray          # (k,) ascending, with multiplicity
    vectors: np.ndarray              # (n, k), M-orthonormal columns
    clusters: list = field(default_factory=list)   # list[(start, stop)]
    cluster_values: np.ndarray = None
    cluster_tol: float = DEFAULT_CLUSTER_TOL
    complete: bool = False           # k == n (all discrete eigenpairs)

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_dim(self, c: int) -> int:
        s, e = self.clusters[c]
        return e - s

    def cluster_basis(self, c: int) -> np.ndarray:
        s, e = self.clusters[c]
        return self.vectors[:, s:e]

    def block_basis(self, c_start: int, c_stop: int) -> np.ndarray:
        """Columns spanning clusters [c_start, c_stop) (0-based)."""
        s = self.clusters[c_start][0]
        e = self.clusters[c_stop - 1][1]
        return self.vectors[:, s:e]

    def multiplicities(self) -> np.ndarray:
        return np.array([e - s for s, e in self.clusters])


def _cluster(eigenvalues: np.ndarray, tol: float) -> list:
    clusters = []
    start = 0
    for i in range(1, len(eigenvalues)):
        gap = eigenvalues[i] - eigenvalues[i - 1]
        if gap > tol * (1.0 + abs(eigenvalues[i])):
            clusters.append((start, i))
            start = i
    clusters.append((start, len(eigenvalues)))
    return clusters


def _pencil_lower_bound(G: sp.spmatrix, M: sp.spmatrix) -> float:
    """Valid lower bound for eigenvalues of (G, M): via Euclidean extremes."""
    g_lo = spla.eigsh(G, k=1, which="SA", return_eigenvectors=False)[0]
    if g_lo >= 0:
        m_hi = spla.eigsh(M, k=1, which="LA", return_eigenvectors=False)[0]
        return g_lo / m_hi
    m_lo = spla.eigsh(M, k=1, which="SA", return_eigenvectors=False)[0]
    return g_lo / m_lo


def solve_pencil(G: SymmetricForm, M: SymmetricForm, k: int,
                 cluster_tol: float = DEFAULT_CLUSTER_TOL) -> EigenDecomposition:
    """k smallest eigenpairs of G v = lambda M v, clustered into distinct values.

    Dense symmetric solve below DENSE_LIMIT unknowns, shift-invert Lanczos
    above it.  Returned vectors are M-orthonormal; per-pair residuals
    ||Gv - lambda Mv||_2 stay below 1e-8 or the solver reports failure.
    """
    n = G.n
    if M.n != n:
        raise ValueError("pencil order mismatch")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n}, got k={k}")

    # the Lanczos path needs k strictly below n; a (near-)complete
    # decomposition is dense work regardless of size
    if n <= DENSE_LIMIT or k >= n - 1:
        Gd, Md = G.dense(), M.dense()
        if k == n:
            vals, vecs = la.eigh(Gd, Md)
        else:
            vals, vecs = la.eigh(Gd, Md, subset_by_index=[0, k - 1])
    else:
        sigma = _pencil_lower_bound(G.matrix, M.matrix) - 1.0
        try:
            vals, vecs = spla.eigsh(G.matrix.tocsc(), k=k, M=M.matrix.tocsc(),
                                    sigma=sigma, which="LM")
        except spla.ArpackNoConvergence as exc:  # pragma: no cover - rare
            got = len(exc.eigenvalues)
            raise RuntimeError(
                f"eigensolver converged only {got}/{k} pairs at shift {sigma:.6g}"
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    res = residual_norms(G, M, vals, vecs)
    worst = float(res.max()) if len(res) else 0.0
    if worst > 1e-8:
        raise RuntimeError(
            f"eigensolver residual {worst:.3e} exceeds 1e-8 for order-{n} pencil")

    clusters = _cluster(vals, cluster_tol)
    cvals = np.array([vals[s:e].mean() for s, e in clusters])
    return EigenDecomposition(
        eigenvalues=vals, vectors=vecs, clusters=clusters,
        cluster_values=cvals, cluster_tol=cluster_tol, complete=(k == n))


def residual_norms(G: SymmetricForm, M: SymmetricForm,
                   vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    R = G.matrix @ vecs - (M.matrix @ vecs) * vals[None, :]
    return np.linalg.norm(R, axis=0)


def rayleigh(G: SymmetricForm, M: SymmetricForm, u: np.ndarray) -> float:
    """u^T G u / u^T M u."""
    denom = M.quad(u)
    if denom <= 0.0:
        raise ValueError("Rayleigh quotient needs u with positive M-norm")
    return G.quad(u) / denom


@dataclass
class FirstEigenReport:
    lam1: float
    dim1: int
    sign_uniform: bool
    nodal_higher: list  # per cluster >= 2: True if every eigenvector changes sign

    def as_dict(self) -> dict:
        return {
            "lambda_1": self.lam1,
            "dim_first_eigenspace": self.dim1,
            "first_eigenvector_sign_uniform": self.sign_uniform,
            "higher_clusters_nodal": self.nodal_higher,
        }


def first_eigen_report(decomp: EigenDecomposition,
                       max_clusters: int | None = None) -> FirstEigenReport:
    """Check the structure of the bottom of the spectrum.

    Asserts the first distinct eigenvalue is simple with a fixed-sign
    eigenvector, and that eigenvectors of higher clusters change nodal
    sign.  Violations raise SpectralStructureError naming the property.
    """
    if decomp.n_clusters < 2:
        raise ValueError("need at least 2 eigenvalue clusters to report on")
    dim1 = decomp.cluster_dim(0)
    if dim1 != 1:
        raise SpectralStructureError(
            "simple first eigenvalue",
            f"first eigenspace has dimension {dim1}, expected 1")
    v1 = decomp.vectors[:, 0]
    if not (np.all(v1 > 0) or np.all(v1 < 0)):
        raise SpectralStructureError(
            "fixed-sign first eigenvector",
            "first eigenvector has nodal values of both signs (or zeros)")
    n_check = decomp.n_clusters if max_clusters is None else min(max_clusters,
                                                                 decomp.n_clusters)
    nodal = []
    for c in range(1, n_check):
        Y = decomp.cluster_basis(c)
        all_nodal = bool(np.all((Y.min(axis=0) < 0) & (Y.max(axis=0) > 0)))
        if not all_nodal:
            raise SpectralStructureError(
                "nodal higher eigenvectors",
                f"cluster {c + 1} contains an eigenvector of fixed sign")
        nodal.append(all_nodal)
    return FirstEigenReport(float(decomp.cluster_values[0]), dim1, True, nodal)


@dataclass
class CoercivityCertificate:
    """Shift mu and constant c0 with u^T(G + mu M)u >= c0 u^T A u for all u."""

    mu: float
    c0: float

    def as_dict(self) -> dict:
        return {"mu": self.mu, "c0": self.c0}


def coercivity_shift(G: SymmetricForm, M: SymmetricForm,
                     A: SymmetricForm) -> CoercivityCertificate:
    """Compute mu = max(0, -lambda_1) + 1 and the resulting coercivity constant.

    c0 is the smallest eigenvalue of the pencil (G + mu*M, A); it is
    positive whenever mu exceeds -lambda_1, so a nonpositive value flags
    a numerical failure.
    """
    bottom = solve_pencil(G, M, k=1)
    lam1 = float(bottom.eigenvalues[0])
    mu = max(0.0, -lam1) + 1.0
    shifted = G + M.scaled(mu)
    c0 = float(solve_pencil(shifted, A, k=1).eigenvalues[0])
    if c0 <= 0.0:
        raise CertificateError(
            f"coercivity constant came out nonpositive (c0={c0:.3e}) despite mu={mu}")
    return CoercivityCertificate(mu=mu, c0=c0)


@dataclass
class GapCertificate:
    """Extremal restricted eigenvalue certifying a spectral gap inequality.

    side "a": gamma(u) - int eta u^2 <= -c1 ||u||_A^2 on the first m clusters;
    side "b": ... >= c2 ||u||_A^2 on clusters >= m.  The constant is the
    extremal eigenvalue of (G - Xi(eta)) against A restricted to the block.
    """

    side: str
    m: int
    constant: float

    def as_dict(self) -> dict:
        name = "c1" if self.side == "a" else "c2"
        return {"side": self.side, "m": self.m, name: self.constant}


def lemma_gap_constant(side: str, decomp: EigenDecomposition, m: int,
                       eta: CoefficientField, mesh: Mesh, G: SymmetricForm,
                       A: SymmetricForm) -> GapCertificate:
    """Certify the subspace inequality for H_eta = G - Xi(eta).

    Preconditions on eta are checked against the m-th distinct eigenvalue
    at every interior quadrature point (with strictness somewhere); the
    discrete unique-continuation surrogate is the sign of the extremal
    value, and a wrong sign raises CertificateError.
    """
    from .fem import assemble_potential

    if side not in ("a", "b"):
        raise ValueError("side must be 'a' or 'b'")
    if not 1 <= m <= decomp.n_clusters:
        raise ValueError(f"cluster index m={m} out of range")
    lam_m = float(decomp.cluster_values[m - 1])
    vals = eta.interior_values(mesh)
    if side == "a":
        if np.any(vals < lam_m - 1e-12):
            raise HypothesisViolation(
                "gap hypothesis (a)", f"eta must satisfy eta >= lambda_{m} = {lam_m:.6g} "
                "at every quadrature point")
        if not np.any(vals > lam_m + 1e-12):
            raise HypothesisViolation(
                "gap hypothesis (a)", "eta coincides with lambda everywhere on the "
                "quadrature set; strict inequality on a positive-measure set required")
    else:
        if np.any(vals > lam_m + 1e-12):
            raise HypothesisViolation(
                "gap hypothesis (b)", f"eta must satisfy eta <= lambda_{m} = {lam_m:.6g} "
                "at every quadrature point")
        if not np.any(vals < lam_m - 1e-12):
            raise HypothesisViolation(
                "gap hypothesis (b)", "eta coincides with lambda everywhere on the "
                "quadrature set; strict inequality on a positive-measure set required")

    H = G + assemble_potential(mesh, eta).scaled(-1.0)
    if side == "a":
        Y = decomp.block_basis(0, m)
    else:
        if not decomp.complete:
            raise ValueError("side (b) needs the complete decomposition")
        Y = decomp.block_basis(m - 1, decomp.n_clusters)
    Hr = Y.T @ (H.matrix @ Y)
    Ar = Y.T @ (A.matrix @ Y)
    theta = la.eigh(Hr, Ar, eigvals_only=True)
    if side == "a":
        c1 = -float(theta[-1])
        if c1 <= 0.0:
            raise CertificateError(
                f"gap constant c1 = {c1:.3e} is nonpositive: the discrete "
                "unique-continuation surrogate failed on side (a)")
        return GapCertificate("a", m, c1)
    c2 = float(theta[0])
    if c2 <= 0.0:
        raise CertificateError(
            f"gap constant c2 = {c2:.3e} is nonpositive: the discrete "
            "unique-continuation surrogate failed on side (b)")
    return GapCertificate("b", m, c2)
