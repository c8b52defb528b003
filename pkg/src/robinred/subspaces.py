"""Orthogonal eigenspace splittings and block projections.

Given the clustered decomposition and indices (m, l) with l >= m+2, the
discrete space splits M-orthogonally into

    H_minus = clusters 1..m        (finite "negative" block)
    H_zero  = cluster m+1          (resonant block)
    H_plus  = clusters m+2..end    (the full discrete complement)

with V = H_zero + H_plus further split into W = clusters m+1..l-1 and
E_hat = clusters >= l.  All bases are M-orthonormal eigenvector columns,
so projections are plain Gram products with M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolation
from .fem import SymmetricForm
from .spectrum import EigenDecomposition

BLOCKS = ("H_minus", "H_zero", "H_plus", "V", "W", "E_hat")


@dataclass
class SubspaceSplit:
    m: int
    l: int
    M: SymmetricForm
    bases: dict          # block name -> (n, d) M-orthonormal columns
    cluster_values: np.ndarray

    @property
    def n(self) -> int:
        return self.bases["H_minus"].shape[0]

    def dim(self, block: str) -> int:
        return self.bases[block].shape[1]

    def basis(self, block: str) -> np.ndarray:
        if block not in self.bases:
            raise KeyError(f"unknown block {block!r}; expected one of {BLOCKS}")
        return self.bases[block]

    def lift(self, block: str, coeffs: np.ndarray) -> np.ndarray:
        """Linear combination of the block basis."""
        Y = self.basis(block)
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (Y.shape[1],):
            raise ValueError(
                f"coefficient length {c.shape} does not match dim {block} = {Y.shape[1]}")
        return Y @ c

    def project(self, block: str, u: np.ndarray) -> np.ndarray:
        """M-orthogonal projection coefficients of u onto the block basis."""
        Y = self.basis(block)
        return Y.T @ self.M.dot(u)

    def components(self, u: np.ndarray):
        """M-orthogonal three-way decomposition u = ubar + u0 + uhat."""
        ubar = self.lift("H_minus", self.project("H_minus", u))
        u0 = self.lift("H_zero", self.project("H_zero", u))
        uhat = self.lift("H_plus", self.project("H_plus", u))
        return ubar, u0, uhat

    def summary(self) -> dict:
        cv = self.cluster_values
        return {
            "m": self.m,
            "l": self.l,
            "dims": {b: self.dim(b) for b in BLOCKS},
            "lambda_m": float(cv[self.m - 1]),
            "lambda_m_plus_1": float(cv[self.m]),
            "lambda_l_minus_1": float(cv[self.l - 2]),
            "lambda_l": float(cv[self.l - 1]),
        }


def split(decomp: EigenDecomposition, M: SymmetricForm, m: int, l: int) -> SubspaceSplit:
    """Materialise the splitting for indices (m, l); requires l >= m+2.

    The decomposition must be complete (all discrete pairs) so that
    H_plus is the genuine discrete complement and the block dimensions
    sum to n.
    """
    if l < m + 2:
        raise HypothesisViolation(
            "H(f)(iv)", f"the index pair needs l >= m+2, got m={m}, l={l}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if decomp.n_clusters < l:
        raise ValueError(
            f"decomposition has {decomp.n_clusters} clusters but l={l}; "
            "solve the pencil with larger k")
    if not decomp.complete:
        raise ValueError("splitting needs the complete decomposition (k = n)")

    nc = decomp.n_clusters
    bases = {
        "H_minus": decomp.block_basis(0, m),
        "H_zero": decomp.block_basis(m, m + 1),
        "H_plus": (decomp.block_basis(m + 1, nc)
                   if nc > m + 1 else decomp.vectors[:, :0]),
        "V": decomp.block_basis(m, nc),
        "W": decomp.block_basis(m, l - 1),
        "E_hat": (decomp.block_basis(l - 1, nc)
                  if nc > l - 1 else decomp.vectors[:, :0]),
    }
    return SubspaceSplit(m=m, l=l, M=M, bases=bases,
                         cluster_values=decomp.cluster_values)
