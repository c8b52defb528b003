"""P1 finite elements on intervals and structured triangulations.

Builds the sparse symmetric forms entering the quadratic functional

    gamma(u) = ||Du||_2^2 + int_Omega xi u^2 dz + int_bdry beta u^2 dsigma

and the H1 Gram matrix A = M + K.  Interior integrals use 2-point Gauss
per segment (1D) and the symmetric 3-point interior rule per triangle
(2D); both are exact for products of P1 functions.  Boundary integrals
use point evaluation at the interval endpoints (weight 1) and 2-point
Gauss per boundary edge in 2D.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import numpy as np
import scipy.sparse as sp

from .errors import HypothesisViolation, MeshError

# 2-point Gauss on the reference segment [0, 1]
_GAUSS1D_PTS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_GAUSS1D_WTS = np.array([0.5, 0.5])

# symmetric 3-point interior rule on the reference triangle, degree-2 exact
_TRI_PTS = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
_TRI_WTS = np.array([1 / 3, 1 / 3, 1 / 3])


@dataclass
class Mesh:
    """Discrete domain: nodes, elements and weighted boundary facets.

    1D facets are single endpoint nodes with counting weight 1; 2D facets
    are boundary edges carrying their length.
    """

    dim: int
    nodes: np.ndarray            # (n, dim)
    elements: np.ndarray         # (nel, dim+1) node indices
    boundary_facets: np.ndarray  # (nbf, dim) node indices
    boundary_weights: np.ndarray  # (nbf,)
    domain: dict = field(default_factory=dict)

    _tables: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def validate(self):
        n = self.n_nodes
        if n < 3:
            raise MeshError(f"need at least 3 nodes, got {n}")
        if self.elements.min() < 0 or self.elements.max() >= n:
            raise MeshError("element node index out of range")
        if self.boundary_facets.size and (
            self.boundary_facets.min() < 0 or self.boundary_facets.max() >= n
        ):
            raise MeshError("boundary facet node index out of range")
        vols = element_volumes(self)
        if np.any(vols <= 0):
            raise MeshError("element with nonpositive measure")
        return self

    def to_json(self) -> str:
        desc = {
            "dim": self.dim,
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "boundary_facets": self.boundary_facets.tolist(),
            "boundary_weights": self.boundary_weights.tolist(),
            "domain": self.domain,
        }
        return json.dumps(desc)

    @staticmethod
    def from_json(text: str) -> "Mesh":
        d = json.loads(text)
        return Mesh(
            dim=d["dim"],
            nodes=np.asarray(d["nodes"], dtype=float),
            elements=np.asarray(d["elements"], dtype=int),
            boundary_facets=np.asarray(d["boundary_facets"], dtype=int),
            boundary_weights=np.asarray(d["boundary_weights"], dtype=float),
            domain=d.get("domain", {}),
        ).validate()


def build_interval_mesh(a: float, b: float, n: int) -> Mesh:
    """Uniform P1 mesh with n nodes on [a, b]; endpoint facets of weight 1."""
    if n < 3:
        raise MeshError(f"interval mesh needs n >= 3 nodes, got {n}")
    if not a < b:
        raise MeshError(f"interval must satisfy a < b, got a={a}, b={b}")
    nodes = np.linspace(a, b, n).reshape(n, 1)
    elements = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    facets = np.array([[0], [n - 1]])
    weights = np.ones(2)
    domain = {"kind": "interval", "a": float(a), "b": float(b), "n": int(n)}
    return Mesh(1, nodes, elements, facets, weights, domain).validate()


def build_rectangle_mesh(lx: float, ly: float, nx: int, ny: int) -> Mesh:
    """Structured triangulation of [0,Lx]x[0,Ly] with nx*ny nodes.

    Each grid cell is split along the lower-left/upper-right diagonal, so a
    square grid stays symmetric under swapping x and y.  Boundary edges
    carry their length.
    """
    if lx <= 0 or ly <= 0:
        raise MeshError(f"rectangle sides must be positive, got {lx} x {ly}")
    if nx < 2 or ny < 2:
        raise MeshError(f"need at least 2 nodes per side, got nx={nx}, ny={ny}")
    xs = np.linspace(0.0, lx, nx)
    ys = np.linspace(0.0, ly, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return i * ny + j

    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            p00, p10 = idx(i, j), idx(i + 1, j)
            p01, p11 = idx(i, j + 1), idx(i + 1, j + 1)
            # diagonal p00 -- p11
            tris.append([p00, p10, p11])
            tris.append([p00, p11, p01])
    elements = np.asarray(tris, dtype=int)

    edges = []
    weights = []
    hx, hy = lx / (nx - 1), ly / (ny - 1)
    for i in range(nx - 1):           # bottom and top
        edges.append([idx(i, 0), idx(i + 1, 0)])
        weights.append(hx)
        edges.append([idx(i, ny - 1), idx(i + 1, ny - 1)])
        weights.append(hx)
    for j in range(ny - 1):           # left and right
        edges.append([idx(0, j), idx(0, j + 1)])
        weights.append(hy)
        edges.append([idx(nx - 1, j), idx(nx - 1, j + 1)])
        weights.append(hy)
    facets = np.asarray(edges, dtype=int)
    bw = np.asarray(weights, dtype=float)
    domain = {
        "kind": "rectangle",
        "lx": float(lx), "ly": float(ly), "nx": int(nx), "ny": int(ny),
    }
    return Mesh(2, nodes, elements, facets, bw, domain).validate()


def element_volumes(mesh: Mesh) -> np.ndarray:
    coords = mesh.nodes[mesh.elements]        # (nel, nloc, dim)
    if mesh.dim == 1:
        return coords[:, 1, 0] - coords[:, 0, 0]
    d1 = coords[:, 1] - coords[:, 0]
    d2 = coords[:, 2] - coords[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def domain_measure(mesh: Mesh) -> float:
    return float(element_volumes(mesh).sum())


def interior_tables(mesh: Mesh):
    """Per-element quadrature: physical points, weights, basis values, gradients.

    Cached on the mesh; assembly walks elements in index order so the
    result is independent of any evaluation schedule.
    """
    tab = mesh._tables.get("interior")
    if tab is not None:
        return tab
    coords = mesh.nodes[mesh.elements]
    vols = element_volumes(mesh)
    if mesh.dim == 1:
        ref = _GAUSS1D_PTS
        phi = np.vstack([1.0 - ref, ref])                       # (2, nq)
        pts = coords[:, 0, :][:, None, :] + ref[None, :, None] * (
            coords[:, 1, :] - coords[:, 0, :]
        )[:, None, :]
        w = vols[:, None] * _GAUSS1D_WTS[None, :]
        grads = np.empty((mesh.n_elements, 2, 1))
        grads[:, 0, 0] = -1.0 / vols
        grads[:, 1, 0] = 1.0 / vols
    else:
        lam = np.column_stack([1.0 - _TRI_PTS.sum(axis=1), _TRI_PTS[:, 0], _TRI_PTS[:, 1]])
        phi = lam.T                                              # (3, nq)
        pts = np.einsum("qi,eid->eqd", lam, coords)
        w = vols[:, None] * _TRI_WTS[None, :]
        # constant P1 gradients per triangle
        x = coords[..., 0]
        y = coords[..., 1]
        grads = np.empty((mesh.n_elements, 3, 2))
        grads[:, 0, 0] = y[:, 1] - y[:, 2]
        grads[:, 1, 0] = y[:, 2] - y[:, 0]
        grads[:, 2, 0] = y[:, 0] - y[:, 1]
        grads[:, 0, 1] = x[:, 2] - x[:, 1]
        grads[:, 1, 1] = x[:, 0] - x[:, 2]
        grads[:, 2, 1] = x[:, 1] - x[:, 0]
        grads /= (2.0 * vols)[:, None, None]
    tab = {"pts": pts, "w": w, "phi": phi, "grads": grads, "vols": vols}
    mesh._tables["interior"] = tab
    return tab


def boundary_tables(mesh: Mesh):
    """Boundary facet quadrature: points, weights, trace basis values."""
    tab = mesh._tables.get("boundary")
    if tab is not None:
        return tab
    if mesh.dim == 1:
        pts = mesh.nodes[mesh.boundary_facets[:, 0]][:, None, :]   # (nbf, 1, 1)
        w = mesh.boundary_weights[:, None]
        phi = np.ones((1, 1))
    else:
        ref = _GAUSS1D_PTS
        phi = np.vstack([1.0 - ref, ref])                           # (2, nq)
        p0 = mesh.nodes[mesh.boundary_facets[:, 0]]
        p1 = mesh.nodes[mesh.boundary_facets[:, 1]]
        pts = p0[:, None, :] + ref[None, :, None] * (p1 - p0)[:, None, :]
        w = mesh.boundary_weights[:, None] * _GAUSS1D_WTS[None, :]
    tab = {"pts": pts, "w": w, "phi": phi}
    mesh._tables["boundary"] = tab
    return tab


class CoefficientField:
    """Scalar field on the domain or its boundary.

    Wraps a constant, a callable on coordinates (``f(x)`` in 1D,
    ``f(x, y)`` in 2D) or nodal samples interpolated piecewise-linearly
    to quadrature points.
    """

    def __init__(self, kind: str, value=None, fn=None, nodal=None):
        self.kind = kind
        self.value = value
        self.fn = fn
        self.nodal = None if nodal is None else np.asarray(nodal, dtype=float)

    @staticmethod
    def constant(c: float) -> "CoefficientField":
        return CoefficientField("constant", value=float(c))

    @staticmethod
    def from_callable(fn) -> "CoefficientField":
        return CoefficientField("callable", fn=fn)

    @staticmethod
    def from_nodal(values) -> "CoefficientField":
        return CoefficientField("nodal", nodal=values)

    def _eval_points(self, pts: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(pts.shape[:-1], self.value)
        if self.kind == "callable":
            coords = [pts[..., d] for d in range(pts.shape[-1])]
            return np.broadcast_to(np.asarray(self.fn(*coords), dtype=float), pts.shape[:-1]).copy()
        raise ValueError(f"cannot evaluate kind {self.kind!r} pointwise")

    def interior_values(self, mesh: Mesh) -> np.ndarray:
        tab = interior_tables(mesh)
        if self.kind == "nodal":
            if self.nodal.shape[0] != mesh.n_nodes:
                raise ValueError("nodal field length does not match mesh")
            return self.nodal[mesh.elements] @ tab["phi"]
        return self._eval_points(tab["pts"])

    def boundary_values(self, mesh: Mesh) -> np.ndarray:
        tab = boundary_tables(mesh)
        if self.kind == "nodal":
            if self.nodal.shape[0] != mesh.n_nodes:
                raise ValueError("nodal field length does not match mesh")
            return self.nodal[mesh.boundary_facets] @ tab["phi"]
        return self._eval_points(tab["pts"])


class SymmetricForm:
    """Sparse symmetric bilinear form of order n (upper triangle mirrored)."""

    def __init__(self, matrix: sp.spmatrix):
        m = matrix.tocsr()
        if m.shape[0] != m.shape[1]:
            raise ValueError("form matrix must be square")
        upper = sp.triu(m, k=0)
        strict = sp.triu(m, k=1)
        self.matrix = (upper + strict.T).tocsr()
        self.n = m.shape[0]

    def quad(self, u: np.ndarray) -> float:
        """Quadratic form value u^T S u."""
        return float(u @ (self.matrix @ u))

    def pair(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.matrix @ v))

    def dot(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __add__(self, other: "SymmetricForm") -> "SymmetricForm":
        if self.n != other.n:
            raise ValueError(f"order mismatch: {self.n} vs {other.n}")
        return SymmetricForm(self.matrix + other.matrix)

    def scaled(self, c: float) -> "SymmetricForm":
        return SymmetricForm(c * self.matrix)

    def to_triplet_csv(self) -> str:
        coo = self.matrix.tocoo()
        lines = ["row,col,value"]
        order = np.lexsort((coo.col, coo.row))
        for i in order:
            lines.append(f"{coo.row[i]},{coo.col[i]},{coo.data[i]:.17g}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_triplet_csv(text: str, n: int) -> "SymmetricForm":
        rows, cols, vals = [], [], []
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != "row,col,value":
            raise ValueError("triplet CSV must start with header 'row,col,value'")
        for line in lines[1:]:
            r, c, v = line.split(",")
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(v))
        return SymmetricForm(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def _canonical_coo(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray,
                   n: int) -> sp.coo_matrix:
    """COO with duplicate entries in a canonical summation order.

    Sorting by (row, col, value) before accumulation makes the assembled
    matrix bit-identical no matter how elements were visited.
    """
    order = np.lexsort((vals, cols, rows))
    return sp.coo_matrix((vals[order], (rows[order], cols[order])), shape=(n, n))


def accumulate_local(conn: np.ndarray, local: np.ndarray, n: int) -> sp.coo_matrix:
    """Scatter (nel, nloc, nloc) local matrices into an order-n sparse matrix."""
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    return _canonical_coo(rows, cols, local.ravel(), n)


def accumulate_load(idx: np.ndarray, vals: np.ndarray, n: int) -> np.ndarray:
    """Order-independent scatter-add of load contributions."""
    order = np.lexsort((vals, idx))
    out = np.zeros(n)
    np.add.at(out, idx[order], vals[order])
    return out


def _assemble_weighted_mass(conn: np.ndarray, w: np.ndarray, phi: np.ndarray,
                            weight_vals: np.ndarray, n: int) -> SymmetricForm:
    """Sum over facets/elements of w_q * c(q) * phi_i(q) * phi_j(q)."""
    local = np.einsum("eq,iq,jq->eij", w * weight_vals, phi, phi)
    return SymmetricForm(accumulate_local(conn, local, n))


def assemble_mass(mesh: Mesh) -> SymmetricForm:
    """M_ij = int phi_i phi_j."""
    tab = interior_tables(mesh)
    ones = np.ones_like(tab["w"])
    return _assemble_weighted_mass(mesh.elements, tab["w"], tab["phi"], ones, mesh.n_nodes)


def assemble_stiffness(mesh: Mesh) -> SymmetricForm:
    """K_ij = int Dphi_i . Dphi_j (P1 gradients are element constants)."""
    tab = interior_tables(mesh)
    local = np.einsum("eid,ejd->eij", tab["grads"], tab["grads"]) * tab["vols"][:, None, None]
    return SymmetricForm(accumulate_local(mesh.elements, local, mesh.n_nodes))


def assemble_potential(mesh: Mesh, xi: CoefficientField) -> SymmetricForm:
    """Xi_ij = int xi phi_i phi_j by element quadrature."""
    tab = interior_tables(mesh)
    vals = xi.interior_values(mesh)
    if not np.all(np.isfinite(vals)):
        raise HypothesisViolation(
            "H(xi)", "potential is not finite on the quadrature set; "
            "declare singularities away from quadrature points")
    return _assemble_weighted_mass(mesh.elements, tab["w"], tab["phi"], vals, mesh.n_nodes)


def assemble_boundary(mesh: Mesh, beta: CoefficientField) -> SymmetricForm:
    """B_ij = int_bdry beta phi_i phi_j dsigma, supported on boundary nodes."""
    tab = boundary_tables(mesh)
    vals = beta.boundary_values(mesh)
    if np.any(vals < 0):
        bad = np.argwhere(vals < 0)[0]
        pt = tab["pts"][bad[0], bad[1]]
        raise HypothesisViolation(
            "H(beta)", f"boundary coefficient is negative ({vals[bad[0], bad[1]]:.6g}) "
            f"at z={pt.tolist()}; beta must be >= 0 on the whole boundary")
    if not np.all(np.isfinite(vals)):
        raise HypothesisViolation("H(beta)", "boundary coefficient is not finite")
    return _assemble_weighted_mass(mesh.boundary_facets, tab["w"], tab["phi"], vals, mesh.n_nodes)


def compose_gamma(K: SymmetricForm, Xi: SymmetricForm, B: SymmetricForm) -> SymmetricForm:
    """G = K + Xi + B; u^T G u is the discrete gamma(u)."""
    return K + Xi + B


def compose_h1(M: SymmetricForm, K: SymmetricForm) -> SymmetricForm:
    """A = M + K, the discrete H1 inner product."""
    return M + K
