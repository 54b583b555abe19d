"""Scaled monomials, polynomial coefficient algebra and polyhedral quadrature.

Cell monomials are ``((x - x_K) / h_K) ** alpha``; face monomials use the
face's in-plane axes, ``(((x - x_f) . t_k) / h_f) ** beta``.  Members are
ordered by total degree, and within a degree by descending exponent of the
first variable, so the linear cell monomials come out as x, y, z.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import roots_jacobi

from .exceptions import NumericalRankError

__all__ = [
    "exponents",
    "dim_poly",
    "MonomialBasis",
    "monomials",
    "hat_basis",
    "deriv_matrix",
    "QuadratureRule",
    "quad_cell",
    "quad_face",
    "quad_tets",
    "quad_triangles",
    "gperp_basis",
]


@lru_cache(maxsize=None)
def exponents(dim, n):
    """Multi-indices of total degree <= n, shape (N, dim)."""
    out = []
    for d in range(n + 1):
        if dim == 2:
            out += [(a, d - a) for a in range(d, -1, -1)]
        elif dim == 3:
            for a in range(d, -1, -1):
                out += [(a, b, d - a - b) for b in range(d - a, -1, -1)]
        else:
            raise ValueError("dim must be 2 or 3")
    arr = np.array(out, dtype=np.int64).reshape(-1, dim)
    arr.setflags(write=False)
    return arr


def dim_poly(dim, n):
    """Dimension of P_n in ``dim`` variables (0 for n < 0)."""
    return comb(n + dim, dim) if n >= 0 else 0


@lru_cache(maxsize=None)
def _index(dim, n):
    return {tuple(e): i for i, e in enumerate(exponents(dim, n).tolist())}


@lru_cache(maxsize=None)
def deriv_matrix(dim, n, k):
    """Matrix D with coeffs(d p / d xi_k) = D @ coeffs(p) on P_n, scaled variables."""
    ex = exponents(dim, n)
    idx = _index(dim, n)
    D = np.zeros((len(ex), len(ex)))
    for j, e in enumerate(ex.tolist()):
        if e[k] > 0:
            e2 = list(e)
            e2[k] -= 1
            D[idx[tuple(e2)], j] = e[k]
    D.setflags(write=False)
    return D


@dataclass(frozen=True)
class MonomialBasis:
    """Scaled monomial basis on a cell (dim 3) or a face (dim 2)."""

    dim: int
    degree: int
    center: np.ndarray
    h: float
    axes: np.ndarray | None = None  # (2, 3) for faces

    @property
    def exps(self):
        return exponents(self.dim, self.degree)

    def __len__(self):
        return dim_poly(self.dim, self.degree)

    def local(self, pts):
        d = np.atleast_2d(pts) - self.center
        if self.axes is not None:
            d = d @ self.axes.T
        return d / self.h

    def values(self, pts):
        xi = self.local(pts)
        return np.prod(xi[:, None, :] ** self.exps[None, :, :], axis=2)

    def grads(self, pts):
        """Physical gradients, shape (npts, N, 3)."""
        xi = self.local(pts)
        ex = self.exps
        out = np.zeros((len(xi), len(ex), 3))
        for k in range(self.dim):
            e = ex.copy()
            coef = e[:, k].astype(float)
            e[:, k] = np.maximum(e[:, k] - 1, 0)
            dk = coef * np.prod(xi[:, None, :] ** e[None, :, :], axis=2) / self.h
            if self.axes is None:
                out[:, :, k] = dk
            else:
                out += dk[:, :, None] * self.axes[k][None, None, :]
        return out

    def laplacian_coeffs(self):
        """Coefficient matrix of the Laplacian (physical units) on P_degree."""
        L = np.zeros((len(self), len(self)))
        for k in range(self.dim):
            D = deriv_matrix(self.dim, self.degree, k)
            L += D @ D
        return L / self.h ** 2


def monomials(mesh, region, index, n):
    """Monomial basis of degree ``n`` on cell or face ``index`` of ``mesh``.

    ``region`` is ``"cell"`` or ``"face"``.
    """
    if n < 0:
        raise ValueError("degree must be >= 0")
    g = mesh.geom
    if region == "cell":
        return MonomialBasis(3, n, g.cell_centroid[index], float(g.cell_diameter[index]))
    if region == "face":
        return MonomialBasis(2, n, g.face_centroid[index], float(g.face_diameter[index]),
                             g.face_axes[index])
    raise ValueError("region must be 'cell' or 'face'")


def hat_basis(dim, n, m):
    """Indices of the monomials with m + 1 <= |alpha| <= n."""
    if not -1 <= m <= n:
        raise ValueError("need -1 <= m <= n")
    return np.arange(dim_poly(dim, m), dim_poly(dim, n))


# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int


def _gauss_jacobi01(q, alpha):
    x, w = roots_jacobi(q, alpha, 0.0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)


@lru_cache(maxsize=None)
def _ref_tet(degree):
    """Conical-product rule on the unit tetrahedron (barycentric-free form)."""
    q = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi01(q, 2.0)
    v, wv = _gauss_jacobi01(q, 1.0)
    w, ww = _gauss_jacobi01(q, 0.0)
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    x = U
    y = (1 - U) * V
    z = (1 - U) * (1 - V) * W
    wt = np.einsum("i,j,k->ijk", wu, wv, ww)
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()]), wt.ravel()


@lru_cache(maxsize=None)
def _ref_tri(degree):
    q = max(1, (degree + 2) // 2)
    u, wu = _gauss_jacobi01(q, 1.0)
    v, wv = _gauss_jacobi01(q, 0.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    return np.column_stack([U.ravel(), ((1 - U) * V).ravel()]), np.outer(wu, wv).ravel()


def quad_tets(tets, degree):
    """Rule exact to ``degree`` on the union of tetrahedra (nt, 4, 3)."""
    ref, w = _ref_tet(degree)
    p0 = tets[:, 0]
    E = tets[:, 1:] - p0[:, None, :]
    vol6 = np.abs(np.einsum("ij,ij->i", E[:, 0], np.cross(E[:, 1], E[:, 2])))
    pts = p0[:, None, :] + np.einsum("qk,tkd->tqd", ref, E)
    wts = vol6[:, None] * w[None, :]
    return QuadratureRule(pts.reshape(-1, 3), wts.ravel(), degree)


def quad_triangles(tris, degree):
    ref, w = _ref_tri(degree)
    p0 = tris[:, 0]
    E = tris[:, 1:] - p0[:, None, :]
    area2 = np.linalg.norm(np.cross(E[:, 0], E[:, 1]), axis=1)
    pts = p0[:, None, :] + np.einsum("qk,tkd->tqd", ref, E)
    wts = area2[:, None] * w[None, :]
    return QuadratureRule(pts.reshape(-1, 3), wts.ravel(), degree)


def quad_cell(mesh, c, degree):
    return quad_tets(mesh.geom.cell_tets[c], degree)


def quad_face(mesh, f, degree):
    return quad_triangles(mesh.geom.face_triangles[f], degree)


# ----------------------------------------------------------------------
# complement of gradients
# ----------------------------------------------------------------------
def gperp_basis(mass, h, kJ, tol=1e-10):
    """L2-orthonormal basis of the complement of grad P_{kJ+1} in [P_kJ]^3.

    ``mass`` is the scalar cell mass matrix on P_kJ (scaled monomials),
    ``h`` the cell diameter.  Returns coefficients of shape (n, 3, dim P_kJ),
    member i being sum_{d,a} C[i, d, a] m_a e_d.
    """
    if kJ not in (0, 1):
        raise ValueError("kJ must be 0 or 1")
    N = dim_poly(3, kJ)
    Np = dim_poly(3, kJ + 1)
    gram = np.kron(np.eye(3), mass)
    scale = np.sqrt(np.abs(np.diag(gram)))

    # gradients of the nonconstant monomials of degree <= kJ+1, written in [P_kJ]^3
    grads = np.zeros((3 * N, Np - 1))
    for d in range(3):
        D = deriv_matrix(3, kJ + 1, d)[:N, 1:] / h
        grads[d * N:(d + 1) * N] = D

    def inner(a, b):
        return a @ gram @ b

    basis = []

    def orthogonalize(v):
        for _ in range(2):
            for b in basis:
                v = v - inner(b, v) * b
        return v

    for j in range(grads.shape[1]):
        v = grads[:, j]
        nrm0 = np.sqrt(inner(v, v))
        v = orthogonalize(v)
        nrm = np.sqrt(max(inner(v, v), 0.0))
        if nrm <= tol * nrm0:
            raise NumericalRankError("gradient subspace is rank deficient on this cell")
        basis.append(v / nrm)
    n_grad = len(basis)
    target = 3 * N - n_grad
    candidates = [np.eye(3 * N)[:, j] / scale[j] for j in range(3 * N)]
    while len(basis) < n_grad + target:
        res = [orthogonalize(c) for c in candidates]
        norms = [np.sqrt(max(inner(r, r), 0.0)) for r in res]
        j = int(np.argmax(norms))
        if norms[j] <= tol:
            raise NumericalRankError("vector monomial Gram matrix is rank deficient")
        basis.append(res[j] / norms[j])
        candidates.pop(j)
    comp = np.array(basis[n_grad:]).reshape(-1, 3, N)
    return comp
