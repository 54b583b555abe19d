"""Local and global discrete forms.

Local matrices act on cell-local DOF vectors (see :mod:`vemmhd.projectors`).
The global assembly scatters them in fixed cell order, so assembled matrices
are reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .polybasis import dim_poly
from .projectors import build_projectors
from .spaces import build_layout, local_current_dofs, local_velocity_dofs

__all__ = [
    "ElementOps",
    "GlobalForms",
    "dof_matrix_velocity",
    "dof_matrix_current",
    "local_A1",
    "local_A2",
    "local_B",
    "local_C1",
    "local_C2",
    "local_D",
    "Trilinear",
    "trilinear_vector_quadrature",
    "CellQuadrature",
    "build_discretization",
    "assemble_global",
]

EPS = np.zeros((3, 3, 3))
EPS[0, 1, 2] = EPS[1, 2, 0] = EPS[2, 0, 1] = 1.0
EPS[0, 2, 1] = EPS[2, 1, 0] = EPS[1, 0, 2] = -1.0


def _vector_monomials(basis, n):
    N = dim_poly(3, n)

    def fn(X):
        vals = basis.values(X)[:, :N]
        out = np.zeros((len(X), 3, 3 * N))
        for d in range(3):
            out[:, d, d * N:(d + 1) * N] = vals
        return out

    return fn


def dof_matrix_velocity(mesh, cp, face_proj):
    """Velocity DOFs of the vector monomials m_a e_d of degree <= 2, (nu, 30)."""
    return local_velocity_dofs(mesh, cp, face_proj, _vector_monomials(cp.basis, 2))


def dof_matrix_current(mesh, cp, face_proj):
    return local_current_dofs(mesh, cp, face_proj, _vector_monomials(cp.basis, cp.kJ))


def _stab(dofmat, proj):
    R = np.eye(proj.shape[1]) - dofmat @ proj
    return R.T @ R


def local_A1(cp, dofmat):
    M = np.kron(np.eye(3), cp.mass[:10, :10])
    return cp.pi0.T @ M @ cp.pi0 + cp.volume * _stab(dofmat, cp.pi0)


def local_B(cp, dofmat, Re):
    G = np.kron(np.eye(3), cp.stiffness)
    return (cp.pin.T @ G @ cp.pin + cp.h * _stab(dofmat, cp.pin)) / Re


def local_A2(cp, dofmat, kappa):
    N = dim_poly(3, cp.kJ)
    M = np.kron(np.eye(3), cp.mass[:N, :N])
    return kappa * (cp.pi0J.T @ M @ cp.pi0J + cp.volume * _stab(dofmat, cp.pi0J))


def local_C1(cp):
    """Rows: pressure monomials; entries int_K div(v) m_a (exact)."""
    return cp.divu_mom.copy()


def local_C2(cp, kappa):
    return kappa * cp.divJ_mom


def local_D(cp, kappa, field):
    """D[j, i] = kappa int_K (Pi0 K_j x B) . Pi0 v_i with ``field(points) -> (n, 3)``."""
    N = dim_poly(3, cp.kJ)
    q = cp.quad
    V = cp.basis.values(q.points)
    Bq = np.asarray(field(q.points), dtype=float).reshape(len(q.points), 3)
    W = np.einsum("q,qa,qb,qk->kab", q.weights, V[:, :N], V[:, :10], Bq)
    # (e_p x B) . e_r = eps_{r p k} B_k
    Dc = np.einsum("rpk,kab->parb", EPS, W).reshape(3 * N, 30)
    return kappa * cp.pi0J.T @ Dc @ cp.pi0


@dataclass
class ElementOps:
    A1: np.ndarray
    A2: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D: np.ndarray
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray


# ----------------------------------------------------------------------
class CellQuadrature:
    """All cell quadrature points stacked, with per-cell segment offsets."""

    def __init__(self, cell_proj):
        self.points = np.concatenate([cp.quad.points for cp in cell_proj])
        self.weights = np.concatenate([cp.quad.weights for cp in cell_proj])
        sizes = np.array([len(cp.quad.weights) for cp in cell_proj])
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.cell = np.repeat(np.arange(len(cell_proj)), sizes)
        self.p2 = np.concatenate([cp.basis.values(cp.quad.points)[:, :10] for cp in cell_proj])

    def cell_sums(self, values):
        """Sum ``values`` (npts, ...) over each cell's points."""
        return np.add.reduceat(values, self.offsets, axis=0)

    def moments(self, values, n):
        """int_K f_d m_a per cell for ``values`` (npts, 3); returns (nc, 3 * N)."""
        N = dim_poly(3, n)
        prod = (self.weights[:, None] * values)[:, :, None] * self.p2[:, None, :N]
        return self.cell_sums(prod).reshape(len(self.offsets), 3 * N)


class Trilinear:
    """Skew-symmetric convection form evaluated in coefficient space.

    Per cell only Pi0 (30 x nu), the projected gradient (36 x nu) and the
    triple-product moments int m_a m_b m_c (a in P1, b, c in P2) are kept.
    """

    def __init__(self, layout, cell_proj):
        nc = len(cell_proj)
        nd = max(cp.nu for cp in cell_proj)
        self.n = layout.n_u
        self.maps = np.full((nc, nd), layout.n_u, dtype=np.int64)
        self.pi0 = np.zeros((nc, 30, nd))
        self.pg = np.zeros((nc, 36, nd))
        self.S = np.zeros((nc, 4, 10, 10))
        for cp in cell_proj:
            c, k = cp.cell, cp.nu
            self.maps[c, :k] = layout.u_maps[c]
            self.pi0[c, :, :k] = cp.pi0
            self.pg[c, :, :k] = cp.grad
            V = cp.basis.values(cp.quad.points)
            self.S[c] = np.einsum("q,qa,qb,qc->abc", cp.quad.weights, V[:, :4], V[:, :10], V[:, :10])

    def _local(self, x):
        xe = np.append(x, 0.0)[self.maps]
        A = np.einsum("cij,cj->ci", self.pi0, xe).reshape(-1, 3, 10)
        G = np.einsum("cij,cj->ci", self.pg, xe).reshape(-1, 3, 3, 4)
        return A, G

    def vector(self, a):
        """r with r . w = E_s(a; a, w) for every w."""
        A, G = self._local(a)
        Y = np.einsum("cija,cjb,cabk->cik", G, A, self.S)
        Z = np.einsum("cabk,cib,cjk->cija", self.S, A, A)
        loc = 0.5 * (np.einsum("cij,ci->cj", self.pi0, Y.reshape(len(A), 30))
                     - np.einsum("cij,ci->cj", self.pg, Z.reshape(len(A), 36)))
        r = np.bincount(self.maps.ravel(), weights=loc.ravel(), minlength=self.n + 1)
        return r[:self.n]

    def form(self, a, v, w):
        """E_s(a; v, w) = 1/2 int (grad v) a . w - (grad w) a . v, projected."""
        A, _ = self._local(a)
        V, Gv = self._local(v)
        W, Gw = self._local(w)
        t1 = np.einsum("cija,cjb,cik,cabk->", Gv, A, W, self.S)
        t2 = np.einsum("cija,cjb,cik,cabk->", Gw, A, V, self.S)
        return 0.5 * (t1 - t2)


def trilinear_vector_quadrature(disc, a):
    """Same vector as :meth:`Trilinear.vector`, by pointwise quadrature."""
    out = np.zeros(disc.layout.n_u)
    for cp in disc.cell_proj:
        m = disc.layout.u_maps[cp.cell]
        q = cp.quad
        V = cp.basis.values(q.points)
        P2, P1 = V[:, :10], V[:, :4]
        al = a[m]
        Aq = np.einsum("qb,db->qd", P2, (cp.pi0 @ al).reshape(3, 10))
        Gq = np.einsum("qa,ija->qij", P1, (cp.grad @ al).reshape(3, 3, 4))
        conv = np.einsum("qij,qj->qi", Gq, Aq)
        # Pi0 basis values (q, d, nu) and projected-gradient values (q, i, j, nu)
        Bv = np.einsum("qb,dbn->qdn", P2, cp.pi0.reshape(3, 10, -1))
        Bg = np.einsum("qa,ijan->qijn", P1, cp.grad.reshape(3, 3, 4, -1))
        t1 = np.einsum("q,qd,qdn->n", q.weights, conv, Bv)
        t2 = np.einsum("q,qi,qj,qijn->n", q.weights, Aq, Aq, Bg)
        np.add.at(out, m, 0.5 * (t1 - t2))
    return out


# ----------------------------------------------------------------------
@dataclass
class GlobalForms:
    """Assembled sparse blocks (no boundary elimination) and helpers."""

    A1: sp.csr_matrix
    B: sp.csr_matrix
    A2: sp.csr_matrix
    C1: sp.csr_matrix  # (n_p, n_u)
    C2: sp.csr_matrix  # (n_phi, n_J)
    D: sp.csr_matrix  # (n_J, n_u)
    p_mean: np.ndarray  # int_Omega of each pressure basis function
    phi_mean: np.ndarray


def _scatter(rows_maps, cols_maps, blocks, shape):
    r, c, v = [], [], []
    for rm, cm, blk in zip(rows_maps, cols_maps, blocks):
        if blk.shape != (len(rm), len(cm)):
            raise IndexError("local block does not match the layout")
        r.append(np.repeat(rm, len(cm)))
        c.append(np.tile(cm, len(rm)))
        v.append(blk.ravel())
    return sp.coo_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                         shape=shape).tocsr()


def assemble_global(layout, ops, cell_proj):
    L = layout
    A1 = _scatter(L.u_maps, L.u_maps, [o.A1 for o in ops], (L.n_u, L.n_u))
    B = _scatter(L.u_maps, L.u_maps, [o.B for o in ops], (L.n_u, L.n_u))
    A2 = _scatter(L.J_maps, L.J_maps, [o.A2 for o in ops], (L.n_J, L.n_J))
    C1 = _scatter(L.p_maps, L.u_maps, [o.C1 for o in ops], (L.n_p, L.n_u))
    C2 = _scatter(L.phi_maps, L.J_maps, [o.C2 for o in ops], (L.n_phi, L.n_J))
    D = _scatter(L.J_maps, L.u_maps, [o.D for o in ops], (L.n_J, L.n_u))
    NJ = dim_poly(3, L.kJ)
    p_mean = np.concatenate([cp.mass[0, :4] for cp in cell_proj])
    phi_mean = np.concatenate([cp.mass[0, :NJ] for cp in cell_proj])
    return GlobalForms(A1, B, A2, C1, C2, D, p_mean, phi_mean)


@dataclass
class Discretization:
    """Everything that depends on the mesh and the physical parameters only."""

    mesh: object
    kJ: int
    Re: float
    kappa: float
    layout: object
    face_proj: list
    cell_proj: list
    ops: list
    forms: GlobalForms
    trilinear: Trilinear
    quad: CellQuadrature

    def velocity_loads(self, values):
        """Global vector of int f . Pi0 v for f sampled at ``quad.points``."""
        mom = self.quad.moments(values, 2)
        out = np.zeros(self.layout.n_u)
        for cp in self.cell_proj:
            np.add.at(out, self.layout.u_maps[cp.cell], cp.pi0.T @ mom[cp.cell])
        return out

    def current_loads(self, values):
        mom = self.quad.moments(values, self.kJ)
        out = np.zeros(self.layout.n_J)
        for cp in self.cell_proj:
            np.add.at(out, self.layout.J_maps[cp.cell], cp.pi0J.T @ mom[cp.cell])
        return out


def build_discretization(mesh, kJ=1, Re=1.0, kappa=1.0, field=None):
    """Projectors, local forms and global blocks for one mesh.

    ``field`` is the applied magnetic field, a callable ``points -> (n, 3)``;
    defaults to the constant (1, 1, 1).
    """
    if Re <= 0 or kappa <= 0:
        raise ValueError("Re and kappa must be positive")
    if field is None:
        field = lambda X: np.ones((len(X), 3))  # noqa: E731
    layout = build_layout(mesh, kJ)
    face_proj, cell_proj = build_projectors(mesh, kJ)
    ops = []
    for cp in cell_proj:
        Du = dof_matrix_velocity(mesh, cp, face_proj)
        DJ = dof_matrix_current(mesh, cp, face_proj)
        S1 = cp.volume * _stab(Du, cp.pi0)
        S3 = cp.h * _stab(Du, cp.pin)
        S2 = cp.volume * _stab(DJ, cp.pi0J)
        ops.append(ElementOps(
            A1=local_A1(cp, Du), A2=local_A2(cp, DJ, kappa), B=local_B(cp, Du, Re),
            C1=local_C1(cp), C2=local_C2(cp, kappa), D=local_D(cp, kappa, field),
            S1=S1, S2=S2, S3=S3,
        ))
    forms = assemble_global(layout, ops, cell_proj)
    return Discretization(mesh, kJ, Re, kappa, layout, face_proj, cell_proj, ops, forms,
                          Trilinear(layout, cell_proj), CellQuadrature(cell_proj))
