"""Global DOF numbering, interpolation and constraint helpers.

Global velocity numbering: vertex ``g`` component ``c`` is ``3 g + c``; edge
midpoints follow (``3 nv + 3 e + c``), then face moments
(``3 nv + 3 ne + 3 f + k`` with k = normal, t1, t2) and the cell divergence
moments.  Current DOFs start with the face flux moments and end with the
cell moments.  Pressure and potential are discontinuous, per-cell monomial
coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .polybasis import dim_poly
from .projectors import current_ndofs, velocity_ndofs

__all__ = [
    "DofLayout",
    "build_layout",
    "local_velocity_dofs",
    "local_current_dofs",
    "interpolate_velocity",
    "interpolate_current",
    "interpolate_pressure",
    "interpolate_potential",
    "enforce_zero_mean",
    "BoundaryInterpolator",
]


@dataclass(frozen=True)
class DofLayout:
    kJ: int
    n_u: int
    n_J: int
    n_p: int
    n_phi: int
    u_maps: list  # per cell: local -> global velocity index
    J_maps: list
    p_maps: list
    phi_maps: list
    u_boundary: np.ndarray  # bool mask
    J_boundary: np.ndarray

    @property
    def u_free(self):
        return np.flatnonzero(~self.u_boundary)

    @property
    def J_free(self):
        return np.flatnonzero(~self.J_boundary)

    def gather_u(self, c, x):
        return x[self.u_maps[c]]

    def gather_J(self, c, x):
        return x[self.J_maps[c]]


def build_layout(mesh, kJ, k_u=2):
    if k_u != 2:
        raise ValueError("only k_u = 2 is implemented")
    if kJ not in (0, 1):
        raise ValueError("kJ must be 0 or 1")
    nv, ne, nf, nc = mesh.n_vertices, mesh.n_edges, mesh.n_faces, mesh.n_cells
    off_e, off_f, off_c = 3 * nv, 3 * (nv + ne), 3 * (nv + ne + nf)
    n_u = off_c + 3 * nc
    nbeta = dim_poly(2, kJ)
    ncell_J = 6 if kJ == 1 else 0
    n_J = nf * nbeta + nc * ncell_J
    NJ = dim_poly(3, kJ)
    three = np.arange(3)
    u_maps, J_maps, p_maps, phi_maps = [], [], [], []
    for c in range(nc):
        v, e, f = mesh.cell_vertices[c], mesh.cell_edges[c], mesh.cell_faces[c]
        m = np.concatenate([
            (3 * v[:, None] + three).ravel(),
            (off_e + 3 * e[:, None] + three).ravel(),
            (off_f + 3 * f[:, None] + three).ravel(),
            off_c + 3 * c + three,
        ])
        assert len(m) == velocity_ndofs(len(v), len(e), len(f))
        u_maps.append(m)
        jm = np.concatenate([
            (nbeta * f[:, None] + np.arange(nbeta)).ravel(),
            nf * nbeta + ncell_J * c + np.arange(ncell_J),
        ])
        assert len(jm) == current_ndofs(len(f), kJ)
        J_maps.append(jm)
        p_maps.append(4 * c + np.arange(4))
        phi_maps.append(NJ * c + np.arange(NJ))
    ub = np.zeros(n_u, dtype=bool)
    bv = np.flatnonzero(mesh.boundary_vertex)
    be = np.flatnonzero(mesh.boundary_edge)
    bf = np.flatnonzero(mesh.boundary_face)
    ub[(3 * bv[:, None] + three).ravel()] = True
    ub[(off_e + 3 * be[:, None] + three).ravel()] = True
    ub[(off_f + 3 * bf[:, None] + three).ravel()] = True
    jb = np.zeros(n_J, dtype=bool)
    jb[(nbeta * bf[:, None] + np.arange(nbeta)).ravel()] = True
    return DofLayout(kJ, n_u, n_J, 4 * nc, NJ * nc, u_maps, J_maps, p_maps, phi_maps, ub, jb)


# ----------------------------------------------------------------------
# local DOF functionals applied to callables
# ----------------------------------------------------------------------
def _as_fields(fn, pts):
    val = np.asarray(fn(pts), dtype=float)
    if val.ndim == 2:
        val = val[:, :, None]
    return val  # (npts, 3, m)


def local_velocity_dofs(mesh, cp, face_proj, fn):
    """Velocity DOFs of cell ``cp.cell`` for ``fn(points) -> (npts, 3[, m])``."""
    g = mesh.geom
    V = mesh.vertices
    P = _as_fields(fn, V[cp.vertices])
    E = mesh.edges[cp.edges]
    Mid = _as_fields(fn, 0.5 * (V[E[:, 0]] + V[E[:, 1]]))
    m = P.shape[2]
    kf = len(cp.faces)
    fmom = np.zeros((kf, 3, m))
    bnd = np.zeros((3, m))  # int_dK (v.nu) m_a for the linear monomials
    for j, (f, s) in enumerate(zip(cp.faces, cp.signs)):
        q = face_proj[f].quad
        val = _as_fields(fn, q.points)
        frame = np.array([g.face_normal[f], *g.face_axes[f]])
        fmom[j] = np.einsum("q,qdm,kd->km", q.weights, val, frame) / g.face_area[f]
        lin = cp.basis.values(q.points)[:, 1:4]
        bnd += s * np.einsum("q,qdm,d,qa->am", q.weights, val, g.face_normal[f], lin)
    q = cp.quad
    val = _as_fields(fn, q.points)
    vint = np.einsum("q,qdm->dm", q.weights, val)
    ddiv = cp.h / cp.volume * (-vint / cp.h + bnd)
    return np.concatenate([P.reshape(-1, m), Mid.reshape(-1, m), fmom.reshape(-1, m), ddiv])


def local_current_dofs(mesh, cp, face_proj, fn):
    g = mesh.geom
    kJ = cp.kJ
    nbeta = dim_poly(2, kJ)
    out = []
    for f in cp.faces:
        fp = face_proj[f]
        val = _as_fields(fn, fp.quad.points)
        jn = np.einsum("qdm,d->qm", val, g.face_normal[f])
        out.append(np.einsum("q,qm,qb->bm", fp.quad.weights, jn, fp.values[:, :nbeta]) / g.face_area[f])
    if kJ == 1:
        q = cp.quad
        val = _as_fields(fn, q.points)
        out.append(np.einsum("q,qdm->dm", q.weights, val) / cp.volume)
        gv = np.einsum("ida,qa->qid", cp.gperp, cp.basis.values(q.points)[:, :4])
        out.append(np.einsum("q,qid,qdm->im", q.weights, gv, val) / np.sqrt(cp.volume))
    return np.concatenate(out)


# ----------------------------------------------------------------------
def interpolate_velocity(mesh, layout, face_proj, cell_proj, fn):
    x = np.zeros(layout.n_u)
    for cp in cell_proj:
        x[layout.u_maps[cp.cell]] = local_velocity_dofs(mesh, cp, face_proj, fn)[:, 0]
    return x


def interpolate_current(mesh, layout, face_proj, cell_proj, fn):
    x = np.zeros(layout.n_J)
    for cp in cell_proj:
        x[layout.J_maps[cp.cell]] = local_current_dofs(mesh, cp, face_proj, fn)[:, 0]
    return x


def _l2_scalar(cell_proj, fn, n, maps, size):
    x = np.zeros(size)
    N = dim_poly(3, n)
    for cp in cell_proj:
        q = cp.quad
        vals = np.asarray(fn(q.points), dtype=float)
        rhs = cp.basis.values(q.points)[:, :N].T @ (q.weights * vals)
        x[maps[cp.cell]] = np.linalg.solve(cp.mass[:N, :N], rhs)
    return x


def interpolate_pressure(layout, cell_proj, fn):
    """L2 projection of a scalar ``fn(points) -> (npts,)`` onto broken P1."""
    return _l2_scalar(cell_proj, fn, 1, layout.p_maps, layout.n_p)


def interpolate_potential(layout, cell_proj, fn):
    return _l2_scalar(cell_proj, fn, layout.kJ, layout.phi_maps, layout.n_phi)


def enforce_zero_mean(block, mean_row):
    """Append a multiplier row/column coupling the last unknown block to its mean.

    ``block`` is a square sparse saddle matrix whose trailing ``len(mean_row)``
    unknowns are the scalar field; the result is symmetric if ``block`` is.
    """
    n = block.shape[0]
    k = len(mean_row)
    col = np.zeros(n)
    col[n - k:] = mean_row
    col = sp.csr_matrix(col[:, None])
    return sp.bmat([[block, col], [col.T, None]], format="csc")


class BoundaryInterpolator:
    """Fast evaluation of the boundary DOFs of analytic fields.

    Time-dependent Dirichlet data need the boundary DOFs at every step; this
    keeps the stacked boundary-face quadrature so one call evaluates the
    field once on all boundary points.
    """

    def __init__(self, mesh, layout, face_proj):
        g = mesh.geom
        self.layout = layout
        nv, ne = mesh.n_vertices, mesh.n_edges
        self.off_e, self.off_f = 3 * nv, 3 * (nv + ne)
        self.bv = np.flatnonzero(mesh.boundary_vertex)
        self.be = np.flatnonzero(mesh.boundary_edge)
        self.bf = np.flatnonzero(mesh.boundary_face)
        V = mesh.vertices
        self.vpts = V[self.bv]
        E = mesh.edges[self.be]
        self.mpts = 0.5 * (V[E[:, 0]] + V[E[:, 1]])
        self.nbeta = dim_poly(2, layout.kJ)
        pts, wts, seg, fvals = [], [], [], []
        for f in self.bf:
            q = face_proj[f].quad
            pts.append(q.points)
            wts.append(q.weights / g.face_area[f])
            seg.append(len(q.weights))
            fvals.append(face_proj[f].values[:, :self.nbeta])
        self.fpts = np.concatenate(pts)
        self.fw = np.concatenate(wts)
        self.foff = np.concatenate([[0], np.cumsum(seg)[:-1]])
        self.frames = np.array([[g.face_normal[f], *g.face_axes[f]] for f in self.bf])
        self.frame_q = np.repeat(self.frames, seg, axis=0)  # (nq, 3, 3)
        self.fvals = np.concatenate(fvals)

    def velocity(self, fn):
        x = np.zeros(self.layout.n_u)
        three = np.arange(3)
        x[(3 * self.bv[:, None] + three).ravel()] = np.asarray(fn(self.vpts)).ravel()
        x[(self.off_e + 3 * self.be[:, None] + three).ravel()] = np.asarray(fn(self.mpts)).ravel()
        val = np.asarray(fn(self.fpts))
        proj = np.einsum("q,qd,qkd->qk", self.fw, val, self.frame_q)
        x[(self.off_f + 3 * self.bf[:, None] + three).ravel()] = np.add.reduceat(proj, self.foff, axis=0).ravel()
        return x

    def current(self, fn):
        x = np.zeros(self.layout.n_J)
        val = np.asarray(fn(self.fpts))
        jn = np.einsum("qd,qd->q", val, self.frame_q[:, 0])
        mom = np.add.reduceat((self.fw * jn)[:, None] * self.fvals, self.foff, axis=0)
        nb = self.nbeta
        x[(nb * self.bf[:, None] + np.arange(nb)).ravel()] = mom.ravel()
        return x
