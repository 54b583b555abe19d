"""Computable polynomial projections of the local virtual element spaces.

Local velocity DOFs of a cell (order ``k_u = 2``), three components each:

* values at the cell vertices (``mesh.cell_vertices`` order),
* values at the edge midpoints (``mesh.cell_edges`` order),
* face averages of ``v.n_f``, ``v.t1``, ``v.t2`` with the stored face frame,
* ``(h_K / |K|) * int_K div(v) m`` for the three linear cell monomials.

Local current DOFs: per face (cell order) ``|f|^-1 int_f J.n_f m`` for the face
monomials of degree <= k_J, then for ``k_J = 1`` the three gradient moments
``(h_K / |K|) int_K J . grad m`` and three complement moments
``|K|^-1/2 int_K J . g_i``.

Every projector is a dense matrix from local DOFs to monomial coefficients.
Vector polynomials are stored component-major: index ``d * N + a`` is
``m_a e_d``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import SingularSystemError
from .polybasis import (
    MonomialBasis,
    QuadratureRule,
    deriv_matrix,
    dim_poly,
    gperp_basis,
    monomials,
    quad_cell,
    quad_face,
)

__all__ = [
    "FaceProjectors",
    "CellProjectors",
    "build_face_projectors",
    "build_cell_projectors",
    "build_projectors",
    "velocity_ndofs",
    "current_ndofs",
]

K_U = 2
QUAD_DEGREE = 2 * K_U + 2


def velocity_ndofs(nv, ne, nf):
    return 3 * (nv + ne + nf) + 3


def current_ndofs(nf, kJ):
    return nf * dim_poly(2, kJ) + (6 if kJ == 1 else 0)


def _solve(A, B, what):
    try:
        lu = sla.lu_factor(A, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise SingularSystemError(f"{what}: {exc}") from None
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= 1e-12 * piv.max():
        raise SingularSystemError(f"{what}: matrix is numerically singular")
    return sla.lu_solve(lu, B)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class FaceProjectors:
    """Scalar projectors on one face.

    Face-local scalar DOFs are the loop vertex values, the midpoint values of
    the loop edges (edge ``i`` joins loop vertices ``i`` and ``i+1``) and the
    face average, in that order.
    """

    face: int
    pin: np.ndarray  # (6, 2 nv + 1): coefficients of Pi^nabla_2
    pi0: np.ndarray  # (10, 2 nv + 1): coefficients of Pi^0_3
    basis: MonomialBasis  # degree 3
    quad: QuadratureRule
    values: np.ndarray  # basis values at quadrature points


def build_face_projectors(mesh, f, k_u=K_U):
    if k_u != K_U:
        raise ValueError("only k_u = 2 is implemented")
    g = mesh.geom
    loop = mesh.faces[f]
    nv = len(loop)
    P = mesh.vertices[loop]
    Q = np.roll(P, -1, axis=0)
    M = 0.5 * (P + Q)
    area = g.face_area[f]
    normal = g.face_normal[f]
    basis = monomials(mesh, "face", f, 3)
    b2 = MonomialBasis(2, 2, basis.center, basis.h, basis.axes)
    quad = quad_face(mesh, f, QUAD_DEGREE)
    vals = basis.values(quad.points)
    ndf = 2 * nv + 1
    iv, im, imean = np.arange(nv), nv + np.arange(nv), 2 * nv

    gq = b2.grads(quad.points)
    G = np.einsum("q,qad,qbd->ab", quad.weights, gq, gq)
    lap = b2.laplacian_coeffs()[0]  # constant part of each Laplacian
    B = np.zeros((6, ndf))
    B[:, imean] = -lap * area
    d = Q - P
    elen = np.linalg.norm(d, axis=1)
    en = np.cross(d, normal) / elen[:, None]
    ga, gm, gb = b2.grads(P), b2.grads(M), b2.grads(Q)
    dn_a = np.einsum("iad,id->ia", ga, en)
    dn_m = np.einsum("iad,id->ia", gm, en)
    dn_b = np.einsum("iad,id->ia", gb, en)
    w = elen / 6.0
    for i in range(nv):
        B[:, iv[i]] += w[i] * dn_a[i]
        B[:, im[i]] += 4 * w[i] * dn_m[i]
        B[:, iv[(i + 1) % nv]] += w[i] * dn_b[i]
    # constant mode: boundary average of Pi v equals boundary average of v
    va, vm, vb = b2.values(P), b2.values(M), b2.values(Q)
    G[0] = (w[:, None] * (va + 4 * vm + vb)).sum(axis=0)
    B[0] = 0.0
    for i in range(nv):
        B[0, iv[i]] += w[i]
        B[0, im[i]] += 4 * w[i]
        B[0, iv[(i + 1) % nv]] += w[i]
    pin = _solve(G, B, f"face {f} stiffness")

    M3 = vals.T @ (quad.weights[:, None] * vals)
    R = np.zeros((10, ndf))
    R[0, imean] = area
    R[1:] = M3[1:, :6] @ pin
    pi0 = _solve(M3, R, f"face {f} mass")
    return FaceProjectors(f, pin, pi0, basis, quad, vals)


# ----------------------------------------------------------------------
@dataclass(frozen=True)
class CellProjectors:
    """Per-cell projector matrices and the polynomial data they rely on."""

    cell: int
    kJ: int
    h: float
    volume: float
    centroid: np.ndarray
    vertices: np.ndarray
    edges: np.ndarray
    faces: np.ndarray
    signs: np.ndarray
    basis: MonomialBasis  # degree 3
    mass: np.ndarray  # (20, 20) monomial mass matrix
    quad: QuadratureRule
    pin: np.ndarray  # (30, nu)  Pi^nabla_2
    pi0: np.ndarray  # (30, nu)  Pi^0_2
    grad: np.ndarray  # (36, nu) Pi^0_1 grad, index (3 i + j) * 4 + a
    divu: np.ndarray  # (4, nu) coefficients of div v
    divu_mom: np.ndarray  # (4, nu) moments int div v m_a
    mean: np.ndarray  # (3, nu) int_K v_c
    pi0J: np.ndarray  # (3 NJ, nj)
    divJ: np.ndarray  # (NJ, nj)
    divJ_mom: np.ndarray  # (NJ, nj)
    gperp: np.ndarray  # (ng, 3, NJ)

    @property
    def nu(self):
        return self.pin.shape[1]

    @property
    def nj(self):
        return self.pi0J.shape[1]

    @property
    def stiffness(self):
        """Scalar H1-seminorm matrix on P_2 (physical units)."""
        N = 10
        G = np.zeros((N, N))
        for d in range(3):
            D = deriv_matrix(3, 3, d)[:, :N] / self.h
            G += D.T @ self.mass @ D
        return G


def _vector_from_grad(h, beta, n_out):
    """Coefficients of grad m_beta (cell, degree <= 3) in [P_{n_out}]^3."""
    N = dim_poly(3, n_out)
    out = np.zeros(3 * N)
    for d in range(3):
        col = deriv_matrix(3, 3, d)[:, beta] / h
        if np.any(col[N:]):
            raise ValueError("gradient degree exceeds target space")
        out[d * N:(d + 1) * N] = col[:N]
    return out


def _prod_index():
    from .polybasis import _index, exponents

    ex = exponents(3, 3)
    idx = _index(3, 3)
    table = -np.ones((len(ex), len(ex)), dtype=np.int64)
    for i, a in enumerate(ex.tolist()):
        for j, b in enumerate(ex.tolist()):
            s = tuple(x + y for x, y in zip(a, b))
            if sum(s) <= 3:
                table[i, j] = idx[s]
    return table


_PROD = _prod_index()


def build_cell_projectors(mesh, c, kJ, face_proj, k_u=K_U):
    if k_u != K_U:
        raise ValueError("only k_u = 2 is implemented")
    if kJ not in (0, 1):
        raise ValueError("kJ must be 0 or 1")
    g = mesh.geom
    h = float(g.cell_diameter[c])
    vol = float(g.cell_volume[c])
    verts = mesh.cell_vertices[c]
    edges = mesh.cell_edges[c]
    faces = mesh.cell_faces[c]
    signs = mesh.cell_signs[c]
    kv, ke, kf = len(verts), len(edges), len(faces)
    vloc = {int(v): i for i, v in enumerate(verts)}
    eloc = {int(e): i for i, e in enumerate(edges)}
    nu = velocity_ndofs(kv, ke, kf)
    off_e, off_f, off_c = 3 * kv, 3 * kv + 3 * ke, 3 * (kv + ke + kf)

    basis = monomials(mesh, "cell", c, 3)
    quad = quad_cell(mesh, c, QUAD_DEGREE)
    V = basis.values(quad.points)
    mass = V.T @ (quad.weights[:, None] * V)
    N1, N2, N3 = 4, 10, 20

    # boundary integrals of velocity traces against cell monomials:
    # BV[i, j, a] = int_dK v_i nu_j m_a,  BS[i] = int_dK v_i
    BV = np.zeros((3, 3, N3, nu))
    BS = np.zeros((3, nu))
    flux = np.zeros(nu)  # int_dK v.nu from the normal face DOFs
    BJ = []  # per face data for the current
    for j, (f, s) in enumerate(zip(faces, signs)):
        fp = face_proj[f]
        loop = mesh.faces[f]
        nvf = len(loop)
        frame = np.array([g.face_normal[f], *g.face_axes[f]])
        nu_out = s * g.face_normal[f]
        mix = fp.values.T @ (fp.quad.weights[:, None] * basis.values(fp.quad.points))  # (10, 20)
        for comp in range(3):
            L = np.zeros((2 * nvf + 1, nu))
            for i, v in enumerate(loop):
                L[i, 3 * vloc[int(v)] + comp] = 1.0
            for i, e in enumerate(mesh.face_edges[f]):
                L[nvf + i, off_e + 3 * eloc[int(e)] + comp] = 1.0
            L[2 * nvf, off_f + 3 * j:off_f + 3 * j + 3] = frame[:, comp]
            trace = fp.pi0 @ L  # (10, nu)
            qf = mix.T @ trace  # (20, nu): int_f v_comp m_a
            BV[comp] += nu_out[:, None, None] * qf[None]
            BS[comp] += g.face_area[f] * L[2 * nvf]
        flux[off_f + 3 * j] = s * g.face_area[f]
        BJ.append(mix)

    # divergence of the velocity
    divu_mom = np.zeros((N1, nu))
    divu_mom[0] = flux
    for a in range(3):
        divu_mom[1 + a, off_c + a] = vol / h
    divu = _solve(mass[:N1, :N1], divu_mom, f"cell {c} P1 mass")

    # int_K v_c by parts against the linear monomial in direction c
    mean = np.zeros((3, nu))
    for comp in range(3):
        mean[comp] = h * (-divu_mom[1 + comp] + sum(BV[d, d, 1 + comp] for d in range(3)))

    # Pi^nabla_2, one scalar block per component
    Dm = [deriv_matrix(3, 3, d) / h for d in range(3)]
    stiff = sum(Dm[d][:, :N2].T @ mass @ Dm[d][:, :N2] for d in range(3))
    lap = sum(Dm[d] @ Dm[d] for d in range(3))[0, :N2]
    bnd_mono = sum(face_proj[f].quad.weights @ basis.values(face_proj[f].quad.points)[:, :N2]
                   for f in faces)
    G = stiff.copy()
    G[0] = bnd_mono
    pin = np.zeros((3 * N2, nu))
    for comp in range(3):
        R = -np.outer(lap, mean[comp])
        for d in range(3):
            R += Dm[d][:, :N2].T @ BV[comp, d]
        R[0] = BS[comp]
        pin[comp * N2:(comp + 1) * N2] = _solve(G, R, f"cell {c} stiffness")

    # Pi^0_2: test against grad m_beta (beta of degree 1..3) and xi ^ (m_g e_d)
    M30 = np.kron(np.eye(3), mass[:N2, :N2])
    tests, rhs = [], []
    for beta in range(1, N3):
        tests.append(_vector_from_grad(h, beta, 2))
        rhs.append(-mass[:N1, beta] @ divu + sum(BV[d, d, beta] for d in range(3)))
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    for gam in range(N1):
        for d in range(3):
            t = np.zeros(3 * N2)
            for i in range(3):
                for jj in range(3):
                    if eps[i, jj, d] != 0.0:
                        t[i * N2 + _PROD[gam, 1 + jj]] += eps[i, jj, d]
            tests.append(t)
            rhs.append(t @ M30 @ pin)
    # moments against the vector monomials first, then the mass solve
    T = np.array(tests)
    R = np.array(rhs)
    Y, _, rank, _ = np.linalg.lstsq(T.T, np.eye(3 * N2), rcond=None)
    if rank < 3 * N2:
        raise SingularSystemError(f"cell {c}: L2 projector test set is rank deficient")
    pi0 = _solve(M30, Y.T @ R, f"cell {c} P2 mass")

    # Pi^0_1 of the gradient
    grad = np.zeros((36, nu))
    for i in range(3):
        for jj in range(3):
            mom = BV[i, jj, :N1].copy()
            mom[1 + jj] -= mean[i] / h
            grad[(3 * i + jj) * 4:(3 * i + jj + 1) * 4] = _solve(mass[:N1, :N1], mom, f"cell {c} P1 mass")

    # H(div) current
    NJ = dim_poly(3, kJ)
    NJp = dim_poly(3, kJ + 1)
    nbeta = dim_poly(2, kJ)
    nj = current_ndofs(kf, kJ)
    gp = gperp_basis(mass[:NJ, :NJ], h, kJ)
    BJn = np.zeros((NJp, nj))  # int_dK J.nu m_a
    fluxJ = np.zeros(nj)
    for j, (f, s) in enumerate(zip(faces, signs)):
        fp = face_proj[f]
        Mf = fp.values[:, :nbeta].T @ (fp.quad.weights[:, None] * fp.values[:, :nbeta])
        coef = g.face_area[f] * _solve(Mf, np.eye(nbeta), f"face {f} mass")  # DOFs -> J.n coeffs
        BJn[:, j * nbeta:(j + 1) * nbeta] = s * BJ[j][:nbeta, :NJp].T @ coef
        fluxJ[j * nbeta] = s * g.face_area[f]
    off_grad = kf * nbeta
    divJ_mom = np.zeros((NJ, nj))
    divJ_mom[0] = fluxJ
    for a in range(1, NJ):
        divJ_mom[a] = BJn[a]
        divJ_mom[a, off_grad + a - 1] -= vol / h
    divJ = _solve(mass[:NJ, :NJ], divJ_mom, f"cell {c} P{kJ} mass")
    MJ = np.kron(np.eye(3), mass[:NJ, :NJ])
    tests, rhs = [], []
    for beta in range(1, NJp):
        tests.append(_vector_from_grad(h, beta, kJ))
        rhs.append(-mass[:NJ, beta] @ divJ + BJn[beta])
    off_perp = off_grad + (3 if kJ == 1 else 0)
    for i in range(len(gp)):
        tests.append(gp[i].ravel())
        r = np.zeros(nj)
        r[off_perp + i] = np.sqrt(vol)
        rhs.append(r)
    T = np.array(tests)
    pi0J = _solve(T @ MJ, np.array(rhs), f"cell {c} current projector")

    return CellProjectors(
        cell=c, kJ=kJ, h=h, volume=vol, centroid=g.cell_centroid[c].copy(),
        vertices=verts, edges=edges, faces=faces, signs=signs,
        basis=basis, mass=mass, quad=quad,
        pin=pin, pi0=pi0, grad=grad, divu=divu, divu_mom=divu_mom, mean=mean,
        pi0J=pi0J, divJ=divJ, divJ_mom=divJ_mom, gperp=gp,
    )


def build_projectors(mesh, kJ, k_u=K_U):
    """Face projectors for every face and cell projectors for every cell."""
    faces = [build_face_projectors(mesh, f, k_u) for f in range(mesh.n_faces)]
    cells = [build_cell_projectors(mesh, c, kJ, faces, k_u) for c in range(mesh.n_cells)]
    return faces, cells
