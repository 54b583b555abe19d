import numpy as np
import pytest

from vemmhd.polybasis import deriv_matrix, dim_poly
from vemmhd.projectors import build_projectors
from vemmhd.spaces import local_current_dofs, local_velocity_dofs

TOL = 1e-11


def _vector_poly(basis, C):
    n = C.shape[1]
    return lambda X: basis.values(X)[:, :n] @ C.T


def _deriv(C, j, h, n_out):
    return (deriv_matrix(3, 3, j)[:, :C.shape[-1]] @ C.T / h)[:n_out].T


def reproduction_errors(mesh, kJ, rng):
    fps, cps = build_projectors(mesh, kJ)
    worst = dict.fromkeys(["face_pin", "face_pi0", "pin", "pi0", "grad", "divu", "pi0J", "divJ"], 0.0)
    for fp in fps:
        loop = mesh.faces[fp.face]
        P = mesh.vertices[loop]
        M = 0.5 * (P + np.roll(P, -1, axis=0))
        c = rng.standard_normal(6)
        f = lambda X: fp.basis.values(X)[:, :6] @ c  # noqa: E731
        dofs = np.concatenate([f(P), f(M), [fp.quad.weights @ f(fp.quad.points) / mesh.geom.face_area[fp.face]]])
        worst["face_pin"] = max(worst["face_pin"], np.abs(fp.pin @ dofs - c).max())
        worst["face_pi0"] = max(worst["face_pi0"], np.abs(fp.pi0 @ dofs - np.r_[c, np.zeros(4)]).max())
    NJ = dim_poly(3, kJ)
    for cp in cps:
        C = rng.standard_normal((3, 10))
        d = local_velocity_dofs(mesh, cp, fps, _vector_poly(cp.basis, C))[:, 0]
        worst["pin"] = max(worst["pin"], np.abs(cp.pin @ d - C.ravel()).max())
        worst["pi0"] = max(worst["pi0"], np.abs(cp.pi0 @ d - C.ravel()).max())
        G = np.stack([_deriv(C, j, cp.h, 4) for j in range(3)], axis=1)  # (3 comp, 3 dir, 4)
        worst["grad"] = max(worst["grad"], np.abs(cp.grad @ d - G.ravel()).max())
        div = sum(G[j, j] for j in range(3))
        worst["divu"] = max(worst["divu"], np.abs(cp.divu @ d - div).max())
        CJ = rng.standard_normal((3, NJ))
        dj = local_current_dofs(mesh, cp, fps, _vector_poly(cp.basis, CJ))[:, 0]
        worst["pi0J"] = max(worst["pi0J"], np.abs(cp.pi0J @ dj - CJ.ravel()).max())
        divJ = sum(_deriv(CJ, j, cp.h, NJ)[j] for j in range(3))
        worst["divJ"] = max(worst["divJ"], np.abs(cp.divJ @ dj - divJ).max())
    return worst


@pytest.mark.parametrize("kJ", [0, 1])
@pytest.mark.parametrize("name", ["cube1", "prism", "voronoi_cell"])
def test_polynomial_reproduction(request, name, kJ, rng):
    worst = reproduction_errors(request.getfixturevalue(name), kJ, rng)
    assert max(worst.values()) <= TOL, worst


def test_linear_field_all_projectors(prism):
    fps, cps = build_projectors(prism, 1)
    cp = cps[0]
    A = np.array([[1.0, 2.0, -1.0], [0.5, -0.5, 0.0], [0.0, 1.0, -0.5]])
    d = local_velocity_dofs(prism, cp, fps, lambda X: X @ A.T)[:, 0]
    X = cp.quad.points
    Vals = cp.basis.values(X)[:, :10]
    for P in (cp.pin, cp.pi0):
        np.testing.assert_allclose(Vals @ (P @ d).reshape(3, 10).T, X @ A.T, atol=1e-12)
    grad = (cp.grad @ d).reshape(3, 3, 4)
    np.testing.assert_allclose(grad[:, :, 0], A, atol=1e-12)
    np.testing.assert_allclose(grad[:, :, 1:], 0, atol=1e-12)


def test_constant_current_on_cube(cube1):
    fps, cps = build_projectors(cube1, 0)
    cp = cps[0]
    dj = local_current_dofs(cube1, cp, fps, lambda X: np.tile([1.0, 0, 0], (len(X), 1)))[:, 0]
    np.testing.assert_allclose(dj, cube1.geom.face_normal[cp.faces][:, 0], atol=1e-15)
    np.testing.assert_allclose(cp.pi0J @ dj, [1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(cp.divJ @ dj, 0, atol=1e-14)


@pytest.mark.parametrize("kJ", [0, 1])
def test_div_current_flux_identity(voronoi_cell, kJ, rng):
    # int_K div J = sum of outward fluxes, for any DOF vector
    fps, cps = build_projectors(voronoi_cell, kJ)
    cp = cps[0]
    g = voronoi_cell.geom
    nb = dim_poly(2, kJ)
    for _ in range(5):
        dj = rng.standard_normal(cp.nj)
        lhs = cp.mass[0, :dim_poly(3, kJ)] @ (cp.divJ @ dj)
        rhs = sum(s * g.face_area[f] * dj[i * nb] for i, (f, s) in enumerate(zip(cp.faces, cp.signs)))
        assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(rhs)))


def test_div_velocity_matches_its_moments(prism, rng):
    # divu_mom (the exact C1 rows) equals the mass matrix times the div coefficients
    _, cps = build_projectors(prism, 1)
    cp = cps[0]
    d = rng.standard_normal(cp.nu)
    np.testing.assert_allclose(cp.mass[:4, :4] @ (cp.divu @ d), cp.divu_mom @ d, atol=1e-13)


def test_face_enhancement_identity(voronoi_cell, rng):
    # for any trace DOFs, the degree 1..3 moments of Pi0_3 v equal those of Pi_nabla_2 v
    fps, _ = build_projectors(voronoi_cell, 1)
    for fp in fps:
        d = rng.standard_normal(fp.pin.shape[1])
        V = fp.values
        w = fp.quad.weights
        p0 = V @ (fp.pi0 @ d)
        pn = V[:, :6] @ (fp.pin @ d)
        np.testing.assert_allclose(V[:, 1:].T @ (w * p0), V[:, 1:].T @ (w * pn), atol=1e-12)
        # and the zeroth moment is the face-average DOF
        assert w @ p0 / w.sum() == pytest.approx(d[-1], abs=1e-12)


def test_pi0_preserves_the_cell_integral(voronoi_cell, rng):
    # int_K Pi0 v = int_K v, the latter computed independently by integration by parts
    fps, cps = build_projectors(voronoi_cell, 1)
    cp = cps[0]
    d = rng.standard_normal(cp.nu)
    integral = (cp.pi0 @ d).reshape(3, 10) @ cp.mass[:10, 0]
    np.testing.assert_allclose(integral, cp.mean @ d, atol=1e-13)
