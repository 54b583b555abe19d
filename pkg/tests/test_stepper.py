import csv
import math

import numpy as np
import pytest

from vemmhd.exceptions import ConfigError, NonmonotoneEnergyError, SolveError
from vemmhd.harness import SpatialCase, TemporalCase, decay_case
from vemmhd.stepper import (ENERGY_COLUMNS, SaddleSolver, SchemeConfig, ZeroData, build_systems,
                            divergence_norms, init_state, linear_solve, monolithic_step, run,
                            step_first_order, step_second_order)


@pytest.mark.parametrize("kw, key", [({"Re": 0}, "Re"), ({"kappa": -1}, "kappa"), ({"dt": float("nan")}, "dt"),
                                     ({"T": 0}, "T"), ({"order": 3}, "scheme")])
def test_config_validation(kw, key):
    with pytest.raises(ConfigError) as err:
        SchemeConfig(**kw)
    assert err.value.key == key


def test_config_step_count():
    assert SchemeConfig(T=1, dt=0.0125).n_steps == 80
    with pytest.raises(ConfigError):
        SchemeConfig(T=1, dt=0.3).n_steps
    assert SchemeConfig(T=1).R(1.0) == pytest.approx(math.exp(-1))


def test_zero_data_first_order(disc_cube2):
    sy = build_systems(disc_cube2, SchemeConfig(T=1, dt=0.1))
    st = init_state(sy, ZeroData())
    assert st.s == 1.0 and not st.u.any() and not st.J.any() and not st.phi.any()
    st1 = step_first_order(sy, st, ZeroData())
    assert st1.s == pytest.approx(1 / 1.1, abs=1e-15)
    assert abs(st1.s - math.exp(-0.1)) == pytest.approx(4.25e-3, abs=1e-5)
    assert not st1.u.any() and not st1.J.any()


def _s_recursion(order, dt, T=1.0):
    Q = 1 / T
    n = round(T / dt)
    s = [1.0, 1.0 / (1 + dt * Q)]
    for _ in range(n - 1):
        if order == 1:
            s.append(s[-1] / (1 + dt * Q))
        else:
            s.append((4 * s[-1] - s[-2]) / (2 * dt) / (3 / (2 * dt) + Q))
    return s


@pytest.mark.parametrize("order", [1, 2])
def test_zero_data_s_recursion(disc_cube1, order):
    cfg = SchemeConfig(T=1, dt=0.1, order=order)
    res = run(build_systems(disc_cube1, cfg), ZeroData())
    got = [r.s for r in res.trace]
    np.testing.assert_allclose(got, _s_recursion(order, 0.1), rtol=0, atol=1e-14)
    if order == 2:
        # backward-Euler start, then BDF2: the recursion itself lands at 1.6694e-3
        assert abs(got[-1] - math.exp(-1)) == pytest.approx(1.669356e-3, rel=1e-5)
    assert all(0 < s <= 1 for s in got)


def test_s_over_r_consistency(disc_cube1):
    for order in (1, 2):
        errs = []
        dts = (0.1, 0.05, 0.025)
        for dt in dts:
            cfg = SchemeConfig(T=1, dt=dt, order=order)
            tr = run(build_systems(disc_cube1, cfg), ZeroData()).trace
            errs.append(abs(tr[-1].s / cfg.R(1.0) - 1))
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert abs(slope - order) < 0.15


def test_initial_current_divergence_free(disc_cube2):
    sy = build_systems(disc_cube2, SchemeConfig(dt=0.2))
    st = init_state(sy, TemporalCase())
    assert divergence_norms(disc_cube2, st.u, st.J)[1] <= 1e-12
    assert abs(disc_cube2.forms.phi_mean @ st.phi) <= 1e-12


def state_discrepancy(a, b):
    """Largest DOF difference over all fields, relative to the largest DOF of the state.

    MS1 has p = 0 exactly, so the discrete pressure is pure discretization
    error; measuring it against its own tiny size would amplify round-off.
    """
    fa = [a.u, a.p, a.J, a.phi]
    fb = [b.u, b.p, b.J, b.phi]
    scale = max(np.abs(x).max() for x in fb)
    return max(np.abs(x - y).max() for x, y in zip(fa, fb)) / scale


@pytest.mark.parametrize("order", [1, 2])
def test_decoupled_matches_monolithic(disc_cube2, order):
    case = TemporalCase()
    sy = build_systems(disc_cube2, SchemeConfig(T=1, dt=0.1, order=order))
    a = b = init_state(sy, case)
    for k in range(5):
        o = 1 if k == 0 else order
        a = (step_first_order if o == 1 else step_second_order)(sy, a, case)
        b = monolithic_step(sy, b, case, o)
        assert state_discrepancy(a, b) <= 1e-10
        # the velocity and current on their own agree far below that
        assert np.abs(a.u - b.u).max() <= 1e-12 * np.abs(b.u).max()
        assert np.abs(a.J - b.J).max() <= 1e-12 * np.abs(b.J).max()
        assert abs(a.s - b.s) <= 1e-10 * abs(b.s)


def test_monolithic_zero_data(disc_cube1):
    sy = build_systems(disc_cube1, SchemeConfig(dt=0.1))
    st = monolithic_step(sy, init_state(sy, ZeroData()), ZeroData(), 1)
    assert st.s == pytest.approx(1 / 1.1, abs=1e-15)
    assert np.abs(st.u).max() == 0 or np.abs(st.u).max() < 1e-16


def test_second_order_needs_history(disc_cube1):
    sy = build_systems(disc_cube1, SchemeConfig(dt=0.1, order=2))
    with pytest.raises(ValueError):
        step_second_order(sy, init_state(sy, ZeroData()), ZeroData())


def test_zero_ohm_shortcut_agrees(disc_cube2):
    # J1 is skipped for unforced runs; the full solve gives the same zeros
    sy = build_systems(disc_cube2, SchemeConfig(dt=0.1))
    J1, phi1 = sy.poisson.solve(np.zeros(disc_cube2.layout.n_J))
    assert not J1.any() and not phi1.any()


def test_factorization_reused(disc_cube1):
    sy = build_systems(disc_cube1, SchemeConfig(dt=0.1))
    lu = sy.stokes1.factor()
    step_first_order(sy, init_state(sy, TemporalCase()), TemporalCase())
    assert sy.stokes1.factor() is lu


def test_singular_without_mean_row(disc_cube1):
    F, L = disc_cube1.forms, disc_cube1.layout
    s = SaddleSolver(F.A2, F.C2, None, L.J_free, np.flatnonzero(L.J_boundary))
    with pytest.raises(SolveError):
        s.solve(np.ones(L.n_J))


def test_linear_solve_residual_check():
    import scipy.sparse as sp
    A = sp.csc_matrix(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_allclose(linear_solve(A, np.array([5.0, 6.0])), [-4.0, 4.5])
    # wrong factorization for this matrix: the residual check catches it
    lu = sp.linalg.splu(sp.csc_matrix(np.eye(2)))
    with pytest.raises(SolveError):
        linear_solve(A, np.array([1.0, 1.0]), lu=lu, refine=0)


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("dt", [1.0, 0.1])
def test_energy_decay(order, dt):
    from vemmhd.forms import build_discretization
    from vemmhd.mesh import build_cube_mesh
    disc = _decay_disc()
    cfg = SchemeConfig(T=1, dt=dt, order=order)
    res = run(build_systems(disc, cfg), decay_case())
    E0 = res.trace[0].E
    for rec in res.trace[1:]:
        assert rec.dE / dt <= -rec.dissipation + 1e-10 * E0
        assert rec.dE <= 1e-12 * E0
        assert rec.div_u <= 1e-11 and rec.div_J <= 1e-11


_CACHE = {}


def _decay_disc():
    if "d" not in _CACHE:
        from vemmhd.forms import build_discretization
        from vemmhd.mesh import build_cube_mesh
        _CACHE["d"] = build_discretization(build_cube_mesh(2), 1)
    return _CACHE["d"]


def test_energy_check_fires_on_growth(disc_cube1):
    # MS1 pumps energy in; with the check forced on the run must refuse it
    cfg = SchemeConfig(T=1, dt=0.25)
    with pytest.raises(NonmonotoneEnergyError):
        run(build_systems(disc_cube1, cfg), TemporalCase(), check_energy=True)


def test_energy_csv(disc_cube1, tmp_path):
    cfg = SchemeConfig(T=1, dt=0.5)
    res = run(build_systems(disc_cube1, cfg), SpatialCase(), snapshots=(0, 2))
    assert set(res.snapshots) == {0, 2}
    path = tmp_path / "energy.csv"
    res.write_energy_csv(path, {"case": "ms2"})
    lines = path.read_text().splitlines()
    assert lines[0] == "# case = ms2"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ENERGY_COLUMNS
    assert len(rows) == 1 + 3
    assert [int(r[0]) for r in rows[1:]] == [0, 1, 2]


def test_mean_constraints(disc_cube2):
    case = SpatialCase()
    sy = build_systems(disc_cube2, SchemeConfig(T=1, dt=0.25, order=2))
    st = run(sy, case).final
    assert abs(disc_cube2.forms.p_mean @ st.p) <= 1e-11
    assert abs(disc_cube2.forms.phi_mean @ st.phi) <= 1e-11
