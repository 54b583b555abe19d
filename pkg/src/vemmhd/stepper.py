"""Decoupled SAV time stepping (backward Euler and BDF2).

Each step solves two Stokes problems and two mixed-Poisson problems with
operators that are fixed for the whole run, then one scalar equation for
S = s / R that recombines them.  :func:`monolithic_step` solves the same
discrete equations as one bordered linear system and serves as an oracle.

Sign convention: the saddle blocks are assembled as ``[K, -C^T; -C, 0]`` so
that the computed pressure and potential approximate the physical fields
(momentum: ``... + grad p``; Ohm: ``J + grad phi - u x B``).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import ConfigError, DegenerateScalarError, NonmonotoneEnergyError, SolveError
from .forms import trilinear_vector_quadrature
from .spaces import BoundaryInterpolator, interpolate_velocity

__all__ = [
    "SchemeConfig",
    "SystemState",
    "SaddleSolver",
    "Systems",
    "ZeroData",
    "linear_solve",
    "build_systems",
    "init_state",
    "step_first_order",
    "step_second_order",
    "monolithic_step",
    "divergence_norms",
    "EnergyRecord",
    "run",
]

log = logging.getLogger(__name__)

ENERGY_COLUMNS = ["n", "t", "E", "dE", "norm_u_A1", "norm_J_A2", "s", "S", "div_u", "div_J"]


@dataclass(frozen=True)
class SchemeConfig:
    Re: float = 1.0
    kappa: float = 1.0
    T: float = 1.0
    dt: float = 0.1
    order: int = 1

    def __post_init__(self):
        for key in ("Re", "kappa", "T", "dt"):
            val = getattr(self, key)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigError(f"{key} must be a positive number, got {val!r}", key=key)
        if self.order not in (1, 2):
            raise ConfigError(f"order must be 1 or 2, got {self.order!r}", key="scheme")

    @property
    def Q(self):
        return 1.0 / self.T

    def R(self, t):
        return math.exp(-t / self.T)

    @property
    def n_steps(self):
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError(f"T / dt = {self.T / self.dt!r} is not an integer", key="dt")
        return n


@dataclass
class SystemState:
    u: np.ndarray
    p: np.ndarray
    J: np.ndarray
    phi: np.ndarray
    s: float
    t: float
    n: int = 0
    S: float = 1.0
    u_prev: np.ndarray | None = None
    J_prev: np.ndarray | None = None
    s_prev: float | None = None


class ZeroData:
    """No loads, homogeneous boundary data and a given initial velocity."""

    def __init__(self, initial_velocity=None):
        self._u0 = initial_velocity

    def initial_velocity(self, X):
        if self._u0 is None:
            return np.zeros((len(X), 3))
        return self._u0(X)

    boundary_velocity = None
    boundary_current = None
    load_u = None
    load_J = None


def _is_zero_data(case):
    return all(getattr(case, k, None) is None
               for k in ("boundary_velocity", "boundary_current", "load_u", "load_J"))


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
class SaddleSolver:
    """Factorized ``[K, -C^T, 0; -C, 0, m; 0, m^T, 0]`` on the free DOFs.

    ``K`` and ``C`` are the full (unreduced) blocks; boundary DOFs are
    eliminated with the supplied Dirichlet values at solve time.  With
    ``mean=None`` the zero-mean row is left out.
    """

    def __init__(self, K, C, mean, free, bnd, name="saddle"):
        self.name = name
        self.free, self.bnd = free, bnd
        K = K.tocsr()
        C = C.tocsr()
        self.K_fb = K[free][:, bnd]
        self.C_b = C[:, bnd]
        Kff = K[free][:, free]
        Cf = C[:, free]
        nq = C.shape[0]
        if mean is None:
            # no mean constraint: singular whenever constants lie in the multiplier kernel
            self.A = sp.bmat([[Kff, -Cf.T], [-Cf, None]], format="csc")
        else:
            m = sp.csr_matrix(np.asarray(mean).reshape(-1, 1))
            self.A = sp.bmat([[Kff, -Cf.T, None], [-Cf, None, m], [None, m.T, None]], format="csc")
        self.augmented = mean is not None
        self.nf, self.nq, self.n = len(free), nq, K.shape[0]
        self._lu = None

    def factor(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.A)
            except RuntimeError as exc:
                raise SolveError(f"{self.name}: factorization failed ({exc})") from None
        return self._lu

    def solve(self, rhs, bvals=None):
        """Return (x, q): full primal vector and multiplier field."""
        rhs_f = np.asarray(rhs)[self.free].astype(float)
        rc = np.zeros(self.nq)
        if bvals is not None:
            gb = np.asarray(bvals)[self.bnd]
            rhs_f = rhs_f - self.K_fb @ gb
            rc = self.C_b @ gb
        b = np.concatenate([rhs_f, rc, [0.0] if self.augmented else []])
        sol = linear_solve(self.A, b, self.factor(), self.name)
        x = np.zeros(self.n)
        x[self.free] = sol[:self.nf]
        if bvals is not None:
            x[self.bnd] = np.asarray(bvals)[self.bnd]
        return x, sol[self.nf:self.nf + self.nq]


def linear_solve(A, b, lu=None, name="system", rtol=1e-10, refine=3):
    """Direct sparse solve with iterative refinement and a residual check."""
    if lu is None:
        try:
            lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise SolveError(f"{name}: factorization failed ({exc})") from None
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SolveError(f"{name}: solution is not finite")
    nb = np.linalg.norm(b)
    r = b - A @ x
    res = np.linalg.norm(r)
    # refinement pushes the constraint rows, and hence div u and div J,
    # down to round-off of the data rather than of the factorization
    for _ in range(refine):
        if res <= 1e-15 * nb:
            break
        x2 = x + lu.solve(r)
        r2 = b - A @ x2
        res2 = np.linalg.norm(r2)
        if not res2 < res:
            break
        x, r, res = x2, r2, res2
    if res > rtol * nb:
        raise SolveError(f"{name}: relative residual {res / nb:.3e} exceeds {rtol:g}")
    return x


@dataclass
class Systems:
    disc: object
    config: SchemeConfig
    stokes1: SaddleSolver  # A1 / dt + B
    stokes2: SaddleSolver | None  # 3 A1 / (2 dt) + B
    poisson: SaddleSolver
    bnd: BoundaryInterpolator


def build_systems(disc, config):
    F, L = disc.forms, disc.layout
    uf, ub = L.u_free, np.flatnonzero(L.u_boundary)
    jf, jb = L.J_free, np.flatnonzero(L.J_boundary)
    dt = config.dt
    s1 = SaddleSolver(F.A1 / dt + F.B, F.C1, F.p_mean, uf, ub, "stokes")
    s2 = None
    if config.order == 2:
        s2 = SaddleSolver(1.5 * F.A1 / dt + F.B, F.C1, F.p_mean, uf, ub, "stokes-bdf2")
    pois = SaddleSolver(F.A2, F.C2, F.phi_mean, jf, jb, "mixed-poisson")
    return Systems(disc, config, s1, s2, pois, BoundaryInterpolator(disc.mesh, L, disc.face_proj))


# ----------------------------------------------------------------------
# problem data at a time level
# ----------------------------------------------------------------------
def _data(systems, case, t):
    disc = systems.disc
    X = disc.quad.points
    gu = gJ = None
    Fu = np.zeros(disc.layout.n_u)
    FJ = np.zeros(disc.layout.n_J)
    if getattr(case, "boundary_velocity", None) is not None:
        gu = systems.bnd.velocity(lambda P: case.boundary_velocity(P, t))
    if getattr(case, "boundary_current", None) is not None:
        gJ = systems.bnd.current(lambda P: case.boundary_current(P, t))
    if getattr(case, "load_u", None) is not None:
        Fu = disc.velocity_loads(case.load_u(X, t))
    if getattr(case, "load_J", None) is not None:
        FJ = disc.current_loads(case.load_J(X, t))
    return gu, gJ, Fu, FJ


def init_state(systems, case):
    """Interpolate the initial velocity and solve for the initial current."""
    disc, cfg = systems.disc, systems.config
    L = disc.layout
    u0 = interpolate_velocity(disc.mesh, L, disc.face_proj, disc.cell_proj, case.initial_velocity)
    if _is_zero_data(case):
        u0[L.u_boundary] = 0.0
    _, gJ, _, FJ = _data(systems, case, 0.0)
    s0 = 1.0
    rhs = FJ - s0 / cfg.R(0.0) * (disc.forms.D @ u0)
    J0, phi0 = systems.poisson.solve(rhs, gJ)
    return SystemState(u=u0, p=np.zeros(L.n_p), J=J0, phi=phi0, s=s0, t=0.0, n=0, S=1.0)


def _explicit_terms(disc, u_ex, J_ex):
    """w = E_s(u~; u~, .) - D(J~, .)  and  du = D(., u~)."""
    D = disc.forms.D
    return disc.trilinear.vector(u_ex) - D.T @ J_ex, D @ u_ex


def _advance(systems, state, case, order):
    disc, cfg = systems.disc, systems.config
    dt = cfg.dt
    t1 = state.t + dt
    R1 = cfg.R(t1)
    A1 = disc.forms.A1
    gu, gJ, Fu, FJ = _data(systems, case, t1)
    if order == 1:
        u_ex, J_ex = state.u, state.J
        stokes, c_t = systems.stokes1, 1.0 / dt
        rhs_u = A1 @ state.u / dt + Fu
        s_rhs = state.s / dt
    else:
        u_ex = 2 * state.u - state.u_prev
        J_ex = 2 * state.J - state.J_prev
        stokes, c_t = systems.stokes2, 1.5 / dt
        rhs_u = A1 @ (4 * state.u - state.u_prev) / (2 * dt) + Fu
        s_rhs = (4 * state.s - state.s_prev) / (2 * dt)
    w, du = _explicit_terms(disc, u_ex, J_ex)
    u1, p1 = stokes.solve(rhs_u, gu)
    u2, p2 = stokes.solve(-w)
    if gJ is None and not np.any(FJ):
        J1 = np.zeros(disc.layout.n_J)
        phi1 = np.zeros(disc.layout.n_phi)
    else:
        J1, phi1 = systems.poisson.solve(FJ, gJ)
    J2, phi2 = systems.poisson.solve(-du)
    a1 = w @ u1 + du @ J1
    a2 = w @ u2 + du @ J2
    den = c_t * R1 + R1 * cfg.Q - a2 / R1
    if abs(den) < 1e-14 * (R1 / dt):
        raise DegenerateScalarError(f"scalar equation denominator {den:.3e} at t = {t1:g}")
    S = (a1 / R1 + s_rhs) / den
    return SystemState(
        u=u1 + S * u2, p=p1 + S * p2, J=J1 + S * J2, phi=phi1 + S * phi2,
        s=S * R1, t=t1, n=state.n + 1, S=S, u_prev=state.u, J_prev=state.J, s_prev=state.s,
    )


def step_first_order(systems, state, case):
    return _advance(systems, state, case, 1)


def step_second_order(systems, state, case):
    if state.u_prev is None:
        raise ValueError("BDF2 needs two previous levels; take a first-order step first")
    return _advance(systems, state, case, 2)


def monolithic_step(systems, state, case, order):
    """Solve the coupled step in (u, p, J, phi, S) at once (oracle path)."""
    disc, cfg = systems.disc, systems.config
    F, L = disc.forms, disc.layout
    dt = cfg.dt
    t1 = state.t + dt
    R1 = cfg.R(t1)
    gu, gJ, Fu, FJ = _data(systems, case, t1)
    gu = np.zeros(L.n_u) if gu is None else gu
    gJ = np.zeros(L.n_J) if gJ is None else gJ
    if order == 1:
        u_ex, J_ex, c_t = state.u, state.J, 1.0 / dt
        rhs_u = F.A1 @ state.u / dt + Fu
        s_rhs = state.s / dt
    else:
        u_ex, J_ex, c_t = 2 * state.u - state.u_prev, 2 * state.J - state.J_prev, 1.5 / dt
        rhs_u = F.A1 @ (4 * state.u - state.u_prev) / (2 * dt) + Fu
        s_rhs = (4 * state.s - state.s_prev) / (2 * dt)
    # the convection vector is evaluated by quadrature here, independently of
    # the triple-product path used by the decoupled stepper
    w = trilinear_vector_quadrature(disc, u_ex) - F.D.T @ J_ex
    du = F.D @ u_ex
    uf, ub = L.u_free, np.flatnonzero(L.u_boundary)
    jf, jb = L.J_free, np.flatnonzero(L.J_boundary)
    K = (c_t * F.A1 + F.B).tocsr()
    A2 = F.A2.tocsr()
    C1, C2 = F.C1.tocsr(), F.C2.tocsr()
    mp = sp.csr_matrix(F.p_mean.reshape(-1, 1))
    mf = sp.csr_matrix(F.phi_mean.reshape(-1, 1))
    col_u = sp.csr_matrix(w[uf].reshape(-1, 1))
    col_J = sp.csr_matrix(du[jf].reshape(-1, 1))
    row_s = sp.hstack([
        sp.csr_matrix(-w[uf] / R1), sp.csr_matrix((1, L.n_p + 1)),
        sp.csr_matrix(-du[jf] / R1), sp.csr_matrix((1, L.n_phi + 1)),
        sp.csr_matrix([[c_t * R1 + R1 * cfg.Q]]),
    ])
    blocks = [
        [K[uf][:, uf], -C1[:, uf].T, None, None, None, None, col_u],
        [-C1[:, uf], None, mp, None, None, None, None],
        [None, mp.T, None, None, None, None, None],
        [None, None, None, A2[jf][:, jf], -C2[:, jf].T, None, col_J],
        [None, None, None, -C2[:, jf], None, mf, None],
        [None, None, None, None, mf.T, None, None],
    ]
    top = sp.bmat(blocks, format="csr")
    M = sp.vstack([top, row_s], format="csc")
    b = np.concatenate([
        rhs_u[uf] - K[uf][:, ub] @ gu[ub],
        C1[:, ub] @ gu[ub],
        [0.0],
        FJ[jf] - A2[jf][:, jb] @ gJ[jb],
        C2[:, jb] @ gJ[jb],
        [0.0],
        [s_rhs + (w[ub] @ gu[ub] + du[jb] @ gJ[jb]) / R1],
    ])
    x = linear_solve(M, b, name="monolithic")
    i = 0
    u = gu.copy()
    u[uf] = x[i:i + len(uf)]
    i += len(uf)
    p = x[i:i + L.n_p]
    i += L.n_p + 1
    J = gJ.copy()
    J[jf] = x[i:i + len(jf)]
    i += len(jf)
    phi = x[i:i + L.n_phi]
    i += L.n_phi + 1
    S = x[i]
    return SystemState(u=u, p=p, J=J, phi=phi, s=S * R1, t=t1, n=state.n + 1, S=S,
                       u_prev=state.u, J_prev=state.J, s_prev=state.s)


# ----------------------------------------------------------------------
def divergence_norms(disc, u, J):
    """Broken L2 norms of div u_h and div J_h (computed from the exact div maps)."""
    su = sj = 0.0
    N = disc.cell_proj[0].divJ.shape[0]
    for cp in disc.cell_proj:
        du = cp.divu @ u[disc.layout.u_maps[cp.cell]]
        dj = cp.divJ @ J[disc.layout.J_maps[cp.cell]]
        su += du @ cp.mass[:4, :4] @ du
        sj += dj @ cp.mass[:N, :N] @ dj
    return math.sqrt(max(su, 0.0)), math.sqrt(max(sj, 0.0))


@dataclass
class EnergyRecord:
    n: int
    t: float
    E: float
    dE: float
    norm_u_A1: float
    norm_J_A2: float
    s: float
    S: float
    div_u: float
    div_J: float
    dissipation: float = field(default=0.0, repr=False)

    def row(self):
        return [self.n, self.t, self.E, self.dE, self.norm_u_A1, self.norm_J_A2,
                self.s, self.S, self.div_u, self.div_J]


def _norm2(M, x):
    return float(x @ (M @ x))


def _energy(F, state, order_used):
    if order_used == 2:
        v = 2 * state.u - state.u_prev
        return 0.25 * (_norm2(F.A1, state.u) + _norm2(F.A1, v) + state.s ** 2
                       + (2 * state.s - state.s_prev) ** 2)
    return 0.5 * _norm2(F.A1, state.u) + 0.5 * state.s ** 2


def _record(disc, cfg, state, E, E_prev):
    F = disc.forms
    du, dj = divergence_norms(disc, state.u, state.J)
    diss = _norm2(F.B, state.u) + _norm2(F.A2, state.J) + cfg.Q * state.s ** 2
    return EnergyRecord(state.n, state.t, E, E - E_prev, math.sqrt(max(_norm2(F.A1, state.u), 0.0)),
                        math.sqrt(max(_norm2(F.A2, state.J), 0.0)), state.s, state.S, du, dj, diss)


@dataclass
class RunResult:
    final: SystemState
    trace: list
    snapshots: dict

    def write_energy_csv(self, path, meta=None):
        with open(path, "w", newline="") as fh:
            for k, v in (meta or {}).items():
                fh.write(f"# {k} = {v}\n")
            w = csv.writer(fh)
            w.writerow(ENERGY_COLUMNS)
            for rec in self.trace:
                w.writerow([repr(x) if isinstance(x, float) else x for x in rec.row()])


def run(systems, case, snapshots=(), monolithic=False, check_energy=None):
    """Advance from t = 0 to T; return the final state and the energy trace.

    ``check_energy`` (default: only for zero data) raises
    :class:`NonmonotoneEnergyError` if the energy grows between steps.
    """
    disc, cfg = systems.disc, systems.config
    zero = _is_zero_data(case)
    if check_energy is None:
        check_energy = zero
    state = init_state(systems, case)
    E0 = _energy(disc.forms, state, 1)
    trace = [_record(disc, cfg, state, E0, E0)]
    keep = {}
    if 0 in snapshots:
        keep[0] = state
    E_prev = E0
    for k in range(cfg.n_steps):
        order = 1 if (cfg.order == 1 or k == 0) else 2
        if monolithic:
            state = monolithic_step(systems, state, case, order)
        elif order == 1:
            state = step_first_order(systems, state, case)
        else:
            state = step_second_order(systems, state, case)
        E = _energy(disc.forms, state, cfg.order if k > 0 else 1)
        if cfg.order == 2 and k == 0:
            # the G-norm energy starts once two levels exist; keep the
            # first-order value for the first check and switch afterwards
            rec = _record(disc, cfg, state, E, E_prev)
            E_next_ref = _energy(disc.forms, state, 2)
        else:
            rec = _record(disc, cfg, state, E, E_prev)
            E_next_ref = E
        if check_energy and rec.dE > 1e-12 * E0:
            raise NonmonotoneEnergyError(f"energy increased by {rec.dE:.3e} at step {state.n}")
        trace.append(rec)
        E_prev = E_next_ref
        if state.n in snapshots:
            keep[state.n] = state
    return RunResult(state, trace, keep)
