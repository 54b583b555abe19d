"""Manufactured solutions, error metrics, convergence studies, divergence tables."""
from __future__ import annotations

import ast
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError, DivergenceCheckError
from .forms import build_discretization
from .mesh import build_cube_mesh, build_dtp_mesh, import_mesh, mesh_size
from .stepper import SchemeConfig, ZeroData, build_systems, divergence_norms, run

__all__ = [
    "AppliedField",
    "ManufacturedCase",
    "TemporalCase",
    "SpatialCase",
    "decay_case",
    "make_case",
    "ErrorReport",
    "errors",
    "load_residual",
    "fit_slope",
    "RunSpec",
    "simulate",
    "ConvergencePlan",
    "convergence_study",
    "write_study",
    "divergence_table",
    "cell_divergence",
    "make_mesh",
]


# ----------------------------------------------------------------------
# applied magnetic field
# ----------------------------------------------------------------------
_ALLOWED_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
                  "tanh": np.tanh, "log": np.log, "abs": np.abs}
_ALLOWED_NAMES = {"x", "y", "z", "pi", *_ALLOWED_FUNCS}
_ALLOWED_NODES = (ast.Expression, ast.Tuple, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name,
                  ast.Load, ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
                  ast.USub, ast.UAdd)


class AppliedField:
    """Magnetic field B(x), either constant or given by three expressions in x, y, z.

    ``AppliedField.parse("1, 1, 1")`` or ``AppliedField.parse("expr: 1, x, sin(pi*z)")``.
    Picklable, so studies can run in worker processes.
    """

    def __init__(self, text="1, 1, 1"):
        self.text = text.strip()
        body = self.text
        self.is_expr = body.startswith("expr:")
        if self.is_expr:
            body = body[len("expr:"):]
            try:
                tree = ast.parse(f"({body},)", mode="eval")
            except SyntaxError as exc:
                raise ConfigError(f"B: cannot parse expression ({exc.msg})", key="B") from None
            for node in ast.walk(tree):
                if not isinstance(node, _ALLOWED_NODES):
                    raise ConfigError(f"B: disallowed syntax {type(node).__name__}", key="B")
                if isinstance(node, ast.Name) and node.id not in _ALLOWED_NAMES:
                    raise ConfigError(f"B: unknown name {node.id!r}", key="B")
            if len(tree.body.elts) != 3:
                raise ConfigError("B: expected three components", key="B")
            self._code = compile(tree, "<B>", "eval")
        else:
            try:
                vals = [float(v) for v in body.split(",")]
            except ValueError:
                raise ConfigError(f"B: expected three numbers, got {text!r}", key="B") from None
            if len(vals) != 3 or not all(math.isfinite(v) for v in vals):
                raise ConfigError(f"B: expected three finite numbers, got {text!r}", key="B")
            self.const = np.array(vals)

    @classmethod
    def parse(cls, text):
        return cls(text)

    def __getstate__(self):
        return {"text": self.text}

    def __setstate__(self, state):
        self.__init__(state["text"])

    def __repr__(self):
        return f"AppliedField({self.text!r})"

    def __call__(self, X):
        X = np.atleast_2d(X)
        if not self.is_expr:
            return np.broadcast_to(self.const, X.shape).copy()
        env = {"x": X[:, 0], "y": X[:, 1], "z": X[:, 2], "pi": np.pi, **_ALLOWED_FUNCS}
        comps = eval(self._code, {"__builtins__": {}}, env)  # checked AST, names whitelisted
        return np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), (len(X),)) for c in comps])


# ----------------------------------------------------------------------
# manufactured solutions
# ----------------------------------------------------------------------
class ManufacturedCase:
    """Analytic (u, p, J, phi) with loads that make them solve the model.

    Subclasses give the fields and their derivatives in closed form; the
    loads are assembled here as
    ``f_u = u_t - Re^-1 lap u + (grad u) u + grad p - kappa J x B`` and
    ``f_J = kappa (J + grad phi - u x B)``.
    """

    name = "manufactured"

    def __init__(self, Re=1.0, kappa=1.0, B=None, T=1.0):
        self.Re, self.kappa, self.T = float(Re), float(kappa), float(T)
        self.B = B if B is not None else AppliedField()

    # fields, overridden ------------------------------------------------
    def u(self, X, t): raise NotImplementedError
    def u_t(self, X, t): raise NotImplementedError
    def grad_u(self, X, t): raise NotImplementedError  # (n, 3, 3), [i, j] = d u_i / d x_j
    def lap_u(self, X, t): raise NotImplementedError
    def p(self, X, t): raise NotImplementedError
    def grad_p(self, X, t): raise NotImplementedError
    def J(self, X, t): raise NotImplementedError
    def phi(self, X, t): raise NotImplementedError
    def grad_phi(self, X, t): raise NotImplementedError

    def s(self, t):
        return math.exp(-t / self.T)

    # stepper protocol ------------------------------------------------
    def initial_velocity(self, X):
        return self.u(X, 0.0)

    def boundary_velocity(self, X, t):
        return self.u(X, t)

    def boundary_current(self, X, t):
        return self.J(X, t)

    def load_u(self, X, t):
        u = self.u(X, t)
        conv = np.einsum("nij,nj->ni", self.grad_u(X, t), u)
        return (self.u_t(X, t) - self.lap_u(X, t) / self.Re + conv + self.grad_p(X, t)
                - self.kappa * np.cross(self.J(X, t), self.B(X)))

    def load_J(self, X, t):
        return self.kappa * (self.J(X, t) + self.grad_phi(X, t) - np.cross(self.u(X, t), self.B(X)))


class TemporalCase(ManufacturedCase):
    """u = (z sin t, z, 0), J = (cos t, t^2, 0), p = phi = 0.

    u is affine and J constant in space, so the discrete spaces hold them
    exactly and only the time discretization contributes to the error.
    """

    name = "ms1"

    def u(self, X, t):
        z = X[:, 2]
        return np.column_stack([z * math.sin(t), z, np.zeros_like(z)])

    def u_t(self, X, t):
        z = X[:, 2]
        return np.column_stack([z * math.cos(t), np.zeros_like(z), np.zeros_like(z)])

    def grad_u(self, X, t):
        G = np.zeros((len(X), 3, 3))
        G[:, 0, 2] = math.sin(t)
        G[:, 1, 2] = 1.0
        return G

    def lap_u(self, X, t):
        return np.zeros((len(X), 3))

    def p(self, X, t):
        return np.zeros(len(X))

    def grad_p(self, X, t):
        return np.zeros((len(X), 3))

    def J(self, X, t):
        return np.tile([math.cos(t), t * t, 0.0], (len(X), 1))

    def phi(self, X, t):
        return np.zeros(len(X))

    def grad_phi(self, X, t):
        return np.zeros((len(X), 3))


class SpatialCase(ManufacturedCase):
    """Smooth, exponentially decaying fields with nonzero p and phi."""

    name = "ms2"

    @staticmethod
    def _sc(X):
        a = np.pi * X
        return np.sin(a), np.cos(a)

    def u(self, X, t):
        s, c = self._sc(X)
        return math.exp(-t) * np.column_stack([
            s[:, 0] * c[:, 1] * c[:, 2], c[:, 0] * s[:, 1] * c[:, 2], -2 * c[:, 0] * c[:, 1] * s[:, 2]])

    def u_t(self, X, t):
        return -self.u(X, t)

    def grad_u(self, X, t):
        s, c = self._sc(X)
        k = np.pi * math.exp(-t)
        G = np.empty((len(X), 3, 3))
        G[:, 0, 0] = c[:, 0] * c[:, 1] * c[:, 2]
        G[:, 0, 1] = -s[:, 0] * s[:, 1] * c[:, 2]
        G[:, 0, 2] = -s[:, 0] * c[:, 1] * s[:, 2]
        G[:, 1, 0] = -s[:, 0] * s[:, 1] * c[:, 2]
        G[:, 1, 1] = c[:, 0] * c[:, 1] * c[:, 2]
        G[:, 1, 2] = -c[:, 0] * s[:, 1] * s[:, 2]
        G[:, 2, 0] = 2 * s[:, 0] * c[:, 1] * s[:, 2]
        G[:, 2, 1] = 2 * c[:, 0] * s[:, 1] * s[:, 2]
        G[:, 2, 2] = -2 * c[:, 0] * c[:, 1] * c[:, 2]
        return k * G

    def lap_u(self, X, t):
        return -3 * np.pi ** 2 * self.u(X, t)

    def p(self, X, t):
        s, c = self._sc(X)
        return -np.pi * c[:, 0] * c[:, 1] * s[:, 2] * math.exp(-t)

    def grad_p(self, X, t):
        s, c = self._sc(X)
        return np.pi ** 2 * math.exp(-t) * np.column_stack([
            s[:, 0] * c[:, 1] * s[:, 2], c[:, 0] * s[:, 1] * s[:, 2], -c[:, 0] * c[:, 1] * c[:, 2]])

    def J(self, X, t):
        w = X * (1 - X)
        return math.exp(-t) * np.column_stack([w[:, 1] * w[:, 2], w[:, 0] * w[:, 2], w[:, 0] * w[:, 1]])

    def phi(self, X, t):
        return (np.sum(X * X, axis=1) - 1.0) * math.exp(-t)

    def grad_phi(self, X, t):
        return 2 * X * math.exp(-t)


def decay_case(B=None, Re=1.0, kappa=1.0, T=1.0):
    """Unforced run with homogeneous boundary data from the smooth case's initial velocity."""
    return ZeroData(SpatialCase(Re, kappa, B, T).initial_velocity)


CASES = {"ms1": TemporalCase, "ms2": SpatialCase}


def make_case(name, Re=1.0, kappa=1.0, B=None, T=1.0):
    if name == "decay":
        return decay_case(B, Re, kappa, T)
    try:
        return CASES[name](Re, kappa, B, T)
    except KeyError:
        raise ConfigError(f"unknown case {name!r} (expected ms1, ms2 or decay)", key="case") from None


def _fd4(f, x, e, h):
    """Fourth-order central first derivative of f along unit vector e."""
    return (-f(x + 2 * h * e) + 8 * f(x + h * e) - 8 * f(x - h * e) + f(x - 2 * h * e)) / (12 * h)


def _fd4_2(f, x, e, h):
    return (-f(x + 2 * h * e) + 16 * f(x + h * e) - 30 * f(x) + 16 * f(x - h * e)
            - f(x - 2 * h * e)) / (12 * h * h)


def load_residual(case, X, t, h=1e-3):
    """Max residual of both equations with finite-difference derivatives.

    Checks the closed-form loads and derivatives of ``case`` independently
    of the formulas used to build them.
    """
    X = np.atleast_2d(X)
    E = np.eye(3)
    u = case.u(X, t)
    ut = _fd4(lambda tt: case.u(X, tt[0]), np.array([t]), np.array([1.0]), h)
    G = np.stack([_fd4(lambda Y: case.u(Y, t), X, E[j], h) for j in range(3)], axis=2)
    lap = sum(_fd4_2(lambda Y: case.u(Y, t), X, E[j], h) for j in range(3))
    gp = np.column_stack([_fd4(lambda Y: case.p(Y, t), X, E[j], h) for j in range(3)])
    gphi = np.column_stack([_fd4(lambda Y: case.phi(Y, t), X, E[j], h) for j in range(3)])
    B, J = case.B(X), case.J(X, t)
    r_u = ut - lap / case.Re + np.einsum("nij,nj->ni", G, u) + gp - case.kappa * np.cross(J, B) - case.load_u(X, t)
    r_J = case.kappa * (J + gphi - np.cross(u, B)) - case.load_J(X, t)
    return float(max(np.abs(r_u).max(), np.abs(r_J).max()))


# ----------------------------------------------------------------------
# errors
# ----------------------------------------------------------------------
ERROR_COLUMNS = ["h", "dt", "e_u", "e_J", "e_p", "e_phi", "e_s", "div_u", "div_J"]


@dataclass
class ErrorReport:
    h: float
    dt: float
    e_u: float
    e_J: float
    e_p: float
    e_phi: float
    e_s: float
    div_u: float
    div_J: float
    meta: dict = field(default_factory=dict)

    def row(self):
        return [getattr(self, k) for k in ERROR_COLUMNS]


def errors(disc, state, case, dt=float("nan")):
    """Error quantities of ``state`` against the exact fields at ``state.t``.

    e_u compares gradients with the gradient of the energy projection, e_J
    compares with the L2 projection of the current, e_p and e_phi are plain
    L2 errors of the piecewise polynomial fields.
    """
    L, t = disc.layout, state.t
    NJ = disc.cell_proj[0].pi0J.shape[0] // 3
    su = sJ = sp_ = sphi = 0.0
    for cp in disc.cell_proj:
        c = cp.cell
        q = cp.quad
        V = cp.basis.values(q.points)
        cu = (cp.pin @ state.u[L.u_maps[c]]).reshape(3, 10)
        gh = np.einsum("ia,qaj->qij", cu, cp.basis.grads(q.points)[:, :10])
        su += q.weights @ np.sum((case.grad_u(q.points, t) - gh) ** 2, axis=(1, 2))
        cj = (cp.pi0J @ state.J[L.J_maps[c]]).reshape(3, NJ)
        sJ += q.weights @ np.sum((case.J(q.points, t) - V[:, :NJ] @ cj.T) ** 2, axis=1)
        sp_ += q.weights @ (case.p(q.points, t) - V[:, :4] @ state.p[L.p_maps[c]]) ** 2
        sphi += q.weights @ (case.phi(q.points, t) - V[:, :NJ] @ state.phi[L.phi_maps[c]]) ** 2
    du, dj = divergence_norms(disc, state.u, state.J)
    return ErrorReport(mesh_size(disc.mesh), dt, math.sqrt(su), math.sqrt(sJ), math.sqrt(sp_),
                       math.sqrt(sphi), abs(case.s(t) - state.s), du, dj)


def cell_divergence(disc, u, J):
    """Per-cell L2 norms of div u and div J, shape (n_cells, 2)."""
    L = disc.layout
    NJ = disc.cell_proj[0].divJ.shape[0]
    out = np.zeros((len(disc.cell_proj), 2))
    for cp in disc.cell_proj:
        a = cp.divu @ u[L.u_maps[cp.cell]]
        b = cp.divJ @ J[L.J_maps[cp.cell]]
        out[cp.cell] = [math.sqrt(max(a @ cp.mass[:4, :4] @ a, 0.0)),
                        math.sqrt(max(b @ cp.mass[:NJ, :NJ] @ b, 0.0))]
    return out


def fit_slope(x, e):
    """Least-squares slope of log(e) against log(x); needs at least three points."""
    x, e = np.asarray(x, float), np.asarray(e, float)
    if len(x) < 3:
        raise ValueError("a convergence order needs at least three points")
    if np.any(x <= 0) or np.any(e <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(e), 1)[0])


# ----------------------------------------------------------------------
# single runs
# ----------------------------------------------------------------------
def make_mesh(kind="cube", n=4, jitter=0.2, seed=0, path=None):
    if kind == "cube":
        return build_cube_mesh(n)
    if kind == "dtp":
        return build_dtp_mesh(n, jitter=jitter, seed=seed)
    if kind == "file":
        if not path:
            raise ConfigError("mesh.type = file needs mesh.path", key="mesh.path")
        return import_mesh(path)
    raise ConfigError(f"unknown mesh type {kind!r}", key="mesh.type")


@dataclass
class RunSpec:
    """Everything that defines one simulation; plain data so it pickles."""

    mesh_type: str = "cube"
    n: int = 4
    jitter: float = 0.2
    seed: int = 0
    mesh_path: str | None = None
    case: str = "ms1"
    order: int = 1
    dt: float = 0.1
    T: float = 1.0
    Re: float = 1.0
    kappa: float = 1.0
    kJ: int = 1
    B: str = "1, 1, 1"


def simulate(spec, disc=None):
    """Run one simulation; returns (disc, RunResult, ErrorReport or None)."""
    field_ = AppliedField(spec.B)
    if disc is None:
        mesh = make_mesh(spec.mesh_type, spec.n, spec.jitter, spec.seed, spec.mesh_path)
        disc = build_discretization(mesh, spec.kJ, spec.Re, spec.kappa, field_)
    cfg = SchemeConfig(spec.Re, spec.kappa, spec.T, spec.dt, spec.order)
    case = make_case(spec.case, spec.Re, spec.kappa, field_, spec.T)
    result = run(build_systems(disc, cfg), case)
    rep = None
    if isinstance(case, ManufacturedCase):
        rep = errors(disc, result.final, case, spec.dt)
        rep.meta = {"mesh": f"{spec.mesh_type}:{spec.n}", "order": spec.order, "case": spec.case}
    return disc, result, rep


def _report_only(spec):
    return simulate(spec)[2]


# ----------------------------------------------------------------------
# studies
# ----------------------------------------------------------------------
@dataclass
class ConvergencePlan:
    """``temporal``: one mesh of size ``sizes[0]``, time steps ``dts``.
    ``spatial``: meshes ``sizes`` with dt = h ** dt_power (rounded so T / dt is integral).
    """

    mode: str = "temporal"
    base: RunSpec = field(default_factory=RunSpec)
    sizes: tuple = (4,)
    dts: tuple = (0.2, 0.1, 0.05, 0.025, 0.0125)
    dt_power: float | None = None
    workers: int = 1

    def specs(self):
        if self.mode == "temporal":
            return [replace_spec(self.base, n=self.sizes[0], dt=dt) for dt in self.dts]
        if self.mode == "spatial":
            power = self.dt_power if self.dt_power is not None else (2.0 if self.base.order == 1 else 1.0)
            out = []
            for n in self.sizes:
                h = mesh_size(make_mesh(self.base.mesh_type, n, self.base.jitter, self.base.seed,
                                        self.base.mesh_path))
                steps = max(1, math.ceil(self.base.T / h ** power - 1e-9))
                out.append(replace_spec(self.base, n=n, dt=self.base.T / steps))
            return out
        raise ConfigError(f"unknown study mode {self.mode!r}", key="mode")


def replace_spec(spec, **kw):
    d = asdict(spec)
    d.update(kw)
    return RunSpec(**d)


SLOPE_KEYS = ("e_u", "e_J", "e_p", "e_phi", "e_s")


def convergence_study(plan):
    """Run every spec of ``plan``; return (reports, slopes) in plan order."""
    specs = plan.specs()
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as ex:
            reports = list(ex.map(_report_only, specs))
    else:
        reports, disc = [], None
        for s in specs:
            # a temporal study reuses one discretization across time steps
            disc, _, rep = simulate(s, disc if plan.mode == "temporal" else None)
            reports.append(rep)
    if any(r is None for r in reports):
        raise ConfigError("convergence studies need a manufactured case", key="case")
    x = [r.dt for r in reports] if plan.mode == "temporal" else [r.h for r in reports]
    slopes = {k: fit_slope(x, [getattr(r, k) for r in reports]) for k in SLOPE_KEYS}
    return reports, slopes


def _meta_lines(meta):
    return "".join(f"# {k} = {v}\n" for k, v in meta.items())


def write_study(reports, slopes, out_dir, meta=None):
    """errors.csv, slopes.csv and a whitespace-separated convergence.dat."""
    os.makedirs(out_dir, exist_ok=True)
    head = _meta_lines(meta or {})
    with open(os.path.join(out_dir, "errors.csv"), "w", newline="") as fh:
        fh.write(head)
        w = csv.writer(fh)
        w.writerow(ERROR_COLUMNS)
        for r in reports:
            w.writerow([repr(float(v)) for v in r.row()])
    with open(os.path.join(out_dir, "slopes.csv"), "w", newline="") as fh:
        fh.write(head)
        w = csv.writer(fh)
        w.writerow(["quantity", "slope"])
        for k, v in slopes.items():
            w.writerow([k, repr(v)])
    with open(os.path.join(out_dir, "convergence.dat"), "w") as fh:
        fh.write(head)
        fh.write("# " + " ".join(ERROR_COLUMNS) + "\n")
        for r in reports:
            fh.write(" ".join(f"{float(v):.16e}" for v in r.row()) + "\n")


def divergence_table(specs, tol=1e-11, check=True):
    """Rows (mesh, n, h, dt, order, div_u, div_J) for each run in ``specs``.

    With ``check`` a :class:`DivergenceCheckError` names the offending cells.
    """
    rows, cache = [], {}
    for s in specs:
        key = (s.mesh_type, s.n, s.jitter, s.seed, s.mesh_path, s.kJ, s.Re, s.kappa, s.B)
        disc, result, _ = simulate(s, cache.get(key))
        cache = {key: disc}
        st = result.final
        du, dj = divergence_norms(disc, st.u, st.J)
        rows.append({"mesh": s.mesh_type, "n": s.n, "h": mesh_size(disc.mesh), "dt": s.dt,
                     "order": s.order, "div_u": du, "div_J": dj})
        if check and (du > tol or dj > tol):
            per = cell_divergence(disc, st.u, st.J)
            bad = np.flatnonzero(per.max(axis=1) > tol / math.sqrt(disc.mesh.n_cells))
            raise DivergenceCheckError(
                f"{s.mesh_type}:{s.n} dt={s.dt}: div u = {du:.3e}, div J = {dj:.3e}; "
                f"cells {bad.tolist()}", bad)
    return rows
