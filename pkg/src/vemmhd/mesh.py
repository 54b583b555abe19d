"""Polyhedral meshes of the unit cube.

A :class:`PolyMesh` stores vertices, oriented faces (vertex loops) and cells
(signed face lists).  Each face normal is stored once; a cell refers to a face
with sign ``+1`` when the stored normal points out of the cell and ``-1``
otherwise.  Geometry (centroids, diameters, fan decompositions) is computed
once at construction and kept in :attr:`PolyMesh.geom`.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import GeometryError, ParseError

__all__ = [
    "PolyMesh",
    "GeomCache",
    "RegularityReport",
    "build_cube_mesh",
    "build_dtp_mesh",
    "import_mesh",
    "export_mesh",
    "mesh_size",
    "regularity_report",
]


@dataclass
class GeomCache:
    """Per-face and per-cell geometric data.

    Face triangles are fans around the face vertex average; cell tetrahedra
    are fans around the cell vertex average through the face triangles.
    """

    face_centroid: np.ndarray
    face_area: np.ndarray
    face_normal: np.ndarray
    face_diameter: np.ndarray
    face_axes: np.ndarray  # (nf, 2, 3) orthonormal in-plane axes
    face_triangles: list  # per face (ntri, 3, 3)
    cell_centroid: np.ndarray
    cell_volume: np.ndarray
    cell_diameter: np.ndarray
    cell_apex: np.ndarray  # fan apex used for the tetrahedra
    cell_tets: list  # per cell (ntet, 4, 3), positively oriented


class PolyMesh:
    """Polyhedral mesh with face orientation signs and boundary flags.

    Parameters
    ----------
    vertices : (nv, 3) array
    faces : sequence of vertex-index loops, counter-clockwise w.r.t. the
        stored normal.
    cell_faces, cell_signs : per-cell face indices and outward signs.
    domain_volume : |Omega|; computed from the boundary when omitted.
    check : validate all invariants (raises :class:`GeometryError`).
    """

    def __init__(self, vertices, faces, cell_faces, cell_signs,
                 domain_volume=None, check=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.faces = [np.asarray(f, dtype=np.int64) for f in faces]
        self.cell_faces = [np.asarray(c, dtype=np.int64) for c in cell_faces]
        self.cell_signs = [np.asarray(s, dtype=np.int64) for s in cell_signs]
        self._build_topology()
        self.geom = _compute_geometry(self)
        if domain_volume is None:
            domain_volume = self._boundary_volume()
        self.domain_volume = float(domain_volume)
        if check:
            self.check()

    # ------------------------------------------------------------------
    @classmethod
    def from_cell_loops(cls, vertices, cell_loops, domain_volume=None, check=True):
        """Build a mesh from cells given as lists of outward vertex loops.

        Shared faces are detected by their vertex sets; the first cell that
        lists a face fixes its stored orientation.
        """
        faces, index = [], {}
        cell_faces, cell_signs = [], []
        for c, loops in enumerate(cell_loops):
            fids, sgns = [], []
            for loop in loops:
                loop = [int(v) for v in loop]
                key = tuple(sorted(loop))
                if key in index:
                    fid = index[key]
                    stored = faces[fid]
                    if not _same_cycle(list(reversed(loop)), stored):
                        raise GeometryError("shared face has inconsistent orientation", cell=c)
                    fids.append(fid)
                    sgns.append(-1)
                else:
                    index[key] = len(faces)
                    fids.append(len(faces))
                    sgns.append(1)
                    faces.append(loop)
            cell_faces.append(fids)
            cell_signs.append(sgns)
        return cls(vertices, faces, cell_faces, cell_signs,
                   domain_volume=domain_volume, check=check)

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_cells(self):
        return len(self.cell_faces)

    def _build_topology(self):
        nf = len(self.faces)
        edge_index = {}
        edges = []
        face_edges = []
        for loop in self.faces:
            fe = []
            m = len(loop)
            for i in range(m):
                a, b = int(loop[i]), int(loop[(i + 1) % m])
                key = (a, b) if a < b else (b, a)
                if key not in edge_index:
                    edge_index[key] = len(edges)
                    edges.append(key)
                fe.append(edge_index[key])
            face_edges.append(np.array(fe, dtype=np.int64))
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.face_edges = face_edges

        face_cells = -np.ones((nf, 2), dtype=np.int64)
        counts = np.zeros(nf, dtype=np.int64)
        for c, (fids, sgns) in enumerate(zip(self.cell_faces, self.cell_signs)):
            for f, s in zip(fids, sgns):
                if counts[f] >= 2:
                    raise GeometryError(f"face {f} belongs to more than two cells", cell=c)
                face_cells[f, counts[f]] = c
                counts[f] += 1
        self.face_cells = face_cells
        self._face_counts = counts

        self.cell_vertices = []
        self.cell_edges = []
        for fids in self.cell_faces:
            self.cell_vertices.append(np.unique(np.concatenate([self.faces[f] for f in fids])))
            self.cell_edges.append(np.unique(np.concatenate([self.face_edges[f] for f in fids])))

        self.boundary_face = counts == 1
        self.boundary_edge = np.zeros(len(self.edges), dtype=bool)
        self.boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        for f in np.flatnonzero(self.boundary_face):
            self.boundary_edge[self.face_edges[f]] = True
            self.boundary_vertex[self.faces[f]] = True

    def _boundary_volume(self):
        g = self.geom
        vol = 0.0
        for f in np.flatnonzero(self.boundary_face):
            c = self.face_cells[f, 0]
            k = list(self.cell_faces[c]).index(f)
            sgn = self.cell_signs[c][k]
            vol += sgn * g.face_area[f] * (g.face_normal[f] @ g.face_centroid[f]) / 3.0
        return vol

    # ------------------------------------------------------------------
    def check(self):
        """Validate the mesh invariants; raise GeometryError on violation."""
        g = self.geom
        for f, loop in enumerate(self.faces):
            pts = self.vertices[loop]
            dev = np.abs((pts - g.face_centroid[f]) @ g.face_normal[f]).max()
            if dev > 1e-10 * g.face_diameter[f]:
                raise GeometryError(f"face {f} is not planar (deviation {dev:.3e})")
        if np.any(self._face_counts == 0):
            raise GeometryError("mesh has faces not owned by any cell")
        for f in np.flatnonzero(self._face_counts == 2):
            c0, c1 = self.face_cells[f]
            s0 = self.cell_signs[c0][list(self.cell_faces[c0]).index(f)]
            s1 = self.cell_signs[c1][list(self.cell_faces[c1]).index(f)]
            if s0 + s1 != 0:
                raise GeometryError(f"interior face {f} has equal orientation in both cells", cell=c1)
        for c in range(self.n_cells):
            fids, sgns = self.cell_faces[c], self.cell_signs[c]
            closure = (sgns[:, None] * g.face_area[fids, None] * g.face_normal[fids]).sum(axis=0)
            hk = g.cell_diameter[c]
            if np.linalg.norm(closure) > 1e-12 * max(hk * hk, 1.0) * 10:
                raise GeometryError("faces do not close", cell=c)
            nv, ne, nf = len(self.cell_vertices[c]), len(self.cell_edges[c]), len(fids)
            if nv - ne + nf != 2:
                raise GeometryError(f"Euler characteristic {nv - ne + nf} != 2", cell=c)
        total = g.cell_volume.sum()
        if abs(total - self.domain_volume) > 1e-12 * max(1.0, self.domain_volume) * 10:
            raise GeometryError(f"cell volumes sum to {total!r}, domain volume {self.domain_volume!r}")

    def cell_face_sign(self, c, f):
        return int(self.cell_signs[c][list(self.cell_faces[c]).index(f)])

    def scaled(self, factor):
        """Return a copy with every coordinate multiplied by ``factor``."""
        return PolyMesh(self.vertices * factor, self.faces, self.cell_faces, self.cell_signs,
                        domain_volume=self.domain_volume * factor ** 3)

    def __repr__(self):
        return (f"PolyMesh(vertices={self.n_vertices}, edges={self.n_edges}, "
                f"faces={self.n_faces}, cells={self.n_cells})")


def _same_cycle(a, b):
    if len(a) != len(b):
        return False
    b = [int(x) for x in b]
    try:
        i = b.index(a[0])
    except ValueError:
        return False
    return b[i:] + b[:i] == list(a)


def _compute_geometry(mesh):
    V = mesh.vertices
    nf, nc = mesh.n_faces, mesh.n_cells
    fcen = np.zeros((nf, 3))
    farea = np.zeros(nf)
    fnorm = np.zeros((nf, 3))
    fdiam = np.zeros(nf)
    faxes = np.zeros((nf, 2, 3))
    ftris = []
    favg = np.zeros((nf, 3))
    for f, loop in enumerate(mesh.faces):
        p = V[loop]
        q = np.roll(p, -1, axis=0)
        avec = 0.5 * np.cross(p, q).sum(axis=0)
        amag = np.linalg.norm(avec)
        if amag <= 0.0:
            raise GeometryError(f"face {f} has zero area")
        n = avec / amag
        c0 = p.mean(axis=0)
        tri = np.stack([np.broadcast_to(c0, p.shape), p, q], axis=1)
        ta = 0.5 * np.cross(p - c0, q - c0) @ n
        if np.any(ta <= 0.0):
            raise GeometryError(f"face {f} is not star-shaped w.r.t. its vertex average")
        fcen[f] = (ta[:, None] * tri.mean(axis=1)).sum(axis=0) / ta.sum()
        farea[f] = ta.sum()
        fnorm[f] = n
        fdiam[f] = _diameter(p)
        t1 = p[1] - p[0]
        t1 = t1 - (t1 @ n) * n
        t1 /= np.linalg.norm(t1)
        faxes[f, 0] = t1
        faxes[f, 1] = np.cross(n, t1)
        ftris.append(tri.copy())
        favg[f] = c0

    ccen = np.zeros((nc, 3))
    cvol = np.zeros(nc)
    cdiam = np.zeros(nc)
    capex = np.zeros((nc, 3))
    ctets = []
    for c in range(nc):
        pts = V[mesh.cell_vertices[c]]
        apex = pts.mean(axis=0)
        tets = []
        for f, s in zip(mesh.cell_faces[c], mesh.cell_signs[c]):
            tri = ftris[f]
            if s < 0:
                tri = tri[:, [0, 2, 1]]
            tets.append(np.concatenate([np.broadcast_to(apex, (len(tri), 1, 3)), tri], axis=1))
        tets = np.concatenate(tets, axis=0)
        e1 = tets[:, 1] - tets[:, 0]
        e2 = tets[:, 2] - tets[:, 0]
        e3 = tets[:, 3] - tets[:, 0]
        vols = np.einsum("ij,ij->i", e1, np.cross(e2, e3)) / 6.0
        if np.any(vols <= 0.0):
            raise GeometryError("non-positive tetrahedron in fan decomposition", cell=c)
        cvol[c] = vols.sum()
        ccen[c] = (vols[:, None] * tets.mean(axis=1)).sum(axis=0) / cvol[c]
        cdiam[c] = _diameter(pts)
        capex[c] = apex
        ctets.append(tets)
    return GeomCache(fcen, farea, fnorm, fdiam, faxes, ftris, ccen, cvol, cdiam, capex, ctets)


def _diameter(pts):
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d * d).sum(axis=-1).max()))


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------
def _grid_vertices(n):
    t = np.linspace(0.0, 1.0, n + 1)
    z, y, x = np.meshgrid(t, t, t, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), z.ravel()])


def build_cube_mesh(n):
    """Structured mesh of ``n**3`` axis-aligned cubes on [0, 1]^3."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = n + 1

    def vid(i, j, k):
        return i + m * (j + m * k)

    verts = _grid_vertices(n)
    faces = []
    xface, yface, zface = {}, {}, {}
    for i in range(m):
        for j in range(n):
            for k in range(n):
                xface[i, j, k] = len(faces)
                faces.append([vid(i, j, k), vid(i, j + 1, k), vid(i, j + 1, k + 1), vid(i, j, k + 1)])
    for j in range(m):
        for k in range(n):
            for i in range(n):
                yface[i, j, k] = len(faces)
                faces.append([vid(i, j, k), vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j, k)])
    for k in range(m):
        for i in range(n):
            for j in range(n):
                zface[i, j, k] = len(faces)
                faces.append([vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k)])
    cell_faces, cell_signs = [], []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                cell_faces.append([xface[i, j, k], xface[i + 1, j, k], yface[i, j, k],
                                   yface[i, j + 1, k], zface[i, j, k], zface[i, j, k + 1]])
                cell_signs.append([-1, 1, -1, 1, -1, 1])
    return PolyMesh(verts, faces, cell_faces, cell_signs, domain_volume=1.0)


def build_dtp_mesh(n, jitter=0.0, seed=0):
    """Triangular-prism mesh: every grid cube is cut into two vertical prisms.

    Interior vertices are moved by a seeded uniform offset of at most
    ``jitter / n`` per coordinate; boundary vertices move only within the
    boundary.  Side quadrilaterals that lose planarity are split into two
    triangles along the diagonal through their lowest vertex index, so both
    neighbours agree on the split.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= jitter < 0.3:
        raise ValueError("jitter must lie in [0, 0.3)")
    m = n + 1
    verts = _grid_vertices(n)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        offset = rng.uniform(-1.0, 1.0, size=verts.shape) * (jitter / n)
        idx = np.rint(verts * n).astype(int)
        offset[(idx == 0) | (idx == n)] = 0.0
        verts = verts + offset

    def vid(i, j, k):
        return i + m * (j + m * k)

    def side(a, b, up):
        quad = [a, b, b + up, a + up]
        if _planar(verts[quad]):
            return [quad]
        p = int(np.argmin(quad))
        q = quad[p:] + quad[:p]
        return [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]

    up = m * m
    cells = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                v00, v10 = vid(i, j, k), vid(i + 1, j, k)
                v11, v01 = vid(i + 1, j + 1, k), vid(i, j + 1, k)
                for tri in ([v00, v10, v11], [v00, v11, v01]):
                    a, b, c = tri
                    loops = [[a, c, b], [a + up, b + up, c + up]]
                    for p, q in ((a, b), (b, c), (c, a)):
                        loops.extend(side(p, q, up))
                    cells.append(loops)
    return PolyMesh.from_cell_loops(verts, cells, domain_volume=1.0)


def _planar(pts):
    n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    scale = _diameter(pts)
    return abs((pts[3] - pts[0]) @ n) / np.linalg.norm(n) <= 1e-13 * scale


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------
def export_mesh(mesh, path):
    """Write ``mesh`` in the text format read by :func:`import_mesh`.

    All indices in the file are one-based so that face references in cell
    lines can carry an orientation sign.
    """
    lines = ["polymesh 1", f"vertices {mesh.n_vertices}"]
    lines += [" ".join(f"{x:.17g}" for x in v) for v in mesh.vertices]
    lines.append(f"faces {mesh.n_faces}")
    lines += [" ".join([str(len(f))] + [str(v + 1) for v in f]) for f in mesh.faces]
    lines.append(f"cells {mesh.n_cells}")
    for fids, sgns in zip(mesh.cell_faces, mesh.cell_signs):
        lines.append(" ".join([str(len(fids))] + [str(int(s) * (int(f) + 1)) for f, s in zip(fids, sgns)]))
    bnd = np.flatnonzero(mesh.boundary_face)
    lines.append(f"boundary {len(bnd)}")
    lines += [str(f + 1) for f in bnd]
    Path(path).write_text("\n".join(lines) + "\n")


def import_mesh(path, check=True):
    """Read a mesh file; invariants are validated on load."""
    raw = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(raw) if ln]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(f"{path}: unexpected end of file")
        item = lines[pos]
        pos += 1
        return item

    def header(name):
        lineno, ln = take()
        parts = ln.split()
        if len(parts) != 2 or parts[0] != name:
            raise ParseError(f"{path}:{lineno}: expected '{name} <count>', got {ln!r}")
        try:
            return int(parts[1])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad count {parts[1]!r}") from None

    def ints(lineno, ln):
        try:
            vals = [int(t) for t in ln.split()]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: expected integers, got {ln!r}") from None
        if not vals or vals[0] != len(vals) - 1:
            raise ParseError(f"{path}:{lineno}: length prefix does not match entry count")
        return vals[1:]

    lineno, ln = take()
    if ln.split() != ["polymesh", "1"]:
        raise ParseError(f"{path}:{lineno}: missing 'polymesh 1' header")
    nv = header("vertices")
    verts = np.empty((nv, 3))
    for i in range(nv):
        lineno, ln = take()
        try:
            xyz = [float(t) for t in ln.split()]
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad coordinates {ln!r}") from None
        if len(xyz) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 coordinates")
        verts[i] = xyz
    nfaces = header("faces")
    faces = []
    for _ in range(nfaces):
        lineno, ln = take()
        loop = ints(lineno, ln)
        if len(loop) < 3 or min(loop) < 1 or max(loop) > nv:
            raise ParseError(f"{path}:{lineno}: invalid face vertex list")
        faces.append([v - 1 for v in loop])
    ncells = header("cells")
    cell_faces, cell_signs = [], []
    for _ in range(ncells):
        lineno, ln = take()
        refs = ints(lineno, ln)
        if any(r == 0 or abs(r) > nfaces for r in refs):
            raise ParseError(f"{path}:{lineno}: invalid face reference")
        cell_faces.append([abs(r) - 1 for r in refs])
        cell_signs.append([1 if r > 0 else -1 for r in refs])
    boundary = None
    if pos < len(lines):
        nb = header("boundary")
        boundary = []
        for _ in range(nb):
            lineno, ln = take()
            try:
                boundary.append(int(ln) - 1)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad boundary face index") from None
    if pos < len(lines):
        raise ParseError(f"{path}:{lines[pos][0]}: trailing content")
    mesh = PolyMesh(verts, faces, cell_faces, cell_signs, check=check)
    if boundary is not None and set(boundary) != set(np.flatnonzero(mesh.boundary_face).tolist()):
        raise GeometryError("boundary section disagrees with face ownership")
    return mesh


# ----------------------------------------------------------------------
def mesh_size(mesh):
    """h = (|Omega| / N_K)^(1/3)."""
    return (mesh.domain_volume / mesh.n_cells) ** (1.0 / 3.0)


@dataclass
class RegularityReport:
    """Surrogate shape-regularity metrics, each scaled by the cell diameter.

    ``ball`` is the distance from the fan apex to the nearest face plane,
    ``disk`` the smallest distance from a face vertex average to one of its
    edge lines, ``edge`` the shortest edge.  These bound the star-shapedness
    radii from below for convex cells; they are not exact tests.
    """

    ball: np.ndarray
    disk: np.ndarray
    edge: np.ndarray
    rho: float

    @property
    def flagged(self):
        low = np.minimum(np.minimum(self.ball, self.disk), self.edge)
        return np.flatnonzero(low < self.rho)


def regularity_report(mesh, rho):
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    g = mesh.geom
    V = mesh.vertices
    nc = mesh.n_cells
    ball = np.empty(nc)
    disk = np.empty(nc)
    edge = np.empty(nc)
    fdisk = np.empty(mesh.n_faces)
    for f, loop in enumerate(mesh.faces):
        p = V[loop]
        q = np.roll(p, -1, axis=0)
        c0 = g.face_triangles[f][0, 0]
        d = q - p
        dist = np.linalg.norm(np.cross(d, c0 - p), axis=1) / np.linalg.norm(d, axis=1)
        fdisk[f] = dist.min()
    elen = np.linalg.norm(V[mesh.edges[:, 1]] - V[mesh.edges[:, 0]], axis=1)
    for c in range(nc):
        fids = mesh.cell_faces[c]
        hk = g.cell_diameter[c]
        apex = g.cell_apex[c]
        ball[c] = np.abs(np.einsum("ij,ij->i", g.face_centroid[fids] - apex, g.face_normal[fids])).min() / hk
        disk[c] = fdisk[fids].min() / hk
        edge[c] = elen[mesh.cell_edges[c]].min() / hk
    return RegularityReport(ball, disk, edge, rho)
