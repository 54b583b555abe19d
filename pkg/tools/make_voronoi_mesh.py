"""Write a clipped Voronoi mesh of the unit cube in the polymesh text format.

Seeds are mirrored across the six faces of the cube, so the Voronoi cells
of the original seeds tile the cube exactly.  A few Lloyd sweeps keep the
cells away from tiny edges.  Used to produce tests/data/voronoi64.txt:

    python3 tools/make_voronoi_mesh.py --cells 64 --seed 3 -o tests/data/voronoi64.txt
"""
import argparse

import numpy as np
from scipy.spatial import ConvexHull, Voronoi

from vemmhd.mesh import PolyMesh, export_mesh, mesh_size


def _mirror(seeds):
    out = [seeds]
    for d in range(3):
        for wall in (0.0, 1.0):
            m = seeds.copy()
            m[:, d] = 2 * wall - m[:, d]
            out.append(m)
    return np.concatenate(out)


def _cells(seeds):
    n = len(seeds)
    vor = Voronoi(_mirror(seeds))
    loops = [[] for _ in range(n)]
    for (a, b), ridge in zip(vor.ridge_points, vor.ridge_vertices):
        if a >= n and b >= n:
            continue
        if -1 in ridge:
            raise RuntimeError("unbounded ridge inside the cube")
        pts = vor.vertices[ridge]
        c = pts.mean(axis=0)
        for own, other in ((a, b), (b, a)):
            if own >= n:
                continue
            normal = vor.points[other] - vor.points[own]
            normal /= np.linalg.norm(normal)
            t1 = pts[0] - c
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(normal, t1)
            ang = np.arctan2((pts - c) @ t2, (pts - c) @ t1)
            loops[own].append([ridge[i] for i in np.argsort(ang)])
    return vor.vertices, loops


def _lloyd(seeds, sweeps):
    for _ in range(sweeps):
        verts, loops = _cells(seeds)
        for i, cell in enumerate(loops):
            ids = sorted({v for loop in cell for v in loop})
            hull = ConvexHull(verts[ids])
            # volume-weighted centroid of the hull's fan tetrahedra
            c0 = verts[ids].mean(axis=0)
            tets = verts[ids][hull.simplices]
            vol = np.abs(np.einsum("ij,ij->i", tets[:, 0] - c0,
                                   np.cross(tets[:, 1] - c0, tets[:, 2] - c0))) / 6
            cent = (tets.sum(axis=1) + c0) / 4
            seeds[i] = (vol[:, None] * cent).sum(axis=0) / vol.sum()
    return seeds


def build(cells, seed, sweeps):
    rng = np.random.default_rng(seed)
    seeds = _lloyd(rng.random((cells, 3)), sweeps)
    verts, loops = _cells(seeds)
    used = sorted({v for cell in loops for loop in cell for v in loop})
    remap = {v: i for i, v in enumerate(used)}
    cell_loops = [[[remap[v] for v in loop] for loop in cell] for cell in loops]
    return PolyMesh.from_cell_loops(verts[used], cell_loops, domain_volume=1.0)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cells", type=int, default=64)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--sweeps", type=int, default=20)
    p.add_argument("-o", "--output", required=True)
    a = p.parse_args()
    mesh = build(a.cells, a.seed, a.sweeps)
    export_mesh(mesh, a.output)
    print(f"{a.output}: {mesh.n_cells} cells, {mesh.n_faces} faces, h = {mesh_size(mesh):.6g}")


if __name__ == "__main__":
    main()
