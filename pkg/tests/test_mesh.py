import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vemmhd.exceptions import GeometryError, ParseError
from vemmhd.mesh import (PolyMesh, build_cube_mesh, build_dtp_mesh, export_mesh, import_mesh,
                         mesh_size, regularity_report)

from conftest import VORONOI


def test_cube_counts(cube2):
    assert (cube2.n_vertices, cube2.n_edges, cube2.n_faces, cube2.n_cells) == (27, 54, 36, 8)
    assert cube2.boundary_face.sum() == 24


@pytest.mark.parametrize("mesh", [build_cube_mesh(3), build_dtp_mesh(3, 0.2, 1), build_dtp_mesh(2)])
def test_generated_invariants(mesh):
    g = mesh.geom
    assert abs(g.cell_volume.sum() - 1.0) < 1e-12
    for f in range(mesh.n_faces):
        cells = [c for c in mesh.face_cells[f] if c >= 0]
        if mesh.boundary_face[f]:
            assert len(cells) == 1
        else:
            assert len(cells) == 2
            assert mesh.cell_face_sign(cells[0], f) == -mesh.cell_face_sign(cells[1], f)
    for c in range(mesh.n_cells):
        assert len(mesh.cell_vertices[c]) - len(mesh.cell_edges[c]) + len(mesh.cell_faces[c]) == 2


def test_dtp_boundary_stays_on_cube():
    m = build_dtp_mesh(3, jitter=0.25, seed=5)
    V = m.vertices[m.boundary_vertex]
    on_wall = np.isclose(V, 0.0, atol=1e-15) | np.isclose(V, 1.0, atol=1e-15)
    assert on_wall.any(axis=1).all()
    assert np.all((m.vertices >= 0) & (m.vertices <= 1))


def test_mesh_size_examples(voronoi):
    assert mesh_size(build_cube_mesh(1)) == pytest.approx(1.0)
    assert mesh_size(build_cube_mesh(4)) == pytest.approx(0.25)
    assert mesh_size(voronoi) == pytest.approx(0.25)
    m = build_dtp_mesh(4)
    assert m.n_cells == 128
    assert mesh_size(m) == pytest.approx(1.9843e-01, abs=5e-5)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0))
def test_mesh_size_scale_covariant(lam):
    m = build_dtp_mesh(2, 0.2, 3)
    assert mesh_size(m.scaled(lam)) == pytest.approx(lam * mesh_size(m), rel=1e-12)


def test_round_trip_is_identity(tmp_path, voronoi):
    for mesh in (build_dtp_mesh(2, 0.25, 7), voronoi):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        export_mesh(mesh, a)
        export_mesh(import_mesh(a), b)
        assert a.read_text() == b.read_text()


def test_import_equals_generator(tmp_path):
    ref = build_cube_mesh(2)
    path = tmp_path / "cube.txt"
    export_mesh(ref, path)
    text = path.read_text().splitlines()
    # reverse the cell order; the mesh must be the same up to that permutation
    i = next(k for k, ln in enumerate(text) if ln.startswith("cells"))
    n = int(text[i].split()[1])
    text[i + 1:i + 1 + n] = text[i + 1:i + 1 + n][::-1]
    path.write_text("\n".join(text) + "\n")
    m = import_mesh(path)
    np.testing.assert_array_equal(m.vertices, ref.vertices)
    got = sorted(tuple(np.round(m.geom.cell_centroid[c], 12)) for c in range(m.n_cells))
    want = sorted(tuple(np.round(ref.geom.cell_centroid[c], 12)) for c in range(ref.n_cells))
    assert got == want


def test_open_cell_is_rejected(tmp_path):
    path = tmp_path / "m.txt"
    export_mesh(build_cube_mesh(1), path)
    lines = path.read_text().splitlines()
    i = next(k for k, ln in enumerate(lines) if ln.startswith("cells"))
    parts = lines[i + 1].split()
    parts[1] = str(-int(parts[1]))  # flip one face: the surface no longer closes
    lines[i + 1] = " ".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(GeometryError) as err:
        import_mesh(path)
    assert err.value.cell == 0


@pytest.mark.parametrize("text, line", [
    ("polymesh 2\n", 1),
    ("polymesh 1\nvertices 2\n0 0 0\n1 1\n", 4),
    ("polymesh 1\nvertices 1\n0 0 0\nfaces 1\n3 1 2 x\n", 5),
])
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(ParseError, match=f":{line}:"):
        import_mesh(path)


def test_regularity_cube(cube1):
    rep = regularity_report(cube1, 0.1)
    assert rep.edge[0] == pytest.approx(1 / np.sqrt(3))
    assert len(rep.flagged) == 0


def test_regularity_flags_sliver():
    eps = 1e-3
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, eps], [1, 0, eps], [0, 1, eps]], float)
    loops = [[0, 2, 1], [3, 4, 5], [0, 1, 4, 3], [1, 2, 5, 4], [2, 0, 3, 5]]
    m = PolyMesh.from_cell_loops(V, [loops])
    assert list(regularity_report(m, 0.1).flagged) == [0]


def test_regularity_translation_invariant():
    rep = regularity_report(build_dtp_mesh(3, jitter=0.0), 0.1)
    for arr in (rep.ball, rep.disk, rep.edge):
        assert np.ptp(arr) < 1e-12


def test_voronoi_fixture_is_valid(voronoi):
    assert voronoi.n_cells == 64
    assert abs(voronoi.geom.cell_volume.sum() - 1.0) < 1e-12
    assert max(len(f) for f in voronoi.cell_faces) > 6
