import numpy as np
import pytest

from vitacsim.errors import InvertedTetError, MarkerOutOfBoundsError, MeshFormatError, NonManifoldBoundaryError
from vitacsim.geometry import (
    BoxSelector,
    GelSpec,
    MarkerGridSpec,
    TetMesh,
    bind_markers,
    generate_gel_mesh,
    load_tet_mesh,
    save_tet_mesh,
    tet_volumes,
)


def test_default_gel_lattice_counts():
    # lattice points of an 8x6x2 structured box: 9*7*3 vertices, 9*7 on the shell face
    mesh = generate_gel_mesh(GelSpec(subdivisions=(8, 6, 2)))
    assert mesh.n_vertices == 189
    assert len(mesh.constrained_set) == 63


def test_unit_box_lattice():
    mesh = generate_gel_mesh(GelSpec(subdivisions=(1, 1, 1)))
    assert mesh.n_vertices == 8
    assert len(mesh.constrained_set) == 4


def test_base_footprint_preserved():
    # stock pad footprint is 20.75 mm x 25.25 mm
    mesh = generate_gel_mesh(GelSpec())
    assert abs(np.ptp(mesh.vertices[:, 0]) - 0.02525) < 1e-12
    assert abs(np.ptp(mesh.vertices[:, 1]) - 0.02075) < 1e-12
    assert abs(np.ptp(mesh.vertices[:, 2]) - 0.004) < 1e-12


def test_tets_positive_and_boundary_closed():
    mesh = generate_gel_mesh(GelSpec(subdivisions=(3, 2, 2)))
    assert np.all(tet_volumes(mesh.vertices, mesh.tets) > 0)
    # every boundary face appears exactly once over all tets
    faces = {}
    local = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]
    for tet in mesh.tets:
        for f in local:
            key = tuple(sorted(tet[list(f)]))
            faces[key] = faces.get(key, 0) + 1
    boundary = {k for k, v in faces.items() if v == 1}
    assert boundary == {tuple(sorted(t)) for t in mesh.surface_tris.tolist()}


def test_boundary_euler_characteristic_is_two():
    mesh = generate_gel_mesh(GelSpec(subdivisions=(4, 3, 2)))
    v = len(np.unique(mesh.surface_tris))
    e = len(mesh.surface_edges)
    f = len(mesh.surface_tris)
    assert v - e + f == 2


def test_surface_normals_point_outward():
    mesh = generate_gel_mesh(GelSpec(subdivisions=(2, 2, 1)))
    center = mesh.vertices.mean(axis=0)
    tris = mesh.vertices[mesh.surface_tris]
    normals = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    outward = np.einsum("ij,ij->i", normals, tris.mean(axis=1) - center)
    assert np.all(outward > 0)


def test_degenerate_gel_dimensions_rejected():
    with pytest.raises(ValueError):
        generate_gel_mesh(GelSpec(thickness=0.0))
    with pytest.raises(ValueError):
        generate_gel_mesh(GelSpec(subdivisions=(0, 1, 1)))


# -- file round trip ---------------------------------------------------------


def test_mesh_file_roundtrip(tmp_path):
    mesh = generate_gel_mesh(GelSpec(subdivisions=(2, 2, 1)))
    path = tmp_path / "gel.tet"
    save_tet_mesh(mesh, path)
    loaded = load_tet_mesh(path)
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.tets, mesh.tets)
    assert np.array_equal(loaded.constrained_set, mesh.constrained_set)


def test_load_single_tet(tmp_path):
    path = tmp_path / "one.tet"
    path.write_text(
        "tetmesh v1 unit=m\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nt 0 1 2 3\n"
    )
    mesh = load_tet_mesh(path)
    assert mesh.n_vertices == 4
    assert len(mesh.surface_tris) == 4


def test_load_inverted_tet_rejected(tmp_path):
    path = tmp_path / "bad.tet"
    path.write_text(
        "tetmesh v1 unit=m\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 -1\nt 0 1 2 3\n"
    )
    with pytest.raises(InvertedTetError):
        load_tet_mesh(path)


def test_load_parse_failures(tmp_path):
    bad_header = tmp_path / "h.tet"
    bad_header.write_text("trimesh v9\nv 0 0 0\n")
    with pytest.raises(MeshFormatError):
        load_tet_mesh(bad_header)
    bad_index = tmp_path / "i.tet"
    bad_index.write_text("tetmesh v1 unit=m\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nt 0 1 2 9\n")
    with pytest.raises(MeshFormatError):
        load_tet_mesh(bad_index)
    bad_record = tmp_path / "r.tet"
    bad_record.write_text("tetmesh v1 unit=m\nq 1 2 3\n")
    with pytest.raises(MeshFormatError):
        load_tet_mesh(bad_record)


def test_load_nonmanifold_rejected(tmp_path):
    # three tets sharing one face
    path = tmp_path / "nm.tet"
    path.write_text(
        "tetmesh v1 unit=m\n"
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0.4 0.4 1\nv 0.3 0.3 1\n"
        "t 0 1 2 3\nt 0 1 2 4\nt 0 1 2 5\n"
    )
    with pytest.raises(NonManifoldBoundaryError):
        load_tet_mesh(path)


def test_box_selector_counts(tmp_path):
    mesh = generate_gel_mesh(GelSpec(subdivisions=(8, 6, 2)))
    path = tmp_path / "box.tet"
    save_tet_mesh(mesh, path)
    selector = BoxSelector(lo=(-1, -1, 0.002 - 1e-9), hi=(1, 1, 1))
    loaded = load_tet_mesh(path, constrained_selector=selector)
    assert len(loaded.constrained_set) == 63  # 9*7 lattice points on the top face


# -- marker binding ----------------------------------------------------------


def _single_facet_mesh():
    # one tet whose (0,1,2) face carries markers; vertex 3 is the shell side
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    tets = np.array([[0, 2, 1, 3]])
    if tet_volumes(verts, tets)[0] < 0:
        tets = np.array([[0, 1, 2, 3]])
    mesh = TetMesh(verts, tets, constrained_set=np.array([3]))
    mesh.marker_surface_tris = mesh.surface_tris[
        np.all(np.isin(mesh.surface_tris, [0, 1, 2]), axis=1)
    ]
    return mesh


def test_marker_at_vertex_and_centroid():
    mesh = _single_facet_mesh()
    grid = MarkerGridSpec(rows=1, cols=1, spacing=1.0, center=(0.0, 0.0))
    binding = bind_markers(mesh, grid)
    w = np.sort(binding.weights[0])[::-1]
    assert np.allclose(w, [1.0, 0.0, 0.0], atol=1e-12)

    grid = MarkerGridSpec(rows=1, cols=1, spacing=1.0, center=(1 / 3, 1 / 3))
    binding = bind_markers(mesh, grid)
    assert np.allclose(binding.weights[0], [1 / 3, 1 / 3, 1 / 3], atol=1e-12)
    assert np.allclose(binding.rest_points[0], [1 / 3, 1 / 3, 0.0], atol=1e-12)


def test_default_grid_binding_properties():
    mesh = generate_gel_mesh(GelSpec(subdivisions=(6, 4, 2)))
    binding = bind_markers(mesh, MarkerGridSpec())
    assert binding.n_markers == 63
    assert np.all(binding.weights >= 0)
    # partition of unity and rest-position reconstruction
    assert np.allclose(binding.weights.sum(axis=1), 1.0, atol=1e-12)
    grid_pts = MarkerGridSpec().points(-0.002)
    assert np.max(np.linalg.norm(binding.rest_points - grid_pts, axis=1)) < 1e-10


def test_marker_outside_surface_names_index():
    mesh = generate_gel_mesh(GelSpec(subdivisions=(4, 3, 1)))
    grid = MarkerGridSpec(rows=1, cols=2, spacing=0.05)  # far beyond the pad
    with pytest.raises(MarkerOutOfBoundsError) as err:
        bind_markers(mesh, grid)
    assert err.value.marker_index in (0, 1)
