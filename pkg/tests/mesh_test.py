import numpy as np
import pytest

from geometry import (DomainKind, DomainSpec, GradingSpec, Mesh, MeshError,
                      PointOutsideMeshError, RoughProfile,
                      build_cell_mesh, build_quarter_plane_mesh,
                      build_rough_composite, build_sublayer_mesh,
                      build_unit_square_mesh, refine_toward_corner)


@pytest.mark.parametrize('H, vertices, triangles', [
    (0.5, 9, 8), (1.0, 4, 2), (0.1, 121, 200)])
def test_unit_square_counts(H, vertices, triangles):
    mesh = build_unit_square_mesh(H)
    assert mesh.num_vertices == vertices
    assert mesh.num_triangles == triangles
    assert mesh.labels == ['Bottom', 'Left', 'Right', 'Top']
    assert np.all(mesh.signed_areas() > 0.0)


@pytest.mark.parametrize('H', [0.0, -0.1, 1.5])
def test_unit_square_bad_size(H):
    with pytest.raises(ValueError):
        build_unit_square_mesh(H)


def test_flat_cell_mesh_is_periodic():
    spec = DomainSpec(DomainKind.CELL_TRUNCATED, RoughProfile.flat(),
                      truncation_L=2.0)
    mesh = build_cell_mesh(spec, 0.5)
    y = mesh.vertices[:, 1]
    assert y.min() == pytest.approx(-1.0)
    assert y.max() == pytest.approx(2.0)
    assert set(mesh.labels) == {'Bottom', 'Right', 'ArtificialTop', 'Left'}

    pairs = mesh.periodic_pairs
    assert pairs is not None and len(pairs)
    assert np.array_equal(y[pairs[:, 0]], y[pairs[:, 1]])
    left = np.sort(y[mesh.vertices_with_label('Left')])
    right = np.sort(y[mesh.vertices_with_label('Right')])
    assert np.array_equal(left, right)


def test_cell_mesh_size_limit():
    spec = DomainSpec(DomainKind.CELL_TRUNCATED, truncation_L=2.0)
    with pytest.raises(ValueError):
        build_cell_mesh(spec, 0.75)


def test_sine_bottom_on_curve():
    f = RoughProfile.sine()
    spec = DomainSpec(DomainKind.CELL_TRUNCATED, f, truncation_L=3.0)
    mesh = build_cell_mesh(spec, 0.25, bottom_h=0.05)
    bottom = mesh.vertices[mesh.vertices_with_label('Bottom')]
    assert np.max(np.abs(bottom[:, 1] - f(bottom[:, 0]))) <= 1e-12


def test_quarter_plane_mesh_extent():
    spec = DomainSpec(DomainKind.QUARTER_PLANE_IN, RoughProfile.flat(),
                      truncation_L=3.0)
    mesh = build_quarter_plane_mesh(spec, 0.5)
    left = mesh.vertices[mesh.vertices_with_label('Left')]
    assert np.allclose(left[:, 0], 0.0)
    assert left[:, 1].min() == pytest.approx(-1.0)
    assert left[:, 1].max() == pytest.approx(3.0)
    assert set(mesh.labels) == {'Bottom', 'ArtificialSide',
                                'ArtificialTop', 'Left'}
    assert mesh.quality().min() > 0.1


def test_quarter_plane_corner_off_boundary():
    spec = DomainSpec(DomainKind.QUARTER_PLANE_IN, RoughProfile.flat(),
                      truncation_L=3.0)
    grading = GradingSpec((1.0, 1.0), target_h_min=0.05, background_h=0.5)
    with pytest.raises(ValueError):
        build_quarter_plane_mesh(spec, 0.5, grading=grading)


def test_mesh_write_read_round_trip(tmp_path):
    spec = DomainSpec(DomainKind.CELL_TRUNCATED, RoughProfile.sine(),
                      truncation_L=2.0)
    mesh = build_cell_mesh(spec, 0.5)
    path = mesh.write(tmp_path / 'cell.mesh')
    back = Mesh.read(path).validate()
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary_edges, mesh.boundary_edges)
    assert back.boundary_labels == mesh.boundary_labels
    assert np.array_equal(back.periodic_pairs, mesh.periodic_pairs)


def test_locate_inside_and_outside():
    mesh = build_unit_square_mesh(0.25)
    tris, bary = mesh.locate(np.array([[0.3, 0.7], [0.5, 0.5]]))
    assert np.all(tris >= 0)
    assert np.allclose(bary.sum(axis=1), 1.0)
    with pytest.raises(PointOutsideMeshError) as info:
        mesh.locate(np.array([[1.5, 0.5]]))
    assert info.value.distance == pytest.approx(0.5)
    assert not mesh.contains(np.array([[1.5, 0.5]]))[0]


def test_refinement_toward_corner():
    mesh = build_unit_square_mesh(0.125)
    noop = GradingSpec((1.0, 0.0), target_h_min=0.2, background_h=0.2)
    assert refine_toward_corner(mesh, noop) is mesh

    grading = GradingSpec((1.0, 0.0), target_h_min=0.01, ratio=0.5,
                          background_h=0.2)
    fine = refine_toward_corner(mesh, grading)
    assert fine.num_triangles > mesh.num_triangles
    corner = np.array([1.0, 0.0])
    r = np.linalg.norm(fine.vertices[fine.triangles] - corner,
                       axis=2).min(axis=1)
    near = r < 0.01
    assert np.any(near)
    assert fine.diameters()[near].max() <= 0.01 + 1e-12

    finer = refine_toward_corner(mesh, grading.with_target(0.005))
    assert finer.num_triangles >= fine.num_triangles


def test_flat_sublayer_extent():
    eps = 0.25
    spec = DomainSpec(DomainKind.SUBLAYER, RoughProfile.flat(), epsilon=eps)
    mesh = build_sublayer_mesh(spec)
    y = mesh.vertices[:, 1]
    assert y.min() == pytest.approx(-eps)
    assert y.max() == pytest.approx(eps / 10)
    assert 'Interface' in mesh.labels


def test_composite_overlap_check():
    eps = 0.25
    spec = DomainSpec(DomainKind.ROUGH_FULL, RoughProfile.flat(), epsilon=eps)
    grading = GradingSpec((1.0, -eps), target_h_min=0.02,
                          background_h=eps / 12)
    with pytest.raises(ValueError):
        build_rough_composite(spec, 0.25, grading)


def test_degenerate_mesh_rejected():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    mesh = Mesh(vertices, np.array([[0, 1, 2]]),
                np.array([[0, 1], [1, 2], [2, 0]]),
                ('Bottom', 'Bottom', 'Top'))
    with pytest.raises(MeshError):
        mesh.validate()
