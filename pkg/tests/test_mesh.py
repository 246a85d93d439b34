import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mitbag.geometry import disk_domain, outer_normal, polygon_domain, round_corners
from mitbag.mesh import BOX, INTERFACE, MeshError, graded_layers, mesh_box_with_interface, mesh_domain

SQUARE = polygon_domain([(0, 0), (1, 0), (1, 1), (0, 1)])
DISK = disk_domain(1.0)


def _edge_counts(tris):
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return counts


def _inside_convex(poly, pts):
    a, b = poly, np.roll(poly, -1, axis=0)
    cross = (b[None, :, 0] - a[None, :, 0]) * (pts[:, None, 1] - a[None, :, 1]) - \
        (b[None, :, 1] - a[None, :, 1]) * (pts[:, None, 0] - a[None, :, 0])
    return np.all(cross > 1e-14, axis=1)


def test_square_coarse():
    mesh = mesh_domain(SQUARE, 0.5)
    assert len(mesh.triangles) >= 8
    assert len(mesh.corner_nodes) == 4
    assert np.allclose(np.sort(mesh.nodes[mesh.corner_nodes], axis=0), [[0, 0], [0, 0], [1, 1], [1, 1]])


def test_disk_kappa_tags():
    mesh = mesh_domain(DISK, 0.1)
    assert np.all(mesh.facet_gauss_kappa == 1.0)
    assert len(mesh.corner_nodes) == 0


@pytest.mark.parametrize("dom", [SQUARE, DISK], ids=["square", "disk"])
def test_refinement_quadruples(dom):
    a = len(mesh_domain(dom, 0.1).triangles)
    b = len(mesh_domain(dom, 0.05).triangles)
    assert 0.8 * 4 <= b / a <= 1.2 * 4


def test_feature_size_error():
    with pytest.raises(MeshError):
        mesh_domain(SQUARE, 2.0)


@pytest.mark.parametrize("dom", [SQUARE, DISK, round_corners(SQUARE, 0.2)], ids=["square", "disk", "rounded"])
def test_domain_mesh_invariants(dom):
    mesh = mesh_domain(dom, 0.08)
    assert mesh.triangle_areas.min() > 0
    assert _edge_counts(mesh.triangles).max() <= 2
    # boundary nodes lie on the curve
    d = np.linalg.norm(mesh.nodes[mesh.boundary_nodes] - dom.center, axis=1)
    theta = dom.angle_of(mesh.nodes[mesh.boundary_nodes])
    assert np.allclose(d, dom.radius_at(theta), atol=1e-12)
    # midpoint normal tags against the geometry (chord midpoints projected radially)
    mids = mesh.nodes[mesh.facets].mean(axis=1)
    on_curve = dom.boundary_points(dom.angle_of(mids))
    regular = np.ones(len(mids), bool)
    if len(dom.singular_vertices):
        regular = np.min(np.linalg.norm(on_curve[:, None] - dom.singular_vertices[None], axis=2), axis=1) > 1e-9
    nu = outer_normal(dom, on_curve[regular])
    assert np.abs(np.linalg.norm(mesh.facet_normal, axis=1) - 1).max() <= 1e-12
    assert np.abs(mesh.facet_normal[regular] - nu).max() <= 1e-10
    assert mesh.area == pytest.approx(dom.area, rel=5e-3)


def test_disk_polyline_error_second_order():
    errs = []
    for h in (0.1, 0.05):
        mesh = mesh_domain(DISK, h)
        mids = mesh.nodes[mesh.facets].mean(axis=1)
        errs.append(np.max(1.0 - np.linalg.norm(mids, axis=1)))
    assert errs[1] < errs[0] / 3.5


@pytest.mark.parametrize("dom", [SQUARE, DISK], ids=["square", "disk"])
@pytest.mark.parametrize("M", [None, 64.0])
def test_box_mesh_invariants(dom, M):
    inner = mesh_domain(dom, 0.1)
    box = mesh_box_with_interface(dom, 1.0, 0.1, layer_mass=M, layer_beta=0.06)
    assert box.kind == "box"
    assert box.n_domain_nodes == inner.n_nodes
    assert np.array_equal(box.nodes[: inner.n_nodes], inner.nodes)
    assert np.array_equal(box.triangles[: len(inner.triangles)], inner.triangles)
    assert box.triangle_areas.min() > 0
    assert box.quad_areas.min() > 0
    lo, hi = dom.bounding_box
    assert box.area == pytest.approx(np.prod(hi - lo + 2.0), rel=1e-12)
    # interface: exactly the domain boundary polyline
    iface = box.facets[box.facet_tag == INTERFACE]
    ref = inner.facets
    assert set(map(tuple, np.sort(iface, axis=1))) == set(map(tuple, np.sort(ref, axis=1)))
    # every cell is on one side of the interface
    inside = box.triangle_region == 0
    assert np.all(box.triangles[inside] < box.n_domain_nodes)
    # the discrete domain is the polygon of boundary nodes, not the exact curve
    poly = box.nodes[inner.boundary_nodes]
    cent = np.vstack([box.nodes[box.triangles[~inside]].mean(axis=1), box.nodes[box.quads].mean(axis=1)])
    assert not _inside_convex(poly, cent).any()
    # outer boundary facets lie on the box
    outer = box.nodes[box.facets[box.facet_tag == BOX]]
    on_box = np.isclose(outer[..., 0], lo[0] - 1) | np.isclose(outer[..., 0], hi[0] + 1) | \
        np.isclose(outer[..., 1], lo[1] - 1) | np.isclose(outer[..., 1], hi[1] + 1)
    assert on_box.all()


def test_box_mesh_conforming():
    box = mesh_box_with_interface(SQUARE, 1.0, 0.1, layer_mass=32.0, layer_beta=0.06)
    q = box.quads
    edges = [box.triangles[:, [0, 1]], box.triangles[:, [1, 2]], box.triangles[:, [2, 0]],
             q[:, [0, 1]], q[:, [1, 2]], q[:, [2, 3]], q[:, [3, 0]]]
    e = np.sort(np.concatenate(edges), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    assert counts.max() <= 2
    # edges used once are exactly the outer box boundary
    once = {tuple(x) for x in uniq[counts == 1]}
    boxf = {tuple(x) for x in np.sort(box.facets[box.facet_tag == BOX], axis=1)}
    assert once == boxf


def test_box_mesh_errors():
    with pytest.raises(MeshError):
        mesh_box_with_interface(SQUARE, 0.0, 0.1)


def test_graded_layers_basic():
    d = graded_layers(512.0, 0.05, beta=0.06)
    t = np.diff(d)
    assert d[0] == 0.0
    assert t[0] == pytest.approx(0.06 * 512**-1.5)
    assert np.all(np.diff(t) > 0)
    assert t[-1] <= 0.05
    assert np.array_equal(graded_layers(0.0, 0.1), [0.0])


@given(st.floats(1.0, 2000.0), st.floats(0.01, 0.2))
def test_graded_layers_depth_cap(M, h):
    d = graded_layers(M, h, beta=0.06, max_depth=0.5)
    t = np.diff(d)
    assert np.all(t > 0)
    # growth rule t_{i+1} = t_i exp((2/3) M t_i), capped at h
    if len(t) > 1:
        expect = np.minimum(h, t[:-1] * np.exp(2 / 3 * M * t[:-1]))
        assert np.allclose(t[1:-1], expect[:-1], rtol=1e-12)
    assert d[-1] <= 0.5 + 2 * h
