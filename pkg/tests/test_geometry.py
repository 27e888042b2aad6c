import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipmaxwell.geometry import (
    BOUNDARY,
    INTERFACE,
    DomainSpec,
    Mesh,
    MeshError,
    classify_edges,
    generate_structured,
    hct_refine,
    make_mesh,
    powell_sabin_refine,
    read_mesh,
    write_mesh,
)

DOMAINS = ["unit_square_single", "square_checkerboard", "lshape_three_subdomains"]


def brute_force_kinds(mesh):
    """Classify edges from scratch by scanning triangle edge lists."""
    seen = {}
    for t, tri in enumerate(mesh.triangles):
        for j in range(3):
            key = tuple(sorted((tri[(j + 1) % 3], tri[(j + 2) % 3])))
            seen.setdefault(key, []).append(t)
    counts = {"interior": 0, "interface": 0, "boundary": 0}
    for tris in seen.values():
        if len(tris) == 1:
            counts["boundary"] += 1
        elif mesh.subdomains[tris[0]] == mesh.subdomains[tris[1]]:
            counts["interior"] += 1
        else:
            counts["interface"] += 1
    return counts


def check_invariants(mesh):
    assert np.all(mesh.areas() > 0)
    for e, (a, b) in enumerate(mesh.edge_tris):
        if mesh.edge_kind[e] == BOUNDARY:
            assert b == -1
        else:
            assert b >= 0
            same = mesh.subdomains[a] == mesh.subdomains[b]
            assert same == (mesh.edge_kind[e] != INTERFACE)
    # each triangle's edges really are opposite the right vertex
    for t in range(mesh.n_triangles):
        for j in range(3):
            edge = set(mesh.edges[mesh.tri_edges[t, j]])
            assert mesh.triangles[t, j] not in edge
    assert math.isclose(mesh.h, mesh.cell_diameters().max())


def test_unit_square_single_cell():
    mesh = generate_structured("unit_square_single", 1.0)
    assert mesh.n_vertices == 4 and mesh.n_triangles == 2
    assert mesh.edge_counts() == {"interior": 1, "interface": 0, "boundary": 4}


def test_checkerboard_counts():
    mesh = generate_structured("square_checkerboard", 0.5)
    assert (mesh.n_vertices, mesh.n_triangles) == (25, 32)
    assert mesh.edge_counts()["interface"] == 8
    assert brute_force_kinds(mesh) == mesh.edge_counts()
    mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    on_axes = np.isclose(mid[:, 0], 0.0) | np.isclose(mid[:, 1], 0.0)
    inside = np.all(np.abs(mid) < 1.0 - 1e-12, axis=1)
    assert np.array_equal(mesh.edge_kind == INTERFACE, on_axes & inside)


def test_lshape_counts():
    mesh = generate_structured("lshape_three_subdomains", 0.5)
    assert (mesh.n_vertices, mesh.n_triangles) == (21, 24)
    iface = mesh.edges[mesh.edge_kind == INTERFACE]
    mid = mesh.vertices[iface].mean(axis=1)
    assert len(iface) == 4
    assert np.sum(np.isclose(mid[:, 0], 0.0) & (mid[:, 1] > 0)) == 2
    assert np.sum(np.isclose(mid[:, 1], 0.0) & (mid[:, 0] < 0)) == 2
    # nothing reaches into the removed quadrant
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    assert not np.any((centroids[:, 0] > 0) & (centroids[:, 1] < 0))


@pytest.mark.parametrize("kind", DOMAINS)
def test_subdomain_membership(kind):
    mesh = generate_structured(kind, 0.25)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    spec = DomainSpec(kind)
    assert np.array_equal(spec.subdomain_of(centroids[:, 0], centroids[:, 1]), mesh.subdomains)
    check_invariants(mesh)


def test_diagonals_point_to_origin():
    mesh = generate_structured("square_checkerboard", 0.5)
    lengths = mesh.edge_lengths
    diag = mesh.edges[np.isclose(lengths, math.sqrt(2) * 0.5)]
    for a, b in diag:
        p, q = mesh.vertices[a], mesh.vertices[b]
        # the diagonal of a square adjacent to the origin passes through it
        if np.all(np.abs(p) <= 0.5 + 1e-12) and np.all(np.abs(q) <= 0.5 + 1e-12):
            assert np.allclose(p, 0) or np.allclose(q, 0)


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
def test_generate_rejects_bad_h(bad):
    with pytest.raises(ValueError):
        generate_structured("square_checkerboard", bad)


def test_unknown_domain():
    with pytest.raises(ValueError):
        DomainSpec("circle")


def test_powell_sabin_reference_triangle():
    tri = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), np.array([7]))
    ps = powell_sabin_refine(tri)
    assert ps.n_triangles == 6
    incenter = 1.0 / (2.0 + math.sqrt(2.0))
    # independent: incenter is the point at distance r from all three sides
    r = (1.0 + 1.0 - math.sqrt(2.0)) / 2.0
    assert math.isclose(incenter, r)
    assert np.any(np.all(np.isclose(ps.vertices, [incenter, incenter], atol=1e-15), axis=1))
    assert np.all(ps.subdomains == 7)
    assert math.isclose(ps.areas().sum(), 0.5, rel_tol=1e-14)


def test_hct_reference_triangle():
    tri = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), np.array([1]))
    hct = hct_refine(tri)
    assert hct.n_triangles == 3
    assert np.allclose(hct.vertices[-1], [1 / 3, 1 / 3])


@pytest.mark.parametrize("kind", DOMAINS)
@pytest.mark.parametrize("refine, factor", [(powell_sabin_refine, 6), (hct_refine, 3)])
def test_refinements_preserve_area_and_ids(kind, refine, factor):
    mesh = generate_structured(kind, 0.5)
    fine = refine(mesh)
    assert fine.n_triangles == factor * mesh.n_triangles
    parent_area = mesh.areas()
    child_area = fine.areas().reshape(-1, factor).sum(axis=1)
    assert np.allclose(child_area, parent_area, rtol=1e-13, atol=0)
    assert np.array_equal(fine.subdomains, np.repeat(mesh.subdomains, factor))
    # interfaces are subdivided, not created
    assert fine.edge_counts()["interface"] == (2 if refine is powell_sabin_refine else 1) * mesh.edge_counts()[
        "interface"
    ]
    check_invariants(fine)


def test_two_triangle_refinements():
    mesh = generate_structured("unit_square_single", 1.0)
    assert powell_sabin_refine(mesh).n_triangles == 12
    assert hct_refine(mesh).n_triangles == 6


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(DOMAINS), n=st.integers(1, 12))
def test_structured_properties(kind, n):
    mesh = generate_structured(kind, 1.0 / n)
    assert mesh.h <= math.sqrt(2) / n + 1e-14
    diam = mesh.cell_diameters()
    assert diam.max() / diam.min() <= 2.0
    counts = mesh.edge_counts()
    assert sum(counts.values()) == mesh.n_edges
    # every triangle contributes three edge incidences
    assert 2 * (counts["interior"] + counts["interface"]) + counts["boundary"] == 3 * mesh.n_triangles
    assert counts == brute_force_kinds(mesh)
    assert classify_edges(classify_edges(mesh)).edge_counts() == counts


def test_non_manifold_edge_rejected():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 2.0]])
    t = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    with pytest.raises(MeshError):
        Mesh(v, t, np.ones(3, dtype=int))


def test_clockwise_rejected_in_constructor():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError):
        Mesh(v, np.array([[0, 2, 1]]), np.array([1]))


@pytest.mark.parametrize("style", ["structured", "powell-sabin", "hct"])
def test_write_read_round_trip(tmp_path, style):
    mesh = make_mesh("lshape_three_subdomains", 0.25, style)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert back.same_as(mesh)
    assert np.array_equal(back.edge_kind, mesh.edge_kind)


def test_read_comments_and_errors(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("# two triangles\n4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2 1\n# comment\n0 2 3 1\n")
    mesh = read_mesh(path)
    assert mesh.n_triangles == 2

    path.write_text("3 1\n0 0\n1 0\n0 1\n0 1 5 1\n")
    with pytest.raises(MeshError, match=r":5:"):
        read_mesh(path)

    path.write_text("3 1\n0 0\n1 zero\n0 1\n0 1 2 1\n")
    with pytest.raises(MeshError, match=r":3:"):
        read_mesh(path)


def test_read_clockwise(tmp_path):
    path = tmp_path / "cw.txt"
    path.write_text("3 1\n0 0\n1 0\n0 1\n0 2 1 1\n")
    with pytest.warns(UserWarning):
        mesh = read_mesh(path)
    assert mesh.areas()[0] > 0
    with pytest.raises(MeshError, match=r":5:"):
        read_mesh(path, strict=True)
