import numpy as np
import pytest

from sbmt.halfedge import (
    NonManifoldEdge,
    TriMesh,
    ZeroAreaFace,
    build_mesh,
    canonical_off_bytes,
    dedup_vertices,
    read_obj,
    read_off,
    validate_watertight,
    write_obj,
    write_off,
)


def quad_mesh():
    # unit square split along the diagonal, both faces CCW
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return TriMesh(v, f)


def test_twins_on_quad():
    m = quad_mesh()
    twins = m.halfedge_twins()
    assert twins.shape == (6,)
    # exactly one interior edge -> one twin pair, four hull halfedges
    paired = np.flatnonzero(twins >= 0)
    assert len(paired) == 2
    h = paired[0]
    assert twins[twins[h]] == h
    # the paired halfedges run between vertices 0 and 2 in opposite directions
    org, dst = m.halfedge_origins(), m.halfedge_dests()
    assert {org[h], dst[h]} == {0, 2}
    assert org[twins[h]] == dst[h] and dst[twins[h]] == org[h]


def test_twins_reject_duplicate_directed_edge():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    # both faces traverse 0->1, making the directed edge non-manifold
    f = np.array([[0, 1, 2], [0, 1, 3]])
    with pytest.raises(NonManifoldEdge):
        TriMesh(v, f).halfedge_twins()


def test_face_areas_and_edge_lengths():
    m = quad_mesh()
    assert np.allclose(m.face_areas(), [0.5, 0.5])
    # edge_lengths[f, k] is the length of the edge opposite corner k
    L = m.edge_lengths()
    assert np.isclose(L[0, 0], 1.0)  # edge 1-2 opposite corner 0
    assert np.isclose(L[0, 1], np.sqrt(2.0))  # diagonal 2-0
    assert np.isclose(L[0, 2], 1.0)  # edge 0-1


def test_boundary_extraction():
    m = quad_mesh()
    be = m.boundary_edges()
    assert len(be) == 4
    assert set(m.boundary_vertex_ids()) == {0, 1, 2, 3}


def test_dedup_vertices_merges_and_remaps():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0 + 1e-12, 1e-13], [2.0, 0.0]])
    uniq, remap = dedup_vertices(v, eps=1e-9)
    assert len(uniq) == 3
    assert remap[1] == remap[2]
    assert remap[0] != remap[1] != remap[3]


def test_build_mesh_dedups_and_checks_area():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [1.0 + 1e-12, 0.0]])
    f = np.array([[0, 3, 2]])
    m = build_mesh(v, f, eps=1e-9)
    assert len(m.vertices) == 3
    assert m.faces[0, 1] == 1  # remapped onto the first copy

    bad = np.array([[0, 1, 1]])
    with pytest.raises(ZeroAreaFace):
        build_mesh(v[:3], bad, eps=1e-9)
    collinear = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(ZeroAreaFace):
        build_mesh(collinear, np.array([[0, 1, 2]]), eps=1e-9)
    with pytest.raises(IndexError):
        build_mesh(v[:3], np.array([[0, 1, 7]]), eps=1e-9)


def test_watertight_clean_quad():
    rep = validate_watertight(quad_mesh(), eps=1e-9)
    assert rep.ok
    assert rep.defect_count == 0
    assert rep.boundary_edges == 4
    assert "nonmanifold=0" in rep.summary()


def test_watertight_flags_misoriented_face():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    f = np.array([[0, 1, 2], [0, 3, 2]])  # second face flipped
    rep = validate_watertight(TriMesh(v, f), eps=1e-9)
    assert not rep.ok
    assert (0, 2) in rep.misoriented_edges
    assert 1 in rep.zero_area_faces  # flipped face has negative area


def test_watertight_flags_t_junction():
    # vertex 4 sits in the middle of edge 0-1 but only the lower faces use it
    v = np.array(
        [[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0], [1.0, 0.0]]
    )
    f = np.array([[0, 1, 2], [0, 3, 4], [4, 3, 1]])
    rep = validate_watertight(TriMesh(v, f), eps=1e-9)
    assert rep.t_junctions == [(4, (0, 1))]
    assert not rep.ok


def test_watertight_counts_unreferenced_without_failing():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [9.0, 9.0]])
    rep = validate_watertight(TriMesh(v, np.array([[0, 1, 2]])), eps=1e-9)
    assert rep.unreferenced_vertices == [3]
    assert rep.ok  # informational only


def test_canonical_off_invariant_under_relabeling():
    m = quad_mesh()
    ref = canonical_off_bytes(m)
    perm = np.array([2, 0, 3, 1])
    inv = np.empty(4, dtype=np.int64)
    inv[perm] = np.arange(4)
    v2 = m.vertices[perm]
    f2 = inv[m.faces][::-1]  # relabel vertices and reverse face order
    f2 = np.roll(f2, 1, axis=1)  # rotate corners within each face
    assert canonical_off_bytes(TriMesh(v2, f2)) == ref
    assert ref.startswith(b"OFF\n4 2 0\n")


def test_off_roundtrip(tmp_path):
    m = quad_mesh()
    p = tmp_path / "m.off"
    write_off(m, p)
    m2 = read_off(p)
    assert np.allclose(m2.vertices, m.vertices)
    assert np.array_equal(m2.faces, m.faces)


def test_obj_roundtrip(tmp_path):
    m = quad_mesh()
    p = tmp_path / "m.obj"
    write_obj(m, p)
    m2 = read_obj(p)
    assert np.allclose(m2.vertices, m.vertices)
    assert np.array_equal(m2.faces, m.faces)
