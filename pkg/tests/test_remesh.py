import os

import numpy as np
import pytest

from sbmt.boundary import PolyChain, load_bitmap
from sbmt.halfedge import canonical_off_bytes, validate_watertight
from sbmt.preprocess import Thresholds
from sbmt.remesh import (
    StitchMismatch,
    chain_embedding_defects,
    check_path_independence,
    generate_patches,
    prepare,
    remesh,
    stitch,
)

FIXDIR = os.path.join(os.path.dirname(__file__), "fixtures")


def square_chain(lo=3.0, hi=9.0):
    pts = np.array([[lo, lo], [hi, lo], [hi, hi], [lo, hi]], float)
    return PolyChain(points=pts, closed=True)


def mesh_area(mesh):
    p = mesh.vertices[mesh.faces]
    return float(0.5 * np.abs(
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])).sum())


def test_square_chain_end_to_end():
    res = remesh([square_chain()])
    rep = validate_watertight(res.mesh)
    assert rep.defect_count == 0
    assert res.n_patched > 0
    assert res.n_fallback == 0
    assert chain_embedding_defects(res) == []
    base_area = mesh_area(res.job.mesh)
    assert mesh_area(res.mesh) == pytest.approx(base_area, rel=1e-9)


def test_untouched_faces_copied_verbatim():
    res = remesh([square_chain()])
    patched = set(res.job.registry.faces())
    base = res.job.mesh
    out_triples = {tuple(map(int, f)) for f in res.mesh.faces}
    for f in range(base.n_faces):
        if f not in patched:
            assert tuple(map(int, base.faces[f])) in out_triples


def test_empty_chain_set_returns_grid():
    res = remesh([])
    assert res.n_patched == 0
    base = res.job.mesh
    assert res.mesh.n_faces == base.n_faces
    assert np.array_equal(res.mesh.faces, base.faces)
    assert np.array_equal(res.mesh.vertices, base.vertices)


def test_star_fixture_watertight_and_embedded():
    bmp = load_bitmap(os.path.join(FIXDIR, "star_100.pgm"))
    res = remesh(bmp)
    rep = validate_watertight(res.mesh)
    assert rep.defect_count == 0
    assert res.n_fallback == 0
    assert chain_embedding_defects(res) == []
    base_area = mesh_area(res.job.mesh)
    assert mesh_area(res.mesh) == pytest.approx(base_area, rel=1e-8)


def test_path_independence_star():
    bmp = load_bitmap(os.path.join(FIXDIR, "star_100.pgm"))
    ok, msg = check_path_independence(bmp, n_shuffles=3)
    assert ok, msg


def test_path_independence_detects_divergence(monkeypatch):
    import itertools

    import sbmt.remesh as rm

    counter = itertools.count()
    monkeypatch.setattr(
        rm, "canonical_off_bytes", lambda mesh: b"%d" % next(counter))
    ok, msg = check_path_independence([square_chain()], n_shuffles=2)
    assert not ok
    assert "differs" in msg


def test_schedule_must_be_permutation():
    job = prepare([square_chain()])
    faces = job.registry.faces()
    with pytest.raises(ValueError):
        generate_patches(job, schedule=faces[:-1])
    with pytest.raises(ValueError):
        generate_patches(job, schedule=faces + [faces[0]])


def test_missing_patch_on_anchored_edge_is_a_stitch_mismatch():
    job = prepare([square_chain()])
    patches = generate_patches(job)
    ekey = next(k for k, a in job.registry.edge_anchors.items() if a)
    vs = set(ekey)
    victim = next(
        f for f in job.registry.faces()
        if vs <= set(map(int, job.mesh.faces[f])))
    patches[victim] = None
    with pytest.raises(StitchMismatch):
        stitch(job.mesh, job.registry, patches)


def test_bool_mask_source():
    mask = np.zeros((40, 40), bool)
    mask[10:30, 8:32] = True
    res = remesh(mask)
    assert validate_watertight(res.mesh).defect_count == 0
    assert chain_embedding_defects(res) == []


def test_prepared_job_reuse_matches_fresh_run():
    job = prepare([square_chain()])
    a = remesh(job)
    b = remesh([square_chain()])
    assert canonical_off_bytes(a.mesh) == canonical_off_bytes(b.mesh)


def test_custom_thresholds_flow_through():
    t = Thresholds(a=0.2, b=0.09, c=0.13)
    res = remesh([square_chain()], thresholds=t)
    assert res.job.thresholds is t
    assert validate_watertight(res.mesh).defect_count == 0
