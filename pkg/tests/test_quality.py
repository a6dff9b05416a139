import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbmt.boundary import load_bitmap
from sbmt.grid import build_grid
from sbmt.halfedge import TriMesh
from sbmt.preprocess import Thresholds
from sbmt.quality import (
    ABLATION_CONFIGS,
    IDEAL_AR,
    AngleHistogram,
    EmptyMesh,
    InvalidThresholds,
    angle_histogram,
    face_aspect_ratios,
    face_min_angles,
    quality_report,
    run_ablation,
    sensitivity_sweep,
    theoretical_bounds,
    write_histogram_csv,
)
from sbmt.remesh import remesh

FIXDIR = os.path.join(os.path.dirname(__file__), "fixtures")


def tri_mesh(*pts):
    return TriMesh(vertices=np.asarray(pts, float),
                   faces=np.array([[0, 1, 2]]))


def test_equilateral_triangle_report():
    s = math.sqrt(3.0) / 2.0
    rep = quality_report(tri_mesh((0, 0), (1, 0), (0.5, s)))
    assert rep.min_angle == pytest.approx(60.0)
    assert rep.AR_max == pytest.approx(IDEAL_AR, abs=1e-12)
    assert rep.equilateral_count == 1
    assert rep.triangle_count == 1
    assert rep.equilateral_ratio == 1.0
    assert rep.sliver_count == 0


def test_3_4_5_right_triangle():
    rep = quality_report(tri_mesh((0, 0), (4, 0), (0, 3)))
    assert rep.min_angle == pytest.approx(math.degrees(math.atan2(3, 4)))
    # altitude onto the hypotenuse is 12/5
    assert rep.AR_max == pytest.approx(5.0 / 2.4)
    assert rep.equilateral_count == 0
    assert rep.min_area == pytest.approx(6.0)


def test_degenerate_face_counts_as_sliver():
    rep = quality_report(tri_mesh((0, 0), (1, 0), (2, 0)))
    assert rep.min_angle == 0.0
    assert rep.sliver_count == 1
    assert math.isinf(rep.AR_max)


def test_empty_mesh_raises():
    empty = TriMesh(vertices=np.zeros((0, 2)), faces=np.zeros((0, 3), int))
    with pytest.raises(EmptyMesh):
        quality_report(empty)
    with pytest.raises(EmptyMesh):
        angle_histogram(empty)


def test_raw_grid_ar_is_ideal():
    g = build_grid((0, 0, 20, 20), Thresholds().e)
    rep = quality_report(g)
    assert abs(rep.AR_median - IDEAL_AR) < 1e-9
    assert abs(rep.AR_max - IDEAL_AR) < 1e-9
    assert rep.equilateral_ratio == 1.0


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0),
       st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0))
@settings(max_examples=80)
def test_aspect_ratio_lower_bound(ax, ay, bx, by, cx, cy):
    m = tri_mesh((0, 0), (ax + 0.1, ay * 0), (bx, by + cx))
    ar = face_aspect_ratios(m)
    assert ar[0] >= IDEAL_AR - 1e-12
    mins = face_min_angles(m)
    assert 0.0 <= mins[0] <= 60.0 + 1e-9


def test_theoretical_bounds_defaults():
    theta, area = theoretical_bounds(0.26, 0.125, 0.183, e=math.sqrt(0.45))
    assert 10.0 <= theta <= 10.2
    assert 1.13e-2 <= area <= 1.15e-2
    # same thing through a Thresholds instance
    t2, a2 = theoretical_bounds(Thresholds())
    assert t2 == pytest.approx(theta)
    assert a2 == pytest.approx(area)


def test_theoretical_bounds_b_to_zero_limit():
    theta, area = theoretical_bounds(0.26, 1e-12, 0.183)
    assert theta == pytest.approx(0.0, abs=1e-9)
    assert area == pytest.approx(0.0, abs=1e-9)


def test_theoretical_bounds_invalid():
    with pytest.raises(InvalidThresholds):
        theoretical_bounds(0.1, 0.2, 0.1)


def test_histogram_raw_grid_single_spike():
    g = build_grid((0, 0, 15, 15), Thresholds().e)
    h = angle_histogram(g)
    assert h.mode_center in (59.0, 61.0)
    assert h.raw.sum() == g.n_faces
    nonzero = np.nonzero(h.raw)[0]
    assert len(nonzero) == 1


def test_histogram_mass_below():
    h = AngleHistogram(centers=np.array([1.0, 3.0, 5.0, 7.0]),
                       raw=np.array([2, 3, 4, 5]),
                       smoothed=np.zeros(4))
    assert h.mass_below(4.1) == 5          # bins below [4,6) -> centers 1,3
    assert h.mass_below(0.5) == 0
    assert h.mass_below(7.9) == 9


def test_histogram_smoothing_interior_mass_and_peak():
    # 30-60-90 triangles: min angle 30 deg sits far from the histogram
    # edges, so the kernel never clips and mass is preserved exactly.
    s = math.sqrt(3.0)
    m = TriMesh(vertices=np.array([[0, 0], [s, 0], [0, 1], [s, 1]], float),
                faces=np.array([[0, 1, 2], [1, 3, 2]]))
    h = angle_histogram(m)
    assert h.raw.sum() == 2
    assert h.smoothed.sum() == pytest.approx(2.0, rel=1e-9)
    assert np.all(h.smoothed >= 0.0)
    assert abs(h.centers[np.argmax(h.smoothed)] - h.mode_center) <= 2.0


def test_histogram_csv_roundtrip(tmp_path):
    g = build_grid((0, 0, 8, 8), Thresholds().e)
    h = angle_histogram(g)
    path = os.path.join(tmp_path, "hist.csv")
    write_histogram_csv(h, path)
    rows = open(path).read().strip().splitlines()
    assert rows[0] == "bin_center_deg,raw_count,smoothed"
    assert len(rows) == len(h.centers) + 1


def test_star_fixture_meets_bounds():
    res = remesh(load_bitmap(os.path.join(FIXDIR, "star_100.pgm")))
    rep = quality_report(res.mesh)
    theta, area = theoretical_bounds(Thresholds())
    assert rep.min_angle > theta
    assert rep.min_area > area
    assert rep.sliver_count == 0
    assert rep.equilateral_ratio >= 0.85
    assert abs(rep.AR_median - IDEAL_AR) < 1e-9  # >80% untouched faces
    h = angle_histogram(res.mesh)
    assert h.mode_center in (59.0, 61.0)
    assert h.mass_below(theta) == 0


def test_ablation_direction_star():
    rows = run_ablation(load_bitmap(os.path.join(FIXDIR, "star_100.pgm")))
    assert list(rows) == list(ABLATION_CONFIGS)
    _, area_bound = theoretical_bounds(Thresholds())
    assert rows["E1"].report.sliver_count == 0
    for name in ("E3", "E4", "E5"):
        assert rows[name].report.sliver_count >= 1, name
        assert rows[name].report.min_area < area_bound, name
    assert rows["E2"].report.sliver_count <= rows["E5"].report.sliver_count


def test_sweep_flags_invalid_and_is_deterministic():
    src = load_bitmap(os.path.join(FIXDIR, "star_100.pgm"))
    good = Thresholds()
    bad = Thresholds(a=0.26, b=0.2, c=0.183)  # b >= a/2
    rows = sensitivity_sweep(src, [good, bad, good])
    assert rows[0].report is not None and not rows[0].violations
    assert rows[1].report is None and rows[1].violations
    assert rows[2].report == rows[0].report


def test_sweep_theta_direction():
    lo = Thresholds(a=0.26, b=0.12, c=0.175)
    hi = Thresholds(a=0.27, b=0.125, c=0.185)
    assert theoretical_bounds(hi)[0] > theoretical_bounds(lo)[0]
