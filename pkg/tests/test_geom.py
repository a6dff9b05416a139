import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbmt.geom import (
    DegenerateSegment,
    Tolerance,
    get_eps,
    orient2d,
    point_segment_distance,
    seg_seg_intersect,
    set_eps,
)


def test_default_eps():
    assert get_eps() == 1e-9


def test_tolerance_context_restores():
    before = get_eps()
    with Tolerance(1e-6):
        assert get_eps() == 1e-6
    assert get_eps() == before


def test_set_eps_rejects_nonpositive():
    with pytest.raises(ValueError):
        set_eps(0.0)


def test_orient2d_signs():
    assert orient2d((0, 0), (1, 0), (0, 1)) == 1
    assert orient2d((0, 0), (1, 0), (0, -1)) == -1
    assert orient2d((0, 0), (1, 0), (0.5, 0)) == 0


def test_orient2d_zero_band_is_distance_based():
    # Point 1e-10 above a very long baseline: still "on" the line, because
    # the tolerance is a distance, not a raw cross-product magnitude.
    assert orient2d((0, 0), (1e6, 0), (5e5, 1e-10)) == 0
    assert orient2d((0, 0), (1e6, 0), (5e5, 1e-8)) == 1


def test_orient2d_degenerate_baseline():
    with pytest.raises(DegenerateSegment):
        orient2d((0, 0), (0, 0), (1, 1))


@given(
    st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
    st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
    st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
)
@settings(max_examples=200)
def test_orient2d_antisymmetry(a, b, c):
    if math.hypot(b[0] - a[0], b[1] - a[1]) <= 1e-6:
        return
    assert orient2d(a, b, c) == -orient2d(b, a, c)


def test_point_segment_distance_basics():
    d, t = point_segment_distance((0.5, 1.0), (0, 0), (1, 0))
    assert d == pytest.approx(1.0)
    assert t == pytest.approx(0.5)
    # Beyond the end: clamped.
    d, t = point_segment_distance((2.0, 0.0), (0, 0), (1, 0))
    assert d == pytest.approx(1.0)
    assert t == 1.0
    d, t = point_segment_distance((-3.0, 4.0), (0, 0), (1, 0))
    assert d == pytest.approx(5.0)
    assert t == 0.0


def test_seg_seg_proper_crossing():
    r = seg_seg_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert r.kind == "point"
    assert r.points[0] == pytest.approx((1.0, 1.0))
    assert r.t1 == pytest.approx(0.5)
    assert r.t2 == pytest.approx(0.5)


def test_seg_seg_endpoint_touch():
    r = seg_seg_intersect((0, 0), (1, 0), (1, 0), (2, 5))
    assert r.kind == "point"
    assert r.points[0] == pytest.approx((1.0, 0.0))
    assert r.t1 == pytest.approx(1.0)
    assert r.t2 == pytest.approx(0.0)


def test_seg_seg_t_touch_midspan():
    r = seg_seg_intersect((0, -1), (0, 1), (-2, 0), (0, 0))
    assert r.kind == "point"
    assert r.points[0] == pytest.approx((0.0, 0.0))
    assert r.t1 == pytest.approx(0.5)
    assert r.t2 == pytest.approx(1.0)


def test_seg_seg_miss():
    assert seg_seg_intersect((0, 0), (1, 0), (0, 1), (1, 1)).kind == "none"
    # Lines cross but segment 2 stops short.
    assert seg_seg_intersect((0, 0), (2, 0), (1, 2), (1, 0.5)).kind == "none"


def test_seg_seg_overlap_ordered_by_first_segment():
    r = seg_seg_intersect((0, 0), (10, 0), (7, 0), (3, 0))
    assert r.kind == "overlap"
    (pa, pb) = r.points
    assert pa == pytest.approx((3.0, 0.0))
    assert pb == pytest.approx((7.0, 0.0))
    assert r.t1 == pytest.approx((0.3, 0.7))


def test_seg_seg_overlap_partial():
    r = seg_seg_intersect((0, 0), (4, 0), (2, 0), (9, 0))
    assert r.kind == "overlap"
    (pa, pb) = r.points
    assert pa == pytest.approx((2.0, 0.0))
    assert pb == pytest.approx((4.0, 0.0))


def test_seg_seg_collinear_disjoint():
    assert seg_seg_intersect((0, 0), (1, 0), (2, 0), (3, 0)).kind == "none"


def test_seg_seg_collinear_end_to_end_touch():
    r = seg_seg_intersect((0, 0), (1, 0), (1, 0), (2, 0))
    assert r.kind == "point"
    assert r.points[0] == pytest.approx((1.0, 0.0))


def test_seg_seg_degenerate_raises():
    with pytest.raises(DegenerateSegment):
        seg_seg_intersect((0, 0), (0, 0), (1, 0), (2, 0))
    with pytest.raises(DegenerateSegment):
        seg_seg_intersect((0, 0), (1, 0), (5, 5), (5, 5))


@given(
    st.floats(0.1, 0.9),
    st.floats(-50, 50),
    st.floats(-50, 50),
    st.floats(-50, 50),
    st.floats(-50, 50),
)
@settings(max_examples=200)
def test_seg_seg_crossing_point_on_both_segments(t, ax, ay, bx, by):
    # Build two segments guaranteed to cross at a known interior point.
    a, b = (ax, ay), (ax + 10.0, ay + 3.0)
    px = ax + t * 10.0
    py = ay + t * 3.0
    c, d = (px + bx / 100.0, py + 10.0), (px - bx / 100.0, py - 10.0)
    r = seg_seg_intersect(a, b, c, d)
    assert r.kind == "point"
    x, y = r.points[0]
    dline, _ = point_segment_distance((x, y), a, b)
    assert dline < 1e-6
