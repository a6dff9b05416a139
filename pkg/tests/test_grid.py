import math

import numpy as np
import pytest

from sbmt.grid import (
    InvalidEdgeLength,
    NonpositiveFrequency,
    build_grid,
    recommended_edge_length,
)
from sbmt.halfedge import validate_watertight


def test_recommended_edge_length_windows():
    # frozen endpoints for the two reference frequencies
    assert 0.591 <= recommended_edge_length(math.pi) <= 0.593
    assert 1.183 <= recommended_edge_length(math.pi / 2.0) <= 1.185
    with pytest.raises(NonpositiveFrequency):
        recommended_edge_length(0.0)
    with pytest.raises(NonpositiveFrequency):
        recommended_edge_length(-1.0)


def test_edge_length_validation():
    for bad in (0.0, -0.5, 1.0, 2.0):
        with pytest.raises(InvalidEdgeLength):
            build_grid((0, 0, 1, 1), bad)


def test_grid_triangles_are_equilateral_and_ccw():
    e = 0.31
    m = build_grid((0, 0, 3, 2), e)
    L = m.edge_lengths()
    assert np.allclose(L, e, atol=1e-12)
    areas = m.face_areas()
    assert np.all(areas > 0)
    assert np.allclose(areas, math.sqrt(3.0) / 4.0 * e * e, atol=1e-12)


def test_grid_covers_bounds_with_margin():
    e = 0.45
    bounds = (1.0, 2.0, 4.0, 5.0)
    m = build_grid(bounds, e, margin=1.0)
    xmin, ymin = m.vertices.min(axis=0)
    xmax, ymax = m.vertices.max(axis=0)
    assert xmin <= bounds[0] - 1.0 + 1e-12
    assert ymin <= bounds[1] - 1.0 + 1e-12
    assert xmax >= bounds[2] + 1.0 - 1e-12
    assert ymax >= bounds[3] + 1.0 - 1e-12
    # origin is pinned exactly at bounds.min - margin
    assert np.isclose(xmin, bounds[0] - 1.0)
    assert np.isclose(ymin, bounds[1] - 1.0)


def test_grid_is_watertight_sheet():
    m = build_grid((0, 0, 2, 2), 0.5)
    rep = validate_watertight(m, eps=1e-9)
    assert rep.ok
    assert rep.defect_count == 0


def test_grid_row_stagger():
    e = 0.5
    m = build_grid((0, 0, 1, 1), e, margin=0.0)
    ys = np.unique(np.round(m.vertices[:, 1], 12))
    h = e * math.sqrt(3.0) / 2.0
    assert np.allclose(np.diff(ys), h)
    # odd vertex rows are shifted right by half an edge
    row0 = np.sort(m.vertices[np.isclose(m.vertices[:, 1], ys[0]), 0])
    row1 = np.sort(m.vertices[np.isclose(m.vertices[:, 1], ys[1]), 0])
    assert np.allclose(row1 - row0, e / 2.0)


def test_grid_aspect_ratio_uniform():
    m = build_grid((0, 0, 1, 1), 0.3)
    L = m.edge_lengths()
    A = m.face_areas()
    ar = (L.max(axis=1) ** 2) / (2.0 * A)
    assert np.allclose(ar, 2.0 / math.sqrt(3.0), atol=1e-9)
