import math
import os

import numpy as np

from sbmt.boundary import enforce_protocol, load_bitmap, protocol_ok, trace_contours
from sbmt.fixtures import FIXTURES, droplet_mask, star_mask, star_vertices, y_glyph_mask

FIXDIR = os.path.join(os.path.dirname(__file__), "fixtures")
E = math.sqrt(0.45)


def test_committed_files_match_generators():
    for name, (fn, size) in FIXTURES.items():
        committed = load_bitmap(os.path.join(FIXDIR, f"{name}.pgm"))
        assert np.array_equal(committed.mask, fn(size)), name


def test_every_fixture_is_protocol_satisfiable():
    for name, (fn, size) in FIXTURES.items():
        chains = trace_contours(fn(size))
        assert len(chains) == 1, name
        enforced = enforce_protocol(chains[0], E)
        assert protocol_ok(enforced, E), name
        assert enforced.segment_lengths().min() > E
        assert np.degrees(enforced.wedge_angles().min()) >= 90.0 - 1e-6


def test_star_mask_inside_ideal_polygon():
    size = 200
    verts = star_vertices(size)
    mask = star_mask(size)
    # foreground pixel count close to the ideal polygon area (shoelace)
    x, y = verts[:, 0], verts[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
    assert abs(mask.sum() - area) < 4.0 * 10 * size  # within a perimeter band


def test_star_tip_wedges_above_90():
    v = star_vertices(200)
    ang = []
    n = len(v)
    for i in range(n):
        a, b, c = v[(i - 1) % n], v[i], v[(i + 1) % n]
        u, w = a - b, c - b
        cosang = np.dot(u, w) / (np.linalg.norm(u) * np.linalg.norm(w))
        ang.append(math.degrees(math.acos(np.clip(cosang, -1, 1))))
    assert min(ang) > 90.0  # fat star: every ideal wedge clears the protocol


def test_masks_have_single_component_and_no_holes():
    from scipy import ndimage

    for fn, size in (
        (star_mask, 200),
        (droplet_mask, 200),
        (y_glyph_mask, 200),
    ):
        m = fn(size)
        _, n = ndimage.label(m, structure=np.ones((3, 3), dtype=int))
        assert n == 1
        filled = ndimage.binary_fill_holes(m)
        assert np.array_equal(filled, m)  # no holes


def test_star_scales_proportionally():
    small = star_mask(100).sum()
    big = star_mask(400).sum()
    assert 14.0 < big / small < 18.0  # area scales ~16x for 4x linear scale
