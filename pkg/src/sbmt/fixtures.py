"""Procedural test bitmaps: a five-point star, a superellipse droplet, and a
three-stroke Y glyph.

All three are generated deterministically at any pixel size (centers are
deliberately offset from round coordinates so that no polygon vertex or arc
lands exactly on a pixel center).  The committed PGM files under
``tests/fixtures`` are byte-for-byte reproductions of these functions.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from sbmt.boundary import save_pgm


def _pixel_grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.arange(size, dtype=np.float64)
    X, Y = np.meshgrid(xs, xs)
    return X, Y  # pixel centers, x = column, y = row


def rasterize_polygon(verts: np.ndarray, size: int) -> np.ndarray:
    """Even-odd rasterization of a closed polygon onto pixel centers."""
    X, Y = _pixel_grid(size)
    inside = np.zeros((size, size), dtype=bool)
    v = np.asarray(verts, dtype=np.float64)
    n = len(v)
    for k in range(n):
        x1, y1 = v[k]
        x2, y2 = v[(k + 1) % n]
        if y1 == y2:
            continue
        cond = (y1 > Y) != (y2 > Y)
        xi = x1 + (Y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (xi > X)
    return inside


def star_vertices(size: int = 200) -> np.ndarray:
    """Ideal 10-gon outline of the star (alternating outer/inner radius).

    The inner radius is 3/4 of the outer one, which keeps every tip wedge
    near 97 degrees — comfortably above the 90-degree boundary protocol.
    """
    cx, cy = 0.5015 * size, 0.5027 * size
    R = 0.42 * size
    r = 0.75 * R
    phi0 = 0.35
    pts = []
    for k in range(5):
        a_out = phi0 + 2.0 * math.pi * k / 5.0
        a_in = a_out + math.pi / 5.0
        pts.append((cx + R * math.cos(a_out), cy + R * math.sin(a_out)))
        pts.append((cx + r * math.cos(a_in), cy + r * math.sin(a_in)))
    return np.array(pts)


def star_mask(size: int = 200) -> np.ndarray:
    return rasterize_polygon(star_vertices(size), size)


def droplet_mask(size: int = 200) -> np.ndarray:
    """Superellipse blob: |x/A|^p + |y/B|^p <= 1 with p = 2.6."""
    cx, cy = 0.497 * size, 0.508 * size
    A = 0.36 * size
    B = 0.27 * size
    p = 2.6
    X, Y = _pixel_grid(size)
    return (np.abs((X - cx) / A) ** p + np.abs((Y - cy) / B) ** p) <= 1.0


def y_glyph_mask(size: int = 200) -> np.ndarray:
    """Three capsule strokes meeting at 120 degrees (a fat letter Y)."""
    cx, cy = 0.5019 * size, 0.5211 * size
    L = 0.31 * size
    w = 0.070 * size  # capsule radius
    X, Y = _pixel_grid(size)
    mask = np.zeros((size, size), dtype=bool)
    for ang in (math.radians(30.0), math.radians(150.0), math.radians(270.0)):
        ex = cx + L * math.cos(ang)
        ey = cy + L * math.sin(ang)
        dx, dy = ex - cx, ey - cy
        L2 = dx * dx + dy * dy
        t = np.clip(((X - cx) * dx + (Y - cy) * dy) / L2, 0.0, 1.0)
        fx = cx + t * dx
        fy = cy + t * dy
        mask |= (X - fx) ** 2 + (Y - fy) ** 2 <= w * w
    return mask


def symmetric_sheet(nx: int, ny: int, edge_length: float):
    """Equilateral sheet that is exactly mirror-symmetric about x = 0.

    Even rows carry 2*nx+1 vertices at x = (i-nx)*e; odd rows carry 2*nx
    staggered ones.  The production scaffold pads every row to the same
    length, which breaks mirror symmetry, so symmetry tests use this
    purpose-built sheet instead.
    """
    from sbmt.halfedge import TriMesh

    e = float(edge_length)
    h = e * math.sqrt(3.0) / 2.0
    verts = []
    row_start = []
    for j in range(ny + 1):
        row_start.append(len(verts))
        if j % 2 == 0:
            verts.extend(((i - nx) * e, j * h) for i in range(2 * nx + 1))
        else:
            verts.extend(((i - nx + 0.5) * e, j * h) for i in range(2 * nx))
    faces = []
    for j in range(ny):
        if j % 2 == 0:
            lo, nlo = row_start[j], 2 * nx + 1      # long row below
            hi = row_start[j + 1]                   # short row above
            for i in range(nlo - 1):
                faces.append((lo + i, lo + i + 1, hi + i))
            for i in range(nlo - 2):
                faces.append((lo + i + 1, hi + i + 1, hi + i))
        else:
            lo = row_start[j]                       # short row below
            hi, nhi = row_start[j + 1], 2 * nx + 1  # long row above
            for i in range(nhi - 2):
                faces.append((lo + i, lo + i + 1, hi + i + 1))
            for i in range(nhi - 1):
                faces.append((lo + i, hi + i + 1, hi + i))
    return TriMesh(np.asarray(verts, float), np.asarray(faces, np.int64))


FIXTURES = {
    "star_100": (star_mask, 100),
    "star_200": (star_mask, 200),
    "star_400": (star_mask, 400),
    "droplet_200": (droplet_mask, 200),
    "y_200": (y_glyph_mask, 200),
}


def generate_all(out_dir) -> None:
    """Write every fixture PGM into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    for name, (fn, size) in FIXTURES.items():
        save_pgm(os.path.join(out_dir, f"{name}.pgm"), fn(size))
