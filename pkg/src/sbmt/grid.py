"""Equilateral reference grid ("scaffold") generation.

The scaffold is a sheet of unit-orientation equilateral triangles: rows of
alternating up/down triangles with row height ``e * sqrt(3)/2`` and every odd
vertex row shifted right by ``e/2``.  The sheet is sized to cover a bounding
box plus a safety margin so that boundary chains never come near the hull.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from sbmt.halfedge import TriMesh

ROW_HEIGHT_FACTOR = math.sqrt(3.0) / 2.0

# Dimensionless sampling constant: a boundary with maximum curvature
# frequency omega is resolved when e < SAMPLING_CONSTANT / omega (derived
# from the ~0.269*h vertex spacing of the embedded boundary band and the
# Nyquist criterion; see quality bounds tests for the frozen endpoints).
SAMPLING_CONSTANT = 1.86


class InvalidEdgeLength(ValueError):
    """Edge length outside the supported (0, 1) pixel-unit range."""


class NonpositiveFrequency(ValueError):
    """Curvature frequency must be strictly positive."""


def recommended_edge_length(omega: float) -> float:
    """Largest safe scaffold edge length for curvature frequency ``omega``.

    Raises :class:`NonpositiveFrequency` for omega <= 0.
    """
    if not omega > 0.0:
        raise NonpositiveFrequency(f"curvature frequency must be > 0, got {omega}")
    return SAMPLING_CONSTANT / omega


def build_grid(
    bounds: Tuple[float, float, float, float],
    edge_length: float,
    margin: Optional[float] = None,
) -> TriMesh:
    """Equilateral triangle sheet covering ``bounds`` plus ``margin``.

    ``bounds`` is (xmin, ymin, xmax, ymax).  The sheet origin is exactly
    ``(xmin - margin, ymin - margin)``; margin defaults to three edge
    lengths.  Raises :class:`InvalidEdgeLength` unless 0 < edge_length < 1
    (coordinates are in pixel units, and the mesher requires the edge to be
    shorter than the shortest chain segment, which is one pixel).
    """
    e = float(edge_length)
    if not (0.0 < e < 1.0):
        raise InvalidEdgeLength(f"edge length must be in (0, 1), got {e}")
    xmin, ymin, xmax, ymax = map(float, bounds)
    if xmax < xmin or ymax < ymin:
        raise ValueError(f"empty bounds {bounds}")
    if margin is None:
        margin = 3.0 * e
    margin = float(margin)

    h = e * ROW_HEIGHT_FACTOR
    ox = xmin - margin
    oy = ymin - margin
    width = (xmax - xmin) + 2.0 * margin
    height = (ymax - ymin) + 2.0 * margin
    # One extra cell in each direction absorbs the half-cell stagger of odd
    # rows, keeping the requested box strictly interior to the sheet.
    ncols = int(math.ceil(width / e)) + 1
    nrows = int(math.ceil(height / h)) + 1

    jj, ii = np.meshgrid(
        np.arange(nrows + 1), np.arange(ncols + 1), indexing="ij"
    )
    xs = ox + ii * e + (jj % 2) * (e / 2.0)
    ys = oy + jj * h
    vertices = np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)

    faces = np.empty((2 * ncols * nrows, 3), dtype=np.int64)
    f = 0
    for j in range(nrows):
        base0 = j * (ncols + 1)
        base1 = (j + 1) * (ncols + 1)
        i = np.arange(ncols)
        if j % 2 == 0:
            # lower row unshifted, upper row shifted right by e/2
            up = np.stack([base0 + i, base0 + i + 1, base1 + i], axis=1)
            down = np.stack([base0 + i + 1, base1 + i + 1, base1 + i], axis=1)
        else:
            up = np.stack([base0 + i, base0 + i + 1, base1 + i + 1], axis=1)
            down = np.stack([base0 + i, base1 + i + 1, base1 + i], axis=1)
        block = np.empty((2 * ncols, 3), dtype=np.int64)
        block[0::2] = up
        block[1::2] = down
        faces[f : f + 2 * ncols] = block
        f += 2 * ncols

    return TriMesh(vertices, faces)
