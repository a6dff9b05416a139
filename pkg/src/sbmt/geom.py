"""Planar geometric predicates with a shared distance tolerance.

All predicates in this module agree on one convention: a quantity is "zero"
when the corresponding *distance* is at most ``eps`` (default 1e-9, override
globally via the ``SBMT_EPS`` environment variable, :func:`set_eps`, or per
call).  In particular :func:`orient2d` reports 0 exactly when the query point
lies within ``eps`` of the supporting line, independent of how long the
segment is.
"""

from __future__ import annotations

import math
import os
from typing import NamedTuple, Optional, Tuple

Point = Tuple[float, float]

DEFAULT_EPS = 1e-9


class DegenerateSegment(ValueError):
    """Raised when a segment shorter than the tolerance is used as a line."""


def _env_eps() -> float:
    raw = os.environ.get("SBMT_EPS", "")
    if not raw:
        return DEFAULT_EPS
    try:
        value = float(raw)
    except ValueError:
        return DEFAULT_EPS
    return value if value > 0.0 else DEFAULT_EPS


_global_eps = _env_eps()


def get_eps() -> float:
    """Current global tolerance (distance units)."""
    return _global_eps


def set_eps(eps: float) -> float:
    """Set the global tolerance; returns the previous value."""
    global _global_eps
    if eps <= 0.0:
        raise ValueError(f"tolerance must be positive, got {eps}")
    old = _global_eps
    _global_eps = float(eps)
    return old


class Tolerance:
    """Context manager scoping a temporary global tolerance.

    >>> with Tolerance(1e-6):
    ...     pass
    """

    def __init__(self, eps: float):
        self.eps = float(eps)
        self._saved: Optional[float] = None

    def __enter__(self) -> "Tolerance":
        self._saved = set_eps(self.eps)
        return self

    def __exit__(self, *exc) -> None:
        assert self._saved is not None
        set_eps(self._saved)


def _eps_of(eps: Optional[float]) -> float:
    return _global_eps if eps is None else eps


def cross(o: Point, a: Point, b: Point) -> float:
    """Twice the signed area of triangle (o, a, b)."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def dist(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def orient2d(a: Point, b: Point, c: Point, eps: Optional[float] = None) -> int:
    """Orientation of c relative to the directed line a->b.

    Returns +1 (left / counter-clockwise), -1 (right / clockwise) or 0 when c
    lies within ``eps`` of the supporting line.  Raises
    :class:`DegenerateSegment` when a and b coincide within ``eps``.
    """
    e = _eps_of(eps)
    length = dist(a, b)
    if length <= e:
        raise DegenerateSegment(f"orient2d baseline {a}->{b} shorter than eps={e}")
    area2 = cross(a, b, c)
    # area2 / length is the signed distance of c from the line.
    if abs(area2) <= e * length:
        return 0
    return 1 if area2 > 0.0 else -1


def point_segment_distance(p: Point, a: Point, b: Point) -> Tuple[float, float]:
    """Distance from p to segment [a, b] and the clamped foot parameter.

    Returns ``(distance, t)`` where ``a + t*(b-a)`` is the closest point and
    t is clamped to [0, 1].  A degenerate segment (a == b) yields t = 0.
    """
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return dist(p, a), 0.0
    t = ((p[0] - ax) * dx + (p[1] - ay) * dy) / denom
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(p[0] - cx, p[1] - cy), t


class SegSegResult(NamedTuple):
    """Result of :func:`seg_seg_intersect`.

    kind
        ``"none"``, ``"point"`` or ``"overlap"``.
    points
        Intersection geometry: one point for ``"point"``, the two endpoints of
        the shared portion (ordered by the first segment's parameter) for
        ``"overlap"``, empty otherwise.
    t1, t2
        Parameters along segment 1 / segment 2.  For ``"point"`` these are
        scalars; for ``"overlap"`` each is the (start, end) pair matching
        ``points``.
    """

    kind: str
    points: tuple
    t1: object
    t2: object


_NO_INTERSECTION = SegSegResult("none", (), None, None)


def _project_t(p: Point, a: Point, b: Point) -> float:
    """Unclamped parameter of the projection of p onto line a->b."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    return ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)


def seg_seg_intersect(
    p1: Point, p2: Point, q1: Point, q2: Point, eps: Optional[float] = None
) -> SegSegResult:
    """Intersect segments [p1, p2] and [q1, q2].

    Endpoint touches within ``eps`` count as intersections.  Collinear
    segments that share more than a point produce an ``"overlap"`` result with
    endpoints reported in the first segment's parametric order.  Raises
    :class:`DegenerateSegment` when either input is shorter than ``eps``.
    """
    e = _eps_of(eps)
    len1 = dist(p1, p2)
    len2 = dist(q1, q2)
    if len1 <= e:
        raise DegenerateSegment(f"segment 1 {p1}->{p2} shorter than eps={e}")
    if len2 <= e:
        raise DegenerateSegment(f"segment 2 {q1}->{q2} shorter than eps={e}")

    o1 = orient2d(p1, p2, q1, e)
    o2 = orient2d(p1, p2, q2, e)
    o3 = orient2d(q1, q2, p1, e)
    o4 = orient2d(q1, q2, p2, e)

    if o1 == 0 and o2 == 0:
        # Collinear: project segment 2 onto segment 1's parameter axis.
        ta = _project_t(q1, p1, p2)
        tb = _project_t(q2, p1, p2)
        lo, hi = min(ta, tb), max(ta, tb)
        tol1 = e / len1
        lo_c = max(lo, 0.0)
        hi_c = min(hi, 1.0)
        if hi_c < lo_c - tol1:
            return _NO_INTERSECTION
        if hi_c - lo_c <= tol1:
            # Touching end to end: a single shared point.
            t = 0.5 * (max(lo_c, 0.0) + min(hi_c, 1.0))
            t = min(max(t, 0.0), 1.0)
            pt = (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))
            return SegSegResult("point", (pt,), t, _project_t(pt, q1, q2))
        pa = (p1[0] + lo_c * (p2[0] - p1[0]), p1[1] + lo_c * (p2[1] - p1[1]))
        pb = (p1[0] + hi_c * (p2[0] - p1[0]), p1[1] + hi_c * (p2[1] - p1[1]))
        return SegSegResult(
            "overlap",
            (pa, pb),
            (lo_c, hi_c),
            (_project_t(pa, q1, q2), _project_t(pb, q1, q2)),
        )

    if o1 != o2 and o3 != o4:
        # General position (orientations may be 0 for endpoint touches).
        r_num = cross(p1, q1, q2)
        denom = cross(p1, p2, q2) - cross(p1, p2, q1)
        # denom == cross of direction vectors; non-zero because not collinear.
        if denom == 0.0:
            return _NO_INTERSECTION
        t1 = r_num / denom
        pt = (p1[0] + t1 * (p2[0] - p1[0]), p1[1] + t1 * (p2[1] - p1[1]))
        t2 = _project_t(pt, q1, q2)
        # Clamp parameters that are only epsilon outside the ranges.
        t1 = min(max(t1, 0.0), 1.0)
        t2 = min(max(t2, 0.0), 1.0)
        pt = (p1[0] + t1 * (p2[0] - p1[0]), p1[1] + t1 * (p2[1] - p1[1]))
        return SegSegResult("point", (pt,), t1, t2)

    return _NO_INTERSECTION
