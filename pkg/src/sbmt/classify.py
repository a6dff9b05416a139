"""Segment/face intersection classification.

Walks each boundary chain across the triangulation, derives per-edge
intersection events, groups them into per-face configurations, and freezes
everything into a registry that the retriangulation stage consumes.

Identity discipline: every intersection point receives exactly one global
key so that adjacent faces agree bit-for-bit on shared vertices:

- ``('m', vid)``      existing mesh vertex (vertex events, snapped chain vertices)
- ``('c', ci, vi)``   chain vertex ``vi`` of chain ``ci`` (interior apexes and
                      apexes lying on a mesh edge; coordinates are the exact
                      chain coordinates)
- ``('x', ekey, r)``  transversal crossing, rank ``r`` among all anchor points
                      on undirected edge ``ekey`` ordered along the canonical
                      (lower id -> higher id) direction
"""
from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from sbmt.boundary import PolyChain
from sbmt.geom import (
    _eps_of,
    dist,
    orient2d,
    point_segment_distance,
    seg_seg_intersect,
)
from sbmt.halfedge import TriMesh

log = logging.getLogger(__name__)

KIND_CROSSING = "crossing"
KIND_ENDPOINT = "endpoint_on_edge"
KIND_VERTEX = "vertex_on_segment"
KIND_OVERLAP = "colinear_overlap"

# Edge bitmask values, slot 0 = AB, 1 = BC, 2 = CA.
EDGE_MASK = (2, 4, 8)

# Admissible per-face classes as sorted pairs; counts themselves stay in
# chain order and are checked against this set after sorting.
ADMISSIBLE_CLASSES = {
    (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (2, 2), (1, 3), (2, 3),
}

_SLOT_LABELS = (("A", "B"), ("B", "C"), ("C", "A"))
_VLABEL_TO_SLOT = {"A": 0, "B": 1, "C": 2}

# Mirror (swap of the first two vertex labels): slot i maps to _MIRROR_SLOT[i]
# with reversed direction; vertex v maps to _MIRROR_VERT[v].
_MIRROR_SLOT = (0, 2, 1)
_MIRROR_VERT = (1, 0, 2)

_D3 = [(r, m) for m in (False, True) for r in (0, 1, 2)]


class ProtocolViolation(ValueError):
    """The chain/mesh geometry violates the admissible-configuration rules."""


@dataclass
class EdgeEvent:
    """One counted intersection event on a directed face edge."""

    edge_slot: int
    kind: str
    point: Tuple[float, float]
    attributed_to: str
    t_edge: float
    t_seg: float
    global_key: tuple = ()


def classify_edge_event(
    a, b, p, q, slot: int = 0, labels=("A", "B"), eps: Optional[float] = None
) -> List[EdgeEvent]:
    """Classify the intersection of directed edge ``a->b`` with segment ``p->q``.

    Returns the counted events for this single edge (straightness limits it
    to at most one; a chain vertex sitting on a triangle vertex shows up once
    per incident edge, so the triangle-level tally counts it twice).
    Attribution priority for collinear overlaps is the edge's first vertex,
    its second vertex, then the segment endpoints in order.
    """
    tol = _eps_of(eps)
    res = seg_seg_intersect(p, q, a, b, eps=tol)
    if res.kind == "none":
        return []

    la, lb = labels
    if res.kind == "overlap":
        lo_t, hi_t = res.t1
        candidates = (
            (la, a), (lb, b), ("P", p), ("Q", q),
        )
        seg_len = dist(p, q)
        for label, pt in candidates:
            tp = _project(pt, p, q)
            if lo_t - tol / seg_len <= tp <= hi_t + tol / seg_len:
                te = _project(pt, a, b)
                return [EdgeEvent(slot, KIND_OVERLAP, (pt[0], pt[1]), label,
                                  min(max(te, 0.0), 1.0), min(max(tp, 0.0), 1.0))]
        # Degenerate: a run with no representative candidate inside it.
        mid = res.points[0]
        return [EdgeEvent(slot, KIND_OVERLAP, mid, la,
                          _project(mid, a, b), lo_t)]

    (pt,) = res.points
    t_seg = float(res.t1)
    t_edge = float(res.t2)
    if dist(pt, a) <= tol:
        return [EdgeEvent(slot, KIND_VERTEX, (a[0], a[1]), la, 0.0, t_seg)]
    if dist(pt, b) <= tol:
        return [EdgeEvent(slot, KIND_VERTEX, (b[0], b[1]), lb, 1.0, t_seg)]
    if dist(pt, p) <= tol:
        return [EdgeEvent(slot, KIND_ENDPOINT, (p[0], p[1]), "P", t_edge, 0.0)]
    if dist(pt, q) <= tol:
        return [EdgeEvent(slot, KIND_ENDPOINT, (q[0], q[1]), "Q", t_edge, 1.0)]
    return [EdgeEvent(slot, KIND_CROSSING, pt, "-", t_edge, t_seg)]


def _project(pt, a, b) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    return ((pt[0] - a[0]) * dx + (pt[1] - a[1]) * dy) / (dx * dx + dy * dy)


def _inside(pts, tri, x, y, eps, strict=True) -> bool:
    lo = 1 if strict else 0
    for s in range(3):
        pa = pts[tri[s]]
        pb = pts[tri[(s + 1) % 3]]
        if orient2d(pa, pb, (x, y), eps) < lo:
            return False
    return True


def segment_face_intersects(mesh: TriMesh, face: int, p, q,
                            eps: Optional[float] = None) -> bool:
    """Exact test: does segment [p, q] meet the closed triangle ``face``?"""
    tol = _eps_of(eps)
    pts = mesh.vertices
    tri = mesh.faces[face]
    if _inside(pts, tri, p[0], p[1], tol, strict=False):
        return True
    if _inside(pts, tri, q[0], q[1], tol, strict=False):
        return True
    for s in range(3):
        a = pts[tri[s]]
        b = pts[tri[(s + 1) % 3]]
        if seg_seg_intersect(p, q, a, b, eps=tol).kind != "none":
            return True
    return False


def _chain_segments(chains: Sequence[PolyChain]):
    for ci, ch in enumerate(chains):
        for k in range(ch.n_segments):
            yield ci, k


def _interior_contact(mesh: TriMesh, face: int, p, q, tol: float) -> bool:
    """True when [p, q] meets the face's open interior, not just its rim."""
    pts = mesh.vertices
    tri = mesh.faces[face]
    t0, t1 = 0.0, 1.0
    for s in range(3):
        ax, ay = pts[tri[s]]
        bx, by = pts[tri[(s + 1) % 3]]
        ex, ey = bx - ax, by - ay
        fp = ex * (p[1] - ay) - ey * (p[0] - ax)
        fq = ex * (q[1] - ay) - ey * (q[0] - ax)
        d = fq - fp
        if d == 0.0:
            if fp < 0.0:
                return False
            continue
        t_at = -fp / d
        if d > 0.0:
            t0 = max(t0, t_at)
        else:
            t1 = min(t1, t_at)
        if t0 >= t1:
            return False
    if t1 - t0 <= 1e-12:
        return False
    mx = p[0] + 0.5 * (t0 + t1) * (q[0] - p[0])
    my = p[1] + 0.5 * (t0 + t1) * (q[1] - p[1])
    return _inside(pts, tri, mx, my, tol, strict=True)


def _trim_grazes(mesh: TriMesh, face: int, segs: List[Tuple[int, int]],
                 chains, tol: float) -> List[Tuple[int, int]]:
    """Drop run-end segments whose face contact stays on the boundary.

    Snapped chain vertices can leave a chain segment running exactly along
    a mesh edge; its two neighbours then touch the same faces only at the
    edge's endpoints.  Those grazes carry no interior content, so a run of
    three or more trims down to the segments that actually cut the face.
    """
    ss = sorted(set(segs))
    ci = ss[0][0]
    if any(c != ci for c, _ in ss):
        return segs
    ch = chains[ci]
    n = ch.n_segments
    kset = {k for _, k in ss}
    if ch.closed:
        starts = [k for k in kset if (k - 1) % n not in kset]
    else:
        starts = [k for k in kset if k - 1 not in kset]
    if len(starts) != 1:
        return segs
    run = []
    k = starts[0]
    while k in kset and len(run) < len(kset):
        run.append(k)
        k = (k + 1) % n if ch.closed else k + 1
    if len(run) != len(kset):
        return segs
    while len(run) > 2:
        p, q = ch.segment(run[0])
        if not _interior_contact(mesh, face, p, q, tol):
            run.pop(0)
            continue
        p, q = ch.segment(run[-1])
        if not _interior_contact(mesh, face, p, q, tol):
            run.pop()
            continue
        break
    return [(ci, k) for k in run]


def _consecutive_order(segs: List[Tuple[int, int]], chains) -> List[Tuple[int, int]]:
    """Validate that a face's segments are <= 2 consecutive ones, in chain order."""
    if len(segs) == 1:
        return segs
    if len(segs) > 2:
        raise ProtocolViolation(
            f"face crossed by {len(segs)} segments {segs}; at most two "
            "consecutive segments are admissible")
    (c1, k1), (c2, k2) = sorted(segs)
    if c1 != c2:
        raise ProtocolViolation(
            f"face crossed by segments of different chains {segs}")
    n = chains[c1].n_segments
    if k2 == k1 + 1:
        return [(c1, k1), (c2, k2)]
    if chains[c1].closed and k1 == 0 and k2 == n - 1:
        return [(c2, k2), (c1, k1)]
    raise ProtocolViolation(
        f"face crossed by non-consecutive segments {segs}")


def find_intersected_faces(
    mesh: TriMesh, chains: Sequence[PolyChain], eps: Optional[float] = None,
    lenient: bool = False,
) -> Dict[int, Optional[List[Tuple[int, int]]]]:
    """Map face id -> chain segments meeting it, in chain order.

    Candidate faces come from centroid proximity along each segment followed
    by breadth-first expansion over edge neighbours; every candidate is
    confirmed with exact intersection tests, so the walk only bounds the
    search, never the answer.  Raises :class:`ProtocolViolation` when a face
    collects more than two (or non-consecutive) segments; with ``lenient``
    such faces map to ``None`` instead so the caller can fan-split them.
    """
    tol = _eps_of(eps)
    pts = mesh.vertices
    centroids = pts[mesh.faces].mean(axis=1)
    tree = cKDTree(centroids)
    twins = mesh.halfedge_twins()
    med_e = float(np.median(mesh.edge_lengths()))

    hit_lists: Dict[int, List[Tuple[int, int]]] = defaultdict(list)
    for ci, k in _chain_segments(chains):
        p = chains[ci].points[k]
        q = chains[ci].points[(k + 1) % len(chains[ci].points)]
        seg_len = math.hypot(q[0] - p[0], q[1] - p[1])
        nsamp = max(2, int(math.ceil(seg_len / (0.45 * med_e))) + 1)
        ts = np.linspace(0.0, 1.0, nsamp)
        samples = np.outer(1.0 - ts, p) + np.outer(ts, q)
        _, cand = tree.query(samples, k=min(8, len(centroids)))
        seeds = np.unique(cand)

        visited = set()
        stack = []
        hits = []
        for f in seeds:
            f = int(f)
            if f not in visited:
                visited.add(f)
                stack.append(f)
        while stack:
            f = stack.pop()
            if not segment_face_intersects(mesh, f, p, q, tol):
                continue
            hits.append(f)
            for s in range(3):
                tw = int(twins[f * 3 + s])
                if tw >= 0:
                    nf = tw // 3
                    if nf not in visited:
                        visited.add(nf)
                        stack.append(nf)
        for f in hits:
            hit_lists[f].append((ci, k))

    out: Dict[int, Optional[List[Tuple[int, int]]]] = {}
    for f, v in sorted(hit_lists.items()):
        if len(v) > 2:
            v = _trim_grazes(mesh, f, v, chains, tol)
        try:
            out[f] = _consecutive_order(v, chains)
        except ProtocolViolation:
            if not lenient:
                raise
            log.warning("face %d breaks the segment protocol; queued for "
                        "fan fallback", f)
            out[f] = None
    return out


# ---------------------------------------------------------------------------
# Per-face analysis


@dataclass
class FaceAnalysis:
    """Frozen classification of one intersected face."""

    face: int
    verts: Tuple[int, int, int]
    segments: List[Tuple[int, int]]
    counts: Tuple[int, ...]
    edge_mask: int
    records: List[List[EdgeEvent]]
    slot_anchors: List[List[tuple]]      # global keys, in face-edge direction
    slot_anchor_ts: List[List[float]]
    chords: frozenset                    # frozensets of local refs
    touches: frozenset                   # local refs ('v', slot)
    apex_key: Optional[tuple]
    apex_inside: bool
    sym: Tuple[int, bool]
    lookup_key: tuple

    @property
    def cls(self) -> Tuple[int, int]:
        if len(self.counts) == 1:
            return (0, self.counts[0])
        return (self.counts[0], self.counts[1])

    def resolve(self, ref: tuple):
        """Map a canonical-frame ref back to a global vertex key."""
        r, m = self.sym
        if ref[0] == "p":
            if self.apex_key is None:
                raise KeyError(f"face {self.face} has no apex for ref {ref}")
            return self.apex_key
        if ref[0] == "v":
            j = (ref[1] + r) % 3
            v = _MIRROR_VERT[j] if m else j
            return ("m", int(self.verts[v]))
        if ref[0] == "e":
            j = (ref[1] + r) % 3
            if m:
                s = _MIRROR_SLOT[j]
                rank = len(self.slot_anchors[s]) - 1 - ref[2]
            else:
                s = j
                rank = ref[2]
            return self.slot_anchors[s][rank]
        raise KeyError(f"unknown ref {ref}")

    @property
    def orientation_flip(self) -> bool:
        """True when the canonical frame mirrors the mesh frame."""
        return self.sym[1]

    def to_canonical(self, ref: tuple) -> tuple:
        """Map a face-local ref into the canonical frame (inverse of resolve)."""
        r, m = self.sym
        if ref[0] == "p":
            return ref
        if ref[0] == "v":
            v = _MIRROR_VERT[ref[1]] if m else ref[1]
            return ("v", (v - r) % 3)
        if ref[0] == "e":
            s, rank = ref[1], ref[2]
            if m:
                j = _MIRROR_SLOT[s]
                rank = len(self.slot_anchors[s]) - 1 - rank
            else:
                j = s
            return ("e", (j - r) % 3, rank)
        raise KeyError(f"unknown ref {ref}")

    def local_ref(self, key: tuple) -> tuple:
        """Face-local ref ('v',slot)/('e',slot,rank)/('p',) for a global key."""
        if self.apex_inside and key == self.apex_key:
            return ("p",)
        if key[0] == "m":
            for i, v in enumerate(self.verts):
                if v == key[1]:
                    return ("v", i)
        for s in range(3):
            for rank, gk in enumerate(self.slot_anchors[s]):
                if gk == key:
                    return ("e", s, rank)
        raise KeyError(f"key {key} not on face {self.face}")


def _canonical_views(counts, chords, touches, apex_inside, slot_ts):
    """Yield (signature, (r, m)) over the six dihedral relabelings."""
    for r, m in _D3:
        if m:
            src = tuple(_MIRROR_SLOT[(j + r) % 3] for j in range(3))
        else:
            src = tuple((j + r) % 3 for j in range(3))
        c_counts = tuple(counts[s] for s in src)

        def xref(ref):
            if ref[0] == "p":
                return ref
            if ref[0] == "v":
                v = ref[1]
                if m:
                    v = _MIRROR_VERT[v]
                return ("v", (v - r) % 3)
            s, rank = ref[1], ref[2]
            if m:
                j = (_MIRROR_SLOT[s] - r) % 3
                return ("e", j, counts[s] - 1 - rank)
            return ("e", (s - r) % 3, rank)

        c_chords = tuple(sorted(
            tuple(sorted(xref(x) for x in ch)) for ch in chords))
        c_touch = tuple(sorted(xref(t) for t in touches))
        tails = []
        for j in range(3):
            ts = slot_ts[src[j]]
            if m:
                tails.append(tuple(round(1.0 - t, 9) for t in reversed(ts)))
            else:
                tails.append(tuple(round(t, 9) for t in ts))
        sig = (c_counts, c_chords, apex_inside, c_touch, tuple(tails))
        yield sig, (r, m)


def canonicalize(counts, chords, touches, apex_inside, slot_ts):
    """Orbit-minimum canonical signature and the transform achieving it.

    Taking the lexicographic minimum over all six relabelings makes the
    result independent of how the face happens to label its corners; the
    quantized edge-parameter tail only breaks ties between otherwise
    identical views.
    """
    best = None
    best_sym = (0, False)
    for sig, sym in _canonical_views(counts, chords, touches, apex_inside, slot_ts):
        if best is None or sig < best:
            best = sig
            best_sym = sym
    lookup_key = best[:4]
    return lookup_key, best_sym


# ---------------------------------------------------------------------------
# Registry


@dataclass
class IntersectionRegistry:
    """Frozen output of the classification stage.

    ``protocol_fallbacks`` lists faces whose intersection pattern broke the
    two-consecutive-segments protocol under a lenient build; they carry no
    analysis and must be re-tiled by a plain centroid fan downstream.
    """

    by_face: Dict[int, FaceAnalysis]
    edge_anchors: Dict[Tuple[int, int], List[tuple]]
    points: Dict[tuple, Tuple[float, float]]
    protocol_fallbacks: Set[int] = field(default_factory=set)

    def new_vertex_keys(self) -> List[tuple]:
        """All chain/crossing keys that must become mesh vertices, sorted."""
        return sorted(self.points.keys())

    def faces(self) -> List[int]:
        return sorted(set(self.by_face) | self.protocol_fallbacks)


def _merge_slot_events(evs: List[EdgeEvent], tol: float) -> List[EdgeEvent]:
    """Collapse coincident events of one segment on one edge.

    Straight segments produce at most one event per edge, but an epsilon
    perturbation can make two detections land within tolerance; the more
    specific kind (vertex > endpoint > crossing > overlap) wins.
    """
    if len(evs) <= 1:
        return evs
    rank = {KIND_VERTEX: 0, KIND_ENDPOINT: 1, KIND_CROSSING: 2, KIND_OVERLAP: 3}
    out: List[EdgeEvent] = []
    for ev in sorted(evs, key=lambda e: rank[e.kind]):
        if all(dist(ev.point, kept.point) > tol for kept in out):
            out.append(ev)
    out.sort(key=lambda e: e.t_seg)
    return out


def build_registry(
    mesh: TriMesh,
    chains: Sequence[PolyChain],
    chain_vertex_to_mesh: Optional[Dict[Tuple[int, int], int]] = None,
    eps: Optional[float] = None,
    face_map: Optional[Dict[int, Optional[List[Tuple[int, int]]]]] = None,
    lenient: bool = False,
) -> IntersectionRegistry:
    """Classify every intersected face and freeze the result.

    ``chain_vertex_to_mesh`` maps chain vertices already realized as mesh
    vertices (snapped or inserted by edge elimination) to their ids.  With
    ``lenient``, faces that break the segment protocol are collected in
    ``protocol_fallbacks`` instead of raising; their events contribute no
    anchors, but anchors their neighbours record on shared edges survive.
    """
    tol = _eps_of(eps)
    cv2m = chain_vertex_to_mesh or {}
    if face_map is None:
        face_map = find_intersected_faces(mesh, chains, eps=tol,
                                          lenient=lenient)
    pts = mesh.vertices
    protocol_fallbacks: Set[int] = set()

    # Pass 1: raw events per face, and the global anchor collation.  Anchor
    # contributions are buffered per face so a lenient protocol failure can
    # discard the whole face atomically.
    raw: Dict[int, List[List[EdgeEvent]]] = {}
    anchor_entries: Dict[Tuple[int, int], Dict[tuple, Tuple[float, Tuple[float, float]]]] = defaultdict(dict)

    for f, segs in face_map.items():
        if segs is None:
            protocol_fallbacks.add(f)
            continue
        tri = mesh.faces[f]
        per_seg: List[List[EdgeEvent]] = []
        adds: List[Tuple[Tuple[int, int], tuple, Tuple[float, Tuple[float, float]]]] = []
        try:
            for ci, k in segs:
                ch = chains[ci]
                p = tuple(ch.points[k])
                q = tuple(ch.points[(k + 1) % len(ch.points)])
                evs: List[EdgeEvent] = []
                for s in range(3):
                    va, vb = int(tri[s]), int(tri[(s + 1) % 3])
                    slot_evs = classify_edge_event(
                        tuple(pts[va]), tuple(pts[vb]), p, q,
                        slot=s, labels=_SLOT_LABELS[s], eps=tol)
                    slot_evs = _merge_slot_events(slot_evs, tol)
                    for ev in slot_evs:
                        _assign_identity(ev, ci, k, ch, tri, cv2m)
                        is_anchor = ev.kind == KIND_CROSSING or (
                            ev.kind == KIND_ENDPOINT and ev.global_key[0] == "c")
                        if is_anchor:
                            u, v = (va, vb) if va < vb else (vb, va)
                            ident = ev.global_key if ev.kind == KIND_ENDPOINT else ("xsrc", ci, k)
                            t_can = _project(ev.point, pts[u], pts[v])
                            adds.append(((u, v), ident, (t_can, ev.point)))
                    evs.extend(slot_evs)
                if len(evs) > 3:
                    raise ProtocolViolation(
                        f"segment {(ci, k)} produces {len(evs)} events in "
                        f"face {f}; at most 3 are admissible")
                evs.sort(key=lambda e: (e.t_seg, e.edge_slot))
                per_seg.append(evs)
        except ProtocolViolation:
            if not lenient:
                raise
            log.warning("face %d events break the protocol; queued for "
                        "fan fallback", f)
            protocol_fallbacks.add(f)
            continue
        for ekey, ident, rec in adds:
            book = anchor_entries[ekey]
            if ident not in book:
                book[ident] = rec
        raw[f] = per_seg

    # Rank the anchors per undirected edge and fix crossing identities.
    edge_anchors: Dict[Tuple[int, int], List[tuple]] = {}
    anchor_t: Dict[Tuple[int, int], Dict[tuple, float]] = {}
    points: Dict[tuple, Tuple[float, float]] = {}
    xkey: Dict[Tuple[Tuple[int, int], tuple], tuple] = {}
    for ekey, book in anchor_entries.items():
        order = sorted(book.items(), key=lambda kv: (kv[1][0], kv[0]))
        keys = []
        tmap = {}
        for rank, (ident, (t_can, pt)) in enumerate(order):
            if ident[0] == "xsrc":
                gk = ("x", ekey, rank)
                xkey[(ekey, ident)] = gk
            else:
                gk = ident
            keys.append(gk)
            tmap[gk] = t_can
            if gk[0] in ("x", "c"):
                points[gk] = (float(pt[0]), float(pt[1]))
        edge_anchors[ekey] = keys
        anchor_t[ekey] = tmap

    # Pass 2: per-face structure.
    by_face: Dict[int, FaceAnalysis] = {}
    for f, per_seg in raw.items():
        segs = face_map[f]
        tri = mesh.faces[f]
        for evs, (ci, k) in zip(per_seg, segs):
            for ev in evs:
                if ev.kind == KIND_CROSSING:
                    s = ev.edge_slot
                    va, vb = int(tri[s]), int(tri[(s + 1) % 3])
                    u, v = (va, vb) if va < vb else (vb, va)
                    ev.global_key = xkey[((u, v), ("xsrc", ci, k))]
        try:
            by_face[f] = _analyze_face(
                mesh, f, segs, per_seg, chains, cv2m, edge_anchors, anchor_t,
                tol)
        except ProtocolViolation:
            if not lenient:
                raise
            log.warning("face %d analysis breaks the protocol; queued for "
                        "fan fallback", f)
            protocol_fallbacks.add(f)

    # Interior apex coordinates are the exact chain coordinates.
    for fa in by_face.values():
        if fa.apex_key is not None and fa.apex_key[0] == "c":
            _, ci, vi = fa.apex_key
            p = chains[ci].points[vi]
            points[fa.apex_key] = (float(p[0]), float(p[1]))

    return IntersectionRegistry(by_face=by_face, edge_anchors=edge_anchors,
                                points=points,
                                protocol_fallbacks=protocol_fallbacks)


def _assign_identity(ev: EdgeEvent, ci: int, k: int, ch: PolyChain, tri, cv2m):
    if ev.kind == KIND_VERTEX:
        s = ev.edge_slot
        vslot = _VLABEL_TO_SLOT[ev.attributed_to]
        ev.global_key = ("m", int(tri[vslot]))
    elif ev.kind == KIND_ENDPOINT:
        vi = k if ev.attributed_to == "P" else (k + 1) % len(ch.points)
        if (ci, vi) in cv2m:
            ev.global_key = ("m", int(cv2m[(ci, vi)]))
        else:
            ev.global_key = ("c", ci, vi)
        ev.point = (float(ch.points[vi][0]), float(ch.points[vi][1]))
    elif ev.kind == KIND_OVERLAP:
        if ev.attributed_to in _VLABEL_TO_SLOT:
            ev.global_key = ("m", int(tri[_VLABEL_TO_SLOT[ev.attributed_to]]))
        else:
            vi = k if ev.attributed_to == "P" else (k + 1) % len(ch.points)
            ev.global_key = ("c", ci, vi) if (ci, vi) not in cv2m else ("m", int(cv2m[(ci, vi)]))


def _analyze_face(mesh, f, segs, per_seg, chains, cv2m, edge_anchors, anchor_t, tol):
    pts = mesh.vertices
    tri = mesh.faces[f]
    verts = (int(tri[0]), int(tri[1]), int(tri[2]))

    # Face-local anchor order per slot.
    slot_anchors: List[List[tuple]] = []
    slot_ts: List[List[float]] = []
    for s in range(3):
        va, vb = verts[s], verts[(s + 1) % 3]
        u, v = (va, vb) if va < vb else (vb, va)
        keys = list(edge_anchors.get((u, v), []))
        tvals = [anchor_t.get((u, v), {}).get(kk, 0.0) for kk in keys]
        if va > vb:
            keys.reverse()
            tvals = [1.0 - t for t in reversed(tvals)]
        slot_anchors.append(keys)
        slot_ts.append(tvals)

    key_to_local: Dict[tuple, tuple] = {}
    for s in range(3):
        key_to_local[("m", verts[s])] = ("v", s)
        for rank, gk in enumerate(slot_anchors[s]):
            key_to_local.setdefault(gk, ("e", s, rank))

    anchor_counts = tuple(len(slot_anchors[s]) for s in range(3))
    mask = 0
    for evs in per_seg:
        for ev in evs:
            mask |= EDGE_MASK[ev.edge_slot]

    # Reconstruct the in-face chain path from boundary events + interior
    # endpoints; overlap events stay on the boundary and add no path nodes.
    # Tracks of consecutive segments merge only at a shared node (the apex);
    # otherwise each segment's clipped piece stays a separate track.
    tracks: List[List[tuple]] = []
    node_pos: Dict[tuple, Tuple[float, float]] = {}
    for evs, (ci, k) in zip(per_seg, segs):
        ch = chains[ci]
        n = len(ch.points)
        p = tuple(ch.points[k])
        q = tuple(ch.points[(k + 1) % n])
        nodes: List[tuple] = []
        seen_pts: List[Tuple[float, float]] = []
        for ev in sorted(evs, key=lambda e: e.t_seg):
            if ev.kind == KIND_OVERLAP:
                continue
            if all(dist(ev.point, sp) > tol for sp in seen_pts):
                nodes.append(ev.global_key)
                node_pos[ev.global_key] = ev.point
                seen_pts.append(ev.point)
        if _inside(pts, tri, p[0], p[1], tol, strict=True):
            ki = (ci, k)
            gk = ("m", cv2m[ki]) if ki in cv2m else ("c", ki[0], ki[1])
            if not nodes or nodes[0] != gk:
                nodes.insert(0, gk)
                node_pos[gk] = (float(p[0]), float(p[1]))
        if _inside(pts, tri, q[0], q[1], tol, strict=True):
            ki = (ci, (k + 1) % n)
            gk = ("m", cv2m[ki]) if ki in cv2m else ("c", ki[0], ki[1])
            if not nodes or nodes[-1] != gk:
                nodes.append(gk)
                node_pos[gk] = (float(q[0]), float(q[1]))
        if not nodes:
            continue
        if tracks and tracks[-1][-1] == nodes[0]:
            tracks[-1].extend(nodes[1:])
        else:
            tracks.append(nodes)

    def _piece_on_boundary(ka: tuple, kb: tuple) -> bool:
        # A straight piece whose endpoints both sit on one edge line runs
        # along the boundary; it is realized by the edge itself, not a chord.
        pa, pb = node_pos.get(ka), node_pos.get(kb)
        if pa is None or pb is None:
            return False
        for s in range(3):
            va = pts[tri[s]]
            vb = pts[tri[(s + 1) % 3]]
            lim = tol * max(1.0, dist(va, vb))
            if (abs(orient2d(va, vb, pa)) <= lim
                    and abs(orient2d(va, vb, pb)) <= lim):
                return True
        return False

    chords = set()
    touches: set = set()
    apex_key = None
    apex_inside = False
    for track in tracks:
        if len(track) == 1:
            local = key_to_local.get(track[0])
            if local is not None and local[0] == "v":
                touches.add(local)
            # A bare anchor touch already splits its edge via the anchor count.
            continue
        for aa, bb in zip(track, track[1:]):
            la = key_to_local.get(aa)
            lb = key_to_local.get(bb)
            if la is None:
                apex_key = aa
                apex_inside = True
                la = ("p",)
            if lb is None:
                apex_key = bb
                apex_inside = True
                lb = ("p",)
            if la == lb or _piece_on_boundary(aa, bb):
                continue
            chords.add(frozenset((la, lb)))

    # Apex lying exactly on an edge: a chain vertex whose local ref is an
    # edge anchor rather than an interior point.
    if apex_key is None:
        for track in tracks:
            for gk in track:
                if gk[0] == "c" and key_to_local.get(gk, ("",))[0] == "e":
                    apex_key = gk
                    break
            if apex_key is not None:
                break

    cls_counts = tuple(len(evs) for evs in per_seg)
    total = sum(cls_counts)
    pair = (0, cls_counts[0]) if len(cls_counts) == 1 else (cls_counts[0], cls_counts[1])
    if total == 0:
        raise ProtocolViolation(
            f"face {f} was matched by segments {segs} but produced no events")
    if total > 5:
        raise ProtocolViolation(
            f"face {f} has {total} events from {segs}; more than 5 is inadmissible")
    if tuple(sorted(pair)) not in ADMISSIBLE_CLASSES:
        raise ProtocolViolation(
            f"face {f} class {pair} from segments {segs} is not admissible")

    chords_f = frozenset(chords)
    touches_f = frozenset(touches)
    lookup_key, sym = canonicalize(
        anchor_counts, chords_f, touches_f, apex_inside, slot_ts)

    return FaceAnalysis(
        face=f, verts=verts, segments=list(segs), counts=cls_counts,
        edge_mask=mask, records=per_seg, slot_anchors=slot_anchors,
        slot_anchor_ts=slot_ts, chords=chords_f, touches=touches_f,
        apex_key=apex_key, apex_inside=apex_inside, sym=sym,
        lookup_key=lookup_key)


def write_classification_csv(registry: IntersectionRegistry, path) -> None:
    """Dump one row per intersected face for debugging."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["face_id", "class", "edge_mask", "sym_rot", "sym_mirror",
                    "segments", "n_chords", "apex_inside"])
        for f in registry.faces():
            fa = registry.by_face[f]
            w.writerow([
                f, f"({fa.cls[0]},{fa.cls[1]})", fa.edge_mask,
                fa.sym[0], int(fa.sym[1]),
                ";".join(f"{c}:{k}" for c, k in fa.segments),
                len(fa.chords), int(fa.apex_inside),
            ])
