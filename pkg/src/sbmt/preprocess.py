"""Threshold-driven mesh preprocessing: vertex snapping, vertex repulsion,
and near-edge elimination.

The three rules force every boundary/mesh interaction into one of the
admissible local configurations:

1. snap (radius ``a``): grid vertices near a chain vertex move exactly onto
   it, so boundary corners become mesh vertices;
2. repel (clearance ``c``): remaining grid vertices too close to the
   boundary polyline are pushed out to distance exactly ``c``, preserving
   side, so no crossing can land arbitrarily close to a vertex;
3. eliminate (distance ``b``): chain vertices that ended up close to a mesh
   edge absorb that edge — the ≤2 incident faces are replaced by a fan
   around the chain vertex, which joins the mesh as a new vertex.

Snap and repel assignments are both computed from the frozen input state and
touch disjoint vertex sets, so the two steps commute; elimination runs after
them, with conflicts (two flagged edges on one face) either raised or
dropped depending on ``strict``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from sbmt.boundary import PolyChain
from sbmt.geom import get_eps, point_segment_distance
from sbmt.halfedge import TriMesh

log = logging.getLogger(__name__)

DEFAULT_A = 0.26
DEFAULT_B = 0.125
DEFAULT_C = 0.183
DEFAULT_E = math.sqrt(0.45)


class ConflictingDeletion(ValueError):
    """Two edges of one face flagged for elimination (threshold breach)."""


@dataclass(frozen=True)
class Thresholds:
    a: float = DEFAULT_A
    b: float = DEFAULT_B
    c: float = DEFAULT_C
    e: float = DEFAULT_E


def validate_thresholds(t: Thresholds, min_boundary_seg: float) -> List[str]:
    """Names of violated admissibility constraints (empty list = ok)."""
    out: List[str] = []
    for name in ("a", "b", "c", "e"):
        if getattr(t, name) <= 0:
            out.append(f"{name} ≤ 0")
    if t.b >= t.a / 2.0:
        out.append("b ≥ a/2")
    if t.c >= t.a / math.sqrt(2.0):
        out.append("c ≥ a/√2")
    if t.a >= t.e / 2.0:
        out.append("a ≥ e/2")
    if t.e >= min_boundary_seg:
        out.append("e ≥ min boundary segment length")
    return out


# -- chain sampling helpers --------------------------------------------------


def _all_chain_vertices(chains: Sequence[PolyChain]):
    """(coords (M,2), keys list of (chain, vertex)) over every chain vertex."""
    coords = []
    keys: List[Tuple[int, int]] = []
    for ci, ch in enumerate(chains):
        for vi in range(len(ch.points)):
            coords.append(ch.points[vi])
            keys.append((ci, vi))
    if not coords:
        return np.empty((0, 2)), keys
    return np.asarray(coords, dtype=np.float64), keys


def _segment_records(chains: Sequence[PolyChain]):
    """Per-segment arrays: (chain, seg, ax, ay, bx, by)."""
    rec = []
    for ci, ch in enumerate(chains):
        for k in range(ch.n_segments):
            a, b = ch.segment(k)
            rec.append((ci, k, a[0], a[1], b[0], b[1]))
    return rec


def _densify(chains: Sequence[PolyChain], spacing: float):
    """Sample points along all segments at most ``spacing`` apart, tagged
    with their owning segment index into the _segment_records list."""
    pts = []
    owner = []
    si = 0
    for ch in chains:
        for k in range(ch.n_segments):
            a, b = ch.segment(k)
            L = math.hypot(b[0] - a[0], b[1] - a[1])
            n = max(int(math.ceil(L / spacing)), 1)
            for j in range(n + 1):
                t = j / n
                pts.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
                owner.append(si)
            si += 1
    return np.asarray(pts, dtype=np.float64), np.asarray(owner, dtype=np.int64)


# -- step 1: snap ------------------------------------------------------------


def snap_vertices(
    mesh: TriMesh, chains: Sequence[PolyChain], a: float
) -> Dict[int, Tuple[int, int]]:
    """Map mesh-vertex id -> (chain, vertex) of the chain vertex it snaps to.

    A mesh vertex snaps when some chain vertex lies within distance ``a``;
    the closest one wins, exact ties go to the lowest (chain, vertex) pair.
    Raises ValueError if two mesh vertices claim the same chain vertex
    (impossible while a < e/2 on an intact grid).
    """
    coords, keys = _all_chain_vertices(chains)
    if not len(coords):
        return {}
    tree = cKDTree(coords)
    kq = min(8, len(coords))
    dists, idxs = tree.query(mesh.vertices, k=kq, distance_upper_bound=a)
    if kq == 1:
        dists = dists[:, None]
        idxs = idxs[:, None]
    out: Dict[int, Tuple[int, int]] = {}
    taken: Dict[Tuple[int, int], int] = {}
    for vid in range(mesh.n_vertices):
        drow = dists[vid]
        if not np.isfinite(drow[0]):
            continue
        dmin = drow[0]
        best: Optional[Tuple[int, int]] = None
        for d, j in zip(drow, idxs[vid]):
            if not np.isfinite(d) or d > dmin * (1.0 + 1e-12) + 1e-300:
                break
            key = keys[int(j)]
            if best is None or key < best:
                best = key
        assert best is not None
        if best in taken:
            raise ValueError(
                f"mesh vertices {taken[best]} and {vid} both snap to chain "
                f"vertex {best}; thresholds violate a < e/2"
            )
        taken[best] = vid
        out[vid] = best
    return out


# -- step 2: repel -----------------------------------------------------------


def repel_vertices(
    mesh: TriMesh,
    chains: Sequence[PolyChain],
    c: float,
    skip: Optional[Set[int]] = None,
    eps: Optional[float] = None,
) -> Dict[int, np.ndarray]:
    """Map mesh-vertex id -> new position at distance exactly ``c`` from the
    boundary, for vertices (not in ``skip``) closer than ``c`` to the chain
    polyline.  Vertices within eps of the boundary are left alone (they
    count as lying on it).  The push is along the direction away from the
    nearest boundary point: the segment normal in the generic case, radial
    from the chain vertex when the nearest feature is a corner.
    """
    tol = get_eps() if eps is None else eps
    skip = skip or set()
    segs = _segment_records(chains)
    if not segs:
        return {}
    spacing = max(c / 2.0, 1e-6)
    samples, owner = _densify(chains, spacing)
    tree = cKDTree(samples)
    hits = tree.query_ball_point(mesh.vertices, r=c + spacing)
    out: Dict[int, np.ndarray] = {}
    for vid, lst in enumerate(hits):
        if not lst or vid in skip:
            continue
        v = mesh.vertices[vid]
        best_d = math.inf
        best_q: Optional[np.ndarray] = None
        for si in sorted(set(int(owner[i]) for i in lst)):
            _, _, ax, ay, bx, by = segs[si]
            aa = np.array((ax, ay))
            bb = np.array((bx, by))
            d, t = point_segment_distance(v, aa, bb)
            if d < best_d - 1e-15:
                best_d = d
                best_q = aa + t * (bb - aa)
        if best_q is None or best_d >= c or best_d <= tol:
            continue
        direction = (v - best_q) / best_d
        out[vid] = best_q + c * direction
    return out


# -- step 3: eliminate -------------------------------------------------------


@dataclass
class Elimination:
    """One applied edge elimination."""

    point_key: Tuple[int, int]  # (chain, vertex)
    point: np.ndarray
    edge: Tuple[int, int]
    faces_removed: Tuple[int, ...]
    new_vertex: int = -1  # id in the rebuilt mesh


@dataclass
class EliminationRecord:
    applied: List[Elimination] = field(default_factory=list)
    skipped_conflicts: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def n_applied(self) -> int:
        return len(self.applied)


def _undirected_edges(mesh: TriMesh):
    """dict (u, v) u<v -> list of (face, opposite-corner vertex)."""
    out: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    F = mesh.faces
    for f in range(len(F)):
        tri = F[f]
        for k in range(3):
            u, v, w = int(tri[k]), int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
            key = (u, v) if u < v else (v, u)
            out.setdefault(key, []).append((f, w))
    return out


def eliminate_edges(
    mesh: TriMesh,
    chains: Sequence[PolyChain],
    b: float,
    strict: bool = True,
    eps: Optional[float] = None,
) -> Tuple[TriMesh, EliminationRecord]:
    """Remove mesh edges that pass within ``b`` of a chain vertex.

    Each flagged edge takes its ≤2 incident faces with it; the cavity is
    re-fanned around the chain vertex, which is appended to the mesh.  Chain
    vertices already coincident with a mesh vertex (within eps) are skipped.
    When two flagged edges share a face: strict mode raises
    :class:`ConflictingDeletion`, lenient mode keeps the first assignment in
    (chain, vertex) order and records the skip.
    """
    tol = get_eps() if eps is None else eps
    rec = EliminationRecord()
    coords, keys = _all_chain_vertices(chains)
    if not len(coords) or mesh.n_faces == 0:
        return mesh.copy(), rec

    vtree = cKDTree(mesh.vertices)
    edge_map = _undirected_edges(mesh)
    # vertex -> incident undirected edges, for candidate gathering
    incident: Dict[int, List[Tuple[int, int]]] = {}
    for key in edge_map:
        incident.setdefault(key[0], []).append(key)
        incident.setdefault(key[1], []).append(key)
    max_edge = float(mesh.edge_lengths().max())

    assignments: List[Tuple[Tuple[int, int], np.ndarray, Tuple[int, int]]] = []
    near_vertex = vtree.query_ball_point(coords, r=b + max_edge + tol)
    on_vertex = vtree.query_ball_point(coords, r=tol)
    for pi in range(len(coords)):
        if on_vertex[pi]:
            continue  # chain vertex already realized as a mesh vertex
        p = coords[pi]
        best: Optional[Tuple[float, Tuple[int, int]]] = None
        seen: Set[Tuple[int, int]] = set()
        for vid in near_vertex[pi]:
            for ekey in incident.get(int(vid), ()):
                if ekey in seen:
                    continue
                seen.add(ekey)
                d, _ = point_segment_distance(
                    p, mesh.vertices[ekey[0]], mesh.vertices[ekey[1]]
                )
                if d <= b and (best is None or (d, ekey) < best):
                    best = (d, ekey)
        if best is not None:
            assignments.append((keys[pi], p.copy(), best[1]))

    # conflict detection: each face may lose at most one edge
    face_owner: Dict[int, Tuple[int, int]] = {}
    accepted: List[Tuple[Tuple[int, int], np.ndarray, Tuple[int, int]]] = []
    for key, p, ekey in assignments:
        facelist = edge_map[ekey]
        clash = [f for f, _ in facelist if f in face_owner]
        if clash:
            if strict:
                raise ConflictingDeletion(
                    f"edge {ekey} (chain vertex {key}) shares face "
                    f"{clash[0]} with an earlier elimination "
                    f"{face_owner[clash[0]]}"
                )
            rec.skipped_conflicts.append(key)
            log.warning("skipping conflicting elimination at %s", key)
            continue
        for f, _ in facelist:
            face_owner[f] = key
        accepted.append((key, p, ekey))

    if not accepted:
        return mesh.copy(), rec

    keep = np.ones(mesh.n_faces, dtype=bool)
    new_vertices = [mesh.vertices]
    new_faces: List[Tuple[int, int, int]] = []
    next_vid = mesh.n_vertices
    for key, p, ekey in accepted:
        u, v = ekey
        pid = next_vid
        next_vid += 1
        new_vertices.append(p.reshape(1, 2))
        faces_removed = []
        for f, w in edge_map[ekey]:
            keep[f] = False
            faces_removed.append(f)
            # the face (given CCW) splits into two CCW fans around p; find
            # the actual directed order of (u, v) inside this face
            tri = [int(x) for x in mesh.faces[f]]
            k = tri.index(u)
            if tri[(k + 1) % 3] == v:
                uu, vv = u, v
            else:
                uu, vv = v, u
            new_faces.append((uu, pid, w))
            new_faces.append((pid, vv, w))
        rec.applied.append(
            Elimination(key, p, ekey, tuple(faces_removed), pid)
        )
    verts = np.vstack(new_vertices)
    faces = np.vstack(
        [mesh.faces[keep], np.asarray(new_faces, dtype=np.int64)]
    )
    return TriMesh(verts, faces), rec


# -- full pipeline -----------------------------------------------------------


@dataclass
class PreprocessResult:
    mesh: TriMesh
    snap: Dict[int, Tuple[int, int]]
    repel: Dict[int, np.ndarray]
    elim: EliminationRecord
    chain_vertex_to_mesh: Dict[Tuple[int, int], int]
    thresholds: Thresholds = field(default_factory=Thresholds)


def preprocess(
    mesh: TriMesh,
    chains: Sequence[PolyChain],
    t: Thresholds,
    do_snap: bool = True,
    do_repel: bool = True,
    do_delete: bool = True,
    strict: bool = True,
    validate: bool = True,
) -> PreprocessResult:
    """Run snap, repel, and eliminate; returns the updated mesh plus maps
    tying mesh vertices to chain vertices (needed for exact stitching).

    Snap and repel displacements are computed from the frozen input mesh —
    applying them in either order gives identical results; that property is
    what the commutation tests pin down.
    """
    if validate:
        min_seg = min(
            (float(ch.segment_lengths().min()) for ch in chains if ch.n_segments),
            default=math.inf,
        )
        bad = validate_thresholds(t, min_seg)
        if bad:
            raise ValueError("invalid thresholds: " + "; ".join(bad))

    smap = snap_vertices(mesh, chains, t.a) if do_snap else {}
    rmap = (
        repel_vertices(mesh, chains, t.c, skip=set(smap)) if do_repel else {}
    )
    verts = mesh.vertices.copy()
    chain_to_mesh: Dict[Tuple[int, int], int] = {}
    for vid, (ci, vi) in smap.items():
        verts[vid] = chains[ci].points[vi]
        chain_to_mesh[(ci, vi)] = vid
    for vid, pos in rmap.items():
        verts[vid] = pos
    moved = TriMesh(verts, mesh.faces.copy())

    if do_delete:
        out, rec = eliminate_edges(moved, chains, t.b, strict=strict)
        for el in rec.applied:
            chain_to_mesh[el.point_key] = el.new_vertex
    else:
        out, rec = moved, EliminationRecord()
    return PreprocessResult(out, smap, rmap, rec, chain_to_mesh, t)
