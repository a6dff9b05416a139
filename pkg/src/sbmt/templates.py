"""Retriangulation template table.

Each admissible face configuration maps to a fixed patch of sub-triangles.
The table is authored as a catalog of small scenes: one canonical triangle
A=(1,0), B=(3,0), C=(2,1.732) crossed by a short open chain, plus the face
list the patch should produce, written over point labels.  Building the
table runs the regular classification code on every scene, converts the
authored faces into canonical-frame refs through the scene's own symmetry,
and stores them under the scene's lookup key.  Several scenes are dihedral
images of each other and must collapse onto the same entry; any mismatch is
reported as a table defect instead of being silently overwritten.

At mesh time ``patch_faces`` resolves an intersected face's lookup key to
global vertex keys, reversing winding when the canonical frame mirrors the
mesh frame.  Faces whose chain contact is confined to the boundary (no
interior anchors, no chords) are kept unchanged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from sbmt.boundary import PolyChain
from sbmt.classify import (
    _MIRROR_SLOT,
    _MIRROR_VERT,
    _canonical_views,
    FaceAnalysis,
    IntersectionRegistry,
    build_registry,
)
from sbmt.geom import dist, _eps_of
from sbmt.halfedge import TriMesh

log = logging.getLogger(__name__)

__all__ = [
    "CATALOG", "NOOP_SCENES", "SceneSpec", "TemplateEntry",
    "UnknownConfiguration", "TableDefect", "MissingVertexBinding",
    "analyze_scene", "build_table", "get_table", "patch_faces",
    "fallback_fan", "raw_face_fan", "is_noop", "verify_table",
]

# Scene triangle (A, B, C).  The .866/1.732 halves make every authored
# through-vertex and along-edge incidence exact in decimal.
SCENE_VERTS = ((1.0, 0.0), (3.0, 0.0), (2.0, 1.732))


class UnknownConfiguration(RuntimeError):
    """A face's lookup key has no table entry (strict mode)."""


class TableDefect(RuntimeError):
    """The authored catalog is internally inconsistent."""


class MissingVertexBinding(RuntimeError):
    """A template vertex could not be resolved to a concrete mesh vertex."""


@dataclass(frozen=True)
class SceneSpec:
    """One authored configuration: chain, expected patch, label coords."""

    name: str
    chain: Tuple[Tuple[float, float], ...]
    faces: Tuple[Tuple[str, str, str], ...]
    marks: Mapping[str, Tuple[float, float]]


@dataclass(frozen=True)
class TemplateEntry:
    key: tuple
    faces: Tuple[Tuple[tuple, ...], ...]  # canonical refs, CCW, normalized
    sources: Tuple[str, ...]


def _s(name, chain, faces, **marks):
    return SceneSpec(name=name, chain=tuple(chain),
                     faces=tuple(tuple(f) for f in faces), marks=marks)


# ---------------------------------------------------------------------------
# Catalog.  Labels: A/B/C triangle vertices, P the chain's middle vertex,
# Q* crossing points (authored positions; matched to computed anchors when
# the table is built).  Face lists are CCW in the scene frame.

CATALOG: Tuple[SceneSpec, ...] = (
    # --- single segment straight through -------------------------------
    _s("chord", [(0.0, 1.0), (3.0, 1.0)],
       [("Q2", "Q1", "C"), ("Q2", "A", "B"), ("Q1", "Q2", "B")],
       Q1=(2.423, 1.0), Q2=(1.578, 1.0)),
    _s("vertex-chord", [(0.0, -0.5), (3.0, 1.0)],
       [("A", "Q", "C"), ("A", "B", "Q")],
       Q=(2.552, 0.776)),
    # --- one interior bend ---------------------------------------------
    _s("bend-two-edges", [(0.0, 1.732), (2.0, 0.5), (3.5, 1.0)],
       [("Q1", "P", "C"), ("P", "Q2", "C"), ("Q1", "A", "P"),
        ("A", "B", "P"), ("Q2", "P", "B")],
       P=(2.0, 0.5), Q1=(1.476, 0.823), Q2=(2.597, 0.699)),
    _s("bend-on-edge", [(0.0, 1.7), (1.5, 0.866), (0.0, 0.0)],
       [("C", "P", "B"), ("P", "A", "B")],
       P=(1.5, 0.866)),
    _s("bend-one-edge", [(0.5, 2.1), (1.9, 0.866), (0.0, 0.0)],
       [("Q1", "P", "C"), ("P", "Q1", "Q2"), ("Q2", "A", "P"),
        ("B", "C", "P"), ("A", "B", "P")],
       P=(1.9, 0.866), Q1=(1.636, 1.101), Q2=(1.358, 0.619)),
    # --- bend + a vertex pass ------------------------------------------
    _s("vertex-bend-opposite", [(0.0, -0.5), (2.0, 0.5), (3.5, 1.0)],
       [("C", "A", "P"), ("A", "B", "P"), ("C", "P", "Q"), ("P", "B", "Q")],
       P=(2.0, 0.5), Q=(2.597, 0.699)),
    _s("vertex-bend-adjacent", [(0.0, -0.5), (2.0, 0.5), (1.0, 3.0)],
       [("A", "P", "Q"), ("C", "Q", "P"), ("C", "P", "B"), ("A", "B", "P")],
       P=(2.0, 0.5), Q=(1.709, 1.229)),
    _s("vertex-bend-adjacent-m", [(0.0, -0.5), (2.0, 0.5), (2.5, -0.5)],
       [("A", "P", "C"), ("A", "Q", "P"), ("B", "P", "Q"), ("B", "C", "P")],
       P=(2.0, 0.5), Q=(2.25, 0.0)),
    _s("vertex-bend-vertex", [(0.0, -0.5), (2.0, 0.5), (4.0, -0.5)],
       [("C", "A", "P"), ("A", "B", "P"), ("C", "P", "B")],
       P=(2.0, 0.5)),
    # --- bend sitting on an edge, one chord ----------------------------
    _s("edge-bend-chord-bc", [(0.0, 1.5), (1.5, 0.866), (3.5, 1.732)],
       [("P", "Q", "C"), ("B", "Q", "P"), ("A", "B", "P")],
       P=(1.5, 0.866), Q=(2.3, 1.212)),
    _s("edge-bend-chord-ab", [(0.0, 1.5), (1.5, 0.866), (2.5, -0.5)],
       [("P", "A", "Q"), ("Q", "B", "P"), ("B", "C", "P")],
       P=(1.5, 0.866), Q=(2.134, 0.0)),
    # --- bend on an edge plus a run along it ---------------------------
    _s("edge-bend-run-up", [(0.0, 1.0), (1.5, 0.866), (2.5, 2.598)],
       [("A", "B", "P"), ("B", "C", "P")],
       P=(1.5, 0.866)),
    _s("edge-bend-run-down", [(0.0, 1.5), (1.5, 0.866), (0.5, -0.866)],
       [("A", "B", "P"), ("B", "C", "P")],
       P=(1.5, 0.866)),
    # --- two disjoint chords -------------------------------------------
    _s("two-chords-two-corners", [(2.0, -0.5), (1.0, 1.0), (3.0, 1.0)],
       [("Q1", "Q2", "A"), ("Q1", "Q4", "Q2"), ("Q1", "Q3", "Q4"),
        ("Q1", "B", "Q3"), ("Q4", "Q3", "C")],
       Q1=(1.667, 0.0), Q2=(1.309, 0.537), Q3=(2.423, 1.0), Q4=(1.577, 1.0)),
    _s("two-chords-one-corner", [(3.0, 1.7), (1.3, 0.866), (3.5, 0.5)],
       [("A", "B", "Q2"), ("Q2", "B", "Q4"), ("Q1", "Q2", "Q4"),
        ("Q1", "Q4", "Q3"), ("Q1", "Q3", "C")],
       Q1=(1.579, 1.007), Q2=(1.482, 0.835), Q3=(2.234, 1.327),
       Q4=(2.629, 0.645)),
    _s("two-chords-one-corner-m", [(1.0, -0.5), (1.3, 0.866), (3.0, -0.5)],
       [("Q3", "Q1", "A"), ("Q4", "Q1", "Q3"), ("Q1", "Q4", "Q2"),
        ("Q2", "Q4", "B"), ("Q2", "B", "C")],
       Q1=(1.177, 0.308), Q2=(1.437, 0.757), Q3=(1.110, 0.0),
       Q4=(2.376, 0.0)),
    # --- bend on an edge, two chords -----------------------------------
    _s("edge-bend-two-chords", [(2.0, -1.0), (1.5, 0.866), (3.5, 1.0)],
       [("A", "Q1", "P"), ("P", "Q2", "C"), ("P", "Q1", "Q2"),
        ("Q1", "B", "Q2")],
       P=(1.5, 0.866), Q1=(1.732, 0.0), Q2=(2.462, 0.930)),
    _s("edge-bend-two-same", [(3.0, 1.7), (1.5, 0.866), (3.5, 0.5)],
       [("P", "Q1", "C"), ("P", "Q2", "Q1"), ("P", "A", "B"),
        ("P", "B", "Q2")],
       P=(1.5, 0.866), Q1=(2.256, 1.286), Q2=(2.618, 0.661)),
    _s("edge-bend-two-same-m", [(1.0, -0.5), (1.5, 0.866), (3.0, -0.5)],
       [("A", "Q1", "P"), ("Q1", "Q2", "P"), ("Q2", "B", "P"),
        ("P", "B", "C")],
       P=(1.5, 0.866), Q1=(1.183, 0.0), Q2=(2.451, 0.0)),
    # --- vertex touch elsewhere + corner chord -------------------------
    _s("touch-and-chord", [(3.0, 2.598), (1.0, 0.866), (2.5, -0.5)],
       [("A", "Q2", "Q1"), ("Q2", "B", "Q1"), ("Q1", "B", "C")],
       Q1=(1.328, 0.568), Q2=(1.951, 0.0)),
    # --- bend on edge, chord + boundary run past a vertex --------------
    _s("edge-bend-chord-run-far", [(3.0, 1.5), (1.5, 0.866), (0.5, -0.866)],
       [("P", "Q", "C"), ("B", "Q", "P"), ("A", "B", "P")],
       P=(1.5, 0.866), Q=(2.304, 1.205)),
    _s("edge-bend-chord-run-near", [(2.5, -0.5), (1.5, 0.866), (0.5, -0.866)],
       [("P", "A", "Q"), ("Q", "B", "P"), ("B", "C", "P")],
       P=(1.5, 0.866), Q=(2.134, 0.0)),
    # --- bend on edge + chord to a vertex ------------------------------
    _s("edge-bend-vertex-chord", [(0.5, -0.866), (1.5, 0.866), (4.5, -0.866)],
       [("A", "B", "P"), ("P", "B", "C")],
       P=(1.5, 0.866)),
    _s("edge-bend-vertex-chord-2", [(2.5, 2.598), (1.5, 0.866), (4.5, -0.866)],
       [("A", "B", "P"), ("P", "B", "C")],
       P=(1.5, 0.866)),
    _s("edge-bend-graze", [(0.5, 1.866), (1.5, 0.866), (4.5, -0.866)],
       [("A", "B", "P"), ("P", "B", "C")],
       P=(1.5, 0.866)),
    _s("bend-at-vertex", [(0.5, 2.1), (1.0, 0.0), (4.0, 0.5)],
       [("A", "B", "Q"), ("A", "Q", "C")],
       Q=(2.824, 0.304)),
    # --- bend on edge, edge chord + vertex chord -----------------------
    _s("edge-bend-chord-vertex-chord",
       [(0.8, -0.866), (1.5, 0.866), (4.5, -0.866)],
       [("A", "Q", "P"), ("P", "B", "C"), ("P", "Q", "B")],
       P=(1.5, 0.866), Q=(1.15, 0.0)),
    _s("edge-bend-chord-vertex-chord-2",
       [(2.8, 2.598), (1.5, 0.866), (4.5, -0.866)],
       [("A", "B", "P"), ("P", "B", "Q"), ("P", "Q", "C")],
       P=(1.5, 0.866), Q=(2.07, 1.62)),
)

# Boundary-only contact: classification must reduce these to no-ops.
NOOP_SCENES: Tuple[SceneSpec, ...] = (
    _s("graze-vertex", [(0.0, 1.732), (3.0, 1.732)], []),
    _s("overlap-full-edge", [(0.0, 0.0), (3.5, 0.0)], []),
    _s("overlap-into-vertex", [(3.5, 0.0), (1.0, 0.0), (0.5, 2.5)], []),
    _s("double-vertex-pass", [(3.0, 2.598), (1.0, 0.866), (1.0, -0.866)], []),
    _s("straight-run-on-edge", [(0.5, -0.866), (1.5, 0.866), (2.5, 2.598)],
       []),
)


# ---------------------------------------------------------------------------
# Scene analysis


def _scene_mesh(perm: Tuple[int, int, int] = (0, 1, 2),
                mirror: bool = False) -> TriMesh:
    pts = np.asarray(SCENE_VERTS, dtype=np.float64)
    if mirror:
        pts = pts.copy()
        pts[:, 0] *= -1.0
    face = list(perm)[::-1] if mirror else list(perm)
    return TriMesh(pts, np.asarray([face], dtype=np.int64))


def analyze_scene(spec: SceneSpec, eps: Optional[float] = None,
                  perm: Tuple[int, int, int] = (0, 1, 2),
                  mirror: bool = False):
    """Classify one catalog scene; returns (FaceAnalysis, registry, mesh).

    ``perm``/``mirror`` relabel or reflect the scene triangle so the same
    configuration can be checked through all six dihedral framings.
    """
    mesh = _scene_mesh(perm, mirror)
    pts = np.asarray(spec.chain, dtype=np.float64)
    if mirror:
        pts = pts.copy()
        pts[:, 0] *= -1.0
    tol = _eps_of(eps)
    cv2m = {}
    for vi, p in enumerate(pts):
        for mi in range(3):
            if dist(p, mesh.vertices[mi]) <= tol:
                cv2m[(0, vi)] = mi
    chain = PolyChain(points=pts, closed=False)
    reg = build_registry(mesh, [chain],
                         chain_vertex_to_mesh=cv2m or None, eps=eps)
    fa = reg.by_face.get(0)
    return fa, reg, mesh


def _key_coords(key: tuple, reg: IntersectionRegistry,
                mesh: TriMesh) -> Tuple[float, float]:
    if key[0] == "m":
        p = mesh.vertices[key[1]]
        return (float(p[0]), float(p[1]))
    return reg.points[key]


def _label_map(spec: SceneSpec, fa: FaceAnalysis, reg: IntersectionRegistry,
               mesh: TriMesh) -> Dict[str, tuple]:
    """Resolve authored labels to global keys of the analyzed scene."""
    out: Dict[str, tuple] = {}
    for lbl, vid in (("A", 0), ("B", 1), ("C", 2)):
        out[lbl] = ("m", vid)
    cands: List[Tuple[tuple, Tuple[float, float]]] = []
    for s in range(3):
        for gk in fa.slot_anchors[s]:
            cands.append((gk, _key_coords(gk, reg, mesh)))
    if fa.apex_key is not None and fa.apex_inside:
        cands.append((fa.apex_key, reg.points[fa.apex_key]))
    for lbl, pos in spec.marks.items():
        ranked = sorted(cands, key=lambda c: dist(c[1], pos))
        if not ranked or dist(ranked[0][1], pos) > 0.03:
            raise TableDefect(
                f"{spec.name}: label {lbl}@{pos} matches no computed point")
        if len(ranked) > 1 and dist(ranked[1][1], pos) < 0.06:
            raise TableDefect(
                f"{spec.name}: label {lbl}@{pos} is ambiguous")
        out[lbl] = ranked[0][0]
    return out


def _norm_face(refs: Tuple[tuple, ...]) -> Tuple[tuple, ...]:
    i = min(range(3), key=lambda k: refs[k])
    return refs[i:] + refs[:i]


def _canon_patch(spec: SceneSpec, fa: FaceAnalysis,
                 labels: Dict[str, tuple]) -> Tuple[Tuple[tuple, ...], ...]:
    faces = []
    for tri in spec.faces:
        refs = [fa.to_canonical(fa.local_ref(labels[lbl])) for lbl in tri]
        if fa.orientation_flip:
            refs.reverse()
        faces.append(_norm_face(tuple(refs)))
    return tuple(sorted(faces))


def _key_stabilizer(key: tuple) -> List[Tuple[int, bool]]:
    """Dihedral transforms mapping the canonical key onto itself."""
    counts, chords, apex, touches = key
    ts = [[0.0] * c for c in counts]
    return [sym for sig, sym in
            _canonical_views(counts, chords, touches, apex, ts)
            if sig[:4] == key]


def _map_patch(faces, sym: Tuple[int, bool], counts) -> tuple:
    r, m = sym

    def xref(ref):
        if ref[0] == "p":
            return ref
        if ref[0] == "v":
            v = _MIRROR_VERT[ref[1]] if m else ref[1]
            return ("v", (v - r) % 3)
        s, rank = ref[1], ref[2]
        if m:
            return ("e", (_MIRROR_SLOT[s] - r) % 3, counts[s] - 1 - rank)
        return ("e", (s - r) % 3, rank)

    out = []
    for f in faces:
        refs = tuple(xref(x) for x in f)
        if m:
            refs = refs[::-1]
        out.append(_norm_face(refs))
    return tuple(sorted(out))


def _equivalent_patches(key: tuple, a, b) -> bool:
    """True when two authored patches differ only by a symmetry of the key.

    Keys with a nontrivial stabilizer (e.g. a single chord between two
    edges) leave the internal diagonal choice free; either authored patch
    is a correct tiling, so the first one stored wins.
    """
    return any(_map_patch(a, sym, key[0]) == tuple(b)
               for sym in _key_stabilizer(key))


# ---------------------------------------------------------------------------
# Table build / lookup


def build_table() -> Tuple[Dict[tuple, TemplateEntry], List[str]]:
    table: Dict[tuple, TemplateEntry] = {}
    defects: List[str] = []
    for spec in CATALOG:
        try:
            fa, reg, mesh = analyze_scene(spec)
            if fa is None:
                defects.append(f"{spec.name}: chain missed the triangle")
                continue
            if is_noop(fa):
                defects.append(f"{spec.name}: scene reduced to a no-op but "
                               "authors a patch")
                continue
            labels = _label_map(spec, fa, reg, mesh)
            patch = _canon_patch(spec, fa, labels)
        except TableDefect as exc:
            defects.append(str(exc))
            continue
        key = fa.lookup_key
        prev = table.get(key)
        if prev is None:
            table[key] = TemplateEntry(key=key, faces=patch,
                                       sources=(spec.name,))
        elif prev.faces == patch or _equivalent_patches(key, prev.faces, patch):
            table[key] = TemplateEntry(key=key, faces=prev.faces,
                                       sources=prev.sources + (spec.name,))
        else:
            defects.append(
                f"{spec.name}: patch disagrees with {prev.sources} for the "
                f"same configuration key")
    return table, defects


_TABLE: Optional[Dict[tuple, TemplateEntry]] = None
_DEFECTS: Optional[List[str]] = None


def get_table() -> Dict[tuple, TemplateEntry]:
    global _TABLE, _DEFECTS
    if _TABLE is None:
        _TABLE, _DEFECTS = build_table()
        if _DEFECTS:
            raise TableDefect("; ".join(_DEFECTS))
        log.debug("template table built: %d entries", len(_TABLE))
    return _TABLE


def is_noop(fa: FaceAnalysis) -> bool:
    """Boundary-only contact: no interior anchors and no chords."""
    return not fa.chords and all(len(a) == 0 for a in fa.slot_anchors)


def fallback_fan(fa: FaceAnalysis) -> List[Tuple[tuple, tuple, tuple]]:
    """Centroid fan over the face's boundary ring (lenient mode only).

    Watertight because the ring uses the shared anchor keys, but it embeds
    no chords; callers count its use separately.
    """
    ring: List[tuple] = []
    for s in range(3):
        ring.append(("m", int(fa.verts[s])))
        ring.extend(fa.slot_anchors[s])
    ckey = ("f", fa.face)
    return [(ckey, ring[i], ring[(i + 1) % len(ring)])
            for i in range(len(ring))]


def raw_face_fan(mesh, face: int, registry) -> List[Tuple[tuple, tuple, tuple]]:
    """Centroid fan for a face that never got a :class:`FaceAnalysis`.

    Used for protocol-fallback faces in lenient runs.  The ring walks the
    face's corners and whatever anchors neighbours recorded on its edges,
    ordered along each edge, so shared subdivisions still match up.
    """
    tri = mesh.faces[face]
    ring: List[tuple] = []
    for s in range(3):
        va, vb = int(tri[s]), int(tri[(s + 1) % 3])
        ring.append(("m", va))
        u, v = (va, vb) if va < vb else (vb, va)
        anchors = registry.edge_anchors.get((u, v), [])
        ring.extend(anchors if va == u else reversed(anchors))
    ckey = ("f", face)
    return [(ckey, ring[i], ring[(i + 1) % len(ring)])
            for i in range(len(ring))]


def patch_faces(fa: FaceAnalysis,
                lenient: bool = False
                ) -> Optional[List[Tuple[tuple, tuple, tuple]]]:
    """Global-key face triples replacing the analyzed face.

    Returns None when the face should be kept unchanged.  Unknown
    configurations raise :class:`UnknownConfiguration` unless ``lenient``,
    in which case a centroid fan is returned (its first vertex key has tag
    ``'f'`` so callers can count fallbacks).
    """
    if is_noop(fa):
        return None
    entry = get_table().get(fa.lookup_key)
    if entry is None:
        if lenient:
            log.warning("face %d: unknown configuration %s; centroid fan "
                        "fallback", fa.face, fa.lookup_key)
            return fallback_fan(fa)
        raise UnknownConfiguration(
            f"face {fa.face}: no template for configuration key "
            f"{fa.lookup_key} (class {fa.cls})")
    out = []
    for refs in entry.faces:
        try:
            tri = tuple(fa.resolve(ref) for ref in refs)
        except (KeyError, IndexError) as exc:
            if lenient:
                log.warning("face %d: template ref failed to resolve (%s); "
                            "centroid fan fallback", fa.face, exc)
                return fallback_fan(fa)
            raise MissingVertexBinding(
                f"face {fa.face}: template ref failed to resolve: {exc}"
            ) from exc
        if fa.orientation_flip:
            tri = tri[::-1]
        out.append(tri)
    return out


# ---------------------------------------------------------------------------
# Verification


def _patch_geometry_defects(spec: SceneSpec, fa: FaceAnalysis,
                            reg: IntersectionRegistry, mesh: TriMesh,
                            faces: List[Tuple[tuple, tuple, tuple]]
                            ) -> List[str]:
    bad: List[str] = []
    pos = {k: _key_coords(k, reg, mesh) for f in faces for k in f}
    total = 0.0
    edge_use: Dict[frozenset, int] = {}
    for f in faces:
        (ax, ay), (bx, by), (cx, cy) = (pos[k] for k in f)
        area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area2 <= 1e-12:
            bad.append(f"{spec.name}: face {f} not CCW (2A={area2:.3e})")
        total += 0.5 * area2
        for i in range(3):
            e = frozenset((f[i], f[(i + 1) % 3]))
            edge_use[e] = edge_use.get(e, 0) + 1
    tri = mesh.vertices[mesh.faces[0]]
    tri_area = 0.5 * abs(
        (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
        - (tri[1, 1] - tri[0, 1]) * (tri[2, 0] - tri[0, 0]))
    if abs(total - tri_area) > 1e-9 * tri_area:
        bad.append(f"{spec.name}: patch area {total:.12f} != "
                   f"triangle area {tri_area:.12f}")
    over = [e for e, n in edge_use.items() if n > 2]
    if over:
        bad.append(f"{spec.name}: edges used more than twice: {over}")
    # Every chord must appear as a patch edge.
    for chord in fa.chords:
        ra, rb = (fa.to_canonical(r) for r in chord)
        ga, gb = fa.resolve(ra), fa.resolve(rb)
        if frozenset((ga, gb)) not in edge_use:
            bad.append(f"{spec.name}: chord {sorted(chord)} not embedded")
    return bad


_D3_FRAMES = [((0, 1, 2), False), ((1, 2, 0), False), ((2, 0, 1), False),
              ((0, 1, 2), True), ((1, 2, 0), True), ((2, 0, 1), True)]


def verify_table() -> List[str]:
    """Re-derive the table and audit every scene; returns defect strings."""
    table, defects = build_table()
    for spec in CATALOG:
        fa, reg, mesh = analyze_scene(spec)
        if fa is None or is_noop(fa):
            continue  # already reported by build_table
        entry = table.get(fa.lookup_key)
        if entry is None:
            continue
        faces = []
        for refs in entry.faces:
            tri = tuple(fa.resolve(ref) for ref in refs)
            faces.append(tri[::-1] if fa.orientation_flip else tri)
        defects.extend(_patch_geometry_defects(spec, fa, reg, mesh, faces))
        # The configuration key must be framing-invariant.
        for perm, mirror in _D3_FRAMES[1:]:
            fa2, _, _ = analyze_scene(spec, perm=perm, mirror=mirror)
            if fa2 is None or fa2.lookup_key != fa.lookup_key:
                defects.append(
                    f"{spec.name}: key differs under framing "
                    f"perm={perm} mirror={mirror}")
    for spec in NOOP_SCENES:
        fa, _, _ = analyze_scene(spec)
        if fa is not None and not is_noop(fa):
            defects.append(f"{spec.name}: expected a no-op, got chords "
                           f"{sorted(map(sorted, fa.chords))}")
    return defects
