"""Triangle mesh storage with half-edge connectivity and watertight checks.

A mesh is a pair of arrays: ``vertices`` (V, 2) float64 and ``faces`` (F, 3)
int64 with counter-clockwise winding.  Half-edge connectivity (twin / next /
face) is derived lazily from the face array: half-edge ``3*f + k`` runs from
``faces[f, k]`` to ``faces[f, (k+1) % 3]``.

The module also owns the mesh file formats (OFF and OBJ, both ways) and the
canonical byte serialization used by the determinism tests: vertices sorted by
quantized coordinates, faces rotated to their smallest vertex id and sorted.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from sbmt.geom import get_eps


class NonManifoldEdge(ValueError):
    """An undirected edge is shared by more than two faces (or misoriented)."""


class ZeroAreaFace(ValueError):
    """A face has signed area below tolerance (degenerate or inverted)."""


class TriMesh:
    """Immutable-by-convention triangle mesh (2D vertices, CCW faces)."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError(f"vertices must be (V, 2), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {self.faces.shape}")
        self._twin: Optional[np.ndarray] = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    # -- half-edge views ---------------------------------------------------

    def halfedge_origins(self) -> np.ndarray:
        return self.faces.reshape(-1)

    def halfedge_dests(self) -> np.ndarray:
        return self.faces[:, [1, 2, 0]].reshape(-1)

    def halfedge_next(self, h: int) -> int:
        f, k = divmod(h, 3)
        return 3 * f + (k + 1) % 3

    def halfedge_face(self, h: int) -> int:
        return h // 3

    def halfedge_twins(self) -> np.ndarray:
        """twin[h] = opposite half-edge, or -1 on the hull.

        Raises :class:`NonManifoldEdge` if some directed edge occurs twice
        (two faces with the same winding across an edge) or an undirected
        edge has more than two incident faces.
        """
        if self._twin is not None:
            return self._twin
        org = self.halfedge_origins()
        dst = self.halfedge_dests()
        n = max(self.n_vertices, 1)
        fwd = org * n + dst
        order = np.argsort(fwd, kind="stable")
        sorted_fwd = fwd[order]
        dup = np.flatnonzero(sorted_fwd[1:] == sorted_fwd[:-1])
        if len(dup):
            h = int(order[dup[0]])
            raise NonManifoldEdge(
                f"directed edge ({int(org[h])}, {int(dst[h])}) appears twice"
            )
        rev = dst * n + org
        pos = np.searchsorted(sorted_fwd, rev)
        pos_clip = np.minimum(pos, len(sorted_fwd) - 1)
        found = sorted_fwd[pos_clip] == rev
        twin = np.where(found, order[pos_clip], -1).astype(np.int64)
        self._twin = twin
        return twin

    def face_areas(self) -> np.ndarray:
        """Signed areas (positive = CCW)."""
        p = self.vertices[self.faces]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )

    def edge_lengths(self) -> np.ndarray:
        """(F, 3) lengths; column k is the edge opposite corner k."""
        p = self.vertices[self.faces]
        out = np.empty((len(self.faces), 3))
        for k in range(3):
            a = p[:, (k + 1) % 3]
            b = p[:, (k + 2) % 3]
            out[:, k] = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
        return out

    def boundary_edges(self) -> List[Tuple[int, int]]:
        """Directed hull edges (edges with no twin), in half-edge order."""
        twin = self.halfedge_twins()
        org = self.halfedge_origins()
        dst = self.halfedge_dests()
        return [
            (int(org[h]), int(dst[h])) for h in np.flatnonzero(twin < 0)
        ]

    def boundary_vertex_ids(self) -> np.ndarray:
        """Sorted ids of vertices on the hull."""
        edges = self.boundary_edges()
        if not edges:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.array(edges, dtype=np.int64).reshape(-1))

    def copy(self) -> "TriMesh":
        return TriMesh(self.vertices.copy(), self.faces.copy())


def dedup_vertices(
    vertices: Sequence[Tuple[float, float]], eps: Optional[float] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Merge vertices closer than eps; first occurrence wins.

    Returns ``(unique_vertices, remap)`` with ``remap[i]`` the new index of
    input vertex i.  Uses a spatial hash with cell size eps/2 and 3x3
    neighbour probing.
    """
    e = get_eps() if eps is None else eps
    cell = e / 2.0
    grid: Dict[Tuple[int, int], List[int]] = {}
    out: List[Tuple[float, float]] = []
    remap = np.empty(len(vertices), dtype=np.int64)
    for i, (x, y) in enumerate(vertices):
        cx, cy = int(math.floor(x / cell)), int(math.floor(y / cell))
        hit = -1
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in grid.get((cx + dx, cy + dy), ()):
                    px, py = out[j]
                    if (px - x) ** 2 + (py - y) ** 2 <= e * e:
                        hit = j
                        break
                if hit >= 0:
                    break
            if hit >= 0:
                break
        if hit >= 0:
            remap[i] = hit
        else:
            remap[i] = len(out)
            grid.setdefault((cx, cy), []).append(len(out))
            out.append((float(x), float(y)))
    return np.array(out, dtype=np.float64).reshape(-1, 2), remap


def build_mesh(
    vertices,
    faces,
    eps: Optional[float] = None,
    dedup: bool = True,
    check_areas: bool = True,
) -> TriMesh:
    """Assemble a :class:`TriMesh`, merging near-coincident vertices.

    Raises :class:`ZeroAreaFace` when a face collapses below tolerance after
    deduplication (``check_areas=False`` skips that, for intentionally
    degenerate test inputs).
    """
    e = get_eps() if eps is None else eps
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(verts)):
        raise IndexError("face references vertex out of range")
    if dedup:
        verts, remap = dedup_vertices([tuple(v) for v in verts], e)
        f = remap[f]
    mesh = TriMesh(verts, f)
    if check_areas and len(f):
        areas = mesh.face_areas()
        bad = np.flatnonzero(areas <= e)
        if len(bad):
            i = int(bad[0])
            raise ZeroAreaFace(
                f"face {i} {tuple(int(v) for v in f[i])} has signed area "
                f"{areas[i]:.3e} (<= eps); {len(bad)} such face(s)"
            )
    return mesh


# -- watertightness ---------------------------------------------------------


@dataclass
class WatertightReport:
    n_vertices: int = 0
    n_faces: int = 0
    nonmanifold_edges: List[Tuple[int, int]] = field(default_factory=list)
    misoriented_edges: List[Tuple[int, int]] = field(default_factory=list)
    boundary_edges: int = 0
    open_boundary_vertices: List[int] = field(default_factory=list)
    t_junctions: List[Tuple[int, Tuple[int, int]]] = field(default_factory=list)
    zero_area_faces: List[int] = field(default_factory=list)
    unreferenced_vertices: List[int] = field(default_factory=list)

    @property
    def defect_count(self) -> int:
        return (
            len(self.nonmanifold_edges)
            + len(self.misoriented_edges)
            + len(self.open_boundary_vertices)
            + len(self.t_junctions)
            + len(self.zero_area_faces)
        )

    @property
    def ok(self) -> bool:
        return self.defect_count == 0

    def summary(self) -> str:
        return (
            f"{self.n_vertices} vertices, {self.n_faces} faces, "
            f"{self.boundary_edges} hull edges; "
            f"nonmanifold={len(self.nonmanifold_edges)} "
            f"misoriented={len(self.misoriented_edges)} "
            f"open_hull={len(self.open_boundary_vertices)} "
            f"t_junctions={len(self.t_junctions)} "
            f"zero_area={len(self.zero_area_faces)} "
            f"unreferenced={len(self.unreferenced_vertices)}"
        )


def validate_watertight(mesh: TriMesh, eps: Optional[float] = None) -> WatertightReport:
    """Full conformity scan: manifoldness, orientation, hull closure,
    T-junctions (a vertex inside another edge within eps), degenerate faces.

    A mesh with a hull is considered watertight when every hull vertex has
    exactly two incident hull edges (the hull is a disjoint union of closed
    loops) and no other defect is present.
    """
    e = get_eps() if eps is None else eps
    rep = WatertightReport(n_vertices=mesh.n_vertices, n_faces=mesh.n_faces)

    org = mesh.halfedge_origins()
    dst = mesh.halfedge_dests()
    n = max(mesh.n_vertices, 1)
    lo = np.minimum(org, dst)
    hi = np.maximum(org, dst)
    ukey = lo * n + hi
    uniq, ucount = np.unique(ukey, return_counts=True)
    dkey = org * n + dst
    duniq, dcount = np.unique(dkey, return_counts=True)
    # Directed multiplicity per undirected edge: max directed count tells us
    # whether two incident faces agree (1/1) or collide (2 in one direction).
    dmax: Dict[int, int] = {}
    for k, c in zip(duniq.tolist(), dcount.tolist()):
        u, v = divmod(k, n)
        kk = min(u, v) * n + max(u, v)
        dmax[kk] = max(dmax.get(kk, 0), int(c))
    for k, c in zip(uniq.tolist(), ucount.tolist()):
        u, v = divmod(k, n)
        if c > 2:
            rep.nonmanifold_edges.append((u, v))
        elif c == 2 and dmax.get(k, 0) != 1:
            # Two faces on the edge but windings agree: inconsistent orientation.
            rep.misoriented_edges.append((u, v))

    hull = [divmod(int(k), n) for k in uniq[ucount == 1]]
    rep.boundary_edges = len(hull)
    degree: Dict[int, int] = {}
    for u, v in hull:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    rep.open_boundary_vertices = sorted(v for v, d in degree.items() if d != 2)

    areas = mesh.face_areas() if mesh.n_faces else np.empty(0)
    rep.zero_area_faces = [int(i) for i in np.flatnonzero(areas <= e)]

    used = np.zeros(mesh.n_vertices, dtype=bool)
    if mesh.n_faces:
        used[mesh.faces.reshape(-1)] = True
    rep.unreferenced_vertices = [int(i) for i in np.flatnonzero(~used)]

    rep.t_junctions = _find_t_junctions(mesh, e)
    return rep


def _find_t_junctions(mesh: TriMesh, eps: float) -> List[Tuple[int, Tuple[int, int]]]:
    """Vertices lying on the interior of a non-incident edge (within eps)."""
    if mesh.n_faces == 0 or mesh.n_vertices == 0:
        return []
    from scipy.spatial import cKDTree

    org = mesh.halfedge_origins()
    dst = mesh.halfedge_dests()
    keep = org < dst  # one record per undirected edge
    eu, ev = org[keep], dst[keep]
    pa = mesh.vertices[eu]
    pb = mesh.vertices[ev]
    half = 0.5 * np.hypot(pb[:, 0] - pa[:, 0], pb[:, 1] - pa[:, 1])
    radius = float(half.max()) + 2.0 * eps if len(half) else eps
    tree = cKDTree(mesh.vertices)
    mid = 0.5 * (pa + pb)
    hits = tree.query_ball_point(mid, r=radius)

    edge_idx: List[int] = []
    vert_idx: List[int] = []
    for k, lst in enumerate(hits):
        for ci in lst:
            edge_idx.append(k)
            vert_idx.append(ci)
    if not edge_idx:
        return []
    ei = np.asarray(edge_idx)
    vi = np.asarray(vert_idx)
    a = pa[ei]
    ab = pb[ei] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    pts = mesh.vertices[vi]
    t = np.einsum("ij,ij->i", pts - a, ab) / denom
    t = np.clip(t, 0.0, 1.0)
    foot = a + t[:, None] * ab
    d = np.hypot(pts[:, 0] - foot[:, 0], pts[:, 1] - foot[:, 1])
    L = np.sqrt(denom)
    arc = t * L
    mask = (
        (d <= eps)
        & (arc > eps)
        & (arc < L - eps)
        & (vi != eu[ei])
        & (vi != ev[ei])
    )
    out = sorted(
        (int(v), (int(eu[k]), int(ev[k])))
        for v, k in zip(vi[mask], ei[mask])
    )
    return out


# -- canonical serialization -------------------------------------------------


def canonical_off_bytes(mesh: TriMesh, eps: Optional[float] = None) -> bytes:
    """Deterministic OFF bytes independent of vertex/face construction order.

    Vertices are sorted by coordinates quantized to eps/4 (ties by exact
    coordinates), faces rotated so their smallest vertex id leads, then
    sorted lexicographically.
    """
    e = get_eps() if eps is None else eps
    q = np.round(mesh.vertices / (e / 4.0)).astype(np.int64)
    order = np.lexsort(
        (mesh.vertices[:, 1], mesh.vertices[:, 0], q[:, 1], q[:, 0])
    )
    remap = np.empty(mesh.n_vertices, dtype=np.int64)
    remap[order] = np.arange(mesh.n_vertices)
    verts = mesh.vertices[order]
    faces = remap[mesh.faces]
    if len(faces):
        k = np.argmin(faces, axis=1)
        rows = np.arange(len(faces))
        faces = np.stack(
            [
                faces[rows, k],
                faces[rows, (k + 1) % 3],
                faces[rows, (k + 2) % 3],
            ],
            axis=1,
        )
        faces = faces[np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))]
    buf = io.StringIO()
    buf.write("OFF\n")
    buf.write(f"{len(verts)} {len(faces)} 0\n")
    for x, y in verts:
        buf.write(f"{x:.17g} {y:.17g} 0\n")
    for a, b, c in faces:
        buf.write(f"3 {a} {b} {c}\n")
    return buf.getvalue().encode("ascii")


# -- file formats ------------------------------------------------------------


def write_off(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        for a, b, c in mesh.faces:
            fh.write(f"3 {a} {b} {c}\n")


def read_off(path) -> TriMesh:
    with open(path, "r", encoding="ascii") as fh:
        tokens: List[str] = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise ValueError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4  # skip edge count
    verts = np.empty((nv, 2))
    for i in range(nv):
        verts[i] = (float(tokens[pos]), float(tokens[pos + 1]))
        pos += 3
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        n = int(tokens[pos])
        if n != 3:
            raise ValueError(f"{path}: face {i} has {n} vertices, expected 3")
        faces[i] = (
            int(tokens[pos + 1]),
            int(tokens[pos + 2]),
            int(tokens[pos + 3]),
        )
        pos += 4
    return TriMesh(verts, faces)


def write_obj(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} 0\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def read_obj(path) -> TriMesh:
    verts: List[Tuple[float, float]] = []
    faces: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "f":
                ids = [int(p.split("/", 1)[0]) for p in parts[1:]]
                if len(ids) != 3:
                    raise ValueError(f"{path}:{ln}: non-triangular face")
                faces.append(tuple(i - 1 if i > 0 else len(verts) + i for i in ids))
    return TriMesh(
        np.asarray(verts, dtype=np.float64).reshape(-1, 2),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )
