"""End-to-end remeshing pipeline.

Five deterministic stages: trace/accept chains, build the scaffold grid,
preprocess (snap / repel / eliminate), classify intersections into a frozen
registry, then generate per-face patches and stitch them out-of-place into
the output mesh.  Patch generation reads only frozen state, so any
processing order yields the same mesh; ``check_path_independence`` pins
that down by running shuffled schedules and comparing canonical bytes.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from sbmt.boundary import Bitmap, PolyChain, enforce_protocol, trace_contours
from sbmt.classify import IntersectionRegistry, build_registry
from sbmt.geom import _eps_of
from sbmt.grid import build_grid
from sbmt.halfedge import TriMesh, canonical_off_bytes
from sbmt.preprocess import PreprocessResult, Thresholds, preprocess
from sbmt.templates import patch_faces, raw_face_fan

log = logging.getLogger(__name__)

__all__ = [
    "RemeshJob", "RemeshResult", "StitchMismatch", "prepare", "remesh",
    "generate_patches", "stitch", "check_path_independence",
    "chain_embedding_defects",
]


class StitchMismatch(RuntimeError):
    """Neighbouring faces disagree on a shared-edge subdivision."""


@dataclass
class RemeshJob:
    """Frozen inputs for patch generation; registry is read-only."""

    mesh: TriMesh
    chains: List[PolyChain]
    thresholds: Thresholds
    registry: IntersectionRegistry
    pre: PreprocessResult
    eps: Optional[float] = None
    schedule_seed: Optional[int] = None


@dataclass
class RemeshResult:
    mesh: TriMesh
    job: RemeshJob
    key_index: Dict[tuple, int]
    n_patched: int
    n_fallback: int
    stage_seconds: Dict[str, float] = field(default_factory=dict)


def _as_chains(source, edge_length: float) -> List[PolyChain]:
    if isinstance(source, Bitmap):
        raw = trace_contours(source.mask)
        return [enforce_protocol(ch, edge_length) for ch in raw]
    if isinstance(source, np.ndarray) and source.dtype == bool:
        raw = trace_contours(source)
        return [enforce_protocol(ch, edge_length) for ch in raw]
    chains = list(source)
    if not all(isinstance(c, PolyChain) for c in chains):
        raise TypeError("source must be a Bitmap, bool mask, or PolyChains")
    return chains


def prepare(
    source: Union[Bitmap, np.ndarray, Sequence[PolyChain]],
    thresholds: Optional[Thresholds] = None,
    *,
    margin: Optional[float] = None,
    do_snap: bool = True,
    do_repel: bool = True,
    do_delete: bool = True,
    strict: bool = True,
    lenient: bool = False,
    eps: Optional[float] = None,
) -> RemeshJob:
    """Trace, grid, preprocess, classify; returns the frozen job."""
    t = thresholds or Thresholds()
    chains = _as_chains(source, t.e)
    if chains:
        pts = np.vstack([c.points for c in chains])
        bounds = (pts[:, 0].min(), pts[:, 1].min(),
                  pts[:, 0].max(), pts[:, 1].max())
    else:
        bounds = (0.0, 0.0, 1.0, 1.0)
    grid = build_grid(bounds, t.e, margin)
    pre = preprocess(grid, chains, t, do_snap=do_snap, do_repel=do_repel,
                     do_delete=do_delete, strict=strict, validate=bool(chains))
    reg = build_registry(pre.mesh, chains,
                         chain_vertex_to_mesh=pre.chain_vertex_to_mesh,
                         eps=eps, lenient=lenient)
    return RemeshJob(mesh=pre.mesh, chains=chains, thresholds=t,
                     registry=reg, pre=pre, eps=eps)


def generate_patches(
    job: RemeshJob,
    schedule: Optional[Sequence[int]] = None,
    lenient: bool = False,
) -> Dict[int, Optional[List[Tuple[tuple, tuple, tuple]]]]:
    """Per-face patch lists keyed by face id.

    ``schedule`` only changes the processing order; every face's patch is a
    pure function of the frozen registry, which is what makes shuffled
    schedules byte-identical downstream.
    """
    faces = job.registry.faces()
    if schedule is not None:
        ordered = [int(f) for f in schedule]
        if sorted(ordered) != faces:
            raise ValueError("schedule must be a permutation of the "
                             "registry's face ids")
    else:
        ordered = faces
    out: Dict[int, Optional[List[Tuple[tuple, tuple, tuple]]]] = {}
    for f in ordered:
        if f in job.registry.protocol_fallbacks:
            out[f] = raw_face_fan(job.mesh, f, job.registry)
        else:
            out[f] = patch_faces(job.registry.by_face[f], lenient=lenient)
    return out


def stitch(
    base: TriMesh,
    registry: IntersectionRegistry,
    patches: Dict[int, Optional[List[Tuple[tuple, tuple, tuple]]]],
    eps: Optional[float] = None,
) -> Tuple[TriMesh, Dict[tuple, int], int]:
    """Assemble the output mesh from untouched faces plus patch faces.

    New vertices are appended in sorted key order so the result does not
    depend on patch processing order.  Returns (mesh, key->index map,
    fallback count).
    """
    tol = _eps_of(eps)
    nv = base.n_vertices
    key_index: Dict[tuple, int] = {}
    coords: List[Tuple[float, float]] = []
    for key in registry.new_vertex_keys():
        key_index[key] = nv + len(coords)
        coords.append(registry.points[key])
    fallback_faces = sorted({k[1] for tris in patches.values() if tris
                             for tri in tris for k in tri if k[0] == "f"})
    n_fallback = len(fallback_faces)
    for f in fallback_faces:
        key_index[("f", f)] = nv + len(coords)
        cen = base.vertices[base.faces[f]].mean(axis=0)
        coords.append((float(cen[0]), float(cen[1])))

    # Every anchored base edge must be patched from both sides.
    twins = base.halfedge_twins()
    face_of_edge: Dict[Tuple[int, int], List[int]] = {}
    fa_flat = base.faces
    for f in range(base.n_faces):
        for s in range(3):
            u, v = int(fa_flat[f, s]), int(fa_flat[f, (s + 1) % 3])
            face_of_edge.setdefault((min(u, v), max(u, v)), []).append(f)
    for ekey, anchors in registry.edge_anchors.items():
        if not anchors:
            continue
        for f in face_of_edge.get(ekey, []):
            if patches.get(f) is None:
                raise StitchMismatch(
                    f"edge {ekey} carries anchors {anchors} but incident "
                    f"face {f} was not patched")

    def index_of(key: tuple) -> int:
        if key[0] == "m":
            return int(key[1])
        try:
            return key_index[key]
        except KeyError:
            raise StitchMismatch(f"patch references unknown key {key}")

    out_faces: List[Tuple[int, int, int]] = []
    for f in range(base.n_faces):
        tris = patches.get(f)
        if tris is None:
            out_faces.append(tuple(int(x) for x in base.faces[f]))
        else:
            for tri in tris:
                out_faces.append(tuple(index_of(k) for k in tri))

    verts = np.vstack([base.vertices, np.asarray(coords, dtype=np.float64)]
                      ) if coords else base.vertices.copy()
    mesh = TriMesh(verts, np.asarray(out_faces, dtype=np.int64))

    # Cheap guard against silent area loss or gain in the replacement.
    def _total_area(m: TriMesh) -> float:
        p = m.vertices[m.faces]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return float(0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]).sum())

    base_area = _total_area(base)
    out_area = _total_area(mesh)
    if abs(out_area - base_area) > 1e-8 * max(base_area, 1.0):
        raise StitchMismatch(
            f"stitched area {out_area!r} != base area {base_area!r}")
    del tol
    return mesh, key_index, n_fallback


def remesh(
    source: Union[Bitmap, np.ndarray, Sequence[PolyChain], RemeshJob],
    thresholds: Optional[Thresholds] = None,
    *,
    margin: Optional[float] = None,
    do_snap: bool = True,
    do_repel: bool = True,
    do_delete: bool = True,
    strict: bool = True,
    lenient: bool = False,
    schedule: Optional[Sequence[int]] = None,
    eps: Optional[float] = None,
) -> RemeshResult:
    """Full pipeline; accepts a prepared job to reuse classification."""
    stages: Dict[str, float] = {}
    if isinstance(source, RemeshJob):
        job = source
    else:
        t0 = time.perf_counter()
        job = prepare(source, thresholds, margin=margin, do_snap=do_snap,
                      do_repel=do_repel, do_delete=do_delete, strict=strict,
                      lenient=lenient, eps=eps)
        stages["prepare"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    patches = generate_patches(job, schedule=schedule, lenient=lenient)
    stages["patches"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    mesh, key_index, n_fallback = stitch(job.mesh, job.registry, patches,
                                         eps=job.eps)
    stages["stitch"] = time.perf_counter() - t0
    n_patched = sum(1 for v in patches.values() if v is not None)
    log.info("remesh: %d faces in, %d patched (%d fallback), %d faces out",
             job.mesh.n_faces, n_patched, n_fallback, mesh.n_faces)
    return RemeshResult(mesh=mesh, job=job, key_index=key_index,
                        n_patched=n_patched, n_fallback=n_fallback,
                        stage_seconds=stages)


def chain_embedding_defects(result: RemeshResult,
                            eps: Optional[float] = None) -> List[str]:
    """Verify every chain is realized as a contiguous run of mesh edges.

    Three checks: each chain vertex coincides with an output mesh vertex,
    each recorded intersection point coincides with an output mesh vertex,
    and for each chain segment the on-segment mesh vertices (ordered along
    the segment) start at one endpoint, end at the other, and are pairwise
    joined by mesh edges.  Returns a list of human-readable defect strings;
    empty means the embedding is exact.
    """
    from scipy.spatial import cKDTree

    tol = _eps_of(eps if eps is not None else result.job.eps)
    mesh = result.mesh
    verts = mesh.vertices
    tree = cKDTree(verts)
    defects: List[str] = []

    edge_set = set()
    for f in range(mesh.n_faces):
        a, b, c = (int(x) for x in mesh.faces[f])
        edge_set.update({(min(a, b), max(a, b)), (min(b, c), max(b, c)),
                         (min(c, a), max(c, a))})

    for ci, ch in enumerate(result.job.chains):
        d, _ = tree.query(ch.points)
        for vi in np.nonzero(d > tol)[0]:
            defects.append(f"chain {ci} vertex {int(vi)} is "
                           f"{d[vi]:.3e} from the nearest mesh vertex")

    xpts = [result.job.registry.points[k]
            for k in result.job.registry.new_vertex_keys()]
    if xpts:
        d, _ = tree.query(np.asarray(xpts))
        for i in np.nonzero(d > tol)[0]:
            defects.append(f"registry point {i} is {d[i]:.3e} from the "
                           f"nearest mesh vertex")

    for ci, ch in enumerate(result.job.chains):
        for k in range(ch.n_segments):
            p, q = ch.segment(k)
            seg = np.asarray(q, float) - np.asarray(p, float)
            length = float(np.hypot(*seg))
            if length <= tol:
                continue
            mid = 0.5 * (np.asarray(p, float) + np.asarray(q, float))
            cand = tree.query_ball_point(mid, 0.5 * length + 10 * tol + 1e-9)
            if not cand:
                defects.append(f"chain {ci} segment {k}: no mesh vertices "
                               f"near it at all")
                continue
            cv = verts[cand]
            t = ((cv - p) @ seg) / (length * length)
            perp = np.abs((cv[:, 0] - p[0]) * seg[1]
                          - (cv[:, 1] - p[1]) * seg[0]) / length
            on = (perp <= tol) & (t >= -tol / length) & (t <= 1 + tol / length)
            ids = [cand[i] for i in np.nonzero(on)[0]]
            ids.sort(key=lambda i: float(((verts[i] - p) @ seg)))
            if not ids:
                defects.append(f"chain {ci} segment {k}: not covered")
                continue
            if np.hypot(*(verts[ids[0]] - p)) > tol:
                defects.append(f"chain {ci} segment {k}: path does not "
                               f"start at the segment start")
            if np.hypot(*(verts[ids[-1]] - q)) > tol:
                defects.append(f"chain {ci} segment {k}: path does not "
                               f"end at the segment end")
            for a, b in zip(ids, ids[1:]):
                if (min(a, b), max(a, b)) not in edge_set:
                    defects.append(f"chain {ci} segment {k}: gap between "
                                   f"mesh vertices {a} and {b}")
                    break
    return defects


def check_path_independence(
    source,
    thresholds: Optional[Thresholds] = None,
    n_shuffles: int = 5,
    seed: int = 0,
    lenient: bool = False,
    **kw,
) -> Tuple[bool, Optional[str]]:
    """Run shuffled patch schedules; all canonical serializations must match.

    Returns (ok, message); on failure the message names the first differing
    shuffle.
    """
    job = source if isinstance(source, RemeshJob) else prepare(
        source, thresholds, **kw)
    faces = job.registry.faces()
    baseline: Optional[bytes] = None
    for i in range(n_shuffles):
        rng = np.random.default_rng(seed + i)
        schedule = [faces[j] for j in rng.permutation(len(faces))]
        res = remesh(job, schedule=schedule, lenient=lenient)
        blob = canonical_off_bytes(res.mesh)
        if baseline is None:
            baseline = blob
        elif blob != baseline:
            return False, (f"shuffle {i} (seed {seed + i}) differs from "
                           f"shuffle 0")
    return True, None
