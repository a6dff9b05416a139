"""Cotangent-Laplacian finite elements on triangle sheets.

Linear (P1) Galerkin stiffness with the classic half-cotangent edge weights
and a lumped mass matrix, plus two drivers: implicit-Euler heat flow with
homogeneous Dirichlet walls, and a harmonic (Laplace) solve with prescribed
boundary values.  Negative off-diagonal weights from obtuse corners are kept
as-is and counted, never clamped.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import LinearOperator, cg, splu

from sbmt.geom import _eps_of
from sbmt.halfedge import TriMesh

log = logging.getLogger(__name__)

__all__ = [
    "DegenerateFace", "SolverFailure", "ScalarField", "SparseSystem",
    "hull_vertices", "chain_vertices", "dirichlet_vertices", "assemble",
    "dirichlet_energy", "gaussian_field", "heat_step", "heat_run", "HeatRun",
    "solve_harmonic",
]

CG_RTOL = 1e-10


class DegenerateFace(ValueError):
    """Assembly hit a face with non-positive area."""


class SolverFailure(RuntimeError):
    """Linear solve did not converge to tolerance."""


@dataclass
class ScalarField:
    """One real value per mesh vertex."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError(
                f"field length {self.values.shape} != vertex count "
                f"{self.mesh.n_vertices}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")


@dataclass
class SparseSystem:
    """Assembled stiffness L, lumped mass M, and the Dirichlet vertex set."""

    mesh: TriMesh
    L: csr_matrix
    M: np.ndarray
    dirichlet: np.ndarray
    n_negative_weights: int = 0

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.mesh.n_vertices, dtype=bool)
        mask[self.dirichlet] = False
        return np.nonzero(mask)[0]


def hull_vertices(mesh: TriMesh) -> np.ndarray:
    """Vertices on the sheet's open boundary (edges with no twin)."""
    twins = mesh.halfedge_twins()
    out = set()
    for f in range(mesh.n_faces):
        for s in range(3):
            if twins[f * 3 + s] < 0:
                out.add(int(mesh.faces[f, s]))
                out.add(int(mesh.faces[f, (s + 1) % 3]))
    return np.array(sorted(out), dtype=np.int64)


def chain_vertices(mesh: TriMesh, chains: Sequence,
                   eps: Optional[float] = None) -> np.ndarray:
    """Mesh vertices lying on any chain polyline (within tolerance)."""
    from scipy.spatial import cKDTree

    tol = _eps_of(eps)
    verts = mesh.vertices
    tree = cKDTree(verts)
    out = set()
    for ch in chains:
        pts = np.asarray(ch.points, float)
        n = len(pts)
        n_seg = n if getattr(ch, "closed", True) else n - 1
        for k in range(n_seg):
            p = pts[k]
            q = pts[(k + 1) % n]
            seg = q - p
            length = float(np.hypot(*seg))
            if length <= tol:
                continue
            mid = 0.5 * (p + q)
            for i in tree.query_ball_point(mid, 0.5 * length + 1e-9):
                v = verts[i]
                t = float((v - p) @ seg) / (length * length)
                if t < -tol / length or t > 1 + tol / length:
                    continue
                perp = abs((v[0] - p[0]) * seg[1]
                           - (v[1] - p[1]) * seg[0]) / length
                if perp <= tol:
                    out.add(int(i))
    return np.array(sorted(out), dtype=np.int64)


def dirichlet_vertices(mesh: TriMesh, chains: Optional[Sequence] = None,
                       eps: Optional[float] = None) -> np.ndarray:
    """Default wall set: embedded chain vertices plus the sheet hull."""
    ids = set(hull_vertices(mesh).tolist())
    if chains:
        ids.update(chain_vertices(mesh, chains, eps).tolist())
    return np.array(sorted(ids), dtype=np.int64)


def assemble(mesh: TriMesh,
             dirichlet: Optional[Union[np.ndarray, Sequence[int]]] = None,
             ) -> SparseSystem:
    """Build the cotangent stiffness and lumped mass for a mesh.

    Off-diagonal weight for edge (i, j) is half the sum of cotangents of
    the angles opposite the edge in its incident faces; diagonal entries
    make rows sum to zero.  Mass is one third of the incident face area per
    vertex.  ``dirichlet`` defaults to the sheet hull.
    """
    p = mesh.vertices[mesh.faces]
    nv = mesh.n_vertices
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    doubles = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]  # 2 * signed area
    bad = np.nonzero(doubles <= 0.0)[0]
    if len(bad):
        raise DegenerateFace(
            f"{len(bad)} faces with non-positive area (first: {int(bad[0])})")
    areas = 0.5 * doubles

    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    # Corner opposite edge (j, k) contributes w = cot(corner)/2 to that edge.
    for corner in range(3):
        j = mesh.faces[:, (corner + 1) % 3]
        k = mesh.faces[:, (corner + 2) % 3]
        a = p[:, (corner + 1) % 3] - p[:, corner]
        b = p[:, (corner + 2) % 3] - p[:, corner]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
        w = 0.5 * dot / cross
        rows.extend([j, k, j, k])
        cols.extend([k, j, j, k])
        vals.extend([-w, -w, w, w])
    L = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nv, nv)).tocsr()
    L.sum_duplicates()

    off = L.tocoo()
    neg = int(np.sum((off.row != off.col) & (off.data > 1e-14)))
    # positive off-diagonal entry of L = negative cotangent weight

    M = np.zeros(nv)
    third = areas / 3.0
    for corner in range(3):
        np.add.at(M, mesh.faces[:, corner], third)

    if dirichlet is None:
        dir_ids = hull_vertices(mesh)
    else:
        dir_ids = np.unique(np.asarray(dirichlet, dtype=np.int64))
    if neg:
        log.info("assembled %d vertices; %d negative cotangent weights "
                 "(obtuse corners)", nv, neg)
    return SparseSystem(mesh=mesh, L=L, M=M, dirichlet=dir_ids,
                        n_negative_weights=neg)


def dirichlet_energy(sys: SparseSystem, values: np.ndarray) -> float:
    vv = np.asarray(values, float)
    return float(vv @ (sys.L @ vv))


def gaussian_field(mesh: TriMesh, amplitude: float = 100.0,
                   sigma: float = 5.0,
                   center: Optional[Tuple[float, float]] = None) -> ScalarField:
    """Gaussian bump; default center is the area-weighted domain centroid."""
    if center is None:
        p = mesh.vertices[mesh.faces]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        a = 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        cen = (p.mean(axis=1) * a[:, None]).sum(axis=0) / a.sum()
    else:
        cen = np.asarray(center, float)
    d2 = ((mesh.vertices - cen) ** 2).sum(axis=1)
    return ScalarField(mesh, amplitude * np.exp(-d2 / (2.0 * sigma * sigma)))


def _cg_solve(A, b: np.ndarray, label: str) -> np.ndarray:
    n = len(b)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverFailure(f"{label}: non-positive diagonal")
    pre = LinearOperator((n, n), matvec=lambda x: x / diag)
    x, info = cg(A, b, rtol=CG_RTOL, atol=0.0, maxiter=10 * n, M=pre)
    if info != 0:
        raise SolverFailure(f"{label}: CG did not converge (info={info})")
    return x


def heat_step(sys: SparseSystem, u: Union[ScalarField, np.ndarray],
              alpha: float = 500.0, dt: float = 1e-3) -> ScalarField:
    """One implicit-Euler step of du/dt = alpha * laplace(u), u = 0 on walls."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    uu = u.values if isinstance(u, ScalarField) else np.asarray(u, float)
    fr = sys.free
    A = _free_operator(sys, alpha, dt, fr)
    x = _cg_solve(A, sys.M[fr] * uu[fr], "heat_step")
    out = np.zeros_like(uu)
    out[fr] = x
    return ScalarField(sys.mesh, out)


def _free_operator(sys: SparseSystem, alpha: float, dt: float,
                   fr: np.ndarray):
    from scipy.sparse import diags

    Lff = sys.L[fr][:, fr]
    return (diags(sys.M[fr]) + (dt * alpha) * Lff).tocsc()


@dataclass
class HeatRun:
    """Trajectory summary of a multi-step heat solve."""

    field: ScalarField
    peaks: np.ndarray
    energies: np.ndarray
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)


def heat_run(sys: SparseSystem, u0: Union[ScalarField, np.ndarray],
             alpha: float = 500.0, dt: float = 1e-3, n_steps: int = 500,
             snapshot_times: Sequence[float] = ()) -> HeatRun:
    """March ``n_steps`` implicit-Euler steps with one cached factorization.

    Records the peak value and Dirichlet energy after every step (index 0 is
    the initial state).  ``snapshot_times`` are rounded to whole steps and
    the full field at those times is kept.
    """
    uu = (u0.values if isinstance(u0, ScalarField) else
          np.asarray(u0, float)).copy()
    fr = sys.free
    uu[sys.dirichlet] = 0.0
    lu = splu(_free_operator(sys, alpha, dt, fr))
    Lff = sys.L[fr][:, fr]
    Mf = sys.M[fr]
    want = {int(round(t / dt)): float(t) for t in snapshot_times}
    uf = uu[fr]
    peaks = [float(uu.max(initial=0.0))]
    energies = [float(uf @ (Lff @ uf))]
    snaps: Dict[float, np.ndarray] = {}
    for step in range(1, n_steps + 1):
        uf = lu.solve(Mf * uf)
        peaks.append(float(uf.max(initial=0.0)))
        energies.append(float(uf @ (Lff @ uf)))
        if step in want:
            full = np.zeros_like(uu)
            full[fr] = uf
            snaps[want[step]] = full
    out = np.zeros_like(uu)
    out[fr] = uf
    return HeatRun(field=ScalarField(sys.mesh, out),
                   peaks=np.asarray(peaks), energies=np.asarray(energies),
                   snapshots=snaps)


def solve_harmonic(sys: SparseSystem,
                   boundary_values: Union[np.ndarray, Dict[int, float]],
                   ) -> ScalarField:
    """Solve laplace(u) = 0 with u fixed to ``boundary_values`` on walls.

    ``boundary_values`` is either a full-length vertex array (read at the
    Dirichlet ids) or a mapping vertex id -> value covering all of them.
    """
    if len(sys.dirichlet) == 0:
        raise SolverFailure("harmonic solve needs a nonempty boundary set")
    nv = sys.mesh.n_vertices
    g = np.zeros(nv)
    if isinstance(boundary_values, dict):
        missing = [int(i) for i in sys.dirichlet if int(i) not in boundary_values]
        if missing:
            raise ValueError(f"boundary values missing for vertices "
                             f"{missing[:5]}{'...' if len(missing) > 5 else ''}")
        for i in sys.dirichlet:
            g[i] = boundary_values[int(i)]
    else:
        bv = np.asarray(boundary_values, float)
        if bv.shape != (nv,):
            raise ValueError("boundary_values array must be full length")
        g[sys.dirichlet] = bv[sys.dirichlet]
    fr = sys.free
    if len(fr):
        Lff = sys.L[fr][:, fr]
        rhs = -(sys.L[fr][:, sys.dirichlet] @ g[sys.dirichlet])
        x = _cg_solve(Lff, rhs, "solve_harmonic")
        g[fr] = x
        resid = np.linalg.norm(Lff @ x - rhs)
        if resid > 1e-8 * max(np.linalg.norm(rhs), 1.0):
            raise SolverFailure(
                f"harmonic residual {resid:.2e} exceeds tolerance")
    return ScalarField(sys.mesh, g)
