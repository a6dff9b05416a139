"""Mesh quality statistics, angle histograms, and rule-ablation runs.

Everything here is a deterministic reduction over faces in face-id order, so
reports are reproducible bit-for-bit regardless of how the mesh was
assembled.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from sbmt.halfedge import TriMesh
from sbmt.preprocess import Thresholds, validate_thresholds
from sbmt.remesh import remesh

log = logging.getLogger(__name__)

__all__ = [
    "EmptyMesh", "InvalidThresholds", "QualityReport", "AngleHistogram",
    "AblationRow", "SweepRow", "ABLATION_CONFIGS", "IDEAL_AR",
    "face_min_angles", "face_areas", "face_aspect_ratios",
    "quality_report", "theoretical_bounds", "angle_histogram",
    "write_histogram_csv", "run_ablation", "sensitivity_sweep",
]

#: Aspect ratio (longest edge / shortest altitude) of an equilateral triangle.
IDEAL_AR = 2.0 / math.sqrt(3.0)


class EmptyMesh(ValueError):
    """Statistics requested for a mesh with no faces."""


class InvalidThresholds(ValueError):
    """Threshold combination outside the admissible region."""


def _corner_vectors(mesh: TriMesh):
    p = mesh.vertices[mesh.faces]
    e0 = p[:, 1] - p[:, 0]
    e1 = p[:, 2] - p[:, 1]
    e2 = p[:, 0] - p[:, 2]
    return e0, e1, e2


def _angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    dot = u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]
    return np.degrees(np.arctan2(cross, dot))


def face_min_angles(mesh: TriMesh) -> np.ndarray:
    """Per-face minimum interior angle in degrees (0 for degenerate faces)."""
    e0, e1, e2 = _corner_vectors(mesh)
    a0 = _angle_between(e0, -e2)
    a1 = _angle_between(e1, -e0)
    a2 = _angle_between(e2, -e1)
    return np.minimum(np.minimum(a0, a1), a2)


def face_areas(mesh: TriMesh) -> np.ndarray:
    e0, e1, _ = _corner_vectors(mesh)
    return 0.5 * np.abs(e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0])


def face_aspect_ratios(mesh: TriMesh) -> np.ndarray:
    """Longest edge over shortest altitude; inf for zero-area faces."""
    e0, e1, e2 = _corner_vectors(mesh)
    lengths = np.stack([np.hypot(e[:, 0], e[:, 1]) for e in (e0, e1, e2)],
                       axis=1)
    lmax = lengths.max(axis=1)
    area = face_areas(mesh)
    with np.errstate(divide="ignore", invalid="ignore"):
        ar = np.where(area > 0.0, lmax * lmax / (2.0 * area), np.inf)
    return ar


@dataclass(frozen=True)
class QualityReport:
    min_angle: float
    min_area: float
    sliver_count: int
    equilateral_count: int
    triangle_count: int
    area_variance: float
    AR_median: float
    AR_p95: float
    AR_max: float

    @property
    def equilateral_ratio(self) -> float:
        return self.equilateral_count / self.triangle_count

    def as_dict(self) -> Dict[str, float]:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["equilateral_ratio"] = self.equilateral_ratio
        return d


SLIVER_ANGLE_DEG = 5.0
EQUILATERAL_RTOL = 1e-6


def quality_report(mesh: TriMesh) -> QualityReport:
    """Full per-mesh statistics; raises :class:`EmptyMesh` for no faces.

    A sliver is a face with minimum angle below 5 degrees; a face counts as
    equilateral when its three edge lengths agree within 1e-6 relative.
    """
    if mesh.n_faces == 0:
        raise EmptyMesh("quality_report needs at least one face")
    e0, e1, e2 = _corner_vectors(mesh)
    lengths = np.stack([np.hypot(e[:, 0], e[:, 1]) for e in (e0, e1, e2)],
                       axis=1)
    angles = face_min_angles(mesh)
    areas = face_areas(mesh)
    ar = face_aspect_ratios(mesh)
    lmax = lengths.max(axis=1)
    lmin = lengths.min(axis=1)
    equilateral = (lmax - lmin) <= EQUILATERAL_RTOL * lmax
    with np.errstate(invalid="ignore"):  # inf AR from degenerate faces
        ar_median = float(np.median(ar))
        ar_p95 = float(np.percentile(ar, 95.0))
    return QualityReport(
        min_angle=float(angles.min()),
        min_area=float(areas.min()),
        sliver_count=int((angles < SLIVER_ANGLE_DEG).sum()),
        equilateral_count=int(equilateral.sum()),
        triangle_count=int(mesh.n_faces),
        area_variance=float(np.var(areas)),
        AR_median=ar_median,
        AR_p95=ar_p95,
        AR_max=float(ar.max()),
    )


def theoretical_bounds(
    t: Union[Thresholds, float],
    b: Optional[float] = None,
    c: Optional[float] = None,
    e: Optional[float] = None,
):
    """Lower bounds (degrees, area) any compliant output mesh must beat.

    The angle bound is min(arctan(b / (e + a - sqrt(a^2 - b^2))),
    arctan(c / (e + a))); the area bound is b*c/2.  Accepts a
    :class:`Thresholds` or the plain floats a, b, c (and keyword e).
    """
    if isinstance(t, Thresholds):
        a, b, c, e = t.a, t.b, t.c, t.e
    else:
        a = float(t)
        if b is None or c is None:
            raise TypeError("theoretical_bounds needs b and c when not "
                            "given a Thresholds")
        e = Thresholds().e if e is None else float(e)
    disc = a * a - b * b
    if disc < 0.0:
        raise InvalidThresholds(f"a^2 < b^2 (a={a}, b={b})")
    theta = min(math.atan2(b, e + a - math.sqrt(disc)),
                math.atan2(c, e + a))
    return math.degrees(theta), 0.5 * b * c


# ---------------------------------------------------------------------------
# Histogram

HIST_BIN_WIDTH = 2.0
_KERNEL_SIGMA_BINS = 1.0
_KERNEL_RADIUS_BINS = 3


@dataclass(frozen=True)
class AngleHistogram:
    """Per-face minimum angles binned at 2 degrees (centers 1, 3, ..., 61)."""

    centers: np.ndarray
    raw: np.ndarray
    smoothed: np.ndarray

    @property
    def mode_center(self) -> float:
        return float(self.centers[int(np.argmax(self.raw))])

    def mass_below(self, angle_deg: float) -> int:
        """Raw count in bins strictly below the bin containing angle_deg."""
        lo = HIST_BIN_WIDTH * math.floor(angle_deg / HIST_BIN_WIDTH)
        return int(self.raw[self.centers < lo].sum())


def angle_histogram(mesh: TriMesh) -> AngleHistogram:
    """Smoothed minimum-angle histogram (Gaussian, sigma 1 bin, radius 3)."""
    if mesh.n_faces == 0:
        raise EmptyMesh("angle_histogram needs at least one face")
    mins = face_min_angles(mesh)
    edges = np.arange(0.0, 62.0 + HIST_BIN_WIDTH, HIST_BIN_WIDTH)
    raw, _ = np.histogram(mins, bins=edges)
    offsets = np.arange(-_KERNEL_RADIUS_BINS, _KERNEL_RADIUS_BINS + 1)
    kernel = np.exp(-0.5 * (offsets / _KERNEL_SIGMA_BINS) ** 2)
    kernel /= kernel.sum()
    smoothed = np.convolve(raw.astype(float), kernel, mode="same")
    centers = 0.5 * (edges[:-1] + edges[1:])
    return AngleHistogram(centers=centers, raw=raw, smoothed=smoothed)


def write_histogram_csv(hist: AngleHistogram, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_center_deg", "raw_count", "smoothed"])
        for c, r, s in zip(hist.centers, hist.raw, hist.smoothed):
            w.writerow([f"{c:g}", int(r), f"{s:.6f}"])


# ---------------------------------------------------------------------------
# Ablation and sensitivity

ABLATION_CONFIGS: Dict[str, Dict[str, bool]] = {
    "E1": dict(do_snap=True, do_repel=True, do_delete=True),
    "E2": dict(do_snap=False, do_repel=True, do_delete=True),
    "E3": dict(do_snap=True, do_repel=False, do_delete=True),
    "E4": dict(do_snap=True, do_repel=True, do_delete=False),
    "E5": dict(do_snap=False, do_repel=False, do_delete=False),
}


@dataclass
class AblationRow:
    config: str
    toggles: Dict[str, bool]
    report: QualityReport
    n_patched: int
    n_fallback: int
    n_protocol_fallback: int
    seconds: float


def run_ablation(source, thresholds: Optional[Thresholds] = None,
                 **remesh_kw) -> Dict[str, AblationRow]:
    """Remesh under the five rule-toggle configurations and grade each.

    E1 runs everything; E2 disables snapping, E3 repulsion, E4 edge
    deletion, E5 all three.  Runs are lenient: faces the disabled rules
    leave inadmissible get centroid-fan fallbacks (counted per row) instead
    of aborting, because the degraded statistics are the product here.
    """
    t = thresholds or Thresholds()
    theta_bound, area_bound = theoretical_bounds(t)
    rows: Dict[str, AblationRow] = {}
    for name, toggles in ABLATION_CONFIGS.items():
        t0 = time.perf_counter()
        res = remesh(source, t, strict=False, lenient=True, **toggles,
                     **remesh_kw)
        rep = quality_report(res.mesh)
        n_proto = len(res.job.registry.protocol_fallbacks)
        rows[name] = AblationRow(
            config=name, toggles=dict(toggles), report=rep,
            n_patched=res.n_patched, n_fallback=res.n_fallback,
            n_protocol_fallback=n_proto,
            seconds=time.perf_counter() - t0)
        degraded = (rep.sliver_count > 0 or rep.min_angle <= theta_bound
                    or rep.min_area <= area_bound or res.n_fallback > 0
                    or n_proto > 0)
        if degraded and name != "E1":
            log.warning(
                "%s (%s off): min angle %.3f deg, min area %.3e, %d slivers,"
                " %d fallback fans — guarantees need every rule on",
                name,
                "/".join(k[3:] for k, v in toggles.items() if not v) or "none",
                rep.min_angle, rep.min_area, rep.sliver_count,
                res.n_fallback + n_proto)
        elif degraded:
            log.warning("E1 run violates its own bounds: %s", rep)
    return rows


@dataclass
class SweepRow:
    thresholds: Thresholds
    violations: List[str]
    report: Optional[QualityReport]


def sensitivity_sweep(source, thresholds_list: Sequence[Thresholds],
                      **remesh_kw) -> List[SweepRow]:
    """Quality reports across threshold triplets; invalid ones are flagged
    and skipped rather than run."""
    out: List[SweepRow] = []
    for t in thresholds_list:
        bad = validate_thresholds(t, math.inf)
        if bad:
            log.warning("skipping thresholds %s: %s", t, "; ".join(bad))
            out.append(SweepRow(thresholds=t, violations=bad, report=None))
            continue
        res = remesh(source, t, **remesh_kw)
        out.append(SweepRow(thresholds=t, violations=[],
                            report=quality_report(res.mesh)))
    return out
