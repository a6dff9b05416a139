"""SVG rendering for meshes: flat wireframes, per-face color ramps, chains.

Output is plain text SVG assembled by hand; no drawing dependency, and the
files stay diffable.
"""
from __future__ import annotations

import colorsys
import logging
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from sbmt.halfedge import TriMesh
from sbmt.quality import face_min_angles

log = logging.getLogger(__name__)

__all__ = ["angle_color", "label_palette", "render_svg", "field_color",
           "render_field_svg", "histogram_svg"]


def _hex(r: float, g: float, b: float) -> str:
    return "#{:02x}{:02x}{:02x}".format(
        int(round(255 * r)), int(round(255 * g)), int(round(255 * b)))


def angle_color(deg: float) -> str:
    """Red (0°) through yellow to green (60°) ramp for minimum angles."""
    f = min(max(deg / 60.0, 0.0), 1.0)
    return _hex(*colorsys.hsv_to_rgb(f / 3.0, 0.85, 0.95))


def label_palette(labels: Iterable) -> Dict:
    """Deterministic distinct colors for categorical labels (sorted order)."""
    uniq = sorted(set(labels), key=repr)
    n = max(len(uniq), 1)
    return {lab: _hex(*colorsys.hsv_to_rgb(i / n, 0.65, 0.92))
            for i, lab in enumerate(uniq)}


def render_svg(
    mesh: TriMesh,
    path: Optional[str] = None,
    *,
    color_by: str = "angle",
    face_labels: Optional[Dict[int, object]] = None,
    chains: Optional[Sequence] = None,
    width: int = 900,
) -> str:
    """Build (and optionally write) an SVG for the mesh.

    ``color_by`` is ``"angle"`` (minimum-angle ramp), ``"class"`` (requires
    ``face_labels``, a face-id to label map; unlabeled faces stay neutral),
    or ``"none"`` (wireframe).  ``chains`` polylines are overdrawn in black.
    """
    if color_by == "class" and face_labels is None:
        raise ValueError("color_by='class' needs face_labels")
    pts = mesh.vertices
    if len(pts) == 0:
        raise ValueError("cannot render an empty mesh")
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    span_x = max(xmax - xmin, 1e-9)
    span_y = max(ymax - ymin, 1e-9)
    scale = width / span_x
    height = int(round(span_y * scale)) + 2

    def sx(x):
        return (x - xmin) * scale + 1.0

    def sy(y):
        return (ymax - y) * scale + 1.0  # flip: SVG y grows downward

    fills: Dict[int, str]
    if color_by == "angle":
        mins = face_min_angles(mesh)
        fills = {f: angle_color(float(mins[f])) for f in range(mesh.n_faces)}
    elif color_by == "class":
        pal = label_palette(face_labels.values())
        fills = {f: pal[lab] for f, lab in face_labels.items()}
    elif color_by == "none":
        fills = {}
    else:
        raise ValueError(f"unknown color_by {color_by!r}")

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 2}" '
        f'height="{height}" viewBox="0 0 {width + 2} {height}">',
        f'<rect width="{width + 2}" height="{height}" fill="white"/>',
    ]
    stroke = 'stroke="#555" stroke-width="0.4"'
    for f in range(mesh.n_faces):
        tri = mesh.faces[f]
        coords = " ".join(
            f"{sx(pts[v][0]):.2f},{sy(pts[v][1]):.2f}" for v in tri)
        fill = fills.get(f, "#eeeeee")
        out.append(f'<polygon points="{coords}" fill="{fill}" {stroke}/>')
    for ch in chains or []:
        cpts = np.asarray(ch.points if hasattr(ch, "points") else ch, float)
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in cpts)
        closed = getattr(ch, "closed", False)
        tag = "polygon" if closed else "polyline"
        out.append(f'<{tag} points="{coords}" fill="none" stroke="black" '
                   f'stroke-width="1.2"/>')
    out.append("</svg>")
    svg = "\n".join(out)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
        log.info("wrote %s (%d faces)", path, mesh.n_faces)
    return svg


def field_color(t: float) -> str:
    """Cold-to-hot ramp for scalar fields; ``t`` already normalized to [0,1]."""
    f = min(max(t, 0.0), 1.0)
    # hue 2/3 (blue) down to 0 (red)
    return _hex(*colorsys.hsv_to_rgb((1.0 - f) * 2.0 / 3.0, 0.9, 0.95))


def render_field_svg(
    mesh: TriMesh,
    values: Sequence[float],
    path: Optional[str] = None,
    *,
    width: int = 900,
    vmin: Optional[float] = None,
    vmax: Optional[float] = None,
) -> str:
    """Render per-vertex scalar ``values`` as flat face colors.

    Each face is filled with the ramp color of its mean corner value; the
    range defaults to the observed min/max (a constant field renders mid-ramp).
    """
    vals = np.asarray(values, float)
    if vals.shape != (mesh.n_vertices,):
        raise ValueError("values must have one entry per vertex")
    lo = float(np.min(vals)) if vmin is None else float(vmin)
    hi = float(np.max(vals)) if vmax is None else float(vmax)
    span = hi - lo
    if span <= 0:
        labels = {f: 0.5 for f in range(mesh.n_faces)}
    else:
        means = vals[mesh.faces].mean(axis=1)
        labels = {f: (float(means[f]) - lo) / span for f in range(mesh.n_faces)}
    fills = {f: field_color(t) for f, t in labels.items()}
    pts = mesh.vertices
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    span_x = max(xmax - xmin, 1e-9)
    scale = width / span_x
    height = int(round((ymax - ymin) * scale)) + 2
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 2}" '
        f'height="{height}" viewBox="0 0 {width + 2} {height}">',
        f'<rect width="{width + 2}" height="{height}" fill="white"/>',
    ]
    for f in range(mesh.n_faces):
        tri = mesh.faces[f]
        coords = " ".join(
            f"{(pts[v][0] - xmin) * scale + 1.0:.2f},"
            f"{(ymax - pts[v][1]) * scale + 1.0:.2f}" for v in tri)
        out.append(f'<polygon points="{coords}" fill="{fills[f]}" '
                   f'stroke="none"/>')
    out.append("</svg>")
    svg = "\n".join(out)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
        log.info("wrote %s", path)
    return svg


def histogram_svg(hist, path: Optional[str] = None, *,
                  width: int = 640, height: int = 360) -> str:
    """Log-scale bar chart of an angle histogram (raw bars, smoothed line)."""
    centers = np.asarray(hist.centers, float)
    raw = np.asarray(hist.raw, float)
    smoothed = np.asarray(hist.smoothed, float)
    top = max(float(raw.max()), float(smoothed.max()), 1.0)
    logtop = np.log10(top + 1.0)
    pad = 24.0
    bw = (width - 2 * pad) / len(centers)

    def bar_h(count):
        return (height - 2 * pad) * np.log10(count + 1.0) / logtop

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, c in enumerate(centers):
        h = bar_h(raw[i])
        x = pad + i * bw
        y = height - pad - h
        out.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bw * 0.9:.1f}" '
                   f'height="{h:.1f}" fill="#7a9bd4"/>')
    line = " ".join(
        f"{pad + (i + 0.5) * bw:.1f},{height - pad - bar_h(s):.1f}"
        for i, s in enumerate(smoothed))
    out.append(f'<polyline points="{line}" fill="none" stroke="#cc3333" '
               f'stroke-width="1.5"/>')
    out.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
               f'y2="{height - pad}" stroke="#333" stroke-width="1"/>')
    for c in (10, 30, 60):
        i = int(np.argmin(np.abs(centers - c)))
        x = pad + (i + 0.5) * bw
        out.append(f'<text x="{x:.1f}" y="{height - pad + 14}" '
                   f'font-size="10" text-anchor="middle" fill="#333">'
                   f'{int(centers[i])}&#176;</text>')
    out.append("</svg>")
    svg = "\n".join(out)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
        log.info("wrote %s", path)
    return svg
