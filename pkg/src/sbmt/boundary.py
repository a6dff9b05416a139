"""Bitmap ingestion, contour tracing, and boundary-protocol enforcement.

Masks come from binary PGM (P5) or ASCII PBM (P1) files; foreground is the
dark side by default.  Contours are traced with Moore-neighbor tracing
(Jacob's stopping criterion) over 8-connected components, giving one closed
chain per boundary component: outer contours with positive signed area,
holes negative, vertices at pixel centers, collinear runs merged.

``enforce_protocol`` then coarsens a chain until every wedge angle is at
least 90 degrees and every segment is longer than the grid edge, greedily
removing vertices while keeping the simplified chain within one pixel of the
original polyline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from sbmt.geom import get_eps, point_segment_distance

log = logging.getLogger(__name__)

ANGLE_SLACK = 1e-6  # radians of slack on the 90-degree wedge test
HAUSDORFF_BUDGET = 1.0  # pixels of allowed deviation during simplification


class UnsupportedFormat(ValueError):
    """Recognized file family but an unsupported variant (e.g. 16-bit PGM)."""


class CorruptHeader(ValueError):
    """Malformed or truncated PNM header / payload."""


class EmptyMask(ValueError):
    """Mask has no foreground pixels."""


class ProtocolUnsatisfiable(ValueError):
    """Chain cannot meet the angle/length protocol within the pixel budget."""


@dataclass
class Bitmap:
    """Boolean occupancy grid; True = foreground."""

    mask: np.ndarray  # (H, W) bool

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def n_foreground(self) -> int:
        return int(self.mask.sum())


@dataclass
class PolyChain:
    """Ordered polyline; segment k joins points[k] and points[k+1]
    (wrapping for closed chains)."""

    points: np.ndarray  # (N, 2) float64
    closed: bool = True

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_segments(self) -> int:
        n = len(self.points)
        return n if self.closed else max(n - 1, 0)

    def segment(self, k: int) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self.points)
        return self.points[k % n], self.points[(k + 1) % n]

    def segment_lengths(self) -> np.ndarray:
        p = self.points
        if self.closed:
            d = np.roll(p, -1, axis=0) - p
        else:
            d = p[1:] - p[:-1]
        return np.hypot(d[:, 0], d[:, 1])

    def signed_area(self) -> float:
        if not self.closed or len(self.points) < 3:
            return 0.0
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(
            np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
        )

    def wedge_angles(self) -> np.ndarray:
        """Unsigned angle at each vertex between the two incident segments,
        in radians (pi = straight through).  Open chains: endpoints get pi."""
        p = self.points
        n = len(p)
        prev = np.roll(p, 1, axis=0) - p
        nxt = np.roll(p, -1, axis=0) - p
        lp = np.hypot(prev[:, 0], prev[:, 1])
        ln = np.hypot(nxt[:, 0], nxt[:, 1])
        denom = np.where(lp * ln > 0, lp * ln, 1.0)
        cosang = np.clip(
            (prev[:, 0] * nxt[:, 0] + prev[:, 1] * nxt[:, 1]) / denom, -1, 1
        )
        ang = np.arccos(cosang)
        if not self.closed:
            ang[0] = math.pi
            ang[-1] = math.pi
        return ang

    def reversed(self) -> "PolyChain":
        return PolyChain(self.points[::-1].copy(), self.closed)

    def copy(self) -> "PolyChain":
        return PolyChain(self.points.copy(), self.closed)


# -- PNM parsing -------------------------------------------------------------


def _read_pnm_tokens(data: bytes, count: int, start: int) -> Tuple[List[bytes], int]:
    """Read whitespace/comment-separated header tokens; returns (tokens, pos)."""
    tokens: List[bytes] = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] not in (10, 13):
                i += 1
            continue
        if i >= n:
            raise CorruptHeader("truncated header")
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def load_bitmap(path, invert: bool = False) -> Bitmap:
    """Load a P5 (binary PGM, 8-bit) or P1 (ASCII PBM) file.

    Foreground = dark pixels (PGM value below half of maxval, PBM ones);
    ``invert=True`` flips that.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 2:
        raise CorruptHeader(f"{path}: too short")
    magic = data[:2]
    if magic == b"P5":
        (w_, h_, maxval_), pos = _read_pnm_tokens(data, 3, 2)
        try:
            w, h, maxval = int(w_), int(h_), int(maxval_)
        except ValueError as exc:
            raise CorruptHeader(f"{path}: non-numeric header field") from exc
        if w < 1 or h < 1:
            raise CorruptHeader(f"{path}: bad dimensions {w}x{h}")
        if not (0 < maxval <= 255):
            raise UnsupportedFormat(
                f"{path}: maxval {maxval} unsupported (8-bit only)"
            )
        pos += 1  # single whitespace byte after maxval
        pix = data[pos : pos + w * h]
        if len(pix) < w * h:
            raise CorruptHeader(f"{path}: pixel payload truncated")
        arr = np.frombuffer(pix, dtype=np.uint8).reshape(h, w)
        mask = arr <= maxval // 2
    elif magic == b"P1":
        body = b"\n".join(
            ln.split(b"#", 1)[0] for ln in data[2:].splitlines()
        )
        fields = body.split()
        if len(fields) < 2:
            raise CorruptHeader(f"{path}: missing dimensions")
        try:
            w, h = int(fields[0]), int(fields[1])
        except ValueError as exc:
            raise CorruptHeader(f"{path}: non-numeric dimensions") from exc
        if w < 1 or h < 1:
            raise CorruptHeader(f"{path}: bad dimensions {w}x{h}")
        digits = b"".join(fields[2:])
        if len(digits) < w * h:
            raise CorruptHeader(f"{path}: expected {w * h} bits, got {len(digits)}")
        bits = np.frombuffer(digits[: w * h], dtype=np.uint8) - ord("0")
        if bits.max(initial=0) > 1:
            raise CorruptHeader(f"{path}: PBM digits must be 0/1")
        mask = bits.reshape(h, w).astype(bool)
    elif magic in (b"P2", b"P3", b"P4", b"P6"):
        raise UnsupportedFormat(f"{path}: {magic.decode()} not supported")
    else:
        raise CorruptHeader(f"{path}: unknown magic {magic!r}")
    if invert:
        mask = ~mask
    return Bitmap(np.ascontiguousarray(mask))


def save_pgm(path, mask: np.ndarray) -> None:
    """Write a boolean mask as binary PGM (foreground=0, background=255)."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    arr = np.where(m, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


# -- contour tracing ---------------------------------------------------------

# clockwise Moore neighborhood in (row, col) image coordinates
_DIRS = (
    (0, -1),  # W
    (-1, -1),  # NW
    (-1, 0),  # N
    (-1, 1),  # NE
    (0, 1),  # E
    (1, 1),  # SE
    (1, 0),  # S
    (1, -1),  # SW
)
_DIR_INDEX = {d: i for i, d in enumerate(_DIRS)}


def _moore_trace(fg: np.ndarray, start: Tuple[int, int], back: Tuple[int, int]):
    """Moore-neighbor boundary trace from ``start`` with initial backtrack
    cell ``back``; stops by Jacob's criterion (re-entering the start pixel
    from the same backtrack direction)."""
    contour = [start]
    p, b = start, back
    limit = 4 * int(fg.sum()) + 8
    for _ in range(limit):
        idx = _DIR_INDEX[(b[0] - p[0], b[1] - p[1])]
        for k in range(1, 9):
            dr, dc = _DIRS[(idx + k) % 8]
            q = (p[0] + dr, p[1] + dc)
            if fg[q]:
                pdr, pdc = _DIRS[(idx + k - 1) % 8]
                b = (p[0] + pdr, p[1] + pdc)
                p = q
                break
        else:
            return contour  # isolated pixel
        if p == start and b == back:
            return contour
        contour.append(p)
    raise RuntimeError("contour trace failed to terminate")  # pragma: no cover


def _merge_collinear_int(pts: np.ndarray) -> np.ndarray:
    """Drop interior vertices of exactly-straight runs (closed chain,
    integer coordinates)."""
    n = len(pts)
    if n < 3:
        return pts
    prv = np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0)
    cross = (pts[:, 0] - prv[:, 0]) * (nxt[:, 1] - prv[:, 1]) - (
        pts[:, 1] - prv[:, 1]
    ) * (nxt[:, 0] - prv[:, 0])
    keep = cross != 0
    if keep.all():
        return pts
    return pts[keep]


def trace_contours(mask, min_area: float = 1.0) -> List[PolyChain]:
    """Closed boundary chains of every 8-connected foreground component.

    Outer contours are returned with positive signed area, hole contours
    (4-connected enclosed background) negative; vertices are pixel centers
    ``(x=col, y=row)``; collinear runs are merged.  Components whose contour
    encloses less than ``min_area`` pixel cells are dropped with a warning.
    Raises :class:`EmptyMask` when there is no foreground at all.
    """
    from scipy import ndimage

    m = mask.mask if isinstance(mask, Bitmap) else np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("mask has no foreground pixels")

    pad = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
    pad[1:-1, 1:-1] = m
    labels, ncomp = ndimage.label(pad, structure=np.ones((3, 3), dtype=int))
    chains: List[PolyChain] = []

    def emit(raw: List[Tuple[int, int]], hole: bool) -> None:
        pts = np.array(raw, dtype=np.int64)
        # keep only the first of consecutive duplicates (thin-spur revisits)
        if len(pts) > 1:
            keep = np.any(pts != np.roll(pts, 1, axis=0), axis=1)
            pts = pts[keep]
        pts = _merge_collinear_int(pts)
        if len(pts) < 3:
            log.warning("dropping degenerate contour (%d pts)", len(pts))
            return
        xy = np.stack(
            [pts[:, 1].astype(float) - 1.0, pts[:, 0].astype(float) - 1.0],
            axis=1,
        )  # unpad and switch to (x=col, y=row)
        ch = PolyChain(xy, closed=True)
        area = ch.signed_area()
        if abs(area) < min_area:
            log.warning("dropping contour with area %.3f < %.3f", area, min_area)
            return
        want_positive = not hole
        if (area > 0) != want_positive:
            ch = ch.reversed()
        chains.append(ch)

    for comp in range(1, ncomp + 1):
        fg = labels == comp
        rows, cols = np.nonzero(fg)
        r0, c0 = int(rows[0]), int(cols[0])  # raster-order first pixel
        emit(_moore_trace(fg, (r0, c0), (r0, c0 - 1)), hole=False)

        # holes: enclosed 4-connected background components of this component
        sub = np.zeros_like(fg)
        rmin, rmax = rows.min(), rows.max()
        cmin, cmax = cols.min(), cols.max()
        sub[rmin : rmax + 1, cmin : cmax + 1] = True
        bg = sub & ~fg
        bl, nbg = ndimage.label(
            bg, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
        )
        if nbg:
            # background labels touching the bbox frame are not holes
            frame = np.zeros_like(bg)
            frame[rmin, cmin : cmax + 1] = True
            frame[rmax, cmin : cmax + 1] = True
            frame[rmin : rmax + 1, cmin] = True
            frame[rmin : rmax + 1, cmax] = True
            outside = set(np.unique(bl[frame & bg]).tolist()) - {0}
            for hole_id in range(1, nbg + 1):
                if hole_id in outside:
                    continue
                hr, hc = np.nonzero(bl == hole_id)
                h0 = (int(hr[0]), int(hc[0]))  # topmost-leftmost hole pixel
                start = (h0[0] - 1, h0[1])  # its north neighbour is foreground
                if not fg[start]:  # pragma: no cover - guards odd topology
                    log.warning("skipping hole with no northern foreground")
                    continue
                emit(_moore_trace(fg, start, h0), hole=True)
    return chains


# -- protocol enforcement ----------------------------------------------------


def _span_deviation(orig: np.ndarray, i: int, j: int) -> float:
    """Max distance from original vertices strictly between surviving
    vertices i and j (cyclic indices into ``orig``) to chord (orig[i], orig[j])."""
    n = len(orig)
    a, b = orig[i], orig[j]
    worst = 0.0
    k = (i + 1) % n
    while k != j:
        d, _ = point_segment_distance(orig[k], a, b)
        if d > worst:
            worst = d
        k = (k + 1) % n
    return worst


def _violations(pts: np.ndarray, closed: bool, e: float) -> List[int]:
    """Indices of vertices participating in a protocol violation: sharp
    wedge at the vertex or an outgoing segment not longer than e."""
    ch = PolyChain(pts, closed)
    bad = set()
    ang = ch.wedge_angles()
    thresh = math.pi / 2.0 - ANGLE_SLACK
    for i in np.flatnonzero(ang < thresh):
        bad.add(int(i))
    lengths = ch.segment_lengths()
    for k in np.flatnonzero(lengths <= e):
        bad.add(int(k))
        bad.add(int((k + 1) % len(pts)) if closed else int(k + 1))
    return sorted(bad)


def enforce_protocol(chain: PolyChain, e: float) -> PolyChain:
    """Coarsen ``chain`` until every wedge angle is >= 90 degrees and every
    segment is longer than ``e``.

    Vertices are removed greedily (a removal is legal when every simplified
    segment stays within one pixel of the original polyline); the routine is
    idempotent and raises :class:`ProtocolUnsatisfiable` when no legal
    removal can fix the remaining violations.
    """
    orig = np.asarray(chain.points, dtype=np.float64)
    if chain.closed and len(orig) >= 2 and np.allclose(orig[0], orig[-1]):
        orig = orig[:-1]
    n = len(orig)
    if n < (3 if chain.closed else 2):
        raise ProtocolUnsatisfiable("chain too short")
    alive = list(range(n))  # surviving original indices, chain order

    def removable(pos: int) -> bool:
        """True when dropping alive[pos] keeps the chain within budget."""
        if len(alive) <= (3 if chain.closed else 2):
            return False
        if not chain.closed and pos in (0, len(alive) - 1):
            return False
        i = alive[(pos - 1) % len(alive)]
        j = alive[(pos + 1) % len(alive)]
        if i == j:
            return False
        return _span_deviation(orig, i, j) <= HAUSDORFF_BUDGET

    while True:
        pts = orig[alive]
        bad = _violations(pts, chain.closed, e)
        if not bad:
            return PolyChain(pts.copy(), chain.closed)
        # Candidates: the violating vertices plus their immediate neighbours
        # (a sharp wedge is sometimes best fixed one vertex over).
        cand: List[int] = []
        for vi in bad:
            for pos in (vi, (vi - 1) % len(alive), (vi + 1) % len(alive)):
                if pos not in cand:
                    cand.append(pos)
        # Greedy step: remove the candidate leaving the fewest violations.
        # Vertex count strictly decreases, so this terminates in <= n rounds.
        best: Optional[Tuple[int, int]] = None
        for pos in cand:
            if not removable(pos):
                continue
            trial = orig[alive[:pos] + alive[pos + 1 :]]
            score = len(_violations(trial, chain.closed, e))
            if best is None or score < best[0]:
                best = (score, pos)
                if score == 0:
                    break
        if best is None:
            raise ProtocolUnsatisfiable(
                f"{len(bad)} violation(s) remain and no vertex can be merged "
                f"within the {HAUSDORFF_BUDGET:g}px budget"
            )
        alive.pop(best[1])


def protocol_ok(chain: PolyChain, e: float) -> bool:
    """True when the chain already satisfies the angle and length rules."""
    return not _violations(np.asarray(chain.points), chain.closed, e)


# -- explicit chain text format ---------------------------------------------


def load_chains_text(path) -> List[PolyChain]:
    """Chains from text: blocks separated by blank lines, each starting with
    a 'closed' or 'open' line followed by 'x y' lines."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    return parse_chains_text(text, name=str(path))


def parse_chains_text(text: str, name: str = "<string>") -> List[PolyChain]:
    chains: List[PolyChain] = []
    block: List[str] = []

    def flush():
        if not block:
            return
        head = block[0].lower()
        if head not in ("closed", "open"):
            raise ValueError(f"{name}: block must start with closed/open, got {head!r}")
        pts = []
        for ln in block[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"{name}: expected 'x y', got {ln!r}")
            pts.append((float(parts[0]), float(parts[1])))
        if len(pts) < (3 if head == "closed" else 2):
            raise ValueError(f"{name}: chain with {len(pts)} point(s)")
        chains.append(PolyChain(np.array(pts), closed=(head == "closed")))
        block.clear()

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            flush()
            continue
        block.append(line)
    flush()
    return chains


def save_chains_text(path, chains: Sequence[PolyChain]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for k, ch in enumerate(chains):
            if k:
                fh.write("\n")
            fh.write("closed\n" if ch.closed else "open\n")
            for x, y in ch.points:
                fh.write(f"{x:.17g} {y:.17g}\n")
