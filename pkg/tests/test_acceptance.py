"""Release acceptance gate.

Eleven numbered criteria covering analytic bounds, fixture quality,
watertightness, determinism, the template table, ablation directionality,
aspect ratios, angle histograms, the heat solver, and runtime scaling.  Each
test prints exactly one verdict line (run with ``-s`` to see them all; a
failing test always shows its line in the report).
"""
import math
import os
import time

import numpy as np
import pytest

from sbmt import fixtures
from sbmt.boundary import load_bitmap
from sbmt.fem import (assemble, dirichlet_vertices, gaussian_field, heat_run,
                      solve_harmonic)
from sbmt.grid import build_grid, recommended_edge_length
from sbmt.halfedge import validate_watertight
from sbmt.preprocess import Thresholds
from sbmt.quality import (IDEAL_AR, angle_histogram, quality_report,
                          run_ablation, theoretical_bounds)
from sbmt.remesh import (chain_embedding_defects, check_path_independence,
                         prepare, remesh)
from sbmt.templates import verify_table

FIXDIR = os.path.join(os.path.dirname(__file__), "fixtures")

FIXTURE_FILES = {
    "star": "star_100.pgm",
    "droplet": "droplet_200.pgm",
    "y": "y_200.pgm",
}


def _verdict(num: int, ok: bool, detail: str) -> None:
    line = f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def fixture_runs():
    """Default-threshold remesh of all three fixtures, with wall times."""
    out = {}
    for name, fname in FIXTURE_FILES.items():
        bmp = load_bitmap(os.path.join(FIXDIR, fname))
        t0 = time.perf_counter()
        res = remesh(bmp)
        out[name] = (res, time.perf_counter() - t0)
    return out


def test_criterion_01_analytic_angle_and_area_bounds():
    theta, area = theoretical_bounds(Thresholds())
    ok = 10.0 <= theta <= 10.2 and 1.13e-2 <= area <= 1.15e-2
    _verdict(1, ok, f"theta={theta:.4f} deg (want [10.0, 10.2]), "
                    f"area={area:.6e} (want [1.13e-2, 1.15e-2])")


def test_criterion_02_recommended_edge_length():
    e1 = recommended_edge_length(math.pi)
    e2 = recommended_edge_length(math.pi / 2)
    ok = 0.591 <= e1 <= 0.593 and 1.183 <= e2 <= 1.185
    _verdict(2, ok, f"e(pi)={e1:.6f} (want [0.591, 0.593]), "
                    f"e(pi/2)={e2:.6f} (want [1.183, 1.185])")


def test_criterion_03_fixture_quality(fixture_runs):
    details, ok = [], True
    for name, (res, secs) in fixture_runs.items():
        r = quality_report(res.mesh)
        good = (r.min_angle > 10.1 and r.min_area > 0.0114
                and r.sliver_count == 0 and r.equilateral_ratio >= 0.85
                and secs < 30.0)
        ok &= good
        details.append(f"{name}: angle={r.min_angle:.3f} "
                       f"area={r.min_area:.3e} slivers={r.sliver_count} "
                       f"eq={r.equilateral_ratio:.3f} t={secs:.1f}s")
    _verdict(3, ok, "; ".join(details))


def test_criterion_04_watertight_and_chains_embedded(fixture_runs):
    details, ok = [], True
    for name, (res, _) in fixture_runs.items():
        wt = validate_watertight(res.mesh).defect_count
        emb = len(chain_embedding_defects(res))
        ok &= wt == 0 and emb == 0
        details.append(f"{name}: watertight defects={wt}, "
                       f"embedding defects={emb}")
    _verdict(4, ok, "; ".join(details))


def test_criterion_05_schedule_order_independence():
    t0 = time.perf_counter()
    details, ok = [], True
    for name, fname in FIXTURE_FILES.items():
        job = prepare(load_bitmap(os.path.join(FIXDIR, fname)))
        good, msg = check_path_independence(job, n_shuffles=5, seed=0)
        ok &= good
        details.append(f"{name}: {'identical' if good else msg}")
    secs = time.perf_counter() - t0
    ok &= secs < 300.0
    _verdict(5, ok, f"5 shuffles x 3 fixtures in {secs:.1f}s; "
             + "; ".join(details))


def test_criterion_06_template_table_audit():
    defects = verify_table()
    _verdict(6, not defects,
             f"{len(defects)} defects" + (f": {defects[:3]}" if defects else ""))


def test_criterion_07_ablation_directionality():
    t0 = time.perf_counter()
    rows = run_ablation(load_bitmap(os.path.join(FIXDIR, FIXTURE_FILES["star"])))
    secs = time.perf_counter() - t0
    _, area_bound = theoretical_bounds(Thresholds())
    sl = {k: v.report.sliver_count for k, v in rows.items()}
    small = {k: v.report.min_area < area_bound for k, v in rows.items()}
    ok = (sl["E1"] == 0
          and all(sl[k] >= 1 and small[k] for k in ("E3", "E4", "E5"))
          and sl["E2"] <= sl["E5"]
          and secs < 180.0)
    _verdict(7, ok, f"slivers {sl}, min-area<bound "
                    f"{ {k: small[k] for k in ('E2', 'E3', 'E4', 'E5')} }, "
                    f"{secs:.1f}s")


def test_criterion_08_aspect_ratio_floor(fixture_runs):
    g = build_grid((0.0, 0.0, 10.0, 8.0), Thresholds().e)
    rg = quality_report(g)
    raw_ok = (abs(rg.AR_median - IDEAL_AR) <= 1e-9
              and abs(rg.AR_max - IDEAL_AR) <= 1e-9)
    star = quality_report(fixture_runs["star"][0].mesh)
    star_ok = abs(star.AR_median - IDEAL_AR) <= 1e-3
    _verdict(8, raw_ok and star_ok,
             f"raw grid AR median={rg.AR_median:.12f} max={rg.AR_max:.12f} "
             f"(ideal {IDEAL_AR:.12f}); star AR median={star.AR_median:.6f}")


def test_criterion_09_histogram_mode_and_tail(fixture_runs):
    theta, _ = theoretical_bounds(Thresholds())
    details, ok = [], True
    for name, (res, _) in fixture_runs.items():
        h = angle_histogram(res.mesh)
        below = h.mass_below(theta)
        good = h.mode_center in (59.0, 61.0) and below == 0
        ok &= good
        details.append(f"{name}: mode={h.mode_center:.0f} below={below:.0f}")
    _verdict(9, ok, "; ".join(details))


def test_criterion_10_heat_solver(fixture_runs):
    res, _ = fixture_runs["star"]
    mesh = res.mesh
    walls = dirichlet_vertices(mesh, res.job.chains)
    sys_ = assemble(mesh, dirichlet=walls)
    u0 = gaussian_field(mesh, amplitude=100.0, sigma=5.0)
    run = heat_run(sys_, u0, alpha=500.0, dt=1e-3, n_steps=500)
    peaks_ok = bool(np.all(np.diff(run.peaks) < 0))
    energy_ok = bool(np.all(np.diff(run.energies)
                            <= 1e-9 * max(1.0, run.energies[0])))

    sheet = fixtures.symmetric_sheet(8, 7, 0.7)
    ssys = assemble(sheet)  # hull Dirichlet
    g = 2.0 * sheet.vertices[:, 0] - 3.0 * sheet.vertices[:, 1] + 1.0
    u = solve_harmonic(ssys, g)
    affine_err = float(np.max(np.abs(u.values - g)))

    s0 = gaussian_field(sheet, amplitude=100.0, sigma=1.5, center=(0.0, 2.0))
    srun = heat_run(assemble(sheet), s0, alpha=5.0, dt=1e-3, n_steps=50)
    order = np.lexsort((sheet.vertices[:, 1], np.round(-sheet.vertices[:, 0], 9)))
    mirror = np.lexsort((sheet.vertices[:, 1], np.round(sheet.vertices[:, 0], 9)))
    sym_err = float(np.max(np.abs(srun.field.values[order]
                                  - srun.field.values[mirror])))

    ok = (peaks_ok and energy_ok and affine_err <= 1e-6 and sym_err <= 1e-8)
    _verdict(10, ok,
             f"peak {run.peaks[0]:.2f}->{run.peaks[-1]:.2f} strict-dec="
             f"{peaks_ok}, energy mono={energy_ok}, affine err="
             f"{affine_err:.2e} (<=1e-6), mirror err={sym_err:.2e} (<=1e-8)")


def test_criterion_11_subquadratic_scaling():
    sizes, faces, times = (100, 200, 400), [], []
    for px in sizes:
        bmp = load_bitmap(os.path.join(FIXDIR, f"star_{px}.pgm"))
        t0 = time.perf_counter()
        res = remesh(bmp)
        times.append(time.perf_counter() - t0)
        faces.append(res.mesh.n_faces)
    expo = float(np.polyfit(np.log(faces), np.log(times), 1)[0])
    ok = expo < 1.3
    _verdict(11, ok, "faces " + str(faces) + ", times "
             + str([f"{t:.2f}s" for t in times])
             + f", fit exponent={expo:.3f} (<1.3)")
