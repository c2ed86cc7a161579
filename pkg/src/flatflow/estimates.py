"""Monitors for the derivative bounds on the band ``lo <= g <= hi``.

Every quantity is read off discrete data: jets from central differences,
``g_t`` from a forward difference between two consecutive snapshots.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .flow import RadialProfile
from .frame import adapted_frame, adapted_frames
from .grid import ScalarField, stencil_jets
from .pressure import PressureJet

__all__ = [
    "BandStats",
    "adapted_frame",
    "band_stats",
    "radial_band_stats",
    "monge_ampere_band_check",
    "MongeAmpereReport",
    "estimates_report",
    "write_estimates_csv",
    "read_estimates_csv",
    "refinement_changes",
    "write_report",
    "pressure_crosscheck",
]

DEFAULT_BAND = (0.05, 0.5)
MIN_BAND_NODES = 30
GT_FLOOR = 1e-8


@dataclass
class BandStats:
    time: float
    lo: float
    hi: float
    nodes: int
    sparse: bool
    grad_min: float
    grad_max: float
    gt_min: float
    gt_max: float
    gt_negative: int
    tan_lap_min: float
    tan_lap_max: float
    r2_min: float
    f_nn_min: float
    f_tt_over_g_max: float
    f_tn_over_sqrtg_max: float
    speed_ratio_min: float
    speed_ratio_max: float


def _check_band(band):
    lo, hi = band
    if not (0 <= lo < hi <= 1):
        raise ValueError(f"band must satisfy 0 <= lo < hi <= 1, got {band}")


def _summarise(time, band, g, grad_g, hess_g, hess_f, g_t) -> BandStats:
    if g.size == 0:
        raise ValueError(f"empty band {band} at t={time:.6g}")
    frames = adapted_frames(grad_g)
    gh = np.einsum("...ai,...ij,...bj->...ab", frames, hess_g, frames)
    fh = np.einsum("...ai,...ij,...bj->...ab", frames, hess_f, frames)
    tan_lap = np.trace(gh[:, 1:, 1:], axis1=1, axis2=2)
    r2 = np.einsum("nii,njj->n", hess_g, hess_g) - np.einsum("nij,nij->n", hess_g, hess_g)
    f_nn = fh[:, 0, 0]
    f_tt = np.trace(fh[:, 1:, 1:], axis1=1, axis2=2) / g
    f_tn = np.max(np.abs(fh[:, 0, 1:]), axis=1) / np.sqrt(g)
    slope = np.linalg.norm(grad_g, axis=1)
    moving = g_t > GT_FLOOR
    ratio = slope[moving] / g_t[moving]
    return BandStats(
        time=float(time),
        lo=float(band[0]),
        hi=float(band[1]),
        nodes=int(g.size),
        sparse=bool(g.size < MIN_BAND_NODES),
        grad_min=float(slope.min()),
        grad_max=float(slope.max()),
        gt_min=float(g_t.min()),
        gt_max=float(g_t.max()),
        gt_negative=int(np.count_nonzero(g_t < 0)),
        tan_lap_min=float(tan_lap.min()),
        tan_lap_max=float(tan_lap.max()),
        r2_min=float(r2.min()),
        f_nn_min=float(f_nn.min()),
        f_tt_over_g_max=float(f_tt.max()),
        f_tn_over_sqrtg_max=float(f_tn.max()),
        speed_ratio_min=float(ratio.min()) if ratio.size else math.nan,
        speed_ratio_max=float(ratio.max()) if ratio.size else math.nan,
    )


def band_stats(before: ScalarField, after: ScalarField, band: tuple[float, float] = DEFAULT_BAND) -> BandStats:
    """Band extremes at ``before.time`` using ``after`` for ``g_t``.

    When both fields carry a ``step`` entry in ``meta`` they must be one step
    apart.
    """
    _check_band(band)
    if before.grid != after.grid:
        raise ValueError("snapshots live on different grids")
    if not after.time > before.time:
        raise ValueError("snapshots are not in time order")
    sa, sb = before.meta.get("step"), after.meta.get("step")
    if sa is not None and sb is not None and sb != sa + 1:
        raise ValueError(f"snapshots are not consecutive (steps {sa} and {sb})")
    h = before.grid.spacing
    f0 = np.maximum(before.values, 0.0)
    g0 = np.sqrt(2 * f0)
    g1 = np.sqrt(2 * np.maximum(after.values, 0.0))
    fj = stencil_jets(f0, h)
    inner = (slice(1, -1),) * before.grid.dim
    g = g0[inner]
    sel = (g >= band[0]) & (g <= band[1]) & (g > 0)
    g_sel = g[sel]
    # transform f-differences (g >= lo > 0 on the band)
    grad_g = fj.gradient[sel] / g_sel[:, None]
    hess_g = (fj.hessian[sel] - np.einsum("ni,nj->nij", grad_g, grad_g)) / g_sel[:, None, None]
    g_t = (g1[inner][sel] - g_sel) / (after.time - before.time)
    return _summarise(before.time, band, g_sel, grad_g, hess_g, fj.hessian[sel], g_t)


def radial_band_stats(
    before: RadialProfile, after: RadialProfile, band: tuple[float, float] = DEFAULT_BAND
) -> BandStats:
    """The same monitors for a rotationally symmetric profile.

    The radial direction is the normal; the ``n-1`` tangential directions
    share the curvature ``f'/r`` of the sphere through the sample.
    """
    _check_band(band)
    if not after.time > before.time:
        raise ValueError("profiles are not in time order")
    n = before.dim
    r = before.r_samples
    h = before.spacing
    f = before.f_values
    k = np.arange(1, r.size - 1)
    fp = (f[k + 1] - f[k - 1]) / (2 * h)
    fpp = (f[k + 1] - 2 * f[k] + f[k - 1]) / (h * h)
    g_all = np.sqrt(2 * np.maximum(f[k], 0.0))
    sel = (g_all >= band[0]) & (g_all <= band[1]) & (g_all > 0)
    k, fp, fpp, g = k[sel], fp[sel], fpp[sel], g_all[sel]
    rr = r[k]
    gp = fp / g
    gpp = (fpp - gp * gp) / g
    m = g.size
    grad_g = np.zeros((m, n))
    grad_g[:, 0] = gp
    hess_g = np.zeros((m, n, n))
    hess_f = np.zeros((m, n, n))
    hess_g[:, 0, 0] = gpp
    hess_f[:, 0, 0] = fpp
    for i in range(1, n):
        hess_g[:, i, i] = gp / rr
        hess_f[:, i, i] = fp / rr
    g1 = np.sqrt(2 * np.maximum(after.f_values[k], 0.0))
    g_t = (g1 - g) / (after.time - before.time)
    return _summarise(before.time, band, g, grad_g, hess_g, hess_f, g_t)


@dataclass
class MongeAmpereReport:
    ratio_min: float
    ratio_max: float
    nodes: int
    passed: bool


def monge_ampere_band_check(field: ScalarField, band: tuple[float, float] = (0.02, 0.5)) -> MongeAmpereReport:
    """Extremes of ``Σ(f_ii f_jj - f_ij²) / (2 g W)`` over band nodes.

    Passes when the minimum is positive and ``max/min <= 1e3``.
    """
    _check_band(band)
    h = field.grid.spacing
    f = np.maximum(field.values, 0.0)
    fj = stencil_jets(f, h)
    g = np.sqrt(2 * fj.value)
    sel = (g > band[0]) & (g <= band[1])
    if not sel.any():
        raise ValueError(f"empty band {band}")
    hess = fj.hessian[sel]
    pairs = np.einsum("nii,njj->n", hess, hess) - np.einsum("nij,nij->n", hess, hess)
    w = np.sqrt(1 + np.sum(fj.gradient[sel] ** 2, axis=1))
    ratio = pairs / (2 * g[sel] * w)
    lo, hi = float(ratio.min()), float(ratio.max())
    return MongeAmpereReport(lo, hi, int(sel.sum()), bool(lo > 0 and hi / lo <= 1e3))


def _refinement_change(a: float, b: float) -> float:
    return abs(b - a) / max(abs(a), 1e-300)


def estimates_report(stats: Sequence[BandStats], t_end: float, gt_from: float = 0.2) -> dict:
    """Run-level constants and pass flags for the band monitors."""
    if not stats:
        raise ValueError("no band statistics")
    late = [s for s in stats if s.time >= gt_from * t_end]
    grad_lo = min(s.grad_min for s in stats)
    grad_hi = max(s.grad_max for s in stats)
    ratio_lo = min(s.speed_ratio_min for s in late) if late else math.nan
    ratio_hi = max(s.speed_ratio_max for s in late) if late else math.nan
    tan_lo = min(s.tan_lap_min for s in stats)
    tan_hi = max(s.tan_lap_max for s in stats)
    report = {
        "gradient": {"min": grad_lo, "max": grad_hi, "pass": bool(grad_lo > 0 and math.isfinite(grad_hi))},
        "gt_positive": {
            "from_time": gt_from * t_end,
            "min": min(s.gt_min for s in late) if late else math.nan,
            "pass": bool(late and all(s.gt_min > 0 for s in late)),
        },
        "tangential_laplacian": {"min": tan_lo, "max": tan_hi, "pass": bool(tan_lo > 0 and math.isfinite(tan_hi))},
        "decay": {
            "f_nn_min": min(s.f_nn_min for s in stats),
            "f_tt_over_g_max": max(s.f_tt_over_g_max for s in stats),
            "f_tn_over_sqrtg_max": max(s.f_tn_over_sqrtg_max for s in stats),
        },
        "r2_lower_bound": {"min": min(s.r2_min for s in stats)},
        "speed_ratio": {
            "min": ratio_lo,
            "max": ratio_hi,
            "spread": ratio_hi / ratio_lo if ratio_lo > 0 else math.inf,
        },
    }
    d = report["decay"]
    d["pass"] = bool(d["f_nn_min"] > 0 and math.isfinite(d["f_tt_over_g_max"]) and math.isfinite(d["f_tn_over_sqrtg_max"]))
    report["r2_lower_bound"]["pass"] = bool(math.isfinite(report["r2_lower_bound"]["min"]))
    sr = report["speed_ratio"]
    sr["pass"] = bool(ratio_lo > 0 and math.isfinite(ratio_hi))
    return report


def refinement_changes(coarse: dict, fine: dict) -> dict:
    """Relative change of each run-level constant between two reports."""
    keys = {
        "grad_min": ("gradient", "min"),
        "grad_max": ("gradient", "max"),
        "r2_min": ("r2_lower_bound", "min"),
        "f_nn_min": ("decay", "f_nn_min"),
        "f_tt_over_g_max": ("decay", "f_tt_over_g_max"),
        "f_tn_over_sqrtg_max": ("decay", "f_tn_over_sqrtg_max"),
        "tan_lap_min": ("tangential_laplacian", "min"),
        "tan_lap_max": ("tangential_laplacian", "max"),
    }
    return {k: _refinement_change(coarse[a][b], fine[a][b]) for k, (a, b) in keys.items()}


def write_estimates_csv(stats: Sequence[BandStats], path) -> None:
    names = [f.name for f in fields(BandStats)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for s in stats:
            row = asdict(s)
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in names])


def read_estimates_csv(path) -> list[BandStats]:
    out = []
    types = {f.name: f.type for f in fields(BandStats)}
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k, v in row.items():
                t = types[k]
                if t in ("int", int):
                    kw[k] = int(v)
                elif t in ("bool", bool):
                    kw[k] = v == "True"
                else:
                    kw[k] = float(v)
            out.append(BandStats(**kw))
    if not out:
        raise ValueError(f"{path}: no rows")
    return out


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")


def pressure_crosscheck(before: ScalarField, after: ScalarField, band=DEFAULT_BAND) -> float:
    """Median relative gap between the forward-difference ``g_t`` and the
    pressure equation evaluated on the band."""
    from .grid import Jet2
    from .pressure import pressure_jet, pressure_rhs

    h = before.grid.spacing
    f0 = np.maximum(before.values, 0.0)
    fj = stencil_jets(f0, h)
    g = np.sqrt(2 * fj.value)
    sel = (g >= band[0]) & (g <= band[1]) & (g > 0)
    pj: PressureJet = pressure_jet(Jet2(fj.value[sel], fj.gradient[sel], fj.hessian[sel]))
    inner = (slice(1, -1),) * before.grid.dim
    g1 = np.sqrt(2 * np.maximum(after.values[inner][sel], 0.0))
    g_t = (g1 - g[sel]) / (after.time - before.time)
    predicted = pressure_rhs(pj)
    return float(np.median(np.abs(g_t - predicted) / np.maximum(np.abs(predicted), 1e-12)))
