"""Free-boundary extraction along rays and the interface speed fits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .grid import ScalarField

FLAT_FLOOR = 1e-10
RAYS_2D = 64
RAYS_3D = 128
MIN_GRADIENT = 1e-8


class EmptyInterface(ValueError):
    """The flat side no longer contains the origin."""


def ray_directions(dim: int) -> np.ndarray:
    """64 equispaced angles in the plane, 128 Fibonacci points on the sphere."""
    if dim == 2:
        theta = 2 * np.pi * np.arange(RAYS_2D) / RAYS_2D
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if dim == 3:
        k = np.arange(RAYS_3D) + 0.5
        z = 1 - 2 * k / RAYS_3D
        phi = np.pi * (3 - np.sqrt(5)) * k
        rho = np.sqrt(1 - z * z)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    raise ValueError(f"no ray set for dimension {dim}")


@dataclass
class InterfaceSnapshot:
    time: float
    directions: np.ndarray
    gamma: np.ndarray
    gamma_eps: dict[float, np.ndarray]
    flat_measure: float
    normals: np.ndarray
    spacing: float = 0.0

    def nested(self, tol: float = 0.0) -> bool:
        """Levels nest outward: ``γ <= γ_ε1 <= γ_ε2`` for ``ε1 <= ε2``."""
        prev = self.gamma
        for eps in sorted(self.gamma_eps):
            cur = self.gamma_eps[eps]
            if np.any(cur < prev - tol):
                return False
            prev = cur
        return True


def _ray_values(values: np.ndarray, field: ScalarField, direction: np.ndarray, radii: np.ndarray) -> np.ndarray:
    grid = field.grid
    pts = radii[:, None] * direction[None, :]
    index = (pts + grid.extent) / grid.spacing
    return map_coordinates(values, index.T, order=1, mode="nearest")


def _first_crossing(radii: np.ndarray, samples: np.ndarray, level: float) -> float:
    above = np.nonzero(samples >= level)[0]
    if above.size == 0:
        return np.nan
    k = int(above[0])
    if k == 0:
        return 0.0
    f0, f1 = samples[k - 1], samples[k]
    return float(radii[k - 1] + (level - f0) / (f1 - f0) * (radii[k] - radii[k - 1]))


def extract_interface(
    field: ScalarField, eps_levels: Sequence[float] = (0.1,), floor: float = FLAT_FLOOR, directions=None
) -> InterfaceSnapshot:
    """Radius of the flat side and of the levels ``g = ε`` along each ray.

    Each radius is the first crossing of the level along the ray, with f
    sampled multilinearly at quarter-cell steps and the crossing located by
    linear interpolation between bracketing samples.
    """
    grid = field.grid
    centre = (grid.center_index,) * grid.dim
    if field.values[centre] >= floor:
        raise EmptyInterface(f"origin is not flat at t={field.time:.6g}; the flat side has vanished")
    if directions is None:
        directions = ray_directions(grid.dim)
    h = grid.spacing
    grads = np.stack(np.gradient(field.values, h), axis=0)
    gamma = np.empty(len(directions))
    levels = sorted(float(e) for e in eps_levels)
    gamma_eps = {e: np.empty(len(directions)) for e in levels}
    normals = np.full((len(directions), grid.dim), np.nan)
    for k, d in enumerate(directions):
        reach = grid.extent / np.max(np.abs(d)) * (1 - 1e-9)
        radii = np.arange(0.0, reach, 0.25 * h)
        samples = _ray_values(field.values, field, d, radii)
        gamma[k] = _first_crossing(radii, samples, floor)
        for e in levels:
            gamma_eps[e][k] = _first_crossing(radii, samples, 0.5 * e * e)
        probe = gamma_eps[levels[0]][k] if levels else gamma[k]
        if np.isfinite(probe):
            at = np.array([probe]) * 1.0
            gvec = np.array([_ray_values(grads[a], field, d, at)[0] for a in range(grid.dim)])
            norm = np.linalg.norm(gvec)
            if norm >= MIN_GRADIENT:
                normals[k] = gvec / norm
    if np.any(~np.isfinite(gamma)):
        raise EmptyInterface("a ray never leaves the flat side inside the domain")
    flat = float(np.count_nonzero(field.values < floor)) * h**grid.dim
    return InterfaceSnapshot(float(field.time), np.asarray(directions), gamma, gamma_eps, flat, normals, h)


@dataclass
class SpeedFitReport:
    t0: float
    slopes: np.ndarray
    lower_env: float
    upper_env: float
    finite_constant: float
    decay_rate: float
    pass_finite: bool
    pass_nondegenerate: bool
    eps_slopes: dict[float, np.ndarray] = field(default_factory=dict)
    eps_lower_env: dict[float, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "lower_env": self.lower_env,
            "upper_env": self.upper_env,
            "finite_constant": self.finite_constant,
            "decay_rate": self.decay_rate,
            "pass_finite": self.pass_finite,
            "pass_nondegenerate": self.pass_nondegenerate,
            "slopes": [float(s) for s in self.slopes],
            "eps_lower_env": {repr(k): v for k, v in sorted(self.eps_lower_env.items())},
        }


def _log_slopes(times: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Least-squares slope of log(radius) against time, per column."""
    logs = np.log(radii)
    tc = times - times.mean()
    return (tc[:, None] * (logs - logs.mean(axis=0))).sum(axis=0) / (tc * tc).sum()


def fit_speed_bounds(
    snapshots: Sequence[InterfaceSnapshot], t0: float, min_decay: float = 0.05, max_decay: float = 50.0
) -> SpeedFitReport:
    """Fit ``log γ(θ, t)`` linearly in t over snapshots after ``t0``.

    The finite-speed bound ``γ(t) >= exp(-(t-t0)/(B t0)) γ(t0)`` holds with
    ``B = 1/(t0 |lower_env|)``; it passes when ``lower_env >= -max_decay``.
    The non-degenerate bound asks for a uniform exponential decay rate: it
    passes when ``upper_env <= -min_decay``.
    """
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    used = [s for s in snapshots if s.time > t0]
    if len(used) < 5:
        raise ValueError(f"speed fit needs at least 5 snapshots after t0={t0:.4g}, got {len(used)}")
    times = np.array([s.time for s in used])
    gam = np.stack([s.gamma for s in used])
    if np.any(gam <= 0):
        raise ValueError("speed fit needs positive radii; the flat side has collapsed along some ray")
    slopes = _log_slopes(times, gam)
    lower, upper = float(slopes.min()), float(slopes.max())
    finite_constant = float(1.0 / (t0 * abs(lower))) if lower < 0 else float("inf")
    eps_slopes, eps_lower = {}, {}
    for eps in used[0].gamma_eps:
        ge = np.stack([s.gamma_eps[eps] for s in used])
        if np.all(np.isfinite(ge)) and np.all(ge > 0):
            eps_slopes[eps] = _log_slopes(times, ge)
            eps_lower[eps] = float(eps_slopes[eps].min())
    return SpeedFitReport(
        t0=float(t0),
        slopes=slopes,
        lower_env=lower,
        upper_env=upper,
        finite_constant=finite_constant,
        decay_rate=float(-upper),
        pass_finite=bool(np.all(np.isfinite(slopes)) and lower >= -max_decay),
        pass_nondegenerate=bool(upper <= -min_decay),
        eps_slopes=eps_slopes,
        eps_lower_env=eps_lower,
    )


@dataclass
class SupportReport:
    min_support: float
    threshold: float
    samples: int
    skipped: int
    passed: bool


def _g_normals(field: ScalarField, band: tuple[float, float]):
    g = np.sqrt(2 * np.maximum(field.values, 0.0))
    grads = np.stack(np.gradient(g, field.grid.spacing), axis=-1)
    mask = (g >= band[0]) & (g <= band[1]) & field.grid.interior_mask()
    pts = field.grid.coordinates()[mask]
    gv = grads[mask]
    norm = np.linalg.norm(gv, axis=1)
    return pts, gv, norm


def support_check(field: ScalarField, flat_radius: float, band: tuple[float, float] = (0.05, 0.5)) -> SupportReport:
    """Minimum of ``P · ν(P)`` over band nodes, ``ν = ∇g/|∇g|``.

    ``flat_radius`` is the radius of a disc about the origin inside the
    current flat side.  Passes when the minimum is at least
    ``flat_radius - 3 h``.
    """
    pts, gv, norm = _g_normals(field, band)
    ok = norm >= MIN_GRADIENT
    if not ok.any():
        raise ValueError("no band sample with a defined normal")
    support = np.einsum("ij,ij->i", pts[ok], gv[ok] / norm[ok, None])
    threshold = flat_radius - 3 * field.grid.spacing
    m = float(support.min())
    return SupportReport(m, threshold, int(ok.sum()), int((~ok).sum()), bool(m >= threshold))


def cone_check(field: ScalarField, base_point, radius: float, band: tuple[float, float] = (0.0, 0.5)) -> float:
    """Minimum of ``n₀ · ν(P)`` over band nodes within ``radius`` of the
    boundary point ``base_point``, with ``n₀ = P₀/|P₀|``."""
    base = np.asarray(base_point, dtype=float)
    n0 = base / np.linalg.norm(base)
    pts, gv, norm = _g_normals(field, (max(band[0], 1e-12), band[1]))
    near = (np.linalg.norm(pts - base, axis=1) <= radius) & (norm >= MIN_GRADIENT)
    if not near.any():
        raise ValueError("no band nodes near the base point")
    return float(np.min(gv[near] @ n0 / norm[near]))


def write_interface_csv(snapshots: Sequence[InterfaceSnapshot], path) -> None:
    levels = sorted(snapshots[0].gamma_eps) if snapshots else []
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "theta_index", "gamma"] + [f"gamma_eps_{e!r}" for e in levels])
        for s in snapshots:
            for k in range(len(s.gamma)):
                w.writerow([repr(s.time), k, repr(float(s.gamma[k]))] + [repr(float(s.gamma_eps[e][k])) for e in levels])


def read_interface_csv(path) -> list[InterfaceSnapshot]:
    """Rebuild radii tables from ``interface.csv`` (directions and normals are
    not stored and come back empty)."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no interface rows")
    header = rows[0]
    levels = [float(c[len("gamma_eps_"):]) for c in header[3:]]
    by_time: dict[float, list] = {}
    for row in rows[1:]:
        by_time.setdefault(float(row[0]), []).append(row)
    out = []
    for t in sorted(by_time):
        rs = sorted(by_time[t], key=lambda r: int(r[1]))
        gamma = np.array([float(r[2]) for r in rs])
        ge = {e: np.array([float(r[3 + i]) for r in rs]) for i, e in enumerate(levels)}
        out.append(InterfaceSnapshot(t, np.zeros((0,)), gamma, ge, float("nan"), np.zeros((0,))))
    return out


def write_speed_report(report: SpeedFitReport, path, extra: dict | None = None) -> None:
    data = report.to_dict()
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
