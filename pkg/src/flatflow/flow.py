"""Explicit time integration of the σ₂ graph flow.

Two discretisations of the same equation live here: a full Cartesian grid
stepper for n = 2, 3 and a rotationally symmetric profile stepper.  Both are
forward Euler with a step limited by the largest parabolicity of the
linearised operator.  The module also carries the space-time rescaling used to
build super- and subsolutions and a harness comparing two ordered runs.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from . import _kernels
from .grid import Grid, GridError, ScalarField, make_grid, read_field_csv, write_field_csv

log = logging.getLogger(__name__)

FLAT_FLOOR = 1e-10
BAND_TOP_G = 0.5
BOUNDARY_ABORT_CELLS = 3
RADIAL_STABILITY = 0.5


class ConfigError(ValueError):
    """A configuration violates one of its invariants."""


class StepError(RuntimeError):
    """An explicit step was refused or produced non-finite values."""


class CFLViolation(StepError):
    pass


class NonFiniteSpeed(StepError):
    pass


class BoundaryProximity(RuntimeError):
    """The interface band came too close to the Dirichlet boundary."""


@dataclass(frozen=True)
class FlowConfig:
    dim: int = 3
    extent: float = 1.2
    points_per_axis: int = 65
    flat_radius: float = 0.5
    nondegeneracy: float = 1.0
    t_end: float = 0.02
    cfl: float = 0.4
    output_every: int = 50
    sigma_clamp: bool = True
    fixed_dt: float | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if not (0 < self.flat_radius < self.extent):
            raise ConfigError(
                f"flat_radius must satisfy 0 < flat_radius < extent (got {self.flat_radius}, extent {self.extent})"
            )
        if not self.nondegeneracy > 0:
            raise ConfigError(f"nondegeneracy must be > 0, got {self.nondegeneracy}")
        if not self.t_end > 0:
            raise ConfigError(f"t_end must be > 0, got {self.t_end}")
        if not (0 < self.cfl <= 1):
            raise ConfigError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.output_every < 1:
            raise ConfigError(f"output_every must be >= 1, got {self.output_every}")
        if self.fixed_dt is not None and not self.fixed_dt > 0:
            raise ConfigError(f"fixed_dt must be > 0, got {self.fixed_dt}")
        try:
            self.grid()
        except GridError as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> Grid:
        return make_grid(self.dim, self.extent, self.points_per_axis)

    def to_dict(self) -> dict:
        return asdict(self)


def generator_profile(r, flat_radius: float, nondegeneracy: float) -> np.ndarray:
    """Radial initial datum: zero on the flat disc, then ``λ u²(1+u)`` with
    ``u = r - ρ₀``.  Its pressure has slope ``√(2λ)`` at the interface."""
    u = np.maximum(np.asarray(r, dtype=float) - flat_radius, 0.0)
    return nondegeneracy * u * u * (1.0 + u)


def initial_field(cfg: FlowConfig) -> ScalarField:
    grid = cfg.grid()
    values = generator_profile(grid.radius(), cfg.flat_radius, cfg.nondegeneracy)
    return ScalarField(grid, values, 0.0, {"step": 0})


# ---------------------------------------------------------------- full grid


def grid_speed(field: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Flow speed and parabolicity trace at interior nodes (compiled route)."""
    values = np.ascontiguousarray(field.values, dtype=float)
    inner = tuple(s - 2 for s in values.shape)
    rhs = np.empty(inner)
    lam = np.empty(inner)
    kernel = _kernels.grid_rhs_3d if field.grid.dim == 3 else _kernels.grid_rhs_2d
    kernel(values, float(field.grid.spacing), rhs, lam)
    return rhs, lam


def cfl_limit(parabolicity_max: float, spacing: float, cfl: float) -> float:
    if parabolicity_max <= 0:
        return math.inf
    return cfl * spacing * spacing / parabolicity_max


def _advance(field: ScalarField, dt: float, rhs: np.ndarray, clamp: bool) -> ScalarField:
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteSpeed(f"non-finite flow speed at t={field.time:.6g}")
    speed = np.maximum(rhs, 0.0) if clamp else rhs
    values = field.values.copy()
    values[(slice(1, -1),) * field.grid.dim] += dt * speed
    meta = {"step": field.meta.get("step", 0) + 1} if "step" in field.meta else {}
    return ScalarField(field.grid, values, field.time + dt, meta)


def step_full(field: ScalarField, dt: float, cfg: FlowConfig) -> ScalarField:
    """One forward-Euler step on the grid; boundary values are left alone."""
    rhs, lam = grid_speed(field)
    limit = cfl_limit(float(lam.max()), field.grid.spacing, cfg.cfl)
    if dt > limit:
        raise CFLViolation(f"dt={dt:.3g} exceeds the CFL limit {limit:.3g} at t={field.time:.6g}")
    return _advance(field, dt, rhs, cfg.sigma_clamp)


def band_boundary_cells(field: ScalarField, band_top: float = BAND_TOP_G) -> int | None:
    """Smallest index distance from a band node (``0 < g <= band_top``) to the
    domain boundary, or None when the band is empty."""
    f = field.values
    mask = (f >= FLAT_FLOOR) & (f <= 0.5 * band_top * band_top)
    if not mask.any():
        return None
    idx = np.argwhere(mask)
    last = field.grid.points_per_axis - 1
    return int(min(idx.min(), last - idx.max()))


@dataclass
class FlowHistory:
    """Snapshots of a grid run.

    ``snapshots`` are the output fields; ``partners[k]`` is the field one step
    after ``snapshots[k]``, kept for forward time differences.
    """

    config: FlowConfig
    snapshots: list[ScalarField] = field(default_factory=list)
    partners: list[ScalarField] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    parabolicity: list[float] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def timeline(self) -> list[ScalarField]:
        """Snapshots and partners merged in time order."""
        merged = {s.meta["step"]: s for s in self.snapshots}
        merged.update({p.meta["step"]: p for p in self.partners})
        return [merged[k] for k in sorted(merged)]


def run_flow(
    cfg: FlowConfig,
    initial: ScalarField | None = None,
    on_output: Callable[[ScalarField, ScalarField], None] | None = None,
    output_times: Sequence[float] | None = None,
    keep_fields: bool = True,
) -> FlowHistory:
    """Evolve from ``initial`` (default: the radial generator) to ``t_end``.

    Output happens every ``cfg.output_every`` steps, or, when
    ``output_times`` is given, exactly at those times (steps are shortened
    to land on them).  Each output passes ``(field, next_field)`` to
    ``on_output``; with ``keep_fields=False`` the history keeps only the step
    log.

    Raises CFLViolation when a forced ``fixed_dt`` breaks the limit,
    NonFiniteSpeed on NaN, and BoundaryProximity if the interface band gets
    within three cells of the boundary.
    """
    current = initial_field(cfg) if initial is None else initial.copy()
    current.meta.setdefault("step", 0)
    history = FlowHistory(cfg)
    step = 0
    h = current.grid.spacing
    tol = 1e-12 * cfg.t_end
    targets = None if output_times is None else sorted(float(t) for t in output_times if t <= cfg.t_end + tol)
    while True:
        rhs, lam = grid_speed(current)
        lam_max = float(lam.max())
        limit = cfl_limit(lam_max, h, cfg.cfl)
        remaining = cfg.t_end - current.time
        done = remaining <= tol
        if cfg.fixed_dt is not None:
            dt = cfg.fixed_dt
            if dt > limit:
                raise CFLViolation(f"fixed dt={dt:.3g} exceeds the CFL limit {limit:.3g} at step {step}")
        else:
            dt = limit
        if targets is None:
            is_output = step % cfg.output_every == 0 or done
        else:
            while targets and targets[0] < current.time - tol:
                targets.pop(0)
            is_output = bool(targets) and abs(targets[0] - current.time) <= tol
            if is_output:
                targets.pop(0)
        if not done:
            dt = min(dt, remaining)
            if targets:
                dt = min(dt, targets[0] - current.time)
        nxt = _advance(current, dt, rhs, cfg.sigma_clamp)
        history.dts.append(float(dt))
        history.parabolicity.append(lam_max)
        if is_output:
            cells = band_boundary_cells(current)
            if cells is not None and cells < BOUNDARY_ABORT_CELLS:
                raise BoundaryProximity(f"interface band is {cells} cells from the boundary at t={current.time:.6g}")
            if keep_fields:
                history.snapshots.append(current)
                history.partners.append(nxt)
            if on_output is not None:
                on_output(current, nxt)
        if done:
            break
        current = nxt
        step += 1
    return history


def save_history(history: FlowHistory, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for fld in history.timeline():
        write_field_csv(fld, directory / f"f_{fld.meta['step']}.csv")
    dts = np.array(history.dts)
    lam = np.array(history.parabolicity)
    h = history.config.grid().spacing
    ratio = dts * lam / (h * h)
    info = {
        "config": history.config.to_dict(),
        "snapshot_steps": [s.meta["step"] for s in history.snapshots],
        "partner_steps": [p.meta["step"] for p in history.partners],
        "dt": [float(x) for x in dts],
        "cfl_diagnostics": {
            "max_parabolicity": [float(x) for x in lam],
            "max_cfl_ratio": float(ratio.max()) if ratio.size else 0.0,
            "steps": int(dts.size),
        },
    }
    (directory / "run.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")


def load_history(directory) -> FlowHistory:
    directory = Path(directory)
    info = json.loads((directory / "run.json").read_text())
    cfg = FlowConfig(**info["config"])
    history = FlowHistory(cfg, dts=list(info["dt"]), parabolicity=list(info["cfl_diagnostics"]["max_parabolicity"]))
    for key, target in (("snapshot_steps", history.snapshots), ("partner_steps", history.partners)):
        for step in info[key]:
            fld = read_field_csv(directory / f"f_{step}.csv")
            fld.meta["step"] = int(step)
            target.append(fld)
    return history


# ------------------------------------------------------------------- radial


@dataclass
class RadialProfile:
    r_samples: np.ndarray
    f_values: np.ndarray
    time: float = 0.0
    dim: int = 3

    def __post_init__(self):
        self.r_samples = np.asarray(self.r_samples, dtype=float)
        self.f_values = np.asarray(self.f_values, dtype=float)
        if self.r_samples.ndim != 1 or self.r_samples.shape != self.f_values.shape:
            raise ValueError("r_samples and f_values must be 1-d arrays of equal length")
        if self.r_samples.size < 3:
            raise ValueError("a radial profile needs at least 3 samples")
        if self.r_samples[0] != 0.0 or np.any(np.diff(self.r_samples) <= 0):
            raise ValueError("r_samples must start at 0 and increase")
        if not np.all(np.isfinite(self.f_values)):
            raise ValueError("f_values must be finite")
        if np.any(self.f_values < 0):
            raise ValueError("f_values must be nonnegative")

    @property
    def spacing(self) -> float:
        return float(self.r_samples[1])

    def copy(self) -> "RadialProfile":
        return RadialProfile(self.r_samples.copy(), self.f_values.copy(), self.time, self.dim)

    def interface_radius(self, floor: float = FLAT_FLOOR) -> float:
        """First radius where f exceeds ``floor``, linearly interpolated."""
        f = self.f_values
        above = np.nonzero(f >= floor)[0]
        if above.size == 0:
            return float(self.r_samples[-1])
        k = int(above[0])
        if k == 0:
            return 0.0
        r0, r1 = self.r_samples[k - 1], self.r_samples[k]
        f0, f1 = f[k - 1], f[k]
        return float(r0 + (floor - f0) / (f1 - f0) * (r1 - r0))


def radial_profile(cfg: FlowConfig, samples: int | None = None) -> RadialProfile:
    """Generator profile on ``[0, extent]`` with the grid's spacing by default."""
    if samples is None:
        samples = (cfg.points_per_axis - 1) // 2 + 1
    r = np.linspace(0.0, cfg.extent, samples)
    return RadialProfile(r, generator_profile(r, cfg.flat_radius, cfg.nondegeneracy), 0.0, cfg.dim)


def _check_uniform(profile: RadialProfile) -> float:
    h = profile.spacing
    if not np.allclose(np.diff(profile.r_samples), h, rtol=1e-9, atol=0):
        raise ValueError("radial stepping needs uniformly spaced samples")
    return h


def radial_speed(profile: RadialProfile) -> tuple[np.ndarray, float]:
    """``σ₂ W`` at every sample (zero at the outer one) and the parabolicity."""
    h = _check_uniform(profile)
    rhs = np.zeros(profile.f_values.size)
    lam = _kernels.radial_rhs(profile.f_values, h, profile.dim, rhs)
    return rhs, float(lam)


def step_radial(profile: RadialProfile, dt: float, clamp: bool = True) -> RadialProfile:
    """One forward-Euler step of the radial reduction; the outer value is held.

    The step must satisfy ``dt <= 0.5 h² / Λ``.  Monotonicity lost beyond
    1e-10 is logged and repaired with a running maximum.
    """
    h = profile.spacing
    rhs, lam = radial_speed(profile)
    limit = cfl_limit(lam, h, RADIAL_STABILITY)
    if dt > limit:
        raise CFLViolation(f"dt={dt:.3g} exceeds the radial CFL limit {limit:.3g}")
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteSpeed("non-finite radial speed")
    speed = np.maximum(rhs, 0.0) if clamp else rhs
    f = profile.f_values + dt * speed
    drop = np.max(np.maximum.accumulate(f) - f)
    if drop > 1e-10:
        log.warning("radial profile lost monotonicity by %.3g; repaired", drop)
    f = np.maximum.accumulate(f)
    return RadialProfile(profile.r_samples, f, profile.time + dt, profile.dim)


def radial_step_limit(profile: RadialProfile, cfl: float = RADIAL_STABILITY) -> float:
    _, lam = radial_speed(profile)
    return cfl_limit(lam, profile.spacing, cfl)


def evolve_radial(
    profile: RadialProfile,
    t_end: float,
    cfl: float = 0.45,
    clamp: bool = True,
    boundary: Callable[[np.ndarray], np.ndarray] | None = None,
    table_points: int = 4097,
    max_steps: int = 10**9,
) -> tuple[RadialProfile, dict]:
    """March the profile to ``t_end`` in compiled code.

    ``cfl`` is relative to ``h²/Λ`` and must stay at or below 0.5.
    ``boundary`` (a vectorised function of time) drives the outer value;
    it is tabulated on ``table_points`` times and interpolated linearly.
    """
    if not (0 < cfl <= RADIAL_STABILITY):
        raise ValueError(f"radial cfl must lie in (0, {RADIAL_STABILITY}], got {cfl}")
    h = _check_uniform(profile)
    f = profile.f_values.copy()
    if boundary is None:
        tt = np.zeros(0)
        tv = np.zeros(0)
    else:
        tt = np.linspace(profile.time, t_end, table_points)
        tv = np.asarray(boundary(tt), dtype=float)
    t, steps, repairs, status = _kernels.radial_march(
        f, h, profile.dim, float(profile.time), float(t_end), float(cfl), bool(clamp), tt, tv, int(max_steps)
    )
    if status == 1:
        raise NonFiniteSpeed(f"non-finite radial speed at t={t:.6g}")
    if status == 2:
        raise StepError(f"radial step budget of {max_steps} exhausted at t={t:.6g}")
    if repairs:
        log.warning("radial march repaired monotonicity %d times", repairs)
    return RadialProfile(profile.r_samples, f, t_end, profile.dim), {"steps": int(steps), "repairs": int(repairs)}


def radial_run(
    profile: RadialProfile, output_times: Sequence[float], cfl: float = 0.45, clamp: bool = True
) -> list[tuple[RadialProfile, RadialProfile]]:
    """Profiles at each output time, each paired with the profile one CFL
    step later (for forward time differences)."""
    pairs = []
    current = profile
    for t_out in output_times:
        if t_out > current.time:
            current, _ = evolve_radial(current, t_out, cfl, clamp)
        dt = radial_step_limit(current, cfl)
        if not math.isfinite(dt):
            dt = 1e-6
        pairs.append((current, step_radial(current, dt, clamp)))
    return pairs


def embed_profile(profile: RadialProfile, grid: Grid) -> ScalarField:
    """Spread a radial profile onto a Cartesian grid by linear interpolation."""
    r = grid.radius()
    if r.max() > profile.r_samples[-1] + 1e-12:
        raise ValueError("grid corners lie outside the radial profile")
    values = np.interp(r, profile.r_samples, profile.f_values)
    return ScalarField(grid, values, profile.time)


# ------------------------------------------------------------------ scaling


@dataclass(frozen=True)
class ScalingParams:
    """Rates of the rescaling ``f((1+aε)x, (1+bε)t) / (1+cε)``.

    ``offset_rate`` is the time-shift constant of the non-degenerate speed
    argument; it does not enter the rescaled function.
    """

    space_rate: float
    time_rate: float
    height_rate: float
    offset_rate: float = 0.0
    epsilon: float = 0.01

    def __post_init__(self):
        if not (0 <= self.epsilon <= 1e-2):
            raise ValueError(f"epsilon must lie in [0, 1e-2], got {self.epsilon}")


def _time_bracket(history: Sequence[ScalarField], t: float) -> np.ndarray:
    times = np.array([h.time for h in history])
    if t < times[0] - 1e-14 or t > times[-1] + 1e-14:
        raise ValueError(f"time {t:.6g} outside stored data [{times[0]:.6g}, {times[-1]:.6g}]")
    t = min(max(t, times[0]), times[-1])
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), len(times) - 1)
    if k == len(times) - 1 or times[k] == t:
        return history[k].values
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1 - w) * history[k].values + w * history[k + 1].values


def scale_function(
    history: Sequence[ScalarField], time: float, params: ScalingParams, region: np.ndarray | None = None
) -> ScalarField:
    """The rescaled field at ``time`` on the original grid.

    Spatial interpolation is multilinear and temporal interpolation linear
    between stored fields.  With ``region`` given, only those nodes are
    rescaled and every other node keeps the unscaled value at ``time``.
    """
    history = sorted(history, key=lambda s: s.time)
    grid = history[0].grid
    eps = params.epsilon
    base = _time_bracket(history, time)
    if eps == 0:
        return ScalarField(grid, base.copy(), time)
    data = _time_bracket(history, (1 + params.time_rate * eps) * time)
    coords = grid.coordinates() * (1 + params.space_rate * eps)
    mask = np.ones(grid.shape, dtype=bool) if region is None else np.asarray(region, dtype=bool)
    pts = coords[mask]
    index = (pts + grid.extent) / grid.spacing
    if np.any(index < -1e-9) or np.any(index > grid.points_per_axis - 1 + 1e-9):
        raise ValueError("rescaled position outside the stored grid")
    index = np.clip(index, 0, grid.points_per_axis - 1)
    sampled = map_coordinates(data, index.T, order=1, mode="nearest")
    out = base.copy()
    out[mask] = sampled / (1 + params.height_rate * eps)
    return ScalarField(grid, out, time)


def supersolution_margin(gradient: np.ndarray, params: ScalingParams) -> np.ndarray:
    """Smallest slack of the supersolution inequality over all ``(i,j,k,l)``.

    Evaluates ``(b + c - 4a) - (c - a)(5s/(1+s) - 2Q_ik - 2Q_jl)`` with
    ``s = |∇f_ε|²`` and ``Q_ik = (s δ_ik - p_i p_k)/((1+s) δ_ik - p_i p_k)``
    for every index quadruple; off-diagonal ratios (including 0/0) are 1.
    Nonnegative output means the inequality holds.
    """
    p = np.asarray(gradient, dtype=float)
    n = p.shape[-1]
    s = np.sum(p * p, axis=-1)
    eye = np.eye(n)
    outer = p[..., :, None] * p[..., None, :]
    num = s[..., None, None] * eye - outer
    den = (1 + s)[..., None, None] * eye - outer
    q = np.ones(p.shape[:-1] + (n, n))
    diag = np.broadcast_to(eye.astype(bool), q.shape)
    q[diag] = (num / np.where(diag, den, 1.0))[diag]
    a, b, c = params.space_rate, params.time_rate, params.height_rate
    frac = (5 * s / (1 + s))[..., None, None, None, None]
    qik = q[..., :, None, :, None]
    qjl = q[..., None, :, None, :]
    slack = (b + c - 4 * a) - (c - a) * (frac - 2 * qik - 2 * qjl)
    return slack.min(axis=(-4, -3, -2, -1))


@dataclass(frozen=True)
class ComparisonReport:
    times: np.ndarray
    violations: np.ndarray
    tolerance: float

    @property
    def max_violation(self) -> float:
        return float(self.violations.max()) if self.violations.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.violations <= self.tolerance))


def comparison_check(
    run_a: Sequence[ScalarField], run_b: Sequence[ScalarField], regions: Sequence[np.ndarray] | None = None
) -> ComparisonReport:
    """Largest excess ``max(f_a - f_b, 0)`` per time; passes at ``5 h²``.

    ``regions`` optionally restricts each comparison to a node mask.
    """
    if len(run_a) != len(run_b):
        raise ValueError("runs have different numbers of fields")
    if not run_a:
        raise ValueError("empty runs")
    grid = run_a[0].grid
    out = []
    for k, (fa, fb) in enumerate(zip(run_a, run_b)):
        if fa.grid != grid or fb.grid != grid:
            raise GridError("comparison needs both runs on one grid")
        if abs(fa.time - fb.time) > 1e-12 * max(1.0, abs(fa.time)):
            raise ValueError(f"time stamps differ at index {k}: {fa.time} vs {fb.time}")
        excess = np.maximum(fa.values - fb.values, 0.0)
        if regions is not None:
            excess = np.where(regions[k], excess, 0.0)
        out.append(float(excess.max()))
    times = np.array([f.time for f in run_a])
    return ComparisonReport(times, np.array(out), 5.0 * grid.spacing**2)
