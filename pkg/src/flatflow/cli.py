"""Batch front-end: ``run``, ``verify``, ``plot`` and ``sweep``.

Configuration is a flat ``key = value`` file plus ``--key value`` overrides
on the command line.  Exit codes: 0 success, 1 a verification FAIL, 2 bad
configuration or missing artifacts, 3 CFL or NaN abort, 4 boundary abort.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .estimates import (
    BandStats,
    band_stats,
    estimates_report,
    monge_ampere_band_check,
    radial_band_stats,
    read_estimates_csv,
    refinement_changes,
    write_estimates_csv,
    write_report,
)
from .flow import (
    BoundaryProximity,
    CFLViolation,
    ConfigError,
    FlowConfig,
    NonFiniteSpeed,
    StepError,
    _advance,
    grid_speed,
    load_history,
    radial_profile,
    radial_run,
    run_flow,
    save_history,
)
from .grid import ScalarField
from .hodograph import (
    PatchError,
    build_patch,
    dictionary_check,
    g_jets_at_patch,
    holder_seminorms,
    pressure_field,
    write_patch_csv,
)
from .interface import (
    EmptyInterface,
    extract_interface,
    fit_speed_bounds,
    read_interface_csv,
    support_check,
    write_interface_csv,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_STEP, EXIT_BOUNDARY = 0, 1, 2, 3, 4
SPEED_RATIO_SPREAD = 1e2
ARTIFACTS = ("run.json", "interface.csv", "estimates.csv", "speed_report.json", "estimates_report.json")


class ArtifactError(RuntimeError):
    """A run directory lacks a file or holds too little data."""


@dataclass
class ExperimentConfig:
    flow: FlowConfig = field(default_factory=FlowConfig)
    bands: list = field(default_factory=lambda: [(0.05, 0.5)])
    eps_levels: list = field(default_factory=lambda: [0.1, 0.2])
    holder_alphas: list = field(default_factory=lambda: [0.1, 0.25, 0.5])
    seed: int = 0
    output_dir: str = "run"
    emit_svg: bool = True
    snapshots: int = 21
    hodograph_eta: float = 0.0
    hodograph_times: int = 9
    sweep_levels: int = 2
    sweep_mode: str = "radial"

    def __post_init__(self):
        if self.snapshots < 2:
            raise ConfigError(f"snapshots must be >= 2, got {self.snapshots}")
        for lo, hi in self.bands:
            if not (0 <= lo < hi <= 1):
                raise ConfigError(f"each band must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
        if any(not 0 < e < 1 for e in self.eps_levels):
            raise ConfigError("eps_levels must lie in (0, 1)")
        if any(not 0 < a <= 1 for a in self.holder_alphas):
            raise ConfigError("holder_alphas must lie in (0, 1]")
        if self.hodograph_eta < 0:
            raise ConfigError("hodograph_eta must be >= 0 (0 disables the patch)")
        if self.hodograph_eta > 0 and self.hodograph_eta**2 >= self.flow.t_end:
            raise ConfigError("hodograph_eta² must be below t_end so the time window fits in the run")
        if self.hodograph_times < 3:
            raise ConfigError("hodograph_times must be >= 3")
        if self.sweep_levels < 2:
            raise ConfigError("sweep_levels must be >= 2")
        if self.sweep_mode not in ("radial", "grid"):
            raise ConfigError(f"sweep_mode must be 'radial' or 'grid', got {self.sweep_mode!r}")

    def output_times(self) -> np.ndarray:
        t_end = self.flow.t_end
        times = np.linspace(0.0, t_end, self.snapshots)
        if self.hodograph_eta > 0:
            window = np.linspace(t_end - self.hodograph_eta**2, t_end, self.hodograph_times)
            # drop base times that duplicate a window time up to roundoff
            near = np.abs(times[:, None] - window[None, :]).min(axis=1) <= 1e-9 * t_end
            times = np.union1d(times[~near], window)
        return times

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "flow"}
        data["bands"] = [list(b) for b in self.bands]
        data["flow"] = self.flow.to_dict()
        return data


# ------------------------------------------------------------------- config


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _parse_bands(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        lo, _, hi = item.partition(":")
        out.append((float(lo), float(hi)))
    return out


FLOW_KEYS = {f.name: f.type for f in fields(FlowConfig)}
EXPERIMENT_PARSERS = {
    "bands": _parse_bands,
    "eps_levels": _parse_floats,
    "holder_alphas": _parse_floats,
    "seed": int,
    "output_dir": str,
    "emit_svg": _parse_bool,
    "snapshots": int,
    "hodograph_eta": float,
    "hodograph_times": int,
    "sweep_levels": int,
    "sweep_mode": str,
}


def _parse_flow_value(key: str, text: str):
    kind = str(FLOW_KEYS[key])
    if "bool" in kind:
        return _parse_bool(text)
    if "None" in kind:
        return None if text.strip().lower() in ("", "none") else float(text)
    if "int" in kind:
        return int(text)
    return float(text)


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        entries[key.strip()] = value.strip()
    return entries


def parse_overrides(tokens: Sequence[str]) -> dict[str, str]:
    """``--key value`` or ``--key=value`` pairs."""
    entries = {}
    items = list(tokens)
    i = 0
    while i < len(items):
        tok = items[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key, sep, value = tok[2:].partition("=")
        if not sep:
            if i + 1 >= len(items):
                raise ConfigError(f"override --{key} needs a value")
            value = items[i + 1]
            i += 1
        entries[key.replace("-", "_")] = value
        i += 1
    return entries


def build_config(entries: dict[str, str]) -> ExperimentConfig:
    flow_kw, exp_kw = {}, {}
    for key, text in entries.items():
        try:
            if key in FLOW_KEYS:
                flow_kw[key] = _parse_flow_value(key, text)
            elif key in EXPERIMENT_PARSERS:
                exp_kw[key] = EXPERIMENT_PARSERS[key](text)
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
    return ExperimentConfig(flow=FlowConfig(**flow_kw), **exp_kw)


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    entries = read_config_file(path) if path else {}
    entries.update(parse_overrides(overrides))
    return build_config(entries)


def apply_thread_cap() -> None:
    cap = os.environ.get("FLATFLOW_THREADS")
    if not cap:
        return
    import numba

    numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


# ---------------------------------------------------------------------- run


def _dump(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _band_key(band) -> str:
    return f"{band[0]!r}:{band[1]!r}"


def _pre_vanishing(stats: list[BandStats], vanished_at: float | None) -> list[BandStats]:
    if vanished_at is None:
        return stats
    return [s for s in stats if s.time < vanished_at]


def summarise_estimates(stats: list[BandStats], bands, t_end: float, vanished_at: float | None) -> dict:
    """Per-band run-level report over the snapshots before the flat side
    vanished."""
    out = {"vanished_at": vanished_at}
    for band in bands:
        chosen = [s for s in stats if (s.lo, s.hi) == tuple(band)]
        chosen = _pre_vanishing(chosen, vanished_at)
        if not chosen:
            out[_band_key(band)] = {"error": "no snapshots in band"}
            continue
        window_end = chosen[-1].time
        rep = estimates_report(chosen, window_end if vanished_at is not None else t_end)
        rep["speed_ratio"]["pass"] = bool(rep["speed_ratio"]["pass"] and rep["speed_ratio"]["spread"] <= SPEED_RATIO_SPREAD)
        rep["window_end"] = window_end
        out[_band_key(band)] = rep
    return out


def speed_fit_payload(snapshots, vanished_at: float | None) -> dict:
    usable = [s for s in snapshots if vanished_at is None or s.time < vanished_at]
    positive = [s.time for s in usable if s.time > 0]
    if not positive:
        raise ValueError("speed fit needs snapshots after t = 0")
    t0 = positive[0]
    report = fit_speed_bounds(usable, t0)
    data = report.to_dict()
    data["vanished_at"] = vanished_at
    data["snapshots_used"] = len([s for s in usable if s.time > t0])
    return data


def hodograph_payload(g_fields: list[ScalarField], cfg: ExperimentConfig) -> tuple[dict, object]:
    last = g_fields[-1]
    f_last = ScalarField(last.grid, 0.5 * last.values**2, last.time)
    axis = np.zeros(last.grid.dim)
    axis[0] = 1.0
    snap = extract_interface(f_last, directions=axis[None, :])
    base = axis * snap.gamma[0]
    patch = build_patch(g_fields, base, cfg.hodograph_eta)
    check = dictionary_check(patch, g_jets_at_patch(patch, g_fields))
    reports = [holder_seminorms(patch, a, seed=cfg.seed) for a in cfg.holder_alphas]
    data = {
        "base_point": [float(x) for x in base],
        "eta": cfg.hodograph_eta,
        "dictionary": {"mismatch": dict(sorted(check.mismatch.items())), "worst": check.worst, "pass": check.passed},
        "h_z_range": [float(patch.derivatives["z"].min()), float(patch.derivatives["z"].max())],
        "reports": [r.to_dict() for r in reports],
    }
    return data, patch


def cmd_run(cfg: ExperimentConfig) -> Path:
    """Execute the flow and write every artifact into ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stats: list[BandStats] = []
    interfaces = []
    state = {"vanished_at": None}

    def on_output(current: ScalarField, nxt: ScalarField) -> None:
        for band in cfg.bands:
            try:
                stats.append(band_stats(current, nxt, band))
            except ValueError:
                pass
        if state["vanished_at"] is None:
            try:
                interfaces.append(extract_interface(current, cfg.eps_levels))
            except EmptyInterface:
                state["vanished_at"] = float(current.time)

    history = run_flow(cfg.flow, on_output=on_output, output_times=cfg.output_times())
    save_history(history, out)
    write_interface_csv(interfaces, out / "interface.csv")
    write_estimates_csv(stats, out / "estimates.csv")
    vanished = state["vanished_at"]
    try:
        speed = speed_fit_payload(interfaces, vanished)
    except ValueError as exc:
        speed = {"error": str(exc), "vanished_at": vanished}
    _dump(speed, out / "speed_report.json")
    report = summarise_estimates(stats, cfg.bands, cfg.flow.t_end, vanished)
    checks = {}
    if interfaces:
        snap = interfaces[-1]
        last_flat = next(s for s in history.snapshots if s.time == snap.time)
        sup = support_check(last_flat, float(snap.gamma.min()), tuple(cfg.bands[0]))
        checks["support"] = {"time": last_flat.time, "min_support": sup.min_support, "threshold": sup.threshold, "pass": sup.passed}
        try:
            ma = monge_ampere_band_check(last_flat)
            checks["monge_ampere"] = {"ratio_min": ma.ratio_min, "ratio_max": ma.ratio_max, "pass": ma.passed}
        except ValueError as exc:
            checks["monge_ampere"] = {"error": str(exc)}
    report["checks"] = checks
    write_report(report, out / "estimates_report.json")
    if cfg.hodograph_eta > 0:
        t_end = cfg.flow.t_end
        window = [pressure_field(s) for s in history.snapshots if s.time >= t_end - cfg.hodograph_eta**2 - 1e-12]
        try:
            data, patch = hodograph_payload(window, cfg)
            write_patch_csv(patch, out / "patch_0.csv")
            _dump(data, out / "holder_report.json")
        except (PatchError, EmptyInterface, ValueError) as exc:
            _dump({"error": str(exc)}, out / "holder_report.json")
    _dump(cfg.to_dict(), out / "experiment.json")
    if cfg.emit_svg:
        cmd_plot(out)
    return out


# ------------------------------------------------------------------- verify


def _require(run_dir: Path, names=ARTIFACTS) -> None:
    missing = [n for n in names if not (run_dir / n).is_file()]
    if missing:
        raise ArtifactError(f"{run_dir}: missing {', '.join(missing)}")


def _line(ok: bool, name: str, detail: str) -> tuple[bool, str]:
    return ok, f"{'PASS' if ok else 'FAIL'} {name}: {detail}"


def verify_lines(run_dir) -> list[tuple[bool, str]]:
    """One ``(ok, line)`` per property; reads the directory, never writes."""
    run_dir = Path(run_dir)
    _require(run_dir)
    try:
        history = load_history(run_dir)
    except FileNotFoundError as exc:
        raise ArtifactError(str(exc)) from exc
    info = json.loads((run_dir / "run.json").read_text())
    cfg = history.config
    lines = []

    # flow
    worst = 0.0
    for snap, partner in zip(history.snapshots, history.partners):
        step = snap.meta["step"]
        rhs, _ = grid_speed(snap)
        replay = _advance(snap, history.dts[step], rhs, cfg.sigma_clamp)
        scale = max(1.0, float(np.abs(partner.values).max()))
        worst = max(worst, float(np.abs(replay.values - partner.values).max()) / scale)
    lines.append(_line(worst <= 1e-12, "flow.snapshot_consistency", f"max replay gap {worst:.3g}"))
    ratio = info["cfl_diagnostics"]["max_cfl_ratio"]
    lines.append(_line(ratio <= cfg.cfl * (1 + 1e-9), "flow.cfl", f"max dt·Λ/h² = {ratio:.4g} (limit {cfg.cfl})"))
    low = min(float(s.values.min()) for s in history.snapshots)
    lines.append(_line(low >= 0.0, "flow.nonnegative", f"min f = {low:.3g}"))
    drops = [float((a.values - b.values).max()) for a, b in zip(history.snapshots, history.snapshots[1:])]
    drop = max(drops) if drops else 0.0
    lines.append(_line(drop <= 1e-12, "flow.monotone_in_time", f"largest decrease {drop:.3g}"))

    # interface
    snaps = read_interface_csv(run_dir / "interface.csv")
    nest = all(s.nested(1e-12) for s in snaps)
    lines.append(_line(nest, "interface.levels_nested", f"{len(snaps)} snapshots"))
    grow = max((float((b.gamma - a.gamma).max()) for a, b in zip(snaps, snaps[1:])), default=0.0)
    lines.append(_line(grow <= 1e-12, "interface.flat_side_shrinks", f"largest radius increase {grow:.3g}"))
    stored = json.loads((run_dir / "speed_report.json").read_text())
    speed = speed_fit_payload(snaps, stored.get("vanished_at"))
    lines.append(_line(speed["pass_finite"], "interface.finite_speed", f"lower envelope {speed['lower_env']:.4g}"))
    lines.append(
        _line(speed["pass_nondegenerate"], "interface.nondegenerate_speed", f"upper envelope {speed['upper_env']:.4g}")
    )
    same = "lower_env" in stored and math.isclose(stored["lower_env"], speed["lower_env"], rel_tol=1e-12)
    lines.append(_line(same, "interface.report_consistency", "speed_report.json matches interface.csv"))

    # estimates
    stats = read_estimates_csv(run_dir / "estimates.csv")
    stored_est = json.loads((run_dir / "estimates_report.json").read_text())
    bands = [tuple(float(x) for x in key.split(":")) for key in stored_est if ":" in key]
    recomputed = summarise_estimates(stats, bands, cfg.t_end, stored_est.get("vanished_at"))
    for band in bands:
        key = _band_key(band)
        rep = recomputed[key]
        if "error" in rep:
            lines.append(_line(False, f"estimates[{key}]", rep["error"]))
            continue
        for name in ("gradient", "gt_positive", "tangential_laplacian", "decay", "r2_lower_bound", "speed_ratio"):
            part = rep[name]
            detail = ", ".join(f"{k}={v:.4g}" for k, v in sorted(part.items()) if isinstance(v, float))
            lines.append(_line(part["pass"], f"estimates[{key}].{name}", detail))
        stored_band = {k: v for k, v in stored_est[key].items()}
        consistent = json.dumps(stored_band, sort_keys=True) == json.dumps(json.loads(json.dumps(rep)), sort_keys=True)
        lines.append(_line(consistent, f"estimates[{key}].report_consistency", "estimates_report.json matches estimates.csv"))
    for name, part in sorted(stored_est.get("checks", {}).items()):
        if "error" in part:
            lines.append(_line(False, f"estimates.{name}", part["error"]))
        else:
            lines.append(_line(part["pass"], f"estimates.{name}", ", ".join(f"{k}={v:.4g}" for k, v in sorted(part.items()) if isinstance(v, float))))

    # hodograph
    holder_path = run_dir / "holder_report.json"
    if holder_path.is_file():
        holder = json.loads(holder_path.read_text())
        if "error" in holder:
            lines.append(_line(False, "hodograph.patch", holder["error"]))
        else:
            lines.append(_line(holder["dictionary"]["pass"], "hodograph.dictionary", f"worst mismatch {holder['dictionary']['worst']:.3g}"))
            lo, hi = holder["h_z_range"]
            lines.append(_line(0 < lo <= hi < math.inf, "hodograph.h_z_bounded", f"h_z in [{lo:.3g}, {hi:.3g}]"))
            for rep in holder["reports"]:
                vals = rep["seminorms"].values()
                ok = all(math.isfinite(v) and v >= 0 for v in vals)
                lines.append(_line(ok, f"hodograph.holder[alpha={rep['alpha']}]", f"max seminorm {max(vals):.4g}"))
    return lines


def cmd_verify(run_dir) -> int:
    try:
        lines = verify_lines(run_dir)
    except (ArtifactError, ValueError) as exc:
        print(f"ERROR {exc}")
        return EXIT_CONFIG
    for _, text in lines:
        print(text)
    if not Path(run_dir, "holder_report.json").is_file():
        print("SKIP hodograph: no patch in this run")
    return EXIT_FAIL if any(not ok for ok, _ in lines) else EXIT_OK


# --------------------------------------------------------------------- plot


SVG_W, SVG_H, MARGIN = 640, 400, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def svg_plot(path, title: str, series, xlabel: str, ylabel: str, logy: bool = False, note: str = "") -> None:
    """Line plot of ``series`` = [(label, xs, ys, width)] as a standalone SVG."""
    pts = []
    for _, xs, ys, _ in series:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        ok = np.isfinite(xs) & np.isfinite(ys) & ((ys > 0) if logy else True)
        pts.append((xs[ok], np.log10(ys[ok]) if logy else ys[ok]))
    allx = np.concatenate([p[0] for p in pts]) if pts else np.zeros(0)
    ally = np.concatenate([p[1] for p in pts]) if pts else np.zeros(0)
    x0, x1 = (float(allx.min()), float(allx.max())) if allx.size else (0.0, 1.0)
    y0, y1 = (float(ally.min()), float(ally.max())) if ally.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = SVG_W - 2 * MARGIN, SVG_H - 2 * MARGIN

    def sx(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return SVG_H - MARGIN - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">',
        f'<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>',
        f'<text x="{SVG_W // 2}" y="24" text-anchor="middle" font-size="16">{_escape(title)}</text>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{SVG_W // 2}" y="{SVG_H - 15}" text-anchor="middle" font-size="12">{_escape(xlabel)}</text>',
        f'<text x="15" y="{SVG_H // 2}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {SVG_H // 2})">'
        f"{_escape(ylabel + (' (log10)' if logy else ''))}</text>",
    ]
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<text x="{_fmt(sx(xv))}" y="{SVG_H - MARGIN + 16}" text-anchor="middle" font-size="10">{_fmt(xv)}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{_fmt(sy(yv) + 3)}" text-anchor="end" font-size="10">{_fmt(yv)}</text>')
    legend = 0
    for i, ((label, _, _, width), (xs, ys)) in enumerate(zip(series, pts)):
        if xs.size == 0:
            continue
        colour = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="{width}" points="{coords}"/>')
        if label:
            ly = MARGIN + 14 + 14 * legend
            out.append(f'<text x="{SVG_W - MARGIN - 4}" y="{ly}" text-anchor="end" font-size="11" fill="{colour}">{_escape(label)}</text>')
            legend += 1
    if note:
        out.append(f'<text x="{SVG_W // 2}" y="{SVG_H // 2}" text-anchor="middle" font-size="12">{_escape(note)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def cmd_plot(run_dir) -> list[Path]:
    """Four SVG figures from the run's CSV and JSON artifacts."""
    run_dir = Path(run_dir)
    _require(run_dir, ("interface.csv", "estimates.csv", "speed_report.json"))
    snaps = read_interface_csv(run_dir / "interface.csv")
    stats = read_estimates_csv(run_dir / "estimates.csv")
    speed = json.loads((run_dir / "speed_report.json").read_text())
    paths = []

    times = np.array([s.time for s in snaps])
    gam = np.stack([s.gamma for s in snaps])
    series = [("", times, gam[:, k], 0.5) for k in range(gam.shape[1])]
    if "t0" in speed:
        t0 = speed["t0"]
        ref = gam[np.argmin(np.abs(times - t0))]
        tt = times[times >= t0]
        series.append(("lower envelope", tt, ref.min() * np.exp(speed["lower_env"] * (tt - t0)), 2))
        series.append(("upper envelope", tt, ref.max() * np.exp(speed["upper_env"] * (tt - t0)), 2))
    p = run_dir / "interface_radius.svg"
    svg_plot(p, "flat-side radius per direction", series, "t", "radius", logy=True)
    paths.append(p)

    first = (stats[0].lo, stats[0].hi)
    band = [s for s in stats if (s.lo, s.hi) == first]
    bt = [s.time for s in band]
    series = [
        (name, bt, [getattr(s, name) for s in band], 1.5)
        for name in ("grad_min", "grad_max", "tan_lap_min", "tan_lap_max", "f_nn_min")
    ]
    p = run_dir / "band_extremes.svg"
    svg_plot(p, f"band extremes on {first[0]:g} <= g <= {first[1]:g}", series, "t", "value")
    paths.append(p)

    p = run_dir / "r2_min.svg"
    svg_plot(p, "minimum of the Hessian pair sum", [("r2_min", bt, [s.r2_min for s in band], 1.5)], "t", "r2_min")
    paths.append(p)

    p = run_dir / "holder.svg"
    holder_path = run_dir / "holder_report.json"
    holder = json.loads(holder_path.read_text()) if holder_path.is_file() else {}
    if "refinement" in holder:
        levels = holder["refinement"]
        names = sorted(levels[0]["seminorms"])
        xs = [lv["points_per_axis"] for lv in levels]
        series = [(n, xs, [lv["seminorms"][n] for lv in levels], 1.5) for n in names]
        svg_plot(p, f"seminorms (alpha={levels[0]['alpha']}) under refinement", series, "points per axis", "seminorm")
    elif holder.get("reports"):
        reps = holder["reports"]
        names = sorted(reps[0]["seminorms"])
        xs = [r["alpha"] for r in reps]
        series = [(n, xs, [r["seminorms"][n] for r in reps], 1.5) for n in names]
        svg_plot(p, "seminorms across alpha", series, "alpha", "seminorm")
    else:
        svg_plot(p, "seminorms", [], "alpha", "seminorm", note="no hodograph patch in this run")
    paths.append(p)
    return paths


# -------------------------------------------------------------------- sweep


def cmd_sweep(cfg: ExperimentConfig) -> Path:
    """Refinement doubling: the same experiment at ``sweep_levels`` resolutions.

    ``radial`` mode uses the rotationally symmetric stepper; ``grid`` mode
    repeats the full run (with the hodograph patch when enabled).
    """
    out = Path(cfg.output_dir) / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    base = cfg.flow.points_per_axis
    levels = []
    holder_levels = []
    for k in range(cfg.sweep_levels):
        ppa = (base - 1) * 2**k + 1
        flow = replace(cfg.flow, points_per_axis=ppa)
        if cfg.sweep_mode == "radial":
            profile = radial_profile(flow)
            pairs = radial_run(profile, np.linspace(0.0, flow.t_end, cfg.snapshots))
            stats, vanished = [], None
            for before, after in pairs:
                if vanished is None and before.interface_radius() <= 0.0:
                    vanished = before.time
                for band in cfg.bands:
                    try:
                        stats.append(radial_band_stats(before, after, band))
                    except ValueError:
                        pass
        else:
            sub = replace(cfg, flow=flow, output_dir=str(out / f"level_{k}"), emit_svg=False)
            cmd_run(sub)
            stats = read_estimates_csv(out / f"level_{k}" / "estimates.csv")
            vanished = json.loads((out / f"level_{k}" / "estimates_report.json").read_text())["vanished_at"]
            holder_file = out / f"level_{k}" / "holder_report.json"
            if holder_file.is_file():
                holder = json.loads(holder_file.read_text())
                for rep in holder.get("reports", []):
                    if rep["alpha"] == 0.25 or len(holder["reports"]) == 1:
                        holder_levels.append({"points_per_axis": ppa, **rep})
        write_estimates_csv(stats, out / f"estimates_{ppa}.csv")
        levels.append({"points_per_axis": ppa, "report": summarise_estimates(stats, cfg.bands, flow.t_end, vanished)})
    changes = []
    for a, b in zip(levels, levels[1:]):
        per_band = {}
        for band in cfg.bands:
            key = _band_key(band)
            ra, rb = a["report"][key], b["report"][key]
            if "error" not in ra and "error" not in rb:
                per_band[key] = refinement_changes(ra, rb)
        changes.append({"coarse": a["points_per_axis"], "fine": b["points_per_axis"], "changes": per_band})
    _dump({"mode": cfg.sweep_mode, "levels": levels, "refinement": changes}, out / "sweep_report.json")
    if holder_levels:
        ratios = []
        for a, b in zip(holder_levels, holder_levels[1:]):
            ratios.append({n: b["seminorms"][n] / a["seminorms"][n] if a["seminorms"][n] > 0 else math.inf for n in sorted(a["seminorms"])})
        _dump({"refinement": holder_levels, "ratios": ratios}, out / "holder_report.json")
    return out


# --------------------------------------------------------------------- main


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="flatflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        sub.add_parser(name, usage=f"flatflow {name} [CONFIG] [--key value ...]")
    for name in ("verify", "plot"):
        p = sub.add_parser(name)
        p.add_argument("run_dir")
    args, extra = parser.parse_known_args(argv)
    apply_thread_cap()
    if args.command in ("verify", "plot") and extra:
        print(f"ERROR unexpected arguments {extra}")
        return EXIT_CONFIG
    if args.command == "verify":
        return cmd_verify(args.run_dir)
    if args.command == "plot":
        try:
            for path in cmd_plot(args.run_dir):
                print(path)
        except (ArtifactError, ValueError) as exc:
            print(f"ERROR {exc}")
            return EXIT_CONFIG
        return EXIT_OK
    config_path = None
    if extra and not extra[0].startswith("--"):
        config_path, extra = extra[0], extra[1:]
    try:
        cfg = load_config(config_path, extra)
    except (ConfigError, OSError) as exc:
        print(f"ERROR {exc}")
        return EXIT_CONFIG
    try:
        out = cmd_run(cfg) if args.command == "run" else cmd_sweep(cfg)
    except (CFLViolation, NonFiniteSpeed, StepError) as exc:
        print(f"ERROR {exc}")
        return EXIT_STEP
    except BoundaryProximity as exc:
        print(f"ERROR {exc}")
        return EXIT_BOUNDARY
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
