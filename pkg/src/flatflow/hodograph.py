"""Hodograph patches: the free boundary straightened by swapping ``x₁`` and the
pressure value.

Along each line parallel to the normal ``n₀`` at a boundary point the
pressure is increasing, so ``g(x₁, y, t) = z`` can be solved for
``x₁ = h(z, y, t)``.  A patch stores ``h`` on a regular ``(z, y, t)`` lattice
over the parabolic box ``0 <= z <= η²``, ``|y - y₀| <= η``,
``t₀ - η² <= t <= t₀``.  Array axes are ordered ``(z, y_2, ..., y_n, t)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import Akima1DInterpolator, CubicSpline, PchipInterpolator, RegularGridInterpolator
from scipy.ndimage import map_coordinates
from scipy.sparse.linalg import spsolve

from .frame import adapted_frame
from .grid import ScalarField, stencil_jets

POSITIVE_FLOOR = 1e-12
DICTIONARY_TOL = 0.05
ABSOLUTE_BELOW = 1.0
MIN_PAIRS = 100
DENSE_PAIRS = 10_000


INVERTERS = {
    "pchip": PchipInterpolator,
    "spline": CubicSpline,
    "makima": lambda x, y: Akima1DInterpolator(x, y, method="makima"),
}


class PatchError(ValueError):
    """The pressure is not monotone along a patch line."""


def pressure_field(f_field: ScalarField) -> ScalarField:
    """``g = sqrt(2 f)`` as a field (negative roundoff clipped)."""
    return ScalarField(f_field.grid, np.sqrt(2 * np.maximum(f_field.values, 0.0)), f_field.time, dict(f_field.meta))


@dataclass
class HodographPatch:
    z_samples: np.ndarray
    y_axes: tuple
    times: np.ndarray
    h_values: np.ndarray
    frame: np.ndarray = field(default_factory=lambda: np.eye(1))
    eta: float = 0.0

    @property
    def tangential_dim(self) -> int:
        return len(self.y_axes)

    def coordinates(self) -> list[np.ndarray]:
        return [self.z_samples, *self.y_axes, self.times]

    @cached_property
    def derivatives(self) -> dict:
        """Finite-difference derivatives on the patch lattice.

        Keys: ``t``, ``z``, ``zz``, and lists ``y[i]``, ``zy[i]``,
        ``yy[i][j]`` over tangential indices.
        """
        coords = self.coordinates()
        h = self.h_values
        m = self.tangential_dim
        first = np.gradient(h, *coords, edge_order=2)
        d = {"z": first[0], "y": first[1 : 1 + m], "t": first[-1]}
        dz = np.gradient(d["z"], *coords, edge_order=2)
        d["zz"] = dz[0]
        d["zy"] = dz[1 : 1 + m]
        d["yy"] = []
        for i in range(m):
            di = np.gradient(d["y"][i], *coords, edge_order=2)
            d["yy"].append(di[1 : 1 + m])
        return d

    @property
    def calI(self) -> np.ndarray:
        """``h_z² + z² + z² Σ h_i²``."""
        d = self.derivatives
        z = self.z_samples.reshape((-1,) + (1,) * (self.h_values.ndim - 1))
        return d["z"] ** 2 + z**2 + z**2 * sum(hy**2 for hy in d["y"])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.coordinates(), indexing="ij")


def _sample(values: np.ndarray, field: ScalarField, points: np.ndarray) -> np.ndarray:
    grid = field.grid
    index = (points + grid.extent) / grid.spacing
    return map_coordinates(values, index.reshape(-1, grid.dim).T, order=1, mode="nearest").reshape(points.shape[:-1])


def _invert_line(s: np.ndarray, g: np.ndarray, z: np.ndarray, where: str, anchor: float, method: str = "pchip") -> np.ndarray:
    # walk from the sample nearest the base point to the last flat sample
    k = int(np.argmin(np.abs(s - anchor)))
    if g[k] > POSITIVE_FLOOR:
        while k > 0 and g[k - 1] > POSITIVE_FLOOR:
            k -= 1
        if k == 0:
            raise PatchError(f"{where}: no flat sample behind the base point")
    else:
        while k < g.size and g[k] <= POSITIVE_FLOOR:
            k += 1
        if k >= g.size - 1:
            raise PatchError(f"{where}: pressure never becomes positive along the line")
    k1 = k
    top = z[-1]
    beyond = np.nonzero(g[k1:] > top)[0]
    if beyond.size == 0:
        raise PatchError(f"{where}: line too short to reach z = {top:.4g}")
    k2 = min(k1 + int(beyond[0]) + 1, g.size - 1)
    gs, ss = g[k1 : k2 + 1], s[k1 : k2 + 1]
    if np.any(np.diff(gs) <= 0):
        bad = k1 + int(np.argmin(np.diff(gs)))
        raise PatchError(f"{where}: pressure not increasing near s = {s[bad]:.4g} (gradient lower bound fails)")
    # zero crossing from the first two positive samples
    s0 = ss[0] - gs[0] * (ss[1] - ss[0]) / (gs[1] - gs[0])
    if k1 > 0:
        s0 = max(s0, s[k1 - 1])
    knots_g = np.concatenate([[0.0], gs])
    knots_s = np.concatenate([[s0], ss])
    if gs[0] <= 0:
        knots_g, knots_s = gs, ss
    return INVERTERS[method](knots_g, knots_s)(z)


def build_patch(
    g_history: Sequence[ScalarField],
    base_point,
    eta: float,
    z_count: int = 17,
    y_count: int = 17,
    reach: float | None = None,
    method: str = "pchip",
) -> HodographPatch:
    """Invert ``g`` along lines parallel to ``n₀ = P₀/|P₀|``.

    ``g_history`` holds pressure fields; those with
    ``t₀ - η² <= t <= t₀`` (``t₀`` the last time) form the time axis, and at
    least three are needed.  Lines are sampled at the grid spacing and ``h``
    comes from monotone cubic interpolation through the positive samples plus
    the extrapolated zero crossing.  The patch lattice (``z_count`` by
    ``y_count`` per tangential axis) is fixed in physical units, so patches
    from refined grids sit on the same lattice.
    """
    history = sorted(g_history, key=lambda s: s.time)
    t0 = history[-1].time
    window = [s for s in history if s.time >= t0 - eta * eta - 1e-12]
    if len(window) < 3:
        raise ValueError(f"patch needs >= 3 fields in [t0 - eta², t0], got {len(window)}")
    grid = window[0].grid
    base = np.asarray(base_point, dtype=float)
    frame = adapted_frame(base)
    n0 = frame[0]
    h = grid.spacing
    radius = float(base @ n0)
    offsets = np.linspace(-eta, eta, y_count)
    m = grid.dim - 1
    y_axes = tuple(offsets.copy() for _ in range(m))
    if reach is None:
        reach = max(4 * eta, 6 * h)
    # line samples aligned with the node lattice along n0
    s_lo = radius - reach
    s_hi = radius + reach
    k_lo = int(np.floor((s_lo + grid.extent) / h))
    k_hi = int(np.ceil((s_hi + grid.extent) / h))
    s = -grid.extent + np.arange(k_lo, k_hi + 1) * h
    s = s[(s >= -grid.extent) & (s <= grid.extent)]
    z = np.linspace(0.0, eta * eta, z_count)
    ymesh = np.stack(np.meshgrid(*y_axes, indexing="ij"), axis=-1).reshape(-1, m)
    out = np.empty((z_count,) + (offsets.size,) * m + (len(window),))
    for ti, fld in enumerate(window):
        for yi, yv in enumerate(ymesh):
            pts = s[:, None] * n0[None, :] + (yv @ frame[1:])[None, :]
            gl = _sample(fld.values, fld, pts)
            where = f"t={fld.time:.5g}, y={np.round(yv, 6).tolist()}"
            idx = np.unravel_index(yi, (offsets.size,) * m)
            out[(slice(None),) + idx + (ti,)] = _invert_line(s, gl, z, where, radius, method)
    times = np.array([w.time for w in window])
    return HodographPatch(z, y_axes, times, out, frame, float(eta))


# ------------------------------------------------------------------ dictionary


def dictionary_from_h(patch: HodographPatch) -> dict:
    """g-derivatives in patch coordinates implied by the derivatives of h."""
    d = patch.derivatives
    hz, hzz = d["z"], d["zz"]
    m = patch.tangential_dim
    out = {"g_t": -d["t"] / hz, "g_1": 1.0 / hz, "g_11": -hzz / hz**3}
    for i in range(m):
        hi = d["y"][i]
        out[f"g_{i + 2}"] = -hi / hz
        out[f"g_1{i + 2}"] = -(1 / hz) * (-hi / hz**2 * hzz + d["zy"][i] / hz)
        for j in range(i, m):
            hj = d["y"][j]
            out[f"g_{i + 2}{j + 2}"] = -(1 / hz) * (
                hi * hj / hz**2 * hzz - hi / hz * d["zy"][j] - hj / hz * d["zy"][i] + d["yy"][i][j]
            )
    return out


def g_jets_at_patch(patch: HodographPatch, g_history: Sequence[ScalarField]) -> dict:
    """Grid g-derivatives interpolated to the physical points of the patch,
    rotated into patch coordinates; ``g_t`` from time differences of the
    history at fixed x."""
    history = sorted(g_history, key=lambda s: s.time)
    by_time = {round(s.time, 15): s for s in history}
    fields = [by_time[round(t, 15)] for t in patch.times]
    grid = fields[0].grid
    hsp = grid.spacing
    stack = np.stack([f.values for f in fields])
    gt_stack = np.gradient(stack, patch.times, axis=0, edge_order=2 if len(fields) > 2 else 1)
    frame = patch.frame
    m = patch.tangential_dim
    mesh = patch.mesh()
    hvals = patch.h_values
    out_keys = dictionary_from_h(patch).keys()
    result = {k: np.empty(hvals.shape) for k in out_keys}
    for ti, fld in enumerate(fields):
        jets = stencil_jets(fld.values, hsp)
        sl = (Ellipsis, ti)
        ys = [mesh[1 + i][sl] for i in range(m)]
        pts = hvals[sl][..., None] * frame[0] + sum(ys[i][..., None] * frame[1 + i] for i in range(m))
        # interior jets: node k of the interior array sits at grid node k + 1
        index = (pts + grid.extent) / hsp - 1.0
        flat_idx = index.reshape(-1, grid.dim).T

        def interp(arr):
            return map_coordinates(arr, flat_idx, order=1, mode="nearest").reshape(pts.shape[:-1])

        grad = np.stack([interp(jets.gradient[..., a]) for a in range(grid.dim)], axis=-1)
        hess = np.empty(pts.shape[:-1] + (grid.dim, grid.dim))
        for a in range(grid.dim):
            for b in range(grid.dim):
                hess[..., a, b] = interp(jets.hessian[..., a, b])
        gt = map_coordinates(gt_stack[ti], ((pts + grid.extent) / hsp).reshape(-1, grid.dim).T, order=1, mode="nearest")
        gp = np.einsum("ai,...i->...a", frame, grad)
        hp = np.einsum("ai,...ij,bj->...ab", frame, hess, frame)
        result["g_t"][sl] = gt.reshape(pts.shape[:-1])
        result["g_1"][sl] = gp[..., 0]
        result["g_11"][sl] = hp[..., 0, 0]
        for i in range(m):
            result[f"g_{i + 2}"][sl] = gp[..., 1 + i]
            result[f"g_1{i + 2}"][sl] = hp[..., 0, 1 + i]
            for j in range(i, m):
                result[f"g_{i + 2}{j + 2}"][sl] = hp[..., 1 + i, 1 + j]
    return result


@dataclass
class DictionaryReport:
    mismatch: dict
    tolerance: float
    samples: int

    @property
    def worst(self) -> float:
        return max(self.mismatch.values())

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)


def dictionary_check(
    patch: HodographPatch,
    g_jets: dict,
    tolerance: float = DICTIONARY_TOL,
    z_from: float | None = None,
    interior_only: bool = True,
    y_reach: float | None = None,
) -> DictionaryReport:
    """Compare the h-side dictionary against g-derivatives at the same points.

    Each identity's mismatch is ``max |g_side - h_side| / max |g_side|`` over
    the compared samples, so identities whose value crosses zero stay
    meaningful; identities whose sup is below one are compared absolutely.
    ``z_from`` skips samples hugging the free boundary, where grid stencils
    of g straddle the flat side; ``interior_only`` drops the
    outermost lattice layer, where patch derivatives are one-sided;
    ``y_reach`` keeps only samples with every ``|y_i| <= y_reach`` (pass
    ``inf`` to keep all).  The
    defaults, ``z_from = η²/2`` and ``y_reach = η/2``, compare on the upper
    part of the half box.
    """
    if z_from is None:
        z_from = patch.eta**2 / 2
    if y_reach is None:
        y_reach = patch.eta / 2
    implied = dictionary_from_h(patch)
    sel = np.ones(patch.h_values.shape, dtype=bool)
    zmask = patch.z_samples >= z_from - 1e-15
    sel &= zmask.reshape((-1,) + (1,) * (sel.ndim - 1))
    if interior_only:
        core = np.zeros_like(sel)
        core[(slice(1, -1),) * (sel.ndim - 1) + (slice(None),)] = True
        sel &= core
    if np.isfinite(y_reach):
        mesh = patch.mesh()
        for i in range(patch.tangential_dim):
            sel &= np.abs(mesh[1 + i]) <= y_reach + 1e-12
    if not sel.any():
        raise ValueError("no samples selected for the dictionary check")
    mismatch = {}
    for key, hval in implied.items():
        gval = g_jets[key][sel]
        scale = max(float(np.max(np.abs(gval))), ABSOLUTE_BELOW)
        mismatch[key] = float(np.max(np.abs(gval - hval[sel])) / scale)
    return DictionaryReport(mismatch, tolerance, int(sel.sum()))


# ------------------------------------------------------------------- Hölder


def s_distance(p1, p2) -> float:
    """``|√z₁ - √z₂| + |y₁ - y₂| + √|t₁ - t₂|`` for points ``(z, y, t)``."""
    z1, y1, t1 = p1
    z2, y2, t2 = p2
    if z1 < 0 or z2 < 0:
        raise ValueError("singular distance needs z >= 0")
    dy = np.linalg.norm(np.atleast_1d(np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)))
    return float(abs(np.sqrt(z1) - np.sqrt(z2)) + dy + np.sqrt(abs(t1 - t2)))


def s_distances(z1, y1, t1, z2, y2, t2) -> np.ndarray:
    """Vectorised :func:`s_distance`; ``y`` arrays have a trailing axis."""
    z1, z2 = np.asarray(z1), np.asarray(z2)
    if np.any(z1 < 0) or np.any(z2 < 0):
        raise ValueError("singular distance needs z >= 0")
    return np.abs(np.sqrt(z1) - np.sqrt(z2)) + np.linalg.norm(np.asarray(y1) - np.asarray(y2), axis=-1) + np.sqrt(
        np.abs(np.asarray(t1) - np.asarray(t2))
    )


MONITORED = ("h_t", "h_y", "h_z", "z_h_zz", "sqrtz_h_zy", "h_yy")


def monitored_quantities(patch: HodographPatch) -> dict[str, list[np.ndarray]]:
    d = patch.derivatives
    z = patch.z_samples.reshape((-1,) + (1,) * (patch.h_values.ndim - 1))
    m = patch.tangential_dim
    return {
        "h_t": [d["t"]],
        "h_y": list(d["y"]),
        "h_z": [d["z"]],
        "z_h_zz": [z * d["zz"]],
        "sqrtz_h_zy": [np.sqrt(z) * d["zy"][i] for i in range(m)],
        "h_yy": [d["yy"][i][j] for i in range(m) for j in range(i, m)],
    }


@dataclass
class HolderReport:
    alpha: float
    seminorms: dict
    pair_count: int
    sparse: bool

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "seminorms": dict(sorted(self.seminorms.items())), "pair_count": self.pair_count, "sparse": self.sparse}


def half_box_mask(patch: HodographPatch) -> np.ndarray:
    """Lattice points of the half box: ``z <= η²/4``, ``|y| <= η/2`` and
    ``t >= t₀ - η²/4``."""
    mesh = patch.mesh()
    eta = patch.eta
    mask = mesh[0] <= eta * eta / 4 + 1e-15
    for i in range(patch.tangential_dim):
        mask &= np.abs(mesh[1 + i]) <= eta / 2 + 1e-12
    mask &= mesh[-1] >= patch.times[-1] - eta * eta / 4 - 1e-15
    return mask


def _half_box_pairs(patch: HodographPatch, pairs: int, seed: int):
    """Seeded pairs of distinct half-box lattice points and their distances."""
    if pairs < MIN_PAIRS:
        raise ValueError(f"need at least {MIN_PAIRS} pairs, got {pairs}")
    mask = half_box_mask(patch)
    mesh = patch.mesh()
    zs = mesh[0][mask]
    ys = np.stack([mesh[1 + i][mask] for i in range(patch.tangential_dim)], axis=-1)
    ts = mesh[-1][mask]
    count = zs.size
    if count < 2:
        raise ValueError("half box holds fewer than two lattice points")
    rng = np.random.default_rng(seed)
    a = rng.integers(0, count, pairs)
    b = (a + rng.integers(1, count, pairs)) % count
    return mask, a, b, s_distances(zs[a], ys[a], ts[a], zs[b], ys[b], ts[b])


def holder_seminorm_of(values: np.ndarray, patch: HodographPatch, alpha: float, pairs: int = DENSE_PAIRS, seed: int = 0) -> float:
    """Seminorm of one lattice array over the half box."""
    mask, a, b, dist = _half_box_pairs(patch, pairs, seed)
    vals = values[mask]
    return float(np.max(np.abs(vals[a] - vals[b]) / dist**alpha))


def holder_seminorms(patch: HodographPatch, alpha: float = 0.25, pairs: int = DENSE_PAIRS, seed: int = 0) -> HolderReport:
    """Monte-Carlo sup of ``|u(P₁) - u(P₂)| / s(P₁, P₂)^α`` over seeded pairs
    of distinct lattice points in the half box, for each monitored quantity;
    vector-valued quantities report their worst component."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    mask, a, b, dist = _half_box_pairs(patch, pairs, seed)
    weight = dist**alpha
    seminorms = {}
    for name, comps in monitored_quantities(patch).items():
        seminorms[name] = max(float(np.max(np.abs(u[mask][a] - u[mask][b]) / weight)) for u in comps)
    return HolderReport(float(alpha), seminorms, int(pairs), bool(pairs < DENSE_PAIRS))


# ------------------------------------------------------------------ dilation


def dilate(
    patch: HodographPatch,
    r: float,
    center: tuple | None = None,
    mu: float = 0.5,
    count: int = 9,
) -> HodographPatch:
    """Resample ``h^r(z, y, t) = h(z_c + r² z, y_c + r y, t_c + r² t) / r²``.

    ``center = (z_c, y_c, t_c)`` defaults to ``(r², 0, t₀)``, the dilation
    point above the base of the box.  The result lives on the lattice
    ``0 <= z <= μ``, ``|y_i| <= μ``, ``-μ² <= t <= 0`` (the box around the
    cylinder ``z² + |y|² <= μ², -μ² <= t <= 0``).
    """
    if not (0 < r <= 1):
        raise ValueError(f"r must lie in (0, 1], got {r}")
    m = patch.tangential_dim
    if center is None:
        center = (r * r, np.zeros(m), float(patch.times[-1]))
    zc, yc, tc = center
    yc = np.broadcast_to(np.asarray(yc, dtype=float), (m,))
    z_new = np.linspace(0.0, mu, count)
    y_new = tuple(np.linspace(-mu, mu, count) for _ in range(m))
    t_new = np.linspace(-mu * mu, 0.0, count)
    mesh = np.meshgrid(z_new, *y_new, t_new, indexing="ij")
    src = [zc + r * r * mesh[0]]
    src += [yc[i] + r * mesh[1 + i] for i in range(m)]
    src.append(tc + r * r * mesh[-1])
    coords = patch.coordinates()
    for axis, (pts, ax) in enumerate(zip(src, coords)):
        if pts.min() < ax[0] - 1e-12 or pts.max() > ax[-1] + 1e-12:
            raise ValueError(f"dilated arguments leave the patch along axis {axis}")
    method = "cubic" if all(len(ax) >= 4 for ax in coords) else "linear"
    # direct solve: the default iterative spline fit stops near 1e-6
    extra = {"solver": spsolve} if method == "cubic" else {}
    interp = RegularGridInterpolator(coords, patch.h_values, method=method, **extra)
    stacked = np.stack([np.clip(p, ax[0], ax[-1]) for p, ax in zip(src, coords)], axis=-1)
    values = interp(stacked.reshape(-1, len(coords))).reshape(mesh[0].shape) / (r * r)
    return HodographPatch(z_new, y_new, t_new, values, patch.frame, float(mu))


# ----------------------------------------------------------------------- I/O


def write_patch_csv(patch: HodographPatch, path) -> None:
    mesh = patch.mesh()
    m = patch.tangential_dim
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z"] + [f"y{i + 2}" for i in range(m)] + ["t", "h", "calI"])
        cal = patch.calI
        for idx in np.ndindex(patch.h_values.shape):
            w.writerow([repr(float(mesh[k][idx])) for k in range(len(mesh))] + [repr(float(patch.h_values[idx])), repr(float(cal[idx]))])


def write_holder_report(path, reports: Sequence[HolderReport], extra: dict | None = None) -> None:
    data = {"reports": [r.to_dict() for r in reports]}
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
