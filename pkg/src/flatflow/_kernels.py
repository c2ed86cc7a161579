"""Compiled inner loops for the explicit steppers.

These evaluate the same expressions as ``curvature.flow_rhs_fast`` and the
trace of ``curvature.parabolicity``; the tests hold the two routes together.
Every node writes only its own output slot, so results do not depend on the
thread count.
"""

from __future__ import annotations

import math

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old; the workqueue layer needs no extra libraries
config.THREADING_LAYER = "workqueue"


@njit(parallel=True, cache=True)
def grid_rhs_3d(f, h, rhs, lam):
    nx, ny, nz = f.shape
    ih = 1.0 / h
    ih2 = ih * ih
    for i in prange(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                c = f[i, j, k]
                p0 = 0.5 * ih * (f[i + 1, j, k] - f[i - 1, j, k])
                p1 = 0.5 * ih * (f[i, j + 1, k] - f[i, j - 1, k])
                p2 = 0.5 * ih * (f[i, j, k + 1] - f[i, j, k - 1])
                d00 = ih2 * (f[i + 1, j, k] - 2.0 * c + f[i - 1, j, k])
                d11 = ih2 * (f[i, j + 1, k] - 2.0 * c + f[i, j - 1, k])
                d22 = ih2 * (f[i, j, k + 1] - 2.0 * c + f[i, j, k - 1])
                d01 = 0.25 * ih2 * (f[i + 1, j + 1, k] - f[i + 1, j - 1, k] - f[i - 1, j + 1, k] + f[i - 1, j - 1, k])
                d02 = 0.25 * ih2 * (f[i + 1, j, k + 1] - f[i + 1, j, k - 1] - f[i - 1, j, k + 1] + f[i - 1, j, k - 1])
                d12 = 0.25 * ih2 * (f[i, j + 1, k + 1] - f[i, j + 1, k - 1] - f[i, j - 1, k + 1] + f[i, j - 1, k - 1])
                s = p0 * p0 + p1 * p1 + p2 * p2
                w2 = 1.0 + s
                w = math.sqrt(w2)
                q0 = p0 * d00 + p1 * d01 + p2 * d02
                q1 = p0 * d01 + p1 * d11 + p2 * d12
                q2 = p0 * d02 + p1 * d12 + p2 * d22
                # M = P D with P = I - p p^T / w2
                m00 = d00 - p0 * q0 / w2
                m01 = d01 - p0 * q1 / w2
                m02 = d02 - p0 * q2 / w2
                m10 = d01 - p1 * q0 / w2
                m11 = d11 - p1 * q1 / w2
                m12 = d12 - p1 * q2 / w2
                m20 = d02 - p2 * q0 / w2
                m21 = d12 - p2 * q1 / w2
                m22 = d22 - p2 * q2 / w2
                tr = m00 + m11 + m22
                tr2 = (
                    m00 * m00 + m11 * m11 + m22 * m22
                    + 2.0 * (m01 * m10 + m02 * m20 + m12 * m21)
                )
                rhs[i - 1, j - 1, k - 1] = (tr * tr - tr2) / (2.0 * w)
                pmp = (
                    p0 * (m00 * p0 + m01 * p1 + m02 * p2)
                    + p1 * (m10 * p0 + m11 * p1 + m12 * p2)
                    + p2 * (m20 * p0 + m21 * p1 + m22 * p2)
                )
                lam[i - 1, j - 1, k - 1] = (tr * (3.0 - s / w2) - (tr - pmp / w2)) / w


@njit(parallel=True, cache=True)
def grid_rhs_2d(f, h, rhs, lam):
    nx, ny = f.shape
    ih = 1.0 / h
    ih2 = ih * ih
    for i in prange(1, nx - 1):
        for j in range(1, ny - 1):
            c = f[i, j]
            p0 = 0.5 * ih * (f[i + 1, j] - f[i - 1, j])
            p1 = 0.5 * ih * (f[i, j + 1] - f[i, j - 1])
            d00 = ih2 * (f[i + 1, j] - 2.0 * c + f[i - 1, j])
            d11 = ih2 * (f[i, j + 1] - 2.0 * c + f[i, j - 1])
            d01 = 0.25 * ih2 * (f[i + 1, j + 1] - f[i + 1, j - 1] - f[i - 1, j + 1] + f[i - 1, j - 1])
            s = p0 * p0 + p1 * p1
            w2 = 1.0 + s
            w = math.sqrt(w2)
            q0 = p0 * d00 + p1 * d01
            q1 = p0 * d01 + p1 * d11
            m00 = d00 - p0 * q0 / w2
            m01 = d01 - p0 * q1 / w2
            m10 = d01 - p1 * q0 / w2
            m11 = d11 - p1 * q1 / w2
            tr = m00 + m11
            tr2 = m00 * m00 + m11 * m11 + 2.0 * m01 * m10
            rhs[i - 1, j - 1] = (tr * tr - tr2) / (2.0 * w)
            pmp = p0 * (m00 * p0 + m01 * p1) + p1 * (m10 * p0 + m11 * p1)
            lam[i - 1, j - 1] = (tr * (2.0 - s / w2) - (tr - pmp / w2)) / w


@njit(cache=True)
def radial_rhs(f, h, n, rhs):
    """Radial speed ``σ₂ W`` into ``rhs``; returns the largest parabolicity."""
    size = f.shape[0]
    pairs = 0.5 * (n - 1) * (n - 2)
    # origin: both curvatures equal f''(0), second difference 2 (f1 - f0) / h²
    fpp = 2.0 * (f[1] - f[0]) / (h * h)
    rhs[0] = 0.5 * n * (n - 1) * fpp * fpp
    lam = n * (n - 1) * abs(fpp)
    for k in range(1, size - 1):
        r = k * h
        fp = (f[k + 1] - f[k - 1]) / (2.0 * h)
        fpp = (f[k + 1] - 2.0 * f[k] + f[k - 1]) / (h * h)
        w2 = 1.0 + fp * fp
        w = math.sqrt(w2)
        k_rad = fpp / (w2 * w)
        k_ang = fp / (r * w)
        rhs[k] = ((n - 1) * k_rad * k_ang + pairs * k_ang * k_ang) * w
        par = (n - 1) * abs(k_ang) / w2
        if par > lam:
            lam = par
    rhs[size - 1] = 0.0
    return lam


@njit(cache=True, fastmath=True)
def _radial_pass(f, inv_r, inv_h, inv_h2, n, rhs):
    size = f.shape[0]
    pairs = 0.5 * (n - 1) * (n - 2)
    fpp = 2.0 * (f[1] - f[0]) * inv_h2
    rhs[0] = 0.5 * n * (n - 1) * fpp * fpp
    lam = n * (n - 1) * abs(fpp)
    for k in range(1, size - 1):
        fp = 0.5 * (f[k + 1] - f[k - 1]) * inv_h
        fpp = (f[k + 1] - 2.0 * f[k] + f[k - 1]) * inv_h2
        w2 = 1.0 + fp * fp
        iw = 1.0 / math.sqrt(w2)
        k_ang = fp * inv_r[k] * iw
        rhs[k] = (n - 1) * fpp * iw * iw * k_ang + pairs * k_ang * k_ang / iw
        par = (n - 1) * abs(k_ang) * iw * iw
        lam = max(lam, par)
    return lam


@njit(cache=True)
def radial_march(f, h, n, t, t_end, cfl, clamp, table_t, table_v, max_steps):
    """Forward Euler from ``t`` to ``t_end`` with adaptive CFL steps.

    The outer value follows the table ``(table_t, table_v)`` by linear
    interpolation; an empty table freezes it.  Returns
    ``(t, steps, repairs, status)`` with status 0 ok, 1 non-finite speed,
    2 step budget exhausted.
    """
    size = f.shape[0]
    rhs = np.zeros(size)
    inv_r = np.zeros(size)
    for k in range(1, size):
        inv_r[k] = 1.0 / (k * h)
    inv_h = 1.0 / h
    inv_h2 = inv_h * inv_h
    steps = 0
    repairs = 0
    h2 = h * h
    tabled = table_t.shape[0] > 0
    while t < t_end:
        if steps >= max_steps:
            return t, steps, repairs, 2
        lam = _radial_pass(f, inv_r, inv_h, inv_h2, n, rhs)
        if not math.isfinite(lam):
            return t, steps, repairs, 1
        dt = t_end - t
        if lam > 0.0:
            dt = min(dt, cfl * h2 / lam)
        total = 0.0
        for k in range(size - 1):
            v = rhs[k]
            total += v
            if clamp and v < 0.0:
                v = 0.0
            f[k] += dt * v
            # repair monotonicity lost to roundoff
            if k > 0 and f[k] < f[k - 1]:
                if f[k] < f[k - 1] - 1e-10:
                    repairs += 1
                f[k] = f[k - 1]
        if not math.isfinite(total):
            return t, steps, repairs, 1
        t += dt
        steps += 1
        if tabled:
            f[size - 1] = np.interp(t, table_t, table_v)
        if f[size - 1] < f[size - 2]:
            repairs += 1
            f[size - 1] = f[size - 2]
    return t, steps, repairs, 0
