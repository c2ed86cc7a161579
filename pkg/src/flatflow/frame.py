"""Orthonormal frames adapted to a level set of the pressure."""

from __future__ import annotations

import numpy as np

MIN_GRADIENT = 1e-8


def adapted_frame(gradient) -> np.ndarray:
    """Rows ``e_1..e_n`` with ``e_1 = ∇g/|∇g|``.

    The completion is Gram-Schmidt on the standard basis with the axis most
    aligned to ``e_1`` skipped, so repeated calls give the same frame.
    """
    grad = np.asarray(gradient, dtype=float)
    norm = np.linalg.norm(grad)
    if norm < MIN_GRADIENT:
        raise ValueError(f"gradient norm {norm:.3g} below {MIN_GRADIENT}; normal undefined")
    n = grad.size
    e1 = grad / norm
    skip = int(np.argmax(np.abs(e1)))
    basis = [e1]
    for axis in range(n):
        if axis == skip:
            continue
        v = np.zeros(n)
        v[axis] = 1.0
        for b in basis:
            v = v - np.dot(v, b) * b
        basis.append(v / np.linalg.norm(v))
    return np.array(basis)


def adapted_frames(gradients: np.ndarray) -> np.ndarray:
    """Batched :func:`adapted_frame`, shape ``(..., n, n)``; NaN rows where
    the gradient vanishes."""
    grads = np.asarray(gradients, dtype=float)
    n = grads.shape[-1]
    flat = grads.reshape(-1, n)
    out = np.full((flat.shape[0], n, n), np.nan)
    norms = np.linalg.norm(flat, axis=1)
    ok = norms >= MIN_GRADIENT
    e1 = np.zeros_like(flat)
    e1[ok] = flat[ok] / norms[ok, None]
    skip = np.argmax(np.abs(e1), axis=1)
    rows = [e1]
    # per-point axis order: all axes except `skip`, ascending
    order = np.array([[a for a in range(n) if a != s] for s in range(n)])[skip]
    for k in range(n - 1):
        v = np.zeros_like(flat)
        v[np.arange(flat.shape[0]), order[:, k]] = 1.0
        for b in rows:
            v = v - np.sum(v * b, axis=1, keepdims=True) * b
        nv = np.linalg.norm(v, axis=1, keepdims=True)
        rows.append(np.divide(v, nv, out=np.zeros_like(v), where=nv > 0))
    frames = np.stack(rows, axis=1)
    out[ok] = frames[ok]
    return out.reshape(grads.shape[:-1] + (n, n))
