"""Graph curvature of ``x_{n+1} = f(x)`` and the σ₂ flow speed.

All functions accept batched jets (leading dimensions broadcast).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Jet2

SIGMA2_CONSISTENCY_RTOL = 1e-10
PRINCIPAL_CLAMP = 1e-10


@dataclass(frozen=True)
class CurvatureReport:
    metric: np.ndarray
    inverse_metric: np.ndarray
    second_form: np.ndarray
    weingarten: np.ndarray
    mean: np.ndarray
    norm_sq: np.ndarray
    sigma2: np.ndarray


def _w2(grad: np.ndarray) -> np.ndarray:
    return 1.0 + np.einsum("...i,...i->...", grad, grad)


def inverse_metric(grad: np.ndarray) -> np.ndarray:
    """``g^{ij} = δ_ij - f_i f_j / (1 + |∇f|²)``."""
    n = grad.shape[-1]
    return np.eye(n) - np.einsum("...i,...j->...ij", grad, grad) / _w2(grad)[..., None, None]


def sigma2_double_sum(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """σ₂ as ½ Σ_{ijkl} g^{ik} g^{jl} (h_ki h_lj - h_kj h_li)."""
    ginv = inverse_metric(grad)
    h = hess / np.sqrt(_w2(grad))[..., None, None]
    direct = np.einsum("...ik,...jl,...ki,...lj->...", ginv, ginv, h, h)
    crossed = np.einsum("...ik,...jl,...kj,...li->...", ginv, ginv, h, h)
    return 0.5 * (direct - crossed)


def curvature_report(jet: Jet2) -> CurvatureReport:
    grad, hess = jet.gradient, jet.hessian
    n = grad.shape[-1]
    w2 = _w2(grad)
    metric = np.eye(n) + np.einsum("...i,...j->...ij", grad, grad)
    ginv = inverse_metric(grad)
    second = hess / np.sqrt(w2)[..., None, None]
    weingarten = ginv @ second
    mean = np.trace(weingarten, axis1=-2, axis2=-1)
    norm_sq = np.einsum("...ij,...ji->...", weingarten, weingarten)
    sigma2 = 0.5 * (mean**2 - norm_sq)

    other = sigma2_double_sum(grad, hess)
    scale = np.maximum(np.abs(mean) ** 2 + np.abs(norm_sq), 1e-300)
    if np.any(np.abs(sigma2 - other) > SIGMA2_CONSISTENCY_RTOL * scale + 1e-300):
        raise ArithmeticError("σ₂ double sum disagrees with ½(H² - |A|²)")
    return CurvatureReport(metric, ginv, second, weingarten, mean, norm_sq, sigma2)


def principal_curvatures(jet: Jet2) -> np.ndarray:
    """Eigenvalues of the Weingarten map, ascending.

    Values in ``(-1e-10, 0)`` are clamped to zero (discrete convexity noise).
    """
    grad, hess = jet.gradient, jet.hessian
    n = grad.shape[-1]
    metric = np.eye(n) + np.einsum("...i,...j->...ij", grad, grad)
    chol = np.linalg.cholesky(metric)
    linv = np.linalg.inv(chol)
    sym = linv @ (hess / np.sqrt(_w2(grad))[..., None, None]) @ np.swapaxes(linv, -1, -2)
    kappa = np.linalg.eigvalsh(0.5 * (sym + np.swapaxes(sym, -1, -2)))
    return np.where((kappa < 0) & (kappa > -PRINCIPAL_CLAMP), 0.0, kappa)


def gauss_rhs(jet: Jet2) -> np.ndarray:
    """Gauss curvature speed ``det D²f / (1 + |∇f|²)^{3/2}`` (n = 2 only)."""
    if jet.dim != 2:
        raise ValueError(f"gauss_rhs needs a 2-d jet, got dimension {jet.dim}")
    return np.linalg.det(jet.hessian) / _w2(jet.gradient) ** 1.5


def flow_rhs(jet: Jet2) -> np.ndarray:
    """``f_t`` of the σ₂ flow, evaluated as the literal quadruple sum

    f_t = 1/(2W) Σ_{ijkl} P_ik P_jl (f_ki f_lj - f_kj f_li),
    with ``W² = 1 + |∇f|²`` and ``P = δ - ∇f∇fᵀ / W²``.
    """
    grad, hess = jet.gradient, jet.hessian
    ginv = inverse_metric(grad)
    direct = np.einsum("...ik,...jl,...ki,...lj->...", ginv, ginv, hess, hess)
    crossed = np.einsum("...ik,...jl,...kj,...li->...", ginv, ginv, hess, hess)
    return (direct - crossed) / (2.0 * np.sqrt(_w2(grad)))


def flow_rhs_fast(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Same value as :func:`flow_rhs` via ``tr(PD)² - tr(PDPD)``.

    Used by the grid stepper, where the four-operand einsum dominates runtime.
    """
    ginv = inverse_metric(grad)
    m = ginv @ hess
    tr = np.trace(m, axis1=-2, axis2=-1)
    tr2 = np.einsum("...ij,...ji->...", m, m)
    return (tr * tr - tr2) / (2.0 * np.sqrt(_w2(grad)))


def parabolicity(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Linearization ``∂f_t/∂f_ij`` of the flow, shape ``(..., n, n)``.

    Equals the pressure-side coefficient matrix ``a_ij`` (``f_ij = g g_ij +
    g_i g_j`` and ``f_t = g g_t``) but stays bounded as ``f -> 0``, so the
    stepper uses it for the CFL bound.
    """
    w2 = _w2(grad)
    ginv = inverse_metric(grad)
    # d/dD of ½ [tr(PD)² - tr(PDPD)] / W, symmetrised
    m = ginv @ hess
    tr = np.trace(m, axis1=-2, axis2=-1)
    deriv = tr[..., None, None] * ginv - ginv @ hess @ ginv
    deriv = 0.5 * (deriv + np.swapaxes(deriv, -1, -2))
    return deriv / np.sqrt(w2)[..., None, None]
