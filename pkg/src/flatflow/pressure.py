"""Pressure-side quantities for ``g = sqrt(2 f)``.

Expressions are written index-by-index as einsum contractions so each term
can be read against its displayed formula.  Batched inputs broadcast over
leading dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frame import adapted_frames
from .grid import Jet2, ScalarField, stencil_jets

FLAT_FLOOR = 1e-10
DIRECT_G_BELOW = 1e-2


class FlatSideError(ValueError):
    """Derivatives of g requested on the flat side, where they are undefined."""


@dataclass(frozen=True)
class PressureJet:
    g: np.ndarray
    _grad: np.ndarray
    _hess: np.ndarray
    I: np.ndarray
    J: np.ndarray
    R2: np.ndarray
    Rbar2: np.ndarray
    flat: np.ndarray

    @property
    def grad(self) -> np.ndarray:
        if np.any(self.flat):
            raise FlatSideError("gradient of g is undefined on the flat side")
        return self._grad

    @property
    def hess(self) -> np.ndarray:
        if np.any(self.flat):
            raise FlatSideError("Hessian of g is undefined on the flat side")
        return self._hess

    @property
    def dim(self) -> int:
        return self._grad.shape[-1]

    @classmethod
    def from_g(cls, g, grad, hess) -> "PressureJet":
        g = np.asarray(g, dtype=float)
        grad = np.asarray(grad, dtype=float)
        hess = np.asarray(hess, dtype=float)
        s = np.einsum("...i,...i->...", grad, grad)
        I = 1.0 + g**2 * s
        J = s + g
        R2 = np.einsum("...ii,...jj->...", hess, hess) - np.einsum("...ij,...ij->...", hess, hess)
        return cls(g, grad, hess, I, J, R2, rbar2(grad, hess, I), np.zeros(g.shape, dtype=bool))

    def subset(self, index) -> "PressureJet":
        return PressureJet(
            self.g[index], self._grad[index], self._hess[index], self.I[index], self.J[index],
            self.R2[index], self.Rbar2[index], self.flat[index],
        )


def rbar2(grad: np.ndarray, hess: np.ndarray, I: np.ndarray) -> np.ndarray:
    """Σ_{i,j≥2}(g_ii g_jj - g_ij²) + (2/I) Σ_{i≥2}(g_ii g_11 - g_1i²) in the adapted frame."""
    frames = adapted_frames(grad)
    h = np.einsum("...ai,...ij,...bj->...ab", frames, hess, frames)
    tang = h[..., 1:, 1:]
    tt = np.einsum("...ii,...jj->...", tang, tang) - np.einsum("...ij,...ij->...", tang, tang)
    mixed = np.einsum("...ii->...", tang) * h[..., 0, 0] - np.einsum("...i,...i->...", h[..., 0, 1:], h[..., 0, 1:])
    return tt + 2.0 / I * mixed


def pressure_jet(f_jet: Jet2, floor: float = FLAT_FLOOR) -> PressureJet:
    """Transform an f-jet to the pressure ``g = sqrt(2f)``.

    ``∇g = ∇f / g`` and ``D²g = (D²f - ∇g ∇gᵀ) / g``.  Points with
    ``f < floor`` are flagged flat; their derivative fields hold NaN.
    """
    f = np.asarray(f_jet.value, dtype=float)
    if np.any(f < 0):
        raise ValueError("pressure_jet needs f >= 0")
    flat = f < floor
    g = np.sqrt(2.0 * np.where(flat, 0.0, f))
    safe = np.where(flat, 1.0, g)
    grad = f_jet.gradient / safe[..., None]
    hess = (f_jet.hessian - np.einsum("...i,...j->...ij", grad, grad)) / safe[..., None, None]
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    grad = np.where(flat[..., None], np.nan, grad)
    hess = np.where(flat[..., None, None], np.nan, hess)
    with np.errstate(invalid="ignore"):
        pj = PressureJet.from_g(g, grad, hess)
    return PressureJet(pj.g, pj._grad, pj._hess, pj.I, pj.J, pj.R2, pj.Rbar2, flat)


def field_pressure_jets(field: ScalarField, floor: float = FLAT_FLOOR):
    """Pressure jets at every interior node of an f-field.

    Where ``g >= 1e-2`` derivatives come from transforming f-differences;
    below that they come from differencing the g-field itself, which stays
    stable where g vanishes like a distance.  Returns ``(mask, jets)`` with
    ``mask`` over interior nodes and ``jets`` for the non-flat ones.
    """
    h = field.grid.spacing
    fvals = np.maximum(field.values, 0.0)
    fj = stencil_jets(fvals, h)
    gj = stencil_jets(np.sqrt(2.0 * fvals), h)
    mask = fj.value >= floor
    f_sel = Jet2(fj.value[mask], fj.gradient[mask], fj.hessian[mask])
    from_f = pressure_jet(f_sel, floor)
    direct = from_f.g < DIRECT_G_BELOW
    grad = np.where(direct[:, None], gj.gradient[mask], from_f._grad)
    hess = np.where(direct[:, None, None], gj.hessian[mask], from_f._hess)
    return mask, PressureJet.from_g(from_f.g, grad, hess)


def _blocks(g, p, D):
    """The three bracketed sums of the pressure equation."""
    e = np.einsum
    b1 = (
        g * (e("...ii,...jj->...", D, D) - e("...ij,...ij->...", D, D))
        + e("...j,...j,...ii->...", p, p, D)
        + e("...i,...i,...jj->...", p, p, D)
        - 2.0 * e("...i,...j,...ij->...", p, p, D)
    )
    b2 = (
        g * (e("...i,...k,...ik,...jj->...", p, p, D, D) - e("...i,...k,...jk,...ij->...", p, p, D, D))
        + e("...i,...k,...j,...j,...ik->...", p, p, p, p, D)
        + e("...i,...k,...i,...k,...jj->...", p, p, p, p, D)
        - e("...i,...k,...i,...j,...jk->...", p, p, p, p, D)
        - e("...i,...k,...j,...k,...ij->...", p, p, p, p, D)
    )
    b3 = (
        g * (e("...j,...l,...jl,...ii->...", p, p, D, D) - e("...j,...l,...il,...ij->...", p, p, D, D))
        + e("...j,...l,...i,...i,...jl->...", p, p, p, p, D)
        + e("...j,...l,...j,...l,...ii->...", p, p, p, p, D)
        - e("...j,...l,...i,...j,...il->...", p, p, p, p, D)
        - e("...j,...l,...i,...l,...ij->...", p, p, p, p, D)
    )
    return b1, b2, b3


def pressure_rhs(pj: PressureJet) -> np.ndarray:
    """``g_t`` from the three-block pressure equation, term by term."""
    g, p, D, I = pj.g, pj.grad, pj.hess, pj.I
    b1, b2, b3 = _blocks(g, p, D)
    return b1 / (2.0 * np.sqrt(I)) - g**2 * b2 / (2.0 * I**1.5) - g**2 * b3 / (2.0 * I**1.5)


def quartic_cancellation(pj: PressureJet) -> tuple[np.ndarray, np.ndarray]:
    """The quartic-gradient contraction that vanishes by symmetry.

    Returns ``(value, scale)`` where ``scale`` is the sum of absolute term
    magnitudes, for relative comparisons.
    """
    g, p, D = pj.g, pj.grad, pj.hess
    e = np.einsum
    pppp = e("...i,...j,...k,...l->...ijkl", p, p, p, p)
    inner = (
        (e("...ki,...lj->...ijkl", D, D) - e("...kj,...li->...ijkl", D, D)) * g[..., None, None, None, None]
        + e("...ki,...l,...j->...ijkl", D, p, p)
        + e("...k,...i,...lj->...ijkl", p, p, D)
        - e("...kj,...l,...i->...ijkl", D, p, p)
        - e("...k,...j,...li->...ijkl", p, p, D)
    )
    terms = pppp * inner
    return terms.sum(axis=(-4, -3, -2, -1)), np.abs(terms).sum(axis=(-4, -3, -2, -1))


def interface_law(g_nu: float, laplace_tau: float) -> float:
    """Predicted ``g_t`` on the free boundary: ``g_ν² Δ_τ g`` (= ``g_ν³ H``)."""
    if not g_nu > 0:
        raise ValueError(f"interface_law needs g_nu > 0, got {g_nu}")
    return g_nu**2 * laplace_tau


@dataclass(frozen=True)
class LinearizedCoefficients:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def linearized_coefficients(pj: PressureJet) -> LinearizedCoefficients:
    """Coefficients of ``(g_m)_t = Σ a_ij g_mij + Σ b_i g_mi + c g_m``."""
    g, p, D, I = pj.g, pj.grad, pj.hess, pj.I
    n = pj.dim
    e = np.einsum
    s = e("...k,...k->...", p, p)
    t = e("...kk->...", D)
    Dp = e("...jk,...k->...j", D, p)
    I32 = I**1.5
    I52 = I**2.5

    a = np.empty(p.shape + (n,))
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if j == i:
                continue
            acc = acc + p[..., j] ** 2 + g * D[..., j, j] + g**3 * (s * D[..., j, j] - p[..., j] * Dp[..., j])
        acc = acc - g**3 * (p[..., i] ** 2 * t - p[..., i] * Dp[..., i])
        a[..., i, i] = acc / I32
        for j in range(n):
            if j == i:
                continue
            a[..., i, j] = -(
                p[..., i] * p[..., j]
                + g * D[..., i, j]
                + g**3 * (s * D[..., i, j] + p[..., i] * p[..., j] * t - p[..., i] * Dp[..., j] - p[..., j] * Dp[..., i])
            ) / I32

    # Σ_j (g_i g_jj - g_j g_ij)
    first = e("...i,...jj->...i", p, D) - e("...j,...ij->...i", p, D)
    # Σ_{jkl} g_i g_k g_l (g_kl g_jj - g_jk g_jl)
    quint = e("...i,...k,...l,...kl,...jj->...i", p, p, p, D, D) - e("...i,...k,...l,...jk,...jl->...i", p, p, p, D, D)
    # Σ_{jk} g_i (g_k² g_jj - g_k g_j g_kj)
    lin = e("...i,...k,...k,...jj->...i", p, p, p, D) - e("...i,...k,...j,...kj->...i", p, p, p, D)
    # Σ_{jk} g_k (g_ik g_jj - g_jk g_ij)
    mix = e("...k,...ik,...jj->...i", p, D, D) - e("...k,...jk,...ij->...i", p, D, D)
    # Σ_{jk} g_i (g_kk g_jj - g_kj²)
    r2 = e("...i,...kk,...jj->...i", p, D, D) - e("...i,...kj,...kj->...i", p, D, D)
    gx = g[..., None]
    Ix = I[..., None]
    b = (
        4.0 * Ix * first
        + 6.0 * gx**5 * quint
        + gx**2 * (-6.0 * lin - 4.0 * Ix * gx * mix - Ix * gx * r2)
    ) / (2.0 * I52[..., None])

    R2 = e("...ii,...jj->...", D, D) - e("...ij,...ij->...", D, D)
    q2 = e("...i,...k,...ik,...jj->...", p, p, D, D) - e("...i,...k,...jk,...ij->...", p, p, D, D)
    q3 = e("...i,...i,...j,...j,...kk->...", p, p, p, p, D) - e("...i,...i,...k,...j,...kj->...", p, p, p, p, D)
    c = (I * R2 - 6.0 * g**2 * q2 - 6.0 * g * q3) / (2.0 * I52)
    return LinearizedCoefficients(a, b, c)
