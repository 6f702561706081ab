"""Wigner functions of single-mode states on rectangular phase-space grids.

Coordinates are quadrature values (x, p) with vacuum variance 1/2, i.e.
alpha = (x + i p)/sqrt(2); in this normalization the vacuum is
``exp(-x^2 - p^2)/pi`` and ``|W| <= 1/pi`` for every state.

The evaluation is the Fock-basis expansion ``W = sum_{m,n} rho_mn W_mn``
over displaced-parity matrix elements, whose radial parts are associated
Laguerre polynomials in ``4|alpha|^2``.  Each diagonal of rho is summed by
Clenshaw's recurrence.  A plain upward recurrence for the individual W_mn
is unstable once ``4|alpha|^2`` exceeds the Fock index, which at cutoff 100
happens on most of a [-10, 10]^2 grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridTooCoarse, SpaceMismatch
from .fock import QuantumState, partial_trace

DEFAULT_EXTENT = 10.0
DEFAULT_POINTS = 201
MAX_SPACING = 0.5
# rho entries smaller than this (relative to the largest) are skipped
RHO_RELATIVE_CUTOFF = 1e-16


@dataclass(frozen=True)
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # values[i, j] = W(x[j], p[i])
    label: str = ""
    tau: float | None = None

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 1.0

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0]) if self.p.size > 1 else 1.0

    def integral(self) -> float:
        return float(self.values.sum() * self.dx * self.dp)

    def min(self) -> float:
        return float(self.values.min())

    def x_marginal(self) -> np.ndarray:
        return self.values.sum(axis=0) * self.dp

    def p_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dx

    def mean_x(self) -> float:
        return float((self.x_marginal() @ self.x) * self.dx)

    def mean_p(self) -> float:
        return float((self.p_marginal() @ self.p) * self.dp)


def default_axis(extent: float = DEFAULT_EXTENT, points: int = DEFAULT_POINTS) -> np.ndarray:
    return np.linspace(-extent, extent, points)


def _as_density_matrix(state) -> np.ndarray:
    if isinstance(state, QuantumState):
        if len(state.space) != 1:
            raise SpaceMismatch("Wigner function needs a single-mode state; take a partial trace first")
        return state.dm() if state.support is None else QuantumState(state.space, state.full(), check=False).dm()
    rho = np.asarray(state, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise SpaceMismatch("expected a square density matrix")
    return rho


def _check_axis(axis: np.ndarray, name: str):
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError(f"{name} axis must be a non-empty 1-D array")
    if axis.size > 1:
        steps = np.diff(axis)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError(f"{name} axis must be uniformly spaced and increasing")
        if steps[0] > MAX_SPACING:
            warnings.warn(
                f"{name} spacing {steps[0]:.3g} exceeds {MAX_SPACING}; cat-state fringes will be aliased",
                GridTooCoarse,
                stacklevel=3,
            )


def _laguerre_series(order: int, x: np.ndarray, coeffs: np.ndarray):
    """Clenshaw sum of ``c_n (-1)^n sqrt(n!/(n+order)!) L_n^order(x)`` over n.

    The alternating sign is folded into the recurrence coefficients.
    """
    if coeffs.size == 1:
        return coeffs[0] * np.ones_like(x)
    b0, b1 = coeffs[-2], coeffs[-1]
    k = coeffs.size - 1
    for c in coeffs[-3::-1]:
        # b0, b1 <- (c - b1 * beta_k, b0 - b1 * alpha_k)
        b0, b1 = (
            c - b1 * math.sqrt((k - 1) * (order + k - 1) / ((order + k) * k)),
            b0 - b1 * ((order + 2 * k - 1) - x) / math.sqrt((order + k) * k),
        )
        k -= 1
    return b0 - b1 * ((order + 1) - x) / math.sqrt(order + 1)


def wigner_values(rho: np.ndarray, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """W(x, p) on the outer grid; returns array of shape (len(p), len(x)).

    Diagonal ``n - m = L`` of rho contributes
    ``(2 alpha)^L e^{-2|alpha|^2} sum_m (-1)^m rho_{m,m+L} sqrt(m!/(m+L)!) L_m^L(4|alpha|^2)``;
    the Laguerre sums use normalized polynomials so nothing overflows, and the
    diagonals are combined Horner-style from the outermost one inwards.
    """
    rho = _as_density_matrix(rho)
    d = rho.shape[0]
    xx, pp = np.meshgrid(np.asarray(x, float), np.asarray(p, float))
    two_alpha = math.sqrt(2) * (xx + 1j * pp)
    x4 = np.abs(two_alpha) ** 2
    scale = np.max(np.abs(rho)) if rho.size else 0.0
    coeff = np.where(np.abs(rho) > RHO_RELATIVE_CUTOFF * scale, rho, 0)
    # off-diagonal pairs (m,n) and (n,m) give complex conjugates: count once, doubled
    coeff = coeff * (2 - np.eye(d))
    acc = np.zeros_like(two_alpha)
    for order in range(d - 1, -1, -1):
        diag = np.diagonal(coeff, order)
        if np.any(diag):
            acc = acc + _laguerre_series(order, x4, diag)
        if order:
            acc = acc * (two_alpha / math.sqrt(order))
    return acc.real * np.exp(-x4 / 2) / math.pi


def wigner(state, x_axis=None, p_axis=None, label: str = "", tau: float | None = None) -> WignerGrid:
    """Wigner function of a single-mode state (or density matrix) on a grid."""
    x = default_axis() if x_axis is None else np.asarray(x_axis, dtype=float)
    p = default_axis() if p_axis is None else np.asarray(p_axis, dtype=float)
    _check_axis(x, "x")
    _check_axis(p, "p")
    if not label and isinstance(state, QuantumState):
        label = state.space.labels[0]
    values = wigner_values(_as_density_matrix(state), x, p)
    values.flags.writeable = False
    return WignerGrid(x, p, values, label, tau)


def wigner_of_mode(state: QuantumState, mode, x_axis=None, p_axis=None, tau=None) -> WignerGrid:
    """Wigner function of one mode's reduced state."""
    k = state.space.index_of(mode) if isinstance(mode, str) else int(mode)
    red = state if len(state.space) == 1 else partial_trace(state, [k])
    return wigner(red, x_axis, p_axis, label=state.space.labels[k], tau=tau)


def negativity_volume(grid: WignerGrid) -> float:
    """Phase-space volume of the negative part, ``sum (|W| - W)/2 dx dp``."""
    w = grid.values
    return float(np.sum(np.abs(w) - w) / 2 * grid.dx * grid.dp)
