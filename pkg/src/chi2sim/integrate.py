"""Adaptive Dormand-Prince 5(4) integration with continuous output.

Works on arrays of any shape (vectors for kets, matrices for density
matrices); the error norm is the RMS over the flattened array.  Output at
requested times is produced by the standard 4th-order continuous extension
of the scheme, so step selection never depends on the output grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import ToleranceNotMet

# Butcher tableau (Hairer, Norsett & Wanner, "Solving ODEs I", table 5.2)
C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
# difference between 5th- and embedded 4th-order weights
E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output: y(t + th*h) = y + h * sum_i K_i * (P[i] @ [th, th^2, th^3, th^4])
P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_A_ROWS = [np.array(row, dtype=float) for row in A]

SAFETY = 0.9
ERR_EXPONENT = -1 / 5
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


@dataclass(frozen=True)
class SolverSettings:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = np.inf
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol >= 0 and self.max_step > 0):
            raise ValueError(f"invalid solver settings {self}")


@dataclass
class IntegrationStats:
    accepted: int = 0
    rejected: int = 0
    evaluations: int = 0


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(x) ** 2))) if x.size else 0.0


def _initial_step(fun, t0, y0, f0, direction_end, settings: SolverSettings) -> float:
    # Hairer's starting-step heuristic (order 5)
    scale = settings.abs_tol + np.abs(y0) * settings.rel_tol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_end - t0)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, settings.max_step)


def dopri5(
    fun: Callable,
    y0: np.ndarray,
    t_eval: Sequence[float],
    settings: SolverSettings = SolverSettings(),
    after_step: Callable[[np.ndarray], None] | None = None,
    stats: IntegrationStats | None = None,
    inplace: bool = False,
) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(t, y(t))`` for every ``t`` in ``t_eval`` (strictly increasing).

    Integration starts at ``t_eval[0]`` from ``y0``.  ``fun(t, y)`` returns the
    derivative, or with ``inplace=True`` is called as ``fun(t, y, out)``.
    ``after_step(y)`` modifies every accepted step's end value in place (e.g.
    to re-Hermitize a density matrix); it must only remove round-off.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or t_eval.size == 0:
        raise ValueError("t_eval must be a non-empty 1-D sequence")
    if np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    stats = stats if stats is not None else IntegrationStats()
    shape = np.shape(y0)
    size = int(np.prod(shape))

    y = np.array(y0, dtype=complex).reshape(-1)
    t = float(t_eval[0])
    yield t, y.reshape(shape).copy()
    if t_eval.size == 1:
        return
    t_end = float(t_eval[-1])
    pending = 1

    stages = np.empty((7, size), dtype=complex)

    def evaluate(slot, tt, yy):
        stats.evaluations += 1
        if inplace:
            fun(tt, yy.reshape(shape), stages[slot].reshape(shape))
        else:
            stages[slot] = np.asarray(fun(tt, yy.reshape(shape))).reshape(-1)

    evaluate(0, t, y)
    h = _initial_step(
        lambda tt, yy: _eval_copy(fun, tt, yy, shape, inplace), t, y, stages[0], t_end, settings
    )
    rtol, atol = settings.rel_tol, settings.abs_tol
    buf = np.empty(size, dtype=complex)
    y_new = np.empty(size, dtype=complex)

    while pending < t_eval.size:
        if stats.accepted + stats.rejected >= settings.max_steps:
            raise ToleranceNotMet(f"exceeded {settings.max_steps} steps at t={t:.6g}")
        min_step = 10 * np.finfo(float).eps * max(abs(t), 1.0)
        h = min(h, settings.max_step, t_end - t)
        if h < min_step:
            raise ToleranceNotMet(f"step size underflow at t={t:.6g} (h={h:.3e})")

        for s in range(1, 6):
            _kernels.combine(buf, y, h, _A_ROWS[s], stages[:s])
            evaluate(s, t + C[s] * h, buf)
        _kernels.combine(y_new, y, h, B[:6], stages[:6])
        evaluate(6, t + h, y_new)
        err_norm = _kernels.error_norm(y, y_new, stages, E, h, atol, rtol)

        if err_norm <= 1.0:
            t_new = t + h
            # continuous output for every requested time inside (t, t_new]
            while pending < t_eval.size and t_eval[pending] <= t_new + 1e-14 * max(1.0, abs(t_new)):
                te = float(t_eval[pending])
                if abs(te - t_new) <= 1e-14 * max(1.0, abs(t_new)):
                    out = y_new.copy()
                else:
                    theta = (te - t) / h
                    q = P @ np.array([theta, theta**2, theta**3, theta**4])
                    out = np.empty(size, dtype=complex)
                    _kernels.combine(out, y, h, q, stages)
                out = out.reshape(shape)
                if after_step is not None:
                    after_step(out)
                yield te, out
                pending += 1
            if after_step is not None:
                # stage 6 is kept for FSAL: the projection only removes round-off
                after_step(y_new.reshape(shape))
            stats.accepted += 1
            t = t_new
            y, y_new = y_new, y
            stages[0] = stages[6]
            factor = MAX_FACTOR if err_norm == 0 else min(MAX_FACTOR, SAFETY * err_norm**ERR_EXPONENT)
            h *= factor
        else:
            stats.rejected += 1
            h *= max(MIN_FACTOR, SAFETY * err_norm**ERR_EXPONENT)


def _eval_copy(fun, t, y, shape, inplace):
    if inplace:
        out = np.empty(shape, dtype=complex)
        fun(t, y.reshape(shape), out)
        return out.reshape(-1)
    return np.asarray(fun(t, y.reshape(shape))).reshape(-1)
