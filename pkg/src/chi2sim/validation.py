"""Convergence and consistency checks, plus independent reference oracles.

The oracles here deliberately share no code path with the production
algorithms: the Wigner function is integrated directly from position-space
matrix elements built out of Hermite functions, and the master equation is
solved by exponentiating the dense vectorized generator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .dynamics import LindbladModel, Scenario, simulate
from .errors import NoExtremum, NonMonotoneConvergence, ResourceExceeded, ToleranceNotMet
from .fock import QuantumState, boundary_occupancy, partial_trace, state_health
from .integrate import SolverSettings, dopri5
from .observables import first_extremum, observable_record
from .wigner import default_axis, wigner_values

DEFAULT_THRESHOLD = 1e-4
WIGNER_STABILITY_TOL = 1e-3
HEALTH_TRACE_TOL = 1e-8
HEALTH_EIGEN_FLOOR = -1e-8
HEALTH_PURITY_SLACK = 1e-8
TOP_LEVEL_LIMIT = 1e-6
# relative deltas are taken against max(|value|, this) so zero-valued observables do not divide by zero
_DELTA_FLOOR = 1e-12

DEGENERATE_LADDER = ((80, 40), (90, 45), (100, 50))
NONDEGENERATE_LADDER = ((40, 40, 40), (45, 45, 45), (50, 50, 50))


# ---------------------------------------------------------------------------
# oracles


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Oscillator eigenfunctions psi_n(x), n = 0..n_max, shape (n_max+1, len(x)).

    Normalized for x = (a + a^dag)/sqrt(2), so |psi_0|^2 has variance 1/2.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-(x**2) / 2)
    if n_max >= 1:
        out[1] = math.sqrt(2) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_distribution(rho: np.ndarray, x: np.ndarray) -> np.ndarray:
    """<x|rho|x> on the points ``x``."""
    psi = hermite_functions(rho.shape[0] - 1, x)
    return np.real(np.einsum("mk,mn,nk->k", psi, rho, psi))


def wigner_by_integration(rho: np.ndarray, x: np.ndarray, p: np.ndarray, y_extent: float = 12.0, n_y: int = 2401) -> np.ndarray:
    """W(x, p) = (1/pi) int <x-y|rho|x+y> exp(2ipy) dy by trapezoidal quadrature.

    The integrand is smooth and Gaussian-decaying, so the uniform rule
    converges spectrally once ``y_extent`` clears the state's support.
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    y = np.linspace(-y_extent, y_extent, n_y)
    dy = y[1] - y[0]
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    out = np.empty((p.size, x.size))
    phase = np.exp(2j * np.outer(p, y))  # (len(p), n_y)
    for j, xv in enumerate(x):
        psi_minus = hermite_functions(d - 1, xv - y)
        psi_plus = hermite_functions(d - 1, xv + y)
        kernel = np.einsum("my,mn,ny->y", psi_minus, rho, psi_plus)
        vals = phase @ kernel * dy
        out[:, j] = vals.real / math.pi
    return out


def lindblad_superoperator(model: LindbladModel) -> np.ndarray:
    """Dense generator acting on column-stacked vec(rho)."""
    h = model.hamiltonian.toarray()
    n = h.shape[0]
    eye = np.eye(n)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c_op in model.collapse_ops:
        c = c_op.toarray()
        cdc = c.conj().T @ c
        sup += np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye)
    return sup


def oracle_master_evolution(initial: QuantumState, model: LindbladModel, tau_samples: Sequence[float]) -> list[np.ndarray]:
    """Density matrices exp(L tau) rho0 on the full box, one per sample."""
    rho0 = initial.to_mixed().full()
    n = rho0.shape[0]
    sup = lindblad_superoperator(model)
    vec0 = rho0.reshape(-1, order="F")
    return [(sla.expm(sup * float(t)) @ vec0).reshape(n, n, order="F") for t in tau_samples]


# ---------------------------------------------------------------------------
# short-time expansion


@dataclass(frozen=True)
class ShortTimeResult:
    taus: tuple[float, ...]
    errors: tuple[float, ...]
    measured_order: float  # NaN when every error is exactly zero
    noise_floor: float
    states: tuple[np.ndarray, ...] = field(repr=False, default=())


def short_time_expansion_check(hamiltonian, psi0: QuantumState, tau_list: Sequence[float], settings: SolverSettings | None = None) -> ShortTimeResult:
    """Fit the order of ``||psi(tau) - (1 - i tau H) psi0||`` against tau.

    A correct propagator gives exponent 2 (the Taylor remainder).  The
    integration noise floor is estimated by repeating the run with the step
    size capped well below the smallest tau (a different discretization of
    the same problem); if it is not well below the smallest measured error
    the fit is meaningless and ToleranceNotMet is raised.
    """
    taus = np.asarray(sorted(float(t) for t in tau_list))
    if taus.size < 2 or taus[0] <= 0:
        raise ValueError("need at least two positive tau values")
    tight = settings or SolverSettings(rel_tol=1e-13, abs_tol=1e-15)
    capped = replace(tight, max_step=min(tight.max_step, taus[0] / 8))
    h = hamiltonian.matrix
    psi = np.asarray(psi0.full(), dtype=complex)
    first = psi - 1j * taus[:, None] * (h @ psi)[None, :]
    rhs = lambda _t, y: -1j * (h @ y)
    grid = np.concatenate([[0.0], taus])
    fine = [y for _, y in dopri5(rhs, psi, grid, tight)][1:]
    other = [y for _, y in dopri5(rhs, psi, grid, capped)][1:]
    errors = np.array([np.linalg.norm(f - l) for f, l in zip(fine, first)])
    floor = max(float(np.linalg.norm(a - b)) for a, b in zip(fine, other))
    if np.all(errors == 0):
        return ShortTimeResult(tuple(taus), tuple(errors), float("nan"), floor, tuple(fine))
    if floor > 0.01 * errors.min():
        raise ToleranceNotMet(
            f"integration noise {floor:.2e} is not small against the smallest expansion error {errors.min():.2e}"
        )
    order = float(np.polyfit(np.log(taus), np.log(errors), 1)[0])
    return ShortTimeResult(tuple(taus), tuple(errors), order, floor, tuple(fine))


def first_order_coefficient(result: ShortTimeResult, tau: float, target: np.ndarray) -> complex:
    """``<target|psi(tau)> / (-i tau)`` for a tau in the result; target is a full-box vector."""
    k = result.taus.index(tau)
    return complex(np.vdot(target, result.states[k]) / (-1j * tau))


# ---------------------------------------------------------------------------
# cutoff ladders


@dataclass
class RungResult:
    cutoffs: tuple[int, ...]
    observables: dict[str, float]
    max_trace_error: float
    min_eigenvalue: float
    max_purity: float
    max_top_occupancy: float
    health_ok: bool
    wigner: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "cutoffs": list(self.cutoffs),
            "observables": self.observables,
            "max_trace_error": self.max_trace_error,
            "min_eigenvalue": self.min_eigenvalue,
            "max_purity": self.max_purity,
            "max_top_occupancy": self.max_top_occupancy,
            "health_ok": self.health_ok,
        }


@dataclass
class ConvergenceReport:
    ladder: list[tuple[int, ...]]
    threshold: float
    tau_eval: float
    rungs: list[RungResult] = field(default_factory=list)
    deltas: dict[str, list[float]] = field(default_factory=dict)
    verdict: dict[str, bool] = field(default_factory=dict)
    wigner_deltas: dict[str, list[float]] = field(default_factory=dict)
    wigner_stable: dict[str, bool] = field(default_factory=dict)
    error: str | None = None

    @property
    def converged(self) -> bool:
        return bool(self.verdict) and all(self.verdict.values()) and all(self.wigner_stable.values()) and all(
            r.health_ok for r in self.rungs
        )

    def to_dict(self) -> dict:
        return {
            "ladder": [list(c) for c in self.ladder],
            "threshold": self.threshold,
            "tau_eval": self.tau_eval,
            "rungs": [r.to_dict() for r in self.rungs],
            "deltas": self.deltas,
            "verdict": self.verdict,
            "wigner_deltas": self.wigner_deltas,
            "wigner_stable": self.wigner_stable,
            "converged": self.converged,
            "error": self.error,
        }


def default_ladder(process: str) -> tuple[tuple[int, ...], ...]:
    return DEGENERATE_LADDER if process == "degenerate" else NONDEGENERATE_LADDER


def _check_ladder(ladder) -> list[tuple[int, ...]]:
    rungs = [tuple(int(c) for c in r) for r in ladder]
    if len(rungs) < 2:
        raise ValueError("a ladder needs at least two rungs")
    for lo, hi in zip(rungs, rungs[1:]):
        if len(lo) != len(hi) or any(b <= a for a, b in zip(lo, hi)):
            raise ValueError(f"ladder must increase in every cutoff: {lo} -> {hi}")
    return rungs


def summary_observables(records, tau_eval: float) -> dict[str, float]:
    """Scalar observables of a run used for convergence and reproduction checks.

    Per mode at ``tau_eval``: N, varx, varp, FF; the Schmidt number K; and,
    when the series allows it, the first extremum location of every N and
    the fractional change of every initially occupied mode.
    """
    taus = np.array([r.tau for r in records])
    k = int(np.argmin(np.abs(taus - tau_eval)))
    rec = records[k]
    out: dict[str, float] = {}
    for j, lab in enumerate(rec.labels):
        out[f"N_{lab}"] = rec.mean_photons[j]
        out[f"varx_{lab}"] = rec.var_x[j]
        out[f"varp_{lab}"] = rec.var_p[j]
        if not math.isnan(rec.fano[j]):
            out[f"FF_{lab}"] = rec.fano[j]
    out["K"] = rec.schmidt_K
    if taus[0] == 0:
        for j, lab in enumerate(rec.labels):
            n0 = records[0].mean_photons[j]
            if n0 > 0:
                out[f"depletion_{lab}"] = (n0 - rec.mean_photons[j]) / n0
    if len(records) >= 3:
        for j, lab in enumerate(rec.labels):
            series = [r.mean_photons[j] for r in records]
            for which in ("max", "min"):
                try:
                    out[f"tau_{which}_N_{lab}"] = first_extremum(taus, series, which).tau
                except NoExtremum:
                    pass
    return out


def _run_rung(scenario: Scenario, tau_eval, partition, wigner_modes, wigner_axis, samples=None) -> RungResult:
    records = []
    tr_err, min_eig, max_pur, top = 0.0, np.inf, 0.0, 0.0
    snapshot = None
    pairs = samples if samples is not None else simulate(scenario, monitor_leakage=False)
    for tau, state in pairs:
        h = state_health(state)
        tr_err = max(tr_err, h.trace_error)
        min_eig = min(min_eig, h.min_eigenvalue)
        max_pur = max(max_pur, h.purity)
        top = max(top, float(np.max(boundary_occupancy(state, levels=1))))
        records.append(observable_record(state, tau, partition))
        if abs(tau - tau_eval) < 1e-12:
            snapshot = state
    ok = tr_err < HEALTH_TRACE_TOL and min_eig >= HEALTH_EIGEN_FLOOR and max_pur <= 1 + HEALTH_PURITY_SLACK
    grids = {}
    if snapshot is not None and wigner_modes:
        for mode in wigner_modes:
            k = snapshot.space.index_of(mode)
            rho = partial_trace(snapshot, [k]).dm()
            grids[mode] = wigner_values(rho, wigner_axis, wigner_axis)
    return RungResult(
        tuple(m.cutoff for m in scenario.modes),
        summary_observables(records, tau_eval),
        tr_err,
        float(min_eig),
        max_pur,
        top,
        ok,
        grids,
    )


def run_cutoff_ladder(
    scenario: Scenario,
    ladder=None,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    tau_eval: float | None = None,
    partition: Sequence[int] = (0,),
    wigner_modes: Sequence[str] = (),
    wigner_axis: np.ndarray | None = None,
    precomputed: dict | None = None,
) -> ConvergenceReport:
    """Run ``scenario`` at every rung of ``ladder`` and compare observables.

    ``precomputed`` may map a cutoff tuple to an already evolved list of
    ``(tau, state)`` pairs for that rung (same scenario), which is reused
    instead of re-running it.  A rung that exceeds the memory budget raises
    ResourceExceeded carrying the partial report as ``partial_report``.
    """
    rungs = _check_ladder(ladder if ladder is not None else default_ladder(scenario.process))
    tau_eval = float(scenario.tau_samples[-1] if tau_eval is None else tau_eval)
    if not any(abs(t - tau_eval) < 1e-12 for t in scenario.tau_samples):
        raise ValueError(f"tau_eval={tau_eval} is not one of the scenario's tau samples")
    axis = default_axis() if wigner_axis is None else np.asarray(wigner_axis, dtype=float)
    report = ConvergenceReport(rungs, threshold, tau_eval)
    precomputed = precomputed or {}
    for cut in rungs:
        sc = scenario.with_cutoffs(cut)
        try:
            res = _run_rung(sc, tau_eval, partition, wigner_modes, axis, precomputed.get(cut))
        except ResourceExceeded as exc:
            report.error = f"rung {cut}: {exc}"
            _finish(report)
            exc.partial_report = report
            raise
        report.rungs.append(res)
    _finish(report)
    return report


def _finish(report: ConvergenceReport):
    if len(report.rungs) < 2:
        return
    names = [k for k in report.rungs[-1].observables if all(k in r.observables for r in report.rungs)]
    for name in names:
        vals = [r.observables[name] for r in report.rungs]
        deltas = [abs(b - a) / max(abs(b), _DELTA_FLOOR) for a, b in zip(vals, vals[1:])]
        report.deltas[name] = deltas
        report.verdict[name] = deltas[-1] < report.threshold
        if report.verdict[name] and any(d2 > d1 for d1, d2 in zip(deltas, deltas[1:])):
            warnings.warn(
                f"{name}: deltas {deltas} grow up the ladder; the cutoff may be interacting with truncation",
                NonMonotoneConvergence,
                stacklevel=3,
            )
    for mode in report.rungs[-1].wigner:
        grids = [r.wigner.get(mode) for r in report.rungs]
        if any(g is None for g in grids):
            continue
        diffs = [float(np.max(np.abs(b - a))) for a, b in zip(grids, grids[1:])]
        report.wigner_deltas[mode] = diffs
        report.wigner_stable[mode] = diffs[-1] < WIGNER_STABILITY_TOL
