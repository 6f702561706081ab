"""Scalar statistics of (reduced) states: photon numbers, quadrature
variances, squeezing, photon-number distributions, Fano factors and
Schmidt numbers, plus first-extremum location on time series.

Quadratures follow ``x = (a + a^dag)/sqrt(2)``, ``p = -i (a - a^dag)/sqrt(2)``,
so the vacuum variance is 0.5.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, InversePurityOnly, NoExtremum, SpaceMismatch
from .fock import (
    QuantumState,
    embed_operator,
    number_operator,
    partial_trace,
    purity,
)

VACUUM_VARIANCE = 0.5
FANO_MIN_MEAN = 1e-12
SCHMIDT_SYMMETRY_RTOL = 1e-6


def _mode_index(state: QuantumState, mode) -> int:
    if isinstance(mode, str):
        return state.space.index_of(mode)
    if not 0 <= mode < len(state.space):
        raise SpaceMismatch(f"mode index {mode} outside 0..{len(state.space) - 1}")
    return int(mode)


def reduced(state: QuantumState, mode) -> np.ndarray:
    """Single-mode reduced density matrix as a plain array."""
    k = _mode_index(state, mode)
    if len(state.space) == 1:
        return state.dm()
    return partial_trace(state, [k]).data


def _moments(rho: np.ndarray) -> dict:
    """<a>, <a^2>, <a^dag a>, <(a^dag a)^2> of a single-mode density matrix."""
    d = rho.shape[0]
    n = np.arange(d)
    sq = np.sqrt(n[1:])
    diag = np.real(np.diagonal(rho))
    # <a> = sum_n sqrt(n) rho[n, n-1];  <a^2> = sum_n sqrt(n(n-1)) rho[n, n-2]
    a1 = np.sum(sq * np.diagonal(rho, -1))
    a2 = np.sum(np.sqrt(n[2:] * (n[2:] - 1)) * np.diagonal(rho, -2)) if d > 2 else 0j
    return {"a": a1, "a2": a2, "n": float(diag @ n), "n2": float(diag @ n**2)}


def mean_photon(state: QuantumState, mode) -> float:
    """Tr[N_j rho_j] from the reduced density matrix."""
    rho = reduced(state, mode)
    val = np.diagonal(rho) @ np.arange(rho.shape[0])
    if abs(val.imag) > 1e-10:
        raise ConsistencyError(f"photon number has imaginary part {val.imag:.3e}")
    return float(val.real)


def expect_embedded(state: QuantumState, op, mode) -> complex:
    """<A_j> on the global state via the embedded operator (pure states).

    Independent route to single-mode expectations: no partial trace is taken.
    """
    if not state.is_pure:
        raise ValueError("embedded-operator route is for pure global states")
    k = _mode_index(state, mode)
    big = embed_operator(op, state.space, k).tocsr()
    if state.support is not None:
        big = big[state.support][:, state.support]
    return complex(np.vdot(state.data, big @ state.data))


def mean_photon_embedded(state: QuantumState, mode) -> float:
    k = _mode_index(state, mode)
    return expect_embedded(state, number_operator(state.space.modes[k]), k).real


@dataclass(frozen=True)
class QuadratureVariances:
    var_x: float
    var_p: float


def quadrature_variances_from_dm(rho: np.ndarray) -> QuadratureVariances:
    m = _moments(rho)
    a, a2, n = m["a"], m["a2"], m["n"]
    # <x^2> = (<a^2> + <a^dag^2> + 2<a^dag a> + 1)/2,  <x> = sqrt(2) Re<a>
    # <p^2> = (2<a^dag a> + 1 - <a^2> - <a^dag^2>)/2,  <p> = sqrt(2) Im<a>
    x2 = (2 * a2.real + 2 * n + 1) / 2
    p2 = (2 * n + 1 - 2 * a2.real) / 2
    var_x = x2 - 2 * a.real**2
    var_p = p2 - 2 * a.imag**2
    return QuadratureVariances(float(var_x), float(var_p))


def quadrature_variances(state: QuantumState, mode) -> QuadratureVariances:
    """Variances of x_j and p_j from the reduced density matrix.

    The moments use the untruncated ladder relations, so the vacuum gives
    exactly 0.5; the top Fock level's truncation artifact in ``[a, a^dag]`` is
    never used.
    """
    return quadrature_variances_from_dm(reduced(state, mode))


def squeezing_db(variance: float) -> float:
    """Noise reduction below vacuum, ``10 log10(0.5 / variance)`` in dB."""
    if not variance > 0:
        raise DomainError(f"variance must be positive, got {variance}")
    return 10 * math.log10(VACUUM_VARIANCE / variance)


@dataclass(frozen=True)
class PhotonDistribution:
    label: str
    probabilities: np.ndarray

    def __post_init__(self):
        total = float(np.sum(self.probabilities))
        if abs(total - 1) > 1e-8:
            raise ConsistencyError(f"photon distribution sums to {total}")
        if np.min(self.probabilities) < -1e-10:
            raise ConsistencyError("photon distribution has significantly negative entries")

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.probabilities.size)

    def mean(self) -> float:
        return float(self.n @ self.probabilities)

    def fano(self) -> float:
        m = self.mean()
        if m < FANO_MIN_MEAN:
            raise DomainError("Fano factor undefined for vacuum")
        return float((self.n**2 @ self.probabilities - m**2) / m)

    def odd_weight(self) -> float:
        return float(np.sum(self.probabilities[1::2]))

    def clipped(self) -> np.ndarray:
        """Probabilities with round-off negatives set to zero (for output only)."""
        return np.clip(self.probabilities, 0.0, None)


def photon_distribution(state: QuantumState, mode) -> PhotonDistribution:
    k = _mode_index(state, mode)
    probs = np.real(np.diagonal(reduced(state, k))).copy()
    return PhotonDistribution(state.space.labels[k], probs)


def odd_parity_weight(state: QuantumState, mode) -> float:
    return photon_distribution(state, mode).odd_weight()


def fano_factor_from_dm(rho: np.ndarray) -> float:
    m = _moments(rho)
    if m["n"] < FANO_MIN_MEAN:
        raise DomainError("Fano factor undefined for vacuum (mean photon number ~ 0)")
    return (m["n2"] - m["n"] ** 2) / m["n"]


def fano_factor(state: QuantumState, mode) -> float:
    """``(<N^2> - <N>^2) / <N>`` of one mode."""
    return fano_factor_from_dm(reduced(state, mode))


def schmidt_number(
    state: QuantumState, partition: Iterable[int], check_symmetry: bool = True, warn_mixed: bool = True
) -> float:
    """Inverse purity ``1 / Tr[rho_A^2]`` of the modes in ``partition``.

    For a pure global state this is the Schmidt number and is checked against
    the complementary partition.  For a mixed global state the same number is
    returned, but it is only an inverse purity, not an entanglement measure;
    use :func:`schmidt_is_entanglement` to tell the two apart.
    """
    part = sorted(set(_mode_index(state, k) for k in partition))
    rest = [k for k in range(len(state.space)) if k not in part]
    if not part or not rest:
        raise SpaceMismatch("partition must be a non-empty proper subset of the modes")
    if warn_mixed and not state.is_pure:
        warnings.warn("global state is mixed: K is an inverse purity, not an entanglement measure", InversePurityOnly, stacklevel=2)
    pa = purity(partition_trace(state, part))
    k_a = 1.0 / pa
    if check_symmetry and state.is_pure:
        k_b = 1.0 / purity(partition_trace(state, rest))
        if abs(k_a - k_b) > SCHMIDT_SYMMETRY_RTOL * max(k_a, k_b):
            raise ConsistencyError(f"Schmidt numbers of complementary partitions differ: {k_a} vs {k_b}")
    return k_a


def partition_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    if len(keep) == len(state.space):
        return state
    return partial_trace(state, keep)


def schmidt_is_entanglement(state: QuantumState) -> bool:
    return state.is_pure


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class ObservableRecord:
    tau: float
    labels: tuple[str, ...]
    mean_photons: tuple[float, ...]
    var_x: tuple[float, ...]
    var_p: tuple[float, ...]
    squeezing_db_x: tuple[float, ...]
    squeezing_db_p: tuple[float, ...]
    fano: tuple[float, ...]
    odd_parity_weight: tuple[float, ...]
    schmidt_K: float
    schmidt_is_entanglement: bool
    purity: float
    trace_error: float

    def mode(self, label_or_index):
        k = self.labels.index(label_or_index) if isinstance(label_or_index, str) else label_or_index
        return {
            "N": self.mean_photons[k],
            "var_x": self.var_x[k],
            "var_p": self.var_p[k],
            "db_x": self.squeezing_db_x[k],
            "db_p": self.squeezing_db_p[k],
            "FF": self.fano[k],
            "odd": self.odd_parity_weight[k],
        }


def observable_record(state: QuantumState, tau: float, partition: Sequence[int] = (0,)) -> ObservableRecord:
    """Every per-mode and global statistic of one snapshot.

    The Fano factor of an (almost) empty mode is undefined and reported as NaN.
    """
    ns, vx, vp, dbx, dbp, ff, odd = [], [], [], [], [], [], []
    for k in range(len(state.space)):
        rho = reduced(state, k)
        m = _moments(rho)
        q = quadrature_variances_from_dm(rho)
        diag = np.real(np.diagonal(rho))
        ns.append(m["n"])
        vx.append(q.var_x)
        vp.append(q.var_p)
        dbx.append(squeezing_db(q.var_x))
        dbp.append(squeezing_db(q.var_p))
        ff.append((m["n2"] - m["n"] ** 2) / m["n"] if m["n"] >= FANO_MIN_MEAN else float("nan"))
        odd.append(float(np.sum(diag[1::2])))
    if state.is_pure:
        glob_purity = purity(state)
        trace_error = abs(float(np.vdot(state.data, state.data).real) - 1.0)
    else:
        glob_purity = purity(state)
        trace_error = abs(float(np.trace(state.data).real) - 1.0)
    K = schmidt_number(state, partition, warn_mixed=False) if len(state.space) > 1 else 1.0
    return ObservableRecord(
        tau=float(tau),
        labels=state.space.labels,
        mean_photons=tuple(ns),
        var_x=tuple(vx),
        var_p=tuple(vp),
        squeezing_db_x=tuple(dbx),
        squeezing_db_p=tuple(dbp),
        fano=tuple(ff),
        odd_parity_weight=tuple(odd),
        schmidt_K=float(K),
        schmidt_is_entanglement=state.is_pure,
        purity=glob_purity,
        trace_error=trace_error,
    )


# ---------------------------------------------------------------------------
# extrema


@dataclass(frozen=True)
class Extremum:
    tau: float
    value: float


def first_extremum(tau: Sequence[float], values: Sequence[float], which: str = "max") -> Extremum:
    """First local max/min of a sampled curve, refined by a parabola through
    the three samples around the sign change of the discrete derivative."""
    if which not in ("max", "min"):
        raise ValueError("which must be 'max' or 'min'")
    t = np.asarray(tau, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.size != v.size or t.size < 3:
        raise NoExtremum("need at least three samples")
    if np.any(np.diff(t) <= 0):
        raise ValueError("tau must be strictly increasing")
    d = np.diff(v)
    if which == "min":
        d = -d
    # first k with rising segment before and non-rising segment after sample k
    hits = np.flatnonzero((d[:-1] > 0) & (d[1:] <= 0))
    if hits.size == 0:
        raise NoExtremum(f"series has no interior local {which}imum")
    k = hits[0] + 1
    t0, t1, t2 = t[k - 1 : k + 2]
    y0, y1, y2 = v[k - 1 : k + 2]
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (y1 - y0) + t1 * (y0 - y2) + t0 * (y2 - y1)) / denom
    b = (t2**2 * (y0 - y1) + t1**2 * (y2 - y0) + t0**2 * (y1 - y2)) / denom
    c = (t1 * t2 * (t1 - t2) * y0 + t2 * t0 * (t2 - t0) * y1 + t0 * t1 * (t0 - t1) * y2) / denom
    if a == 0:
        return Extremum(float(t1), float(y1))
    tv = -b / (2 * a)
    return Extremum(float(tv), float(c - b**2 / (4 * a)))


def extremum_scan(series: Sequence[ObservableRecord], mode, which: str = "max") -> Extremum:
    """First extremum of ``N_mode(tau)`` over a record series."""
    if not series:
        raise NoExtremum("empty series")
    k = series[0].labels.index(mode) if isinstance(mode, str) else mode
    return first_extremum([r.tau for r in series], [r.mean_photons[k] for r in series], which)
