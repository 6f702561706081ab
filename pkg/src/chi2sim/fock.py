"""Truncated Fock-space linear algebra.

Mode ordering convention: mode 0 is the leftmost tensor factor, so the flat
basis index of ``|n_0, n_1, ...>`` is ``np.ravel_multi_index(n, dims)``.

States may live on the full truncated box or on a *support*: a sorted subset
of box indices outside of which every amplitude is exactly zero.  The
dynamics module uses supports to evolve only the reachable part of the box;
everything here accepts both layouts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .errors import IndexOutOfRange, InvalidState, SpaceMismatch, TailTooHeavy

SPARSE_DENSITY_LIMIT = 0.25
PURE_NORM_TOL = 1e-10
TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
EIGEN_FLOOR = -1e-8
# constructor-time eigenvalue check only for small matrices; state_health
# always does the full decomposition
_CTOR_EIG_DIM = 256


@dataclass(frozen=True)
class ModeSpec:
    label: str
    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 1:
            raise ValueError(f"mode {self.label!r}: cutoff must be an integer >= 1, got {self.cutoff}")
        object.__setattr__(self, "cutoff", int(self.cutoff))

    @property
    def dim(self) -> int:
        return self.cutoff + 1


@dataclass(frozen=True)
class CompositeSpace:
    modes: tuple[ModeSpec, ...]

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("a space needs at least one mode")
        labels = [m.label for m in modes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"mode labels must be unique, got {labels}")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def from_cutoffs(cls, cutoffs: Sequence[int], labels: Sequence[str] | None = None) -> "CompositeSpace":
        if labels is None:
            labels = [str(k) for k in range(len(cutoffs))]
        return cls(tuple(ModeSpec(l, c) for l, c in zip(labels, cutoffs, strict=True)))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.dim for m in self.modes)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m.label for m in self.modes)

    @property
    def cutoffs(self) -> tuple[int, ...]:
        return tuple(m.cutoff for m in self.modes)

    def __len__(self):
        return len(self.modes)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpaceMismatch(f"no mode labelled {label!r} in {self.labels}") from None

    def subspace(self, keep: Iterable[int]) -> "CompositeSpace":
        return CompositeSpace(tuple(self.modes[k] for k in keep))

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, n_modes) integer array of Fock occupations of every basis state."""
        occ = np.stack(np.unravel_index(np.arange(self.dim), self.dims), axis=1)
        occ.flags.writeable = False
        return occ

    def basis_index(self, occupations: Sequence[int]) -> int:
        for n, m in zip(occupations, self.modes, strict=True):
            if not 0 <= n <= m.cutoff:
                raise IndexOutOfRange(f"occupation {n} outside 0..{m.cutoff} for mode {m.label!r}")
        return int(np.ravel_multi_index(tuple(occupations), self.dims))


def _as_space(obj) -> CompositeSpace:
    if isinstance(obj, CompositeSpace):
        return obj
    if isinstance(obj, ModeSpec):
        return CompositeSpace((obj,))
    raise TypeError(f"expected ModeSpec or CompositeSpace, got {type(obj).__name__}")


# ---------------------------------------------------------------------------
# operators


class Operator:
    """Square complex matrix acting on a :class:`CompositeSpace`.

    Storage is sparse CSR when fewer than 25% of the entries are non-zero and
    a dense ndarray otherwise.  ``matrix`` exposes whichever is in use.
    """

    __slots__ = ("space", "_m")

    def __init__(self, space, matrix):
        space = _as_space(space)
        if matrix.shape != (space.dim, space.dim):
            raise SpaceMismatch(f"matrix shape {matrix.shape} does not match space dimension {space.dim}")
        self.space = space
        self._m = _choose_storage(matrix)

    @property
    def matrix(self):
        return self._m

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self._m)

    @property
    def shape(self):
        return self._m.shape

    def toarray(self) -> np.ndarray:
        return self._m.toarray() if self.is_sparse else np.array(self._m)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self._m)

    def dag(self) -> "Operator":
        return Operator(self.space, self._m.conj().T)

    def max_abs(self) -> float:
        if self.is_sparse:
            return float(abs(self._m).max()) if self._m.nnz else 0.0
        return float(np.max(np.abs(self._m))) if self._m.size else 0.0

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise SpaceMismatch("operators act on different spaces")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self._m @ other._m)
        return self._m @ other

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self._m + other._m)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self._m - other._m)
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Operator(self.space, self._m * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return Operator(self.space, -self._m)

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"Operator({self.space.labels}, dim={self.space.dim}, {kind})"


def _choose_storage(matrix):
    if sp.issparse(matrix):
        n = matrix.shape[0] * matrix.shape[1]
        m = matrix.tocsr().astype(complex)
        m.eliminate_zeros()
        if n and m.nnz / n >= SPARSE_DENSITY_LIMIT:
            return m.toarray()
        return m
    arr = np.asarray(matrix, dtype=complex)
    n = arr.size
    if n and np.count_nonzero(arr) / n < SPARSE_DENSITY_LIMIT:
        return sp.csr_matrix(arr)
    return arr


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def annihilation(mode: ModeSpec) -> Operator:
    """Lowering operator with ``<n-1|a|n> = sqrt(n)`` on ``0..cutoff``."""
    n = np.arange(1, mode.dim)
    return Operator(mode, sp.diags(np.sqrt(n).astype(complex), 1, shape=(mode.dim, mode.dim), format="csr"))


def creation(mode: ModeSpec) -> Operator:
    return annihilation(mode).dag()


def number_operator(mode: ModeSpec) -> Operator:
    return Operator(mode, sp.diags(np.arange(mode.dim, dtype=complex), 0, format="csr"))


def identity(space) -> Operator:
    space = _as_space(space)
    return Operator(space, sp.identity(space.dim, dtype=complex, format="csr"))


def quadrature_x(mode: ModeSpec) -> Operator:
    a = annihilation(mode)
    return (a + a.dag()) * (1 / math.sqrt(2))


def quadrature_p(mode: ModeSpec) -> Operator:
    a = annihilation(mode)
    return (a - a.dag()) * (-1j / math.sqrt(2))


def embed_operator(op: Operator, space: CompositeSpace, mode_index: int) -> Operator:
    """Lift a single-mode operator into ``space`` acting on ``mode_index``."""
    if not 0 <= mode_index < len(space):
        raise SpaceMismatch(f"mode index {mode_index} outside 0..{len(space) - 1}")
    if len(op.space) != 1 or op.space.dim != space.dims[mode_index]:
        raise SpaceMismatch(
            f"single-mode operator of dimension {op.space.dim} cannot act on mode "
            f"{mode_index} of dimension {space.dims[mode_index]}"
        )
    left = math.prod(space.dims[:mode_index])
    right = math.prod(space.dims[mode_index + 1 :])
    m = sp.csr_matrix(op.matrix)
    if left > 1:
        m = sp.kron(sp.identity(left, format="csr"), m, format="csr")
    if right > 1:
        m = sp.kron(m, sp.identity(right, format="csr"), format="csr")
    return Operator(space, m)


def mode_operators(space: CompositeSpace) -> list[Operator]:
    """Embedded annihilation operators, one per mode, in mode order."""
    return [embed_operator(annihilation(m), space, k) for k, m in enumerate(space.modes)]


# ---------------------------------------------------------------------------
# states


class QuantumState:
    """Pure state vector or density matrix, optionally restricted to a support.

    ``data`` is a 1-D amplitude vector (pure) or a 2-D density matrix (mixed)
    expressed in the basis ``support`` (sorted box indices) or, when
    ``support`` is None, in the full tensor-product basis.
    """

    __slots__ = ("space", "data", "support", "info")

    def __init__(self, space, data, support=None, info=None, check=True):
        space = _as_space(space)
        data = np.asarray(data, dtype=complex)
        if support is not None:
            support = np.asarray(support, dtype=np.int64)
            if support.ndim != 1 or (support.size and (support[0] < 0 or support[-1] >= space.dim)):
                raise SpaceMismatch("support indices out of range")
            if np.any(np.diff(support) <= 0):
                raise SpaceMismatch("support must be strictly increasing")
            if support.size == space.dim:
                support = None
        n = space.dim if support is None else support.size
        if data.ndim == 1:
            if data.shape != (n,):
                raise SpaceMismatch(f"state vector length {data.shape[0]} != {n}")
        elif data.ndim == 2:
            if data.shape != (n, n):
                raise SpaceMismatch(f"density matrix shape {data.shape} != ({n}, {n})")
        else:
            raise SpaceMismatch("state data must be a vector or a square matrix")
        data.flags.writeable = False
        self.space = space
        self.data = data
        self.support = support
        self.info = dict(info or {})
        if check:
            self.validate()

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def occupations(self) -> np.ndarray:
        occ = self.space.occupations
        return occ if self.support is None else occ[self.support]

    def validate(self):
        if self.is_pure:
            err = abs(np.vdot(self.data, self.data).real - 1.0)
            if err > PURE_NORM_TOL:
                raise InvalidState(f"pure state norm deviates from 1 by {err:.3e}")
            return
        rho = self.data
        tr_err = abs(np.trace(rho) - 1.0)
        if tr_err > TRACE_TOL:
            raise InvalidState(f"trace deviates from 1 by {tr_err:.3e}")
        herm = float(np.max(np.abs(rho - rho.conj().T))) if rho.size else 0.0
        if herm > HERMITIAN_TOL:
            raise InvalidState(f"density matrix not Hermitian (max deviation {herm:.3e})")
        if self.dim <= _CTOR_EIG_DIM:
            lo = float(np.linalg.eigvalsh(rho)[0])
            if lo < EIGEN_FLOOR:
                raise InvalidState(f"density matrix has eigenvalue {lo:.3e} < {EIGEN_FLOOR}")

    def dm(self) -> np.ndarray:
        """Density matrix in the stored basis."""
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self) -> "QuantumState":
        if not self.is_pure:
            return self
        return QuantumState(self.space, self.dm(), self.support, self.info, check=False)

    def full(self) -> np.ndarray:
        """Vector or density matrix on the whole truncated box."""
        if self.support is None:
            return np.array(self.data)
        n = self.space.dim
        if self.is_pure:
            out = np.zeros(n, dtype=complex)
            out[self.support] = self.data
        else:
            out = np.zeros((n, n), dtype=complex)
            out[np.ix_(self.support, self.support)] = self.data
        return out

    def populations(self) -> np.ndarray:
        """Occupation probability of every stored basis state."""
        if self.is_pure:
            return np.abs(self.data) ** 2
        return np.real(np.diagonal(self.data)).copy()

    def __repr__(self):
        kind = "pure" if self.is_pure else "mixed"
        sup = "" if self.support is None else f", support={self.support.size}"
        return f"QuantumState({kind}, modes={self.space.labels}, dims={self.space.dims}{sup})"


def _unit_phases(phase: float, count: int) -> np.ndarray:
    """``exp(1j * n * phase)`` for n = 0..count-1, exact for quarter turns."""
    quarter = phase / (math.pi / 2)
    k = round(quarter)
    if abs(quarter - k) < 1e-13:
        table = np.array([1, 1j, -1, -1j], dtype=complex)
        return table[(k * np.arange(count)) % 4]
    return np.exp(1j * phase * np.arange(count))


def coherent_amplitudes(cutoff: int, mean_photons: float, phase: float = 0.0) -> tuple[np.ndarray, float]:
    """Truncated coherent-state amplitudes and their raw squared norm.

    The amplitudes are returned *before* renormalization so callers can see
    the tail mass lost to truncation.
    """
    if mean_photons < 0:
        raise ValueError("mean photon number must be non-negative")
    n = np.arange(cutoff + 1)
    if mean_photons == 0:
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[0] = 1.0
        return amps, 1.0
    log_mag = -mean_photons / 2 + n * (0.5 * math.log(mean_photons)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * _unit_phases(phase, cutoff + 1)
    return amps, float(np.sum(np.exp(2 * log_mag)))


def coherent_state(mode: ModeSpec, mean_photons: float, phase: float = 0.0) -> QuantumState:
    amps, raw = coherent_amplitudes(mode.cutoff, mean_photons, phase)
    if raw < 1 - 1e-10:
        warnings.warn(
            f"coherent state with |alpha|^2={mean_photons} loses {1 - raw:.2e} probability "
            f"at cutoff {mode.cutoff}; state renormalized",
            TailTooHeavy,
            stacklevel=2,
        )
    info = {"raw_norm_sq": raw, "tail_mass": max(0.0, 1.0 - raw)}
    return QuantumState(mode, amps / math.sqrt(raw), info=info)


def fock_state(mode: ModeSpec, n: int) -> QuantumState:
    if not 0 <= n <= mode.cutoff:
        raise IndexOutOfRange(f"Fock level {n} outside 0..{mode.cutoff} for mode {mode.label!r}")
    v = np.zeros(mode.dim, dtype=complex)
    v[n] = 1.0
    return QuantumState(mode, v)


def vacuum(mode: ModeSpec) -> QuantumState:
    return fock_state(mode, 0)


def tensor_product(states: Sequence[QuantumState], space: CompositeSpace | None = None) -> QuantumState:
    """Kronecker product of single-mode states, leftmost factor = mode 0.

    Mixed factors promote the result to a density matrix.
    """
    states = list(states)
    if not states:
        raise SpaceMismatch("need at least one factor")
    modes = []
    for s in states:
        modes.extend(s.space.modes)
    built = CompositeSpace(tuple(modes))
    if space is None:
        space = built
    elif space.dims != built.dims or len(space) != len(built):
        raise SpaceMismatch(f"factor dimensions {built.dims} do not match space {space.dims}")
    datas = [s.full() for s in states]
    if all(s.is_pure for s in states):
        out = datas[0]
        for d in datas[1:]:
            out = np.kron(out, d)
    else:
        mats = [np.outer(d, d.conj()) if d.ndim == 1 else d for d in datas]
        out = mats[0]
        for d in mats[1:]:
            out = np.kron(out, d)
    info = {}
    for s in states:
        if "tail_mass" in s.info:
            info.setdefault("tail_mass", {})[s.space.labels[0]] = s.info["tail_mass"]
    return QuantumState(space, out, info=info)


def _normalize_keep(space: CompositeSpace, keep) -> list[int]:
    if isinstance(keep, int):
        keep = [keep]
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise SpaceMismatch("keep set must not be empty")
    if keep[0] < 0 or keep[-1] >= len(space):
        raise SpaceMismatch(f"mode indices {keep} outside 0..{len(space) - 1}")
    return keep


def partial_trace(state: QuantumState, keep) -> QuantumState:
    """Reduced density matrix on the modes in ``keep`` (kept in mode order)."""
    space = state.space
    keep = _normalize_keep(space, keep)
    traced = [k for k in range(len(space)) if k not in keep]
    sub = space.subspace(keep)
    if not traced:
        return QuantumState(sub, state.full(), check=False).to_mixed()
    dk = sub.dim
    dt = math.prod(space.dims[k] for k in traced)

    if state.support is None:
        dims = space.dims
        n = len(dims)
        if state.is_pure:
            t = np.transpose(state.data.reshape(dims), keep + traced).reshape(dk, dt)
            rho = t @ t.conj().T
        else:
            r = state.data.reshape(dims + dims)
            perm = keep + traced + [n + k for k in keep] + [n + k for k in traced]
            r = np.transpose(r, perm).reshape(dk, dt, dk, dt)
            rho = np.einsum("itjt->ij", r)
    else:
        occ = state.occupations
        kidx = np.ravel_multi_index(tuple(occ[:, keep].T), sub.dims)
        tidx = np.ravel_multi_index(tuple(occ[:, traced].T), tuple(space.dims[k] for k in traced))
        if state.is_pure:
            m = np.zeros((dk, dt), dtype=complex)
            m[kidx, tidx] = state.data
            rho = m @ m.conj().T
        else:
            rho = np.zeros((dk, dk), dtype=complex)
            order = np.argsort(tidx, kind="stable")
            bounds = np.flatnonzero(np.diff(tidx[order])) + 1
            for rows in np.split(order, bounds):
                k = kidx[rows]
                rho[np.ix_(k, k)] += state.data[np.ix_(rows, rows)]
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(sub, rho, check=False)


def purity(state: QuantumState) -> float:
    if state.is_pure:
        return float(np.vdot(state.data, state.data).real ** 2)
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(state.data) ** 2))


@dataclass(frozen=True)
class HealthReport:
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float
    purity: float
    eig_method: str = "eigvalsh"

    def ok(self, trace_tol=TRACE_TOL, eig_floor=EIGEN_FLOOR, herm_tol=HERMITIAN_TOL) -> bool:
        return (
            self.trace_error < trace_tol
            and self.hermiticity_error < herm_tol
            and self.min_eigenvalue >= eig_floor
            and self.purity <= 1 + trace_tol
        )


def state_health(state: QuantumState) -> HealthReport:
    """Trace, hermiticity, positivity and purity of a state.

    Positivity uses a full Hermitian eigendecomposition of the stored matrix
    (eigenvalues outside the support are exactly zero).  Pure states are
    treated as rank-one projectors without materializing them.
    """
    if state.is_pure:
        nrm = float(np.vdot(state.data, state.data).real)
        lo = 0.0 if state.space.dim > 1 else nrm
        return HealthReport(abs(nrm - 1.0), 0.0, lo, nrm**2, eig_method="rank-one")
    rho = state.data
    tr_err = float(abs(np.trace(rho) - 1.0))
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    lo = float(evals[0])
    if state.support is not None and state.support.size < state.space.dim:
        lo = min(lo, 0.0)
    return HealthReport(tr_err, herm, lo, purity(state))


def boundary_occupancy(state: QuantumState, levels: int = 1) -> np.ndarray:
    """Per-mode probability mass in the top ``levels`` Fock levels."""
    pops = state.populations()
    occ = state.occupations
    out = np.empty(len(state.space))
    for k, m in enumerate(state.space.modes):
        out[k] = pops[occ[:, k] > m.cutoff - levels].sum()
    return out
