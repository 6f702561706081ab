"""Hamiltonians, Lindblad models and time propagation in normalized time.

All operators are dimensionless: the Hamiltonians are the interaction
Hamiltonians divided by hbar*g, collapse operators are ``sqrt(gamma_j/g) a_j``,
and evolution runs in tau = g t.

Propagation is restricted to the *reachable support*: the set of Fock basis
states connected to the initial state's non-zero amplitudes by the
Hamiltonian and collapse operators.  Outside that set the state is exactly
zero for all tau, so the restriction is lossless; for the degenerate process
it halves the dimension because H conserves N1 + 2 N2 and loss only lowers it.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from . import _kernels
from .errors import ResourceExceeded, SpaceMismatch, TruncationLeakage
from .fock import (
    CompositeSpace,
    ModeSpec,
    Operator,
    QuantumState,
    boundary_occupancy,
    coherent_state,
    fock_state,
    mode_operators,
    tensor_product,
)
from .integrate import IntegrationStats, SolverSettings, dopri5

HERMITIAN_H_TOL = 1e-12
LEAKAGE_THRESHOLD = 1e-6
MEM_BUDGET_ENV = "CHI2SIM_MEM_BUDGET_MB"
DEFAULT_MEM_BUDGET_MB = 4096
# dense working copies held by the integrator for one density matrix:
# state, 7 stages, candidate, error estimate and scratch
_MASTER_WORKING_COPIES = 11

DEGENERATE = "degenerate"
NONDEGENERATE = "nondegenerate"
PROCESSES = (DEGENERATE, NONDEGENERATE)
MODE_COUNT = {DEGENERATE: 2, NONDEGENERATE: 3}
DEFAULT_LABELS = {DEGENERATE: ("1", "2"), NONDEGENERATE: ("s", "i", "p")}


# ---------------------------------------------------------------------------
# Hamiltonians


def build_degenerate_hamiltonian(space: CompositeSpace) -> Operator:
    """``a1^2 a2^dag + a1^dag^2 a2`` on a two-mode space (fundamental, pump)."""
    if len(space) != 2:
        raise SpaceMismatch(f"degenerate SPDC needs exactly 2 modes, got {len(space)}")
    a1, a2 = (op.tocsr() for op in mode_operators(space))
    h = a1 @ a1 @ a2.conj().T
    return Operator(space, h + h.conj().T)


def build_nondegenerate_hamiltonian(space: CompositeSpace) -> Operator:
    """``a_s a_i a_p^dag + h.c.`` on a three-mode space ordered (signal, idler, pump)."""
    if len(space) != 3:
        raise SpaceMismatch(f"non-degenerate SPDC needs exactly 3 modes, got {len(space)}")
    a_s, a_i, a_p = (op.tocsr() for op in mode_operators(space))
    h = a_s @ a_i @ a_p.conj().T
    return Operator(space, h + h.conj().T)


def build_hamiltonian(process: str, space: CompositeSpace) -> Operator:
    if process == DEGENERATE:
        return build_degenerate_hamiltonian(space)
    if process == NONDEGENERATE:
        return build_nondegenerate_hamiltonian(space)
    raise ValueError(f"unknown process {process!r}")


@dataclass(frozen=True)
class LindbladModel:
    hamiltonian: Operator
    collapse_ops: tuple[Operator, ...]
    loss_ratios: tuple[float, ...]

    def __post_init__(self):
        space = self.hamiltonian.space
        if len(self.loss_ratios) != len(space):
            raise SpaceMismatch("one loss ratio per mode is required")
        if any(g < 0 for g in self.loss_ratios):
            raise ValueError("loss ratios must be non-negative")
        n_lossy = sum(1 for g in self.loss_ratios if g > 0)
        if len(self.collapse_ops) != n_lossy:
            raise ValueError("expected one collapse operator per lossy mode")
        h = self.hamiltonian
        dev = (h - h.dag()).max_abs()
        if dev > HERMITIAN_H_TOL:
            raise ValueError(f"Hamiltonian not Hermitian (max deviation {dev:.3e})")

    @classmethod
    def from_loss_ratios(cls, hamiltonian: Operator, loss_ratios: Sequence[float]) -> "LindbladModel":
        """Attach ``C_j = sqrt(gamma_j/g) a_j`` for every mode with a positive ratio."""
        space = hamiltonian.space
        ratios = tuple(float(g) for g in loss_ratios)
        if len(ratios) != len(space):
            raise SpaceMismatch(f"{len(ratios)} loss ratios for {len(space)} modes")
        ops = tuple(
            a * math.sqrt(g) for a, g in zip(mode_operators(space), ratios) if g > 0
        )
        return cls(hamiltonian, ops, ratios)

    @property
    def space(self) -> CompositeSpace:
        return self.hamiltonian.space

    @property
    def is_lossless(self) -> bool:
        return not self.collapse_ops


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class InitialSpec:
    """Single-mode initial condition: vacuum, Fock |n> or coherent state."""

    kind: str = "vacuum"
    n: int = 0
    mean_photons: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("vacuum", "fock", "coherent"):
            raise ValueError(f"unknown initial state kind {self.kind!r}")
        if self.kind == "fock" and self.n < 0:
            raise ValueError("Fock level must be non-negative")
        if self.kind == "coherent" and self.mean_photons < 0:
            raise ValueError("mean photon number must be non-negative")

    def build(self, mode: ModeSpec) -> QuantumState:
        if self.kind == "vacuum":
            return fock_state(mode, 0)
        if self.kind == "fock":
            return fock_state(mode, self.n)
        return coherent_state(mode, self.mean_photons, self.phase)


@dataclass(frozen=True)
class Scenario:
    process: str
    modes: tuple[ModeSpec, ...]
    initial: tuple[InitialSpec, ...]
    loss_ratios: tuple[float, ...]
    tau_samples: tuple[float, ...]
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.process not in PROCESSES:
            out.append(f"process must be one of {PROCESSES}, got {self.process!r}")
        else:
            want = MODE_COUNT[self.process]
            if len(self.modes) != want:
                out.append(f"{self.process} process needs exactly {want} modes, got {len(self.modes)}")
        if len(self.initial) != len(self.modes):
            out.append("one initial state per mode is required")
        if len(self.loss_ratios) != len(self.modes):
            out.append("one loss ratio per mode is required")
        if any(g < 0 for g in self.loss_ratios):
            out.append("loss ratios must be >= 0")
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            out.append(f"mode labels must be unique, got {labels}")
        taus = np.asarray(self.tau_samples, dtype=float)
        if taus.size == 0:
            out.append("tau_samples must not be empty")
        elif taus[0] < 0 or np.any(np.diff(taus) <= 0):
            out.append("tau_samples must start at >= 0 and be strictly increasing")
        for m, init in zip(self.modes, self.initial):
            if init.kind == "fock" and init.n > m.cutoff:
                out.append(f"mode {m.label!r}: Fock level {init.n} exceeds cutoff {m.cutoff}")
        return out

    @property
    def space(self) -> CompositeSpace:
        return CompositeSpace(self.modes)

    @property
    def is_lossless(self) -> bool:
        return all(g == 0 for g in self.loss_ratios)

    def initial_state(self) -> QuantumState:
        space = self.space
        return tensor_product([init.build(m) for init, m in zip(self.initial, space.modes)], space)

    def hamiltonian(self) -> Operator:
        return build_hamiltonian(self.process, self.space)

    def model(self) -> LindbladModel:
        return LindbladModel.from_loss_ratios(self.hamiltonian(), self.loss_ratios)

    def with_cutoffs(self, cutoffs: Sequence[int]) -> "Scenario":
        modes = tuple(ModeSpec(m.label, int(c)) for m, c in zip(self.modes, cutoffs, strict=True))
        return Scenario(self.process, modes, self.initial, self.loss_ratios, self.tau_samples, self.solver)

    def with_losses(self, loss_ratios: Sequence[float]) -> "Scenario":
        return Scenario(
            self.process, self.modes, self.initial, tuple(float(g) for g in loss_ratios), self.tau_samples, self.solver
        )

    def with_taus(self, tau_samples: Sequence[float]) -> "Scenario":
        return Scenario(
            self.process, self.modes, self.initial, self.loss_ratios, tuple(float(t) for t in tau_samples), self.solver
        )


# ---------------------------------------------------------------------------
# support handling


def reachable_support(operators: Sequence[Operator], seed: np.ndarray) -> np.ndarray:
    """Sorted basis indices reachable from ``seed`` by repeatedly applying operators.

    The result ``R`` satisfies ``op(R) ⊆ span(R)`` for every operator given,
    so a state (or ρ on ``R × R``) evolved by them never leaves ``R``.
    """
    dim = operators[0].space.dim
    seed = np.unique(np.asarray(seed, dtype=np.int64))
    # edge i -> j whenever <j|op|i> != 0; node ``dim`` is a virtual source feeding the seeds
    edges = sp.csr_matrix((dim + 1, dim + 1), dtype=np.int8)
    for op in operators:
        m = sp.csr_matrix(op.matrix).T.tocoo()
        keep = m.data != 0
        edges = edges + sp.csr_matrix(
            (np.ones(keep.sum(), dtype=np.int8), (m.row[keep], m.col[keep])), shape=(dim + 1, dim + 1)
        )
    src = sp.csr_matrix(
        (np.ones(seed.size, dtype=np.int8), (np.full(seed.size, dim), seed)), shape=(dim + 1, dim + 1)
    )
    order = csgraph.breadth_first_order(edges + src, dim, directed=True, return_predecessors=False)
    return np.sort(order[order != dim])


def _seed_indices(state: QuantumState) -> np.ndarray:
    pops = state.populations()
    nz = np.flatnonzero(pops > 0)
    return nz if state.support is None else state.support[nz]


def _restrict(op: Operator, support: np.ndarray | None) -> sp.csr_matrix:
    m = sp.csr_matrix(op.matrix)
    if support is None:
        return m
    return m[support][:, support].tocsr()


def _data_on(state: QuantumState, support: np.ndarray | None) -> np.ndarray:
    """State data re-expressed on ``support`` (must contain the state's support)."""
    if support is None:
        return state.full()
    full_idx = np.arange(state.space.dim) if state.support is None else state.support
    pos = np.searchsorted(support, full_idx)
    if np.any(pos >= support.size) or np.any(support[np.minimum(pos, support.size - 1)] != full_idx):
        # state carries amplitude outside the target support: only zeros may be dropped
        inside = np.isin(full_idx, support)
        pops = state.populations()
        if np.any(pops[~inside] != 0):
            raise SpaceMismatch("state has weight outside the evolution support")
        full_idx = full_idx[inside]
        pos = np.searchsorted(support, full_idx)
        sel = np.flatnonzero(inside)
    else:
        sel = np.arange(full_idx.size)
    n = support.size
    if state.is_pure:
        out = np.zeros(n, dtype=complex)
        out[pos] = state.data[sel]
    else:
        out = np.zeros((n, n), dtype=complex)
        out[np.ix_(pos, pos)] = state.data[np.ix_(sel, sel)]
    return out


def memory_budget_bytes() -> int:
    raw = os.environ.get(MEM_BUDGET_ENV)
    mb = float(raw) if raw else DEFAULT_MEM_BUDGET_MB
    return int(mb * 1024 * 1024)


def check_density_matrix_budget(dim: int, budget_bytes: int | None = None) -> int:
    """Raise :class:`ResourceExceeded` if evolving a ``dim``-sized ρ would not fit."""
    budget = memory_budget_bytes() if budget_bytes is None else budget_bytes
    need = _MASTER_WORKING_COPIES * 16 * dim * dim
    if need > budget:
        raise ResourceExceeded(
            f"density-matrix evolution on dimension {dim} needs ~{need / 2**20:.0f} MiB, "
            f"budget is {budget / 2**20:.0f} MiB (set {MEM_BUDGET_ENV} to raise it)"
        )
    return need


def _warn_leakage(state: QuantumState, tau: float):
    occ = boundary_occupancy(state, levels=2)
    bad = [(lab, v) for lab, v in zip(state.space.labels, occ) if v > LEAKAGE_THRESHOLD]
    if bad:
        detail = ", ".join(f"{lab}: {v:.2e}" for lab, v in bad)
        warnings.warn(
            f"tau={tau:.6g}: population in the top two Fock levels exceeds {LEAKAGE_THRESHOLD:g} ({detail}); "
            "increase the cutoff",
            TruncationLeakage,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# propagation


def iter_unitary(
    initial: QuantumState,
    hamiltonian: Operator,
    tau_samples: Sequence[float],
    settings: SolverSettings = SolverSettings(),
    *,
    restrict: bool = True,
    monitor_leakage: bool = True,
    stats: IntegrationStats | None = None,
) -> Iterator[tuple[float, QuantumState]]:
    """Integrate ``d psi/d tau = -i H psi`` and yield ``(tau, state)`` per sample."""
    if not initial.is_pure:
        raise ValueError("unitary propagation needs a pure initial state")
    if initial.space != hamiltonian.space:
        raise SpaceMismatch("initial state and Hamiltonian live on different spaces")
    support = reachable_support([hamiltonian], _seed_indices(initial)) if restrict else None
    if support is not None and support.size == initial.space.dim:
        support = None
    h = _restrict(hamiltonian, support)
    psi0 = _data_on(initial, support)
    minus_ih = (-1j) * h

    def rhs(_t, psi):
        return minus_ih @ psi

    taus, skip = _shifted(tau_samples)
    for tau, psi in dopri5(rhs, psi0, taus, settings, stats=stats):
        if skip:
            skip = False
            continue
        state = QuantumState(initial.space, psi, support, check=False)
        if monitor_leakage:
            _warn_leakage(state, tau)
        yield tau, state


def evolve_unitary(initial, hamiltonian, tau_samples, settings=SolverSettings(), **kw) -> list[QuantumState]:
    return [s for _, s in iter_unitary(initial, hamiltonian, tau_samples, settings, **kw)]


def lindblad_rhs(model: LindbladModel, support: np.ndarray | None = None):
    """Return ``f(tau, rho, out)`` writing the master-equation generator into ``out``.

    Only operator-times-matrix products are used, never the superoperator.
    With ``G = H - (i/2) sum_j C_j^dag C_j`` the generator of a Hermitian ρ
    is ``X + X^dag + sum_j C_j ρ C_j^dag`` with ``X = -i G ρ``.
    """
    h = _restrict(model.hamiltonian, support)
    cs = [_restrict(c, support) for c in model.collapse_ops]
    n = h.shape[0]
    k = sp.csr_matrix((n, n), dtype=complex)
    for c in cs:
        k = k + (c.conj().T @ c)
    g = ((-1j) * (h - 0.5j * k)).tocsr()
    g.sort_indices()
    stacked = sp.vstack(cs, format="csr") if cs else sp.csr_matrix((0, n), dtype=complex)
    stacked.sort_indices()
    g_parts = (g.indptr.astype(np.int64), g.indices.astype(np.int64), g.data.astype(complex))
    c_ptr = stacked.indptr.astype(np.int64) if cs else np.zeros(1, dtype=np.int64)
    c_parts = (c_ptr, stacked.indices.astype(np.int64), stacked.data.astype(complex))
    n_collapse = len(cs)

    def rhs(_t, rho, out):
        _kernels.lindblad_apply(rho, *g_parts, *c_parts, n_collapse, out)

    return rhs


def iter_master(
    initial: QuantumState,
    model: LindbladModel,
    tau_samples: Sequence[float],
    settings: SolverSettings = SolverSettings(),
    *,
    restrict: bool = True,
    monitor_leakage: bool = True,
    memory_budget: int | None = None,
    stats: IntegrationStats | None = None,
) -> Iterator[tuple[float, QuantumState]]:
    """Integrate the Lindblad master equation; yield mixed states per sample.

    ``settings.abs_tol`` bounds the Frobenius norm of each step's local error
    in rho, not the individual entries.
    """
    if initial.space != model.space:
        raise SpaceMismatch("initial state and model live on different spaces")
    ops = [model.hamiltonian, *model.collapse_ops, *(c.dag() @ c for c in model.collapse_ops)]
    support = reachable_support(ops, _seed_indices(initial)) if restrict else None
    if support is not None and support.size == initial.space.dim:
        support = None
    dim = initial.space.dim if support is None else support.size
    check_density_matrix_budget(dim, memory_budget)
    data = _data_on(initial, support)
    rho0 = np.outer(data, data.conj()) if data.ndim == 1 else data
    rho0 = np.ascontiguousarray(rho0)
    rhs = lindblad_rhs(model, support)
    taus, skip = _shifted(tau_samples)
    # The RMS error norm over dim^2 entries lets the Frobenius norm of the
    # local error reach dim * abs_tol, which drives the near-zero eigenvalues
    # of an almost pure rho negative.  Rescaled, abs_tol bounds that norm.
    settings = replace(settings, abs_tol=settings.abs_tol / dim)
    for tau, rho in dopri5(rhs, rho0, taus, settings, after_step=_kernels.hermitize, stats=stats, inplace=True):
        if skip:
            skip = False
            continue
        state = QuantumState(initial.space, rho, support)
        if monitor_leakage:
            _warn_leakage(state, tau)
        yield tau, state


def evolve_master(initial, model, tau_samples, settings=SolverSettings(), **kw) -> list[QuantumState]:
    return [s for _, s in iter_master(initial, model, tau_samples, settings, **kw)]


def _shifted(tau_samples) -> tuple[np.ndarray, bool]:
    # propagation always starts at tau = 0; returns (grid, whether 0 was prepended)
    taus = np.asarray(tau_samples, dtype=float)
    if taus.size == 0:
        raise ValueError("no tau samples requested")
    if taus[0] < 0 or np.any(np.diff(taus) <= 0):
        raise ValueError("tau samples must be >= 0 and strictly increasing")
    if taus[0] > 0:
        return np.concatenate([[0.0], taus]), True
    return taus, False


def simulate(
    scenario: Scenario,
    *,
    force_master: bool = False,
    monitor_leakage: bool = True,
    memory_budget: int | None = None,
    stats: IntegrationStats | None = None,
) -> Iterator[tuple[float, QuantumState]]:
    """Yield ``(tau, state)`` for every requested sample of a scenario.

    Lossless scenarios take the pure-state path unless ``force_master``.
    """
    initial = scenario.initial_state()
    if scenario.is_lossless and not force_master:
        it = iter_unitary(
            initial, scenario.hamiltonian(), scenario.tau_samples, scenario.solver,
            monitor_leakage=monitor_leakage, stats=stats,
        )
    else:
        it = iter_master(
            initial, scenario.model(), scenario.tau_samples, scenario.solver,
            monitor_leakage=monitor_leakage, memory_budget=memory_budget, stats=stats,
        )
    yield from it
