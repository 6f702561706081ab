import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chi2sim.errors import IndexOutOfRange, InvalidState, SpaceMismatch, TailTooHeavy
from chi2sim.fock import (
    CompositeSpace,
    ModeSpec,
    QuantumState,
    annihilation,
    boundary_occupancy,
    coherent_amplitudes,
    coherent_state,
    commutator,
    creation,
    embed_operator,
    fock_state,
    identity,
    number_operator,
    partial_trace,
    purity,
    quadrature_p,
    quadrature_x,
    state_health,
    tensor_product,
    vacuum,
)


def test_mode_and_space_shapes():
    sp = CompositeSpace.from_cutoffs([4, 2], ["a", "b"])
    assert sp.dims == (5, 3)
    assert sp.dim == 15
    assert sp.index_of("b") == 1
    assert sp.basis_index([2, 1]) == 2 * 3 + 1
    assert tuple(sp.occupations[7]) == (2, 1)
    with pytest.raises(SpaceMismatch):
        sp.index_of("c")
    with pytest.raises(IndexOutOfRange):
        sp.basis_index([5, 0])
    with pytest.raises(ValueError):
        ModeSpec("x", 0)
    with pytest.raises(ValueError):
        CompositeSpace.from_cutoffs([2, 2], ["a", "a"])


def test_ladder_matrix_elements():
    m = ModeSpec("a", 6)
    a = annihilation(m).toarray()
    for n in range(1, 7):
        assert a[n - 1, n] == pytest.approx(math.sqrt(n))
    ad = creation(m).toarray()
    np.testing.assert_allclose(ad, a.conj().T)
    np.testing.assert_allclose(number_operator(m).toarray(), ad @ a)


def test_commutator_is_identity_below_cutoff():
    m = ModeSpec("a", 8)
    c = commutator(annihilation(m), creation(m)).toarray()
    np.testing.assert_allclose(c[:-1, :-1], np.eye(8), atol=1e-14)
    # truncation artefact lives only in the last level
    assert c[-1, -1] == pytest.approx(-8)


def test_quadratures_hermitian_and_vacuum_variance():
    m = ModeSpec("a", 10)
    x, p = quadrature_x(m).toarray(), quadrature_p(m).toarray()
    np.testing.assert_allclose(x, x.conj().T)
    np.testing.assert_allclose(p, p.conj().T)
    v = vacuum(m).data
    assert np.vdot(v, x @ x @ v).real == pytest.approx(0.5)
    assert np.vdot(v, p @ p @ v).real == pytest.approx(0.5)


def test_embedding_matches_kron():
    sp = CompositeSpace.from_cutoffs([3, 2, 2])
    a1 = embed_operator(annihilation(sp.modes[1]), sp, 1).toarray()
    ref = np.kron(np.kron(np.eye(4), annihilation(sp.modes[1]).toarray()), np.eye(3))
    np.testing.assert_allclose(a1, ref)
    assert identity(sp).toarray().shape == (36, 36)


def test_coherent_state_statistics():
    m = ModeSpec("a", 60)
    st_ = coherent_state(m, 4.0, 0.3)
    a = annihilation(m).toarray()
    v = st_.data
    assert np.vdot(v, a @ v) == pytest.approx(2.0 * np.exp(0.3j), abs=1e-12)
    assert np.vdot(v, a.T @ a @ v).real == pytest.approx(4.0, abs=1e-12)
    assert st_.info["tail_mass"] < 1e-14


def test_coherent_quarter_phase_exact():
    amps, _ = coherent_amplitudes(8, 2.0, math.pi / 2)
    # i^n exactly: real parts of odd levels and imaginary parts of even levels vanish identically
    assert np.all(amps[1::2].real == 0)
    assert np.all(amps[0::2].imag == 0)


def test_coherent_tail_warning():
    with pytest.warns(TailTooHeavy):
        st_ = coherent_state(ModeSpec("a", 10), 20.0)
    assert st_.info["tail_mass"] > 0.5
    assert np.linalg.norm(st_.data) == pytest.approx(1.0)


def test_fock_bounds():
    m = ModeSpec("a", 3)
    assert fock_state(m, 3).data[3] == 1
    with pytest.raises(IndexOutOfRange):
        fock_state(m, 4)


def test_state_validation():
    m = ModeSpec("a", 2)
    with pytest.raises(InvalidState):
        QuantumState(m, [1.0, 1.0, 0.0])
    with pytest.raises(InvalidState):
        QuantumState(m, np.diag([0.5, 0.6, 0.0]))
    with pytest.raises(InvalidState):
        QuantumState(m, np.array([[0.5, 0.3, 0], [0.1, 0.5, 0], [0, 0, 0]]))
    with pytest.raises(InvalidState):
        QuantumState(m, np.diag([1.2, -0.2, 0.0]))
    with pytest.raises(SpaceMismatch):
        QuantumState(m, [1.0, 0.0])


def test_states_are_immutable():
    s = vacuum(ModeSpec("a", 2))
    with pytest.raises(ValueError):
        s.data[0] = 0


def test_tensor_product_ordering():
    sp = CompositeSpace.from_cutoffs([2, 3])
    s = tensor_product([fock_state(sp.modes[0], 1), fock_state(sp.modes[1], 2)], sp)
    assert np.argmax(np.abs(s.data)) == sp.basis_index([1, 2])


def test_partial_trace_bell_state():
    sp = CompositeSpace.from_cutoffs([1, 1])
    v = np.zeros(4, complex)
    v[0] = v[3] = 1 / math.sqrt(2)
    s = QuantumState(sp, v)
    red = partial_trace(s, [0])
    np.testing.assert_allclose(red.dm(), np.eye(2) / 2, atol=1e-15)
    assert purity(red) == pytest.approx(0.5)


def _random_state(rng, dims, mixed):
    n = int(np.prod(dims))
    if not mixed:
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        return v / np.linalg.norm(v)
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


@settings(max_examples=30, deadline=None)
@given(
    dims=st.lists(st.integers(1, 3), min_size=2, max_size=3),
    mixed=st.booleans(),
    seed=st.integers(0, 2**31 - 1),
)
def test_partial_trace_matches_einsum(dims, mixed, seed):
    rng = np.random.default_rng(seed)
    sp = CompositeSpace.from_cutoffs(dims)
    data = _random_state(rng, sp.dims, mixed)
    s = QuantumState(sp, data)
    rho = s.dm().reshape(sp.dims * 2)
    k = len(dims)
    for keep in range(k):
        # trace out everything but mode `keep` by explicit index contraction
        letters = "abcdefgh"
        row = [letters[i] for i in range(k)]
        col = [letters[i] if i != keep else "z" for i in range(k)]
        ref = np.einsum("".join(row) + "".join(col) + "->" + letters[keep] + "z", rho)
        np.testing.assert_allclose(partial_trace(s, [keep]).dm(), ref, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), mixed=st.booleans())
def test_partial_trace_with_support(seed, mixed):
    # the same state stored on a support must reduce to the same matrix
    rng = np.random.default_rng(seed)
    sp = CompositeSpace.from_cutoffs([2, 3, 1])
    support = np.sort(rng.choice(sp.dim, size=7, replace=False))
    data = _random_state(rng, (7,), mixed)
    small = QuantumState(sp, data, support)
    big = QuantumState(sp, small.full())
    for keep in ([0], [1], [0, 2], [1, 2]):
        np.testing.assert_allclose(partial_trace(small, keep).dm(), partial_trace(big, keep).dm(), atol=1e-12)


def test_health_and_boundary():
    sp = CompositeSpace.from_cutoffs([3, 3])
    s = tensor_product([fock_state(sp.modes[0], 3), vacuum(sp.modes[1])], sp)
    h = state_health(s)
    assert h.ok()
    assert h.purity == pytest.approx(1.0)
    np.testing.assert_allclose(boundary_occupancy(s), [1.0, 0.0])
    mixed = QuantumState(sp, np.eye(16) / 16)
    hm = state_health(mixed)
    assert hm.min_eigenvalue == pytest.approx(1 / 16)
    assert hm.purity == pytest.approx(1 / 16)


def test_operator_storage_invisible():
    m = ModeSpec("a", 5)
    a = annihilation(m)
    dense = a.toarray()
    assert a.is_sparse
    prod = (a.dag() @ a)
    np.testing.assert_allclose(prod.toarray(), dense.conj().T @ dense)
    np.testing.assert_allclose((a * 2 + a).toarray(), 3 * dense)
