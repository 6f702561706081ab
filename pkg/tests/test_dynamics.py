import math

import numpy as np
import pytest

from chi2sim.dynamics import (
    InitialSpec,
    LindbladModel,
    Scenario,
    build_degenerate_hamiltonian,
    build_nondegenerate_hamiltonian,
    check_density_matrix_budget,
    evolve_master,
    evolve_unitary,
    reachable_support,
    simulate,
)
from chi2sim.errors import ResourceExceeded, SpaceMismatch, TruncationLeakage
from chi2sim.fock import (
    CompositeSpace,
    ModeSpec,
    Operator,
    annihilation,
    coherent_state,
    fock_state,
    tensor_product,
    vacuum,
)
from chi2sim.observables import mean_photon, odd_parity_weight
from chi2sim.validation import oracle_master_evolution

# small test boxes deliberately truncate; the warnings are covered by dedicated tests
pytestmark = [
    pytest.mark.filterwarnings("ignore::chi2sim.errors.TruncationLeakage"),
    pytest.mark.filterwarnings("ignore::chi2sim.errors.TailTooHeavy"),
]


def deg_initial(sp, mean=20.0, phase=math.pi / 2):
    return tensor_product([vacuum(sp.modes[0]), coherent_state(sp.modes[1], mean, phase)], sp)


def test_degenerate_hamiltonian_elements():
    sp = CompositeSpace.from_cutoffs([4, 2])
    h = build_degenerate_hamiltonian(sp).toarray()
    np.testing.assert_allclose(h, h.conj().T)
    # <0,1| a1^2 a2^dag |2,0> = sqrt(2)
    assert h[sp.basis_index([0, 1]), sp.basis_index([2, 0])] == pytest.approx(math.sqrt(2))
    assert h[sp.basis_index([2, 1]), sp.basis_index([4, 0])] == pytest.approx(math.sqrt(12))


def test_nondegenerate_hamiltonian_elements():
    sp = CompositeSpace.from_cutoffs([2, 2, 2], ["s", "i", "p"])
    h = build_nondegenerate_hamiltonian(sp).toarray()
    np.testing.assert_allclose(h, h.conj().T)
    assert h[sp.basis_index([0, 0, 1]), sp.basis_index([1, 1, 0])] == pytest.approx(1.0)
    assert h[sp.basis_index([1, 1, 1]), sp.basis_index([2, 2, 0])] == pytest.approx(2.0)


def test_lindblad_model_rejects_bad_input():
    sp = CompositeSpace.from_cutoffs([2, 1])
    h = build_degenerate_hamiltonian(sp)
    with pytest.raises(SpaceMismatch):
        LindbladModel.from_loss_ratios(h, [0.1])
    with pytest.raises(ValueError):
        LindbladModel.from_loss_ratios(h, [0.1, -0.1])
    a = annihilation(sp.modes[0])
    with pytest.raises(ValueError):
        LindbladModel(Operator(sp, h.toarray() + 1j * np.eye(sp.dim)), (), (0.0, 0.0))
    assert LindbladModel.from_loss_ratios(h, [0.0, 0.2]).collapse_ops[0].space == sp
    assert a.space.dim == 3


def test_zero_hamiltonian_leaves_state():
    sp = CompositeSpace.from_cutoffs([6, 6])
    zero = Operator(sp, np.zeros((sp.dim, sp.dim)))
    psi = deg_initial(sp, 2.0)
    for s in evolve_unitary(psi, zero, [0.0, 0.5, 1.0]):
        np.testing.assert_allclose(s.full(), psi.full(), atol=1e-14)


def test_tau_zero_sample_is_initial_state():
    sp = CompositeSpace.from_cutoffs([10, 5])
    psi = deg_initial(sp, 2.0)
    out = evolve_unitary(psi, build_degenerate_hamiltonian(sp), [0.0])
    np.testing.assert_allclose(out[0].full(), psi.full())
    later = evolve_unitary(psi, build_degenerate_hamiltonian(sp), [0.2, 0.4])
    assert len(later) == 2


def test_reachable_support_degenerate():
    sp = CompositeSpace.from_cutoffs([20, 10])
    h = build_degenerate_hamiltonian(sp)
    seed = np.array([sp.basis_index([0, 3])])
    sup = reachable_support([h], seed)
    occ = sp.occupations[sup]
    assert np.all(occ[:, 0] + 2 * occ[:, 1] == 6)
    assert len(sup) == 4


def test_support_restriction_is_exact():
    sp = CompositeSpace.from_cutoffs([16, 8])
    h = build_degenerate_hamiltonian(sp)
    psi = deg_initial(sp, 3.0)
    taus = [0.0, 0.3, 0.6]
    a = evolve_unitary(psi, h, taus, restrict=True)
    b = evolve_unitary(psi, h, taus, restrict=False)
    assert a[-1].support is not None and a[-1].support.size < sp.dim
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.full(), y.full(), atol=1e-8)


def _oracle_case(losses):
    sp = CompositeSpace.from_cutoffs([3, 2])
    h = build_degenerate_hamiltonian(sp)
    model = LindbladModel.from_loss_ratios(h, losses)
    psi = tensor_product([vacuum(sp.modes[0]), coherent_state(sp.modes[1], 0.8, 0.4)], sp)
    return sp, model, psi


def test_master_matches_dense_exponential():
    sp, model, psi = _oracle_case([0.15, 0.15])
    taus = [0.0, 0.25, 0.7, 1.5]
    ours = evolve_master(psi, model, taus, restrict=False)
    ref = oracle_master_evolution(psi, model, taus)
    for s, r in zip(ours, ref):
        assert np.max(np.abs(s.full() - r)) < 1e-8


def test_master_matches_dense_exponential_with_support():
    sp, model, psi = _oracle_case([0.3, 0.05])
    taus = [0.0, 1.0]
    ours = evolve_master(psi, model, taus)
    ref = oracle_master_evolution(psi, model, taus)
    assert np.max(np.abs(ours[-1].full() - ref[-1])) < 1e-8


def test_lossless_master_equals_pure_path():
    sp = CompositeSpace.from_cutoffs([12, 6])
    h = build_degenerate_hamiltonian(sp)
    psi = deg_initial(sp, 2.0)
    taus = [0.0, 0.4, 0.8]
    pure = evolve_unitary(psi, h, taus)
    mixed = evolve_master(psi, LindbladModel.from_loss_ratios(h, [0.0, 0.0]), taus)
    for p, m in zip(pure, mixed):
        assert np.max(np.abs(p.to_mixed().full() - m.full())) < 1e-7


def test_degenerate_conservation_and_parity():
    sp = CompositeSpace.from_cutoffs([40, 20])
    psi = deg_initial(sp, 5.0)
    h = build_degenerate_hamiltonian(sp)
    start = mean_photon(psi, 0) + 2 * mean_photon(psi, 1)
    for s in evolve_unitary(psi, h, np.linspace(0, 1, 11)):
        total = mean_photon(s, 0) + 2 * mean_photon(s, 1)
        assert abs(total - start) / start < 1e-6
        assert odd_parity_weight(s, 0) < 1e-10


def test_nondegenerate_conservation():
    sp = CompositeSpace.from_cutoffs([20, 20, 20], ["s", "i", "p"])
    psi = tensor_product([vacuum(sp.modes[0]), vacuum(sp.modes[1]), coherent_state(sp.modes[2], 4.0, math.pi / 2)], sp)
    h = build_nondegenerate_hamiltonian(sp)
    n0 = mean_photon(psi, 2)
    for s in evolve_unitary(psi, h, np.linspace(0, 1, 6)):
        ns, ni, npump = (mean_photon(s, k) for k in range(3))
        assert abs(ns + npump - n0) / n0 < 1e-6
        assert abs(ni + npump - n0) / n0 < 1e-6
        assert abs(ns - ni) < 1e-8


def test_loss_breaks_parity():
    sp = CompositeSpace.from_cutoffs([12, 6])
    psi = deg_initial(sp, 2.0)
    model = LindbladModel.from_loss_ratios(build_degenerate_hamiltonian(sp), [0.15, 0.15])
    s = evolve_master(psi, model, [0.0, 0.6])[-1]
    assert odd_parity_weight(s, 0) > 1e-4


def test_memory_budget_guard():
    with pytest.raises(ResourceExceeded):
        check_density_matrix_budget(5000, budget_bytes=1024)
    sp = CompositeSpace.from_cutoffs([6, 3])
    model = LindbladModel.from_loss_ratios(build_degenerate_hamiltonian(sp), [0.1, 0.1])
    with pytest.raises(ResourceExceeded):
        evolve_master(deg_initial(sp, 1.0), model, [0, 0.1], memory_budget=100)


def test_memory_budget_env(monkeypatch):
    monkeypatch.setenv("CHI2SIM_MEM_BUDGET_MB", "1")
    with pytest.raises(ResourceExceeded):
        check_density_matrix_budget(2000)


def test_leakage_warning():
    sp = CompositeSpace.from_cutoffs([6, 3])
    psi = tensor_product([vacuum(sp.modes[0]), fock_state(sp.modes[1], 3)], sp)
    with pytest.warns(TruncationLeakage):
        evolve_unitary(psi, build_degenerate_hamiltonian(sp), [0.0, 0.5])


def test_scenario_lists_every_problem():
    modes = (ModeSpec("1", 4), ModeSpec("1", 2), ModeSpec("3", 2))
    with pytest.raises(ValueError) as exc:
        Scenario("degenerate", modes, (InitialSpec(),), (0.0, -1.0, 0.0), (0.5, 0.2))
    msg = str(exc.value)
    for fragment in ("exactly 2 modes", "one initial state", "loss ratios", "unique", "strictly increasing"):
        assert fragment in msg


def test_simulate_picks_path():
    modes = (ModeSpec("1", 8), ModeSpec("2", 4))
    init = (InitialSpec(), InitialSpec("coherent", mean_photons=1.0))
    sc = Scenario("degenerate", modes, init, (0.0, 0.0), (0.0, 0.2))
    assert all(s.is_pure for _, s in simulate(sc))
    assert all(not s.is_pure for _, s in simulate(sc, force_master=True))
    assert all(not s.is_pure for _, s in simulate(sc.with_losses([0.1, 0.1])))


def test_master_keeps_near_pure_rho_positive():
    # early on rho is almost rank one; the error control must not push its
    # near-zero eigenvalues below -1e-8
    sp = CompositeSpace.from_cutoffs([40, 20])
    model = LindbladModel.from_loss_ratios(build_degenerate_hamiltonian(sp), [0.15, 0.15])
    for s in evolve_master(deg_initial(sp, 8.0), model, [0.0, 0.1, 0.2, 0.38]):
        assert np.linalg.eigvalsh(s.data)[0] > -1e-9
