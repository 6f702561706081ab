import numpy as np
import pytest
import scipy.linalg as sla

from chi2sim.errors import ToleranceNotMet
from chi2sim.integrate import IntegrationStats, SolverSettings, dopri5


def test_scalar_exponential_dense_output():
    lam = -1.3 + 2.0j
    taus = np.linspace(0, 2, 41)
    out = list(dopri5(lambda t, y: lam * y, np.array([1.0 + 0j]), taus))
    assert [t for t, _ in out] == pytest.approx(list(taus))
    got = np.array([y[0] for _, y in out])
    np.testing.assert_allclose(got, np.exp(lam * taus), rtol=1e-7, atol=1e-9)


def test_output_independent_of_sampling():
    # step control must not depend on the requested grid
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    a = -1j * (a + a.conj().T) / 2
    y0 = np.ones(6, complex) / np.sqrt(6)
    coarse = list(dopri5(lambda t, y: a @ y, y0, [0.0, 1.0]))[-1][1]
    fine = list(dopri5(lambda t, y: a @ y, y0, np.linspace(0, 1, 101)))[-1][1]
    np.testing.assert_allclose(coarse, fine, atol=1e-14)
    np.testing.assert_allclose(fine, sla.expm(a) @ y0, atol=1e-7)


def test_matrix_state_inplace_and_projection():
    h = np.array([[0, 1], [1, 0]], complex)
    rho0 = np.array([[1, 0], [0, 0]], complex)

    def rhs(t, r, out):
        out[...] = -1j * (h @ r - r @ h)

    calls = []
    stats = IntegrationStats()
    res = list(dopri5(rhs, rho0, [0, 0.5, 1.0], inplace=True, after_step=lambda r: calls.append(1), stats=stats))
    u = sla.expm(-1j * h)
    np.testing.assert_allclose(res[-1][1], u @ rho0 @ u.conj().T, atol=1e-8)
    assert res[-1][1].shape == (2, 2)
    assert stats.accepted > 0 and stats.evaluations >= 6 * stats.accepted
    assert calls


def test_bad_grid_rejected():
    with pytest.raises(ValueError):
        list(dopri5(lambda t, y: y, np.ones(1), [0, 1, 0.5]))
    with pytest.raises(ValueError):
        SolverSettings(rel_tol=0)


def test_step_budget_exhaustion():
    with pytest.raises(ToleranceNotMet):
        list(dopri5(lambda t, y: -50j * y, np.ones(1, complex), [0, 100], SolverSettings(max_steps=10)))


def test_single_sample_returns_initial():
    out = list(dopri5(lambda t, y: y, np.array([2.0 + 0j]), [0.3]))
    assert len(out) == 1 and out[0][0] == 0.3 and out[0][1][0] == 2.0
