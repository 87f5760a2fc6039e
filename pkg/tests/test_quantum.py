import math

import numpy as np
import pytest

from bridgekit import hermitian_sqrt, hilbert_distance_psd
from bridgekit.errors import BoundaryError, ConvergenceError, NotPositivityImprovingError
from bridgekit.quantum import (
    KrausMap,
    check_positivity_improving,
    compose,
    kraus_adjoint_apply,
    kraus_apply,
    multistep_bridge,
    pure_state_bridge,
    random_density,
    random_kraus,
    solve_doubly_stochastic,
    solve_general_bridge,
    system_residuals,
)

from oracles import averaging_channel, kraus_adjoint_terms, kraus_terms, random_pd, skewed_channel

S23, S13 = math.sqrt(2 / 3), math.sqrt(1 / 3)


# -- Kraus maps ---------------------------------------------------------------

def test_apply_examples():
    E = [np.eye(2)]
    rho = np.array([[0.3, 0.1j], [-0.1j, 0.7]])
    np.testing.assert_array_equal(kraus_apply(E, rho), rho)
    np.testing.assert_allclose(kraus_apply(averaging_channel(), np.diag([1.0, 0.0])), np.diag([0.5, 0.5]), atol=1e-15)
    np.testing.assert_allclose(kraus_adjoint_apply(averaging_channel(), np.eye(2)), np.eye(2), atol=1e-15)


def test_apply_matches_explicit_sum_and_pairing():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        E = random_kraus(n, int(rng.integers(1, 6)), rng)
        rho, X = random_pd(rng, n), random_pd(rng, n)
        A, B = kraus_apply(E, rho), kraus_adjoint_apply(E, X)
        np.testing.assert_allclose(A, kraus_terms(E.coeffs, rho), atol=1e-12)
        np.testing.assert_allclose(B, kraus_adjoint_terms(E.coeffs, X), atol=1e-12)
        assert abs(np.trace(A @ X) - np.trace(rho @ B)) < 1e-12 * max(1, abs(np.trace(A @ X)))
        assert abs(np.trace(A) - np.trace(rho)) < 1e-12 * np.trace(rho).real


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        kraus_apply(averaging_channel(), np.eye(3))
    with pytest.raises(ValueError):
        KrausMap(np.ones((2, 2, 3)))
    with pytest.raises(ValueError):
        KrausMap([np.eye(2), np.eye(2)])


def test_apply_is_bit_reproducible():
    E = random_kraus(3, 4, 1)
    rho = random_density(3, 2)
    assert kraus_apply(E, rho).tobytes() == kraus_apply(E, rho).tobytes()


def test_compose_order():
    rng = np.random.default_rng(1)
    A, B = random_kraus(2, 3, rng), random_kraus(2, 2, rng)
    C = compose([A, B])
    assert C.n_coeffs == 6
    rho = random_density(2, rng)
    np.testing.assert_allclose(C(rho), B(A(rho)), atol=1e-13)
    np.testing.assert_allclose(C.coeffs[1], B.coeffs[0] @ A.coeffs[1])
    with pytest.raises(ValueError):
        compose([A] * 10, max_coeffs=100)


# -- positivity improving -----------------------------------------------------

def test_identity_channel_is_not_positivity_improving():
    chk = check_positivity_improving([np.eye(2)])
    assert chk.status == "fail" and chk.witness is not None


def test_averaging_channel_passes():
    chk = check_positivity_improving(averaging_channel(), rng=0)
    assert chk.passed
    # the minimum of lambda_min / lambda_max over pure states is 1/3
    assert chk.min_eig_ratio >= 1 / 3 - 1e-12


def test_pencil_witness():
    rng = np.random.default_rng(2)
    U = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
    E = [np.diag([1.0, 0.0]) @ U, np.diag([0.0, 1.0]) @ U]
    chk = check_positivity_improving(E)
    assert chk.status == "fail"
    v, w = chk.witness
    assert abs(np.linalg.norm(v) - 1) < 1e-12 and abs(np.linalg.norm(w) - 1) < 1e-12
    for Ei in E:
        assert abs(w.conj() @ Ei @ v) < 1e-12


def test_diagonal_three_coefficient_map_fails_by_sampling():
    E = [np.diag([1.0, 0.0]), np.diag([0.0, S23]), np.diag([0.0, S13])]
    chk = check_positivity_improving(E, rng=0)
    assert chk.status == "fail"
    v, w = chk.witness
    assert np.real(w.conj() @ kraus_apply(E, np.outer(v, v.conj())) @ w) < 1e-12


def test_random_channels_with_enough_coefficients_pass():
    for seed in range(10):
        assert check_positivity_improving(random_kraus(3, 6, seed), rng=seed).passed


# -- matrix square root -------------------------------------------------------

def test_hermitian_sqrt():
    np.testing.assert_allclose(hermitian_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    np.testing.assert_array_equal(hermitian_sqrt(np.eye(2)), np.eye(2))
    X = random_pd(np.random.default_rng(3), 3)
    R = hermitian_sqrt(X)
    np.testing.assert_allclose(R @ R, X, atol=1e-12)
    np.testing.assert_allclose(R, R.conj().T, atol=1e-14)
    with pytest.raises(BoundaryError):
        hermitian_sqrt(np.diag([1.0, -1.0]))


# -- doubly stochastic --------------------------------------------------------

def test_doubly_stochastic_unital_input_is_fixed():
    pot, res = solve_doubly_stochastic(averaging_channel())
    for X in (pot.phi0, pot.phiT, pot.phihat0, pot.phihatT):
        np.testing.assert_allclose(X, X[0, 0] * np.eye(2), atol=1e-13)
    np.testing.assert_allclose(res.transformed.coeffs, averaging_channel(), atol=1e-13)
    assert res.verified


THIRD = {
    "phi0": [[1.1448, -0.1350], [-0.1350, 0.8749]],
    "phiT": [[0.8411, -0.2362], [-0.2362, 1.3134]],
    "phihat0": [[0.8897, 0.1372], [0.1372, 1.1642]],
    "phihatT": [[1.2521, 0.2251], [0.2251, 0.8018]],
}
THIRD_F = [[[0.5690, 0.4411], [-0.0720, -0.0558]],
           [[-0.0558, 0.4411], [-0.0720, 0.5690]],
           [[-0.1441, 0.5131], [0.8013, -0.1441]]]


def test_doubly_stochastic_skewed_channel():
    pot, res = solve_doubly_stochastic(skewed_channel())
    for name, expected in THIRD.items():
        np.testing.assert_allclose(getattr(pot, name), expected, atol=5e-4)
    np.testing.assert_allclose(res.transformed.coeffs, THIRD_F, atol=5e-4)
    assert np.trace(pot.phihat0 @ pot.phi0).real == pytest.approx(2.0, abs=1e-12)
    assert res.verified and "dual_unital" in res.residuals


def test_triangular_gauge_differs_by_unitary():
    E = skewed_channel()
    _, herm_res = solve_doubly_stochastic(E)
    pot, tri = solve_doubly_stochastic(E, gauge="triangular")
    assert tri.verified
    # F_i' = U_T F_i U_0^H with U = chi_tri chi_herm^{-1} unitary
    chi_h = hermitian_sqrt(pot.phi0)
    chi_t = np.linalg.cholesky(pot.phi0).conj().T
    U0 = chi_t @ np.linalg.inv(chi_h)
    np.testing.assert_allclose(U0 @ U0.conj().T, np.eye(2), atol=1e-12)
    rho = random_density(2, 4)
    for F in (herm_res.transformed, tri.transformed):
        np.testing.assert_allclose(F(np.eye(2)), np.eye(2), atol=1e-12)
        np.testing.assert_allclose(F.adjoint(np.eye(2)), np.eye(2), atol=1e-12)
    # the unital channel outputs agree after undoing the input rotation
    chi_hT, chi_tT = hermitian_sqrt(pot.phiT), np.linalg.cholesky(pot.phiT).conj().T
    UT = chi_tT @ np.linalg.inv(chi_hT)
    np.testing.assert_allclose(tri.transformed(U0 @ rho @ U0.conj().T),
                               UT @ herm_res.transformed(rho) @ UT.conj().T, atol=1e-12)
    with pytest.raises(ValueError):
        solve_doubly_stochastic(E, gauge="polar")


def test_doubly_stochastic_unique_ray_across_starts():
    E = random_kraus(3, 6, 5)
    pot, _ = solve_doubly_stochastic(E)
    rng = np.random.default_rng(6)
    for _ in range(5):
        other, _ = solve_doubly_stochastic(E, x0=random_pd(rng, 3))
        assert hilbert_distance_psd(other.phihat0, pot.phihat0) < 1e-10


def test_doubly_stochastic_rate_certificate():
    pot, res = solve_doubly_stochastic(averaging_channel() @ np.diag([1.0, 1.0]), diameter_samples=64)
    assert res.report.contraction_bound is not None
    E = random_kraus(2, 4, 7)
    _, res = solve_doubly_stochastic(E, diameter_samples=200, rng=1)
    k = res.report.contraction_bound
    assert 0 < k < 1
    # the composite step applies the observable map contraction twice
    assert all(q <= k + 0.02 for q in res.report.observed_ratios(burn_in=5, floor=1e-10))


def test_doubly_stochastic_errors():
    with pytest.raises(NotPositivityImprovingError):
        solve_doubly_stochastic([np.eye(2)])
    with pytest.raises(ConvergenceError) as info:
        solve_doubly_stochastic(skewed_channel(), max_iter=3)
    assert info.value.report.iterations == 3


# -- general bridge -----------------------------------------------------------

def test_general_bridge_uniform_marginals_match_doubly_stochastic():
    E = skewed_channel()
    u = np.eye(2) / 2
    res = solve_general_bridge(E, u, u)
    _, ds = solve_doubly_stochastic(E)
    assert res.verified
    np.testing.assert_allclose(res.transformed.coeffs, ds.transformed.coeffs, atol=1e-10)
    assert hilbert_distance_psd(res.potentials.phihat0, ds.potentials.phihat0) < 1e-10


def test_general_bridge_diagonal_marginals():
    res = solve_general_bridge(averaging_channel(), np.diag([0.25, 0.75]), np.diag([2 / 3, 1 / 3]))
    pot = res.potentials
    np.testing.assert_allclose(pot.phi0, np.eye(2) / 2, atol=1e-9)
    np.testing.assert_allclose(pot.phiT, np.diag([2 / 3, 1 / 3]), atol=1e-9)
    np.testing.assert_allclose(pot.phihat0, np.diag([0.5, 1.5]), atol=1e-9)
    np.testing.assert_allclose(pot.phihatT, np.eye(2), atol=1e-9)
    F = [np.diag([S23, 0]), np.diag([0, S13]), np.array([[0, S23], [S13, 0]])]
    np.testing.assert_allclose(res.transformed.coeffs, F, atol=1e-9)
    np.testing.assert_allclose(res.transformed(np.diag([0.25, 0.75])), np.diag([2 / 3, 1 / 3]), atol=1e-10)
    assert res.verified


def test_general_bridge_random_instances():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(2, 4))
        E = random_kraus(n, 2 * n, rng)
        rho0, rhoT = random_density(n, rng, 0.2), random_density(n, rng, 0.2)
        res = solve_general_bridge(E, rho0, rhoT)
        assert res.converged and res.verified, res.failing()
        np.testing.assert_allclose(res.transformed(rho0), rhoT, atol=1e-9)
        recomputed = system_residuals(E, res.transformed, res.potentials, rho0, rhoT)
        assert recomputed == res.residuals


def test_general_bridge_rejects_boundary_marginals():
    with pytest.raises(BoundaryError, match="pure"):
        solve_general_bridge(averaging_channel(), np.diag([1.0, 0.0]), np.eye(2) / 2)
    rho = np.diag([0.5, 0.5, 0.0])
    with pytest.raises(BoundaryError, match="rank deficient"):
        solve_general_bridge(random_kraus(3, 6, 0), rho, np.eye(3) / 3)
    with pytest.raises(ValueError):
        solve_general_bridge(averaging_channel(), np.diag([0.5, 0.6]), np.eye(2) / 2)


def test_general_bridge_nonconvergence_is_returned():
    res = solve_general_bridge(skewed_channel(), np.diag([0.1, 0.9]), np.diag([0.8, 0.2]), max_iter=2)
    assert not res.converged and res.report.iterations == 2
    assert len(res.report.residual_trace) == 2


# -- pure states --------------------------------------------------------------

def test_pure_bridge_depolarizing():
    X, Y = np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]])
    Z = np.diag([1.0, -1.0])
    E = [np.eye(2) / 2] + [P / 2 for P in (X, Y, Z)]
    v0 = np.array([1.0, 0.0])
    vT = np.array([1.0, 1.0]) / math.sqrt(2)
    res = pure_state_bridge(E, v0, vT)
    np.testing.assert_allclose(res.potentials.phi0, np.eye(2) / 2, atol=1e-15)
    assert res.verified


def test_pure_bridge_basis_states():
    e1, e2 = np.eye(2)
    res = pure_state_bridge(averaging_channel(), e1, e2)
    np.testing.assert_allclose(res.transformed(np.outer(e1, e1)), np.outer(e2, e2), atol=1e-14)
    np.testing.assert_allclose(res.transformed.adjoint(np.eye(2)), np.eye(2), atol=1e-14)
    same = pure_state_bridge(averaging_channel(), e1, e1)
    assert same.verified


def test_pure_bridge_validation():
    with pytest.raises(ValueError):
        pure_state_bridge(averaging_channel(), [1.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        pure_state_bridge(averaging_channel(), [1.0, 0.0, 0.0], [1.0, 0.0])
    with pytest.raises(NotPositivityImprovingError):
        pure_state_bridge([np.diag([1.0, 0.0]), np.array([[0, 1.0], [0, 0]])], [1.0, 0], [0, 1.0])


# -- multi-step ---------------------------------------------------------------

def test_multistep_single_step_matches_general():
    E = random_kraus(2, 4, 9)
    rho0, rhoT = random_density(2, 10), random_density(2, 11)
    ms = multistep_bridge([E], rho0, rhoT)
    one = solve_general_bridge(E, rho0, rhoT)
    np.testing.assert_allclose(ms.step_maps[0].coeffs, one.transformed.coeffs, atol=1e-12)
    assert ms.verified


def test_multistep_two_steps_uniform():
    E = skewed_channel()
    u = np.eye(2) / 2
    res = multistep_bridge([E, E], u, u)
    assert res.verified, res.failing()
    for F in res.step_maps:
        np.testing.assert_allclose(F.adjoint(np.eye(2)), np.eye(2), atol=1e-10)


def test_multistep_random_chain():
    rng = np.random.default_rng(12)
    Es = [random_kraus(3, 3, rng) for _ in range(3)]
    rho0, rhoT = random_density(3, rng, 0.3), random_density(3, rng, 0.3)
    res = multistep_bridge(Es, rho0, rhoT, check_positivity=False)
    assert res.verified, res.failing()
    rho = rho0
    for t, F in enumerate(res.step_maps):
        rho = F(rho)
        np.testing.assert_allclose(rho, res.densities[t + 1], atol=1e-9)
        assert abs(np.trace(res.densities[t]).real - 1) < 1e-10
    np.testing.assert_allclose(rho, rhoT, atol=1e-9)


def test_multistep_coefficient_cap():
    with pytest.raises(ValueError, match="cap"):
        multistep_bridge([random_kraus(2, 8, 0)] * 5, np.eye(2) / 2, np.eye(2) / 2)
