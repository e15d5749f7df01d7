"""Tests for the dense Lyapunov-equation solver and matrix helpers."""

import time
import warnings

import numpy as np
import pytest

from afmpc.dense_linalg import (
    NotPositiveDefiniteWarning,
    SingularLyapunovError,
    is_positive_definite,
    quadratic_form,
    solve_lyapunov,
)

# stable design matrix used by the controller defaults: independent arm
# channels plus a damped oscillator block on the pendulum channels
DESIGN_A = np.array(
    [
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -9.0, -4.8],
    ]
)


def lyap_residual(A, P, Q) -> float:
    return float(np.linalg.norm(A.T @ P + P @ A + Q))


def test_identity_case():
    A = -np.eye(4)
    P = solve_lyapunov(A, 2.0 * np.eye(4))
    np.testing.assert_allclose(P, np.eye(4), atol=1e-12)


def test_two_by_two_hand_solved():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    P = solve_lyapunov(A, np.eye(2))
    np.testing.assert_allclose(P, [[1.25, 0.25], [0.25, 0.25]], atol=1e-12)
    assert is_positive_definite(P)


def test_design_matrix_exact_solution():
    # hand-solved blocks for Q = 500 I: the arm block gives 250 I and the
    # pendulum oscillator block gives rational entries
    P = solve_lyapunov(DESIGN_A, 500.0 * np.eye(4))
    assert P[0, 0] == pytest.approx(250.0, rel=1e-12)
    assert P[1, 1] == pytest.approx(250.0, rel=1e-12)
    assert P[2, 2] == pytest.approx(56520.0 / 86.4, rel=1e-10)
    assert P[2, 3] == pytest.approx(250.0 / 9.0, rel=1e-10)
    assert P[3, 3] == pytest.approx(5000.0 / 86.4, rel=1e-10)
    b = np.array([0.0, 0.0, 0.0, 1.0])
    np.testing.assert_allclose(
        P @ b, [0.0, 0.0, 250.0 / 9.0, 5000.0 / 86.4], rtol=1e-10, atol=1e-10
    )


def test_random_hurwitz_property():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    for _ in range(100):
        M = rng.normal(size=(4, 4))
        skew = rng.normal(size=(4, 4))
        A = -M @ M.T - 0.05 * np.eye(4) + 0.2 * (skew - skew.T)
        W = rng.normal(size=(4, 4))
        Q = W @ W.T + 0.1 * np.eye(4)
        P = solve_lyapunov(A, Q)
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        assert lyap_residual(A, P, Q) <= 1e-9 * np.linalg.norm(Q)
        assert is_positive_definite(P)
    assert time.perf_counter() - start < 1.0


def test_scaling_linearity():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(4, 4))
    A = -M @ M.T - 0.1 * np.eye(4)
    W = rng.normal(size=(4, 4))
    Q = W @ W.T + 0.5 * np.eye(4)
    P1 = solve_lyapunov(A, Q)
    P7 = solve_lyapunov(A, 7.0 * Q)
    np.testing.assert_allclose(P7, 7.0 * P1, rtol=1e-9)


def test_non_hurwitz_matrix_reports_non_pd():
    # trace +7, so at least one eigenvalue has positive real part; the
    # equation still has a unique solution but it cannot be PD
    A = np.array(
        [
            [0.0, 10.0, 0.0, 0.0],
            [0.0, 0.0, 10.0, 0.0],
            [0.0, 0.0, 0.0, 10.0],
            [-17.2, -20.5, -10.0, 7.0],
        ]
    )
    assert np.trace(A) == pytest.approx(7.0)
    assert np.max(np.linalg.eigvals(A).real) > 0.0
    Q = 500.0 * np.eye(4)
    with pytest.warns(NotPositiveDefiniteWarning):
        P = solve_lyapunov(A, Q)
    assert lyap_residual(A, P, Q) <= 1e-9 * np.linalg.norm(Q)
    assert not is_positive_definite(P)


def test_singular_operator_rejected():
    # eigenvalues +1 and -1 sum to zero: the Lyapunov operator is singular
    A = np.diag([1.0, -1.0, -2.0, -3.0])
    with pytest.raises(SingularLyapunovError):
        solve_lyapunov(A, np.eye(4))


def test_solver_input_validation():
    with pytest.raises(ValueError):
        solve_lyapunov(np.eye(3), np.eye(4))
    asym = np.eye(4)
    asym[0, 1] = 0.5
    with pytest.raises(ValueError):
        solve_lyapunov(-np.eye(4), asym)


def test_is_positive_definite_cases():
    assert is_positive_definite(np.eye(4))
    assert not is_positive_definite(np.diag([1.0, -1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        asym = np.eye(4)
        asym[1, 0] = 0.3
        is_positive_definite(asym)


def test_quadratic_form_values():
    assert quadratic_form(np.zeros(4), np.eye(4)) == 0.0
    assert quadratic_form(np.array([1.0, 0.0, 0.0, 0.0]), np.eye(4)) == 1.0
    M = np.zeros((4, 4))
    M[:2, :2] = [[2.0, 1.0], [1.0, 2.0]]
    assert quadratic_form(np.array([1.0, 1.0, 0.0, 0.0]), M) == pytest.approx(6.0)


def test_quadratic_form_matches_numpy():
    rng = np.random.default_rng(2)
    for _ in range(20):
        e = rng.normal(size=4)
        M = rng.normal(size=(4, 4))
        assert quadratic_form(e, M) == pytest.approx(float(e @ M @ e), rel=1e-12)
