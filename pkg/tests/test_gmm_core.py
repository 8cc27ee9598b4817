import numpy as np
import pytest
from conftest import random_instance, random_weight

from momentsens.exceptions import SingularBread, SingularS
from momentsens.gmm_core import (
    GmmIngredients,
    asymptotic_covariance,
    frame_to_matrix,
    matrix_to_frame,
    optimal_covariance,
    read_matrix_csv,
    write_matrix_csv,
)

MEAN_G = np.array([[-1.0], [-1.0]])


def test_identity_case():
    I3 = np.eye(3)
    res = asymptotic_covariance(GmmIngredients(I3, I3, I3))
    np.testing.assert_allclose(res.sigma, I3)
    assert res.condition_number == pytest.approx(1.0)
    np.testing.assert_allclose(optimal_covariance(I3, I3).sigma, I3)


def test_two_moment_mean_model():
    I2 = np.eye(2)
    assert asymptotic_covariance(GmmIngredients(MEAN_G, I2, I2)).sigma[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert optimal_covariance(MEAN_G, I2).sigma[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_ingredients_are_validated():
    I2 = np.eye(2)
    with pytest.raises(ValueError, match="full column rank"):
        GmmIngredients(np.ones((3, 2)), np.eye(3), np.eye(3))
    with pytest.raises(ValueError, match="not symmetric"):
        GmmIngredients(MEAN_G, np.array([[1.0, 0.2], [0.0, 1.0]]), I2)
    with pytest.raises(ValueError, match="positive definite"):
        GmmIngredients(MEAN_G, I2, np.diag([1.0, -1.0]))
    with pytest.raises(ValueError, match="semidefinite"):
        GmmIngredients(MEAN_G, np.diag([1.0, -1.0]), I2)
    with pytest.raises(ValueError, match="shape"):
        GmmIngredients(MEAN_G, np.eye(3), I2)


def test_roundoff_asymmetry_is_symmetrized():
    S = np.array([[2.0, 0.5], [0.5 + 1e-14, 1.0]])
    ing = GmmIngredients(MEAN_G, S, np.eye(2))
    assert np.array_equal(ing.S, ing.S.T)
    assert not ing.S.flags.writeable


def test_singular_bread_and_singular_s():
    ing = GmmIngredients(np.eye(2), np.eye(2), np.diag([1.0, 1e-14]))
    with pytest.raises(SingularBread):
        asymptotic_covariance(ing)
    with pytest.raises(SingularS):
        optimal_covariance(MEAN_G, np.ones((2, 2)))


def test_sandwich_consistency_under_efficient_weight(rng):
    for _ in range(50):
        G, S = random_instance(rng)
        sigma = asymptotic_covariance(GmmIngredients(G, S, np.linalg.inv(S))).sigma
        np.testing.assert_allclose(sigma, optimal_covariance(G, S).sigma, rtol=1e-10, atol=1e-10 * np.abs(sigma).max())


def test_efficiency_ordering(rng):
    for _ in range(20):
        G, S = random_instance(rng)
        opt = optimal_covariance(G, S).sigma
        for _ in range(20):
            sigma = asymptotic_covariance(GmmIngredients(G, S, random_weight(rng, G.shape[0]))).sigma
            assert np.linalg.eigvalsh(sigma - opt)[0] >= -1e-9 * np.trace(sigma)


def test_just_identified_ignores_weight(rng):
    for _ in range(10):
        G, S = random_instance(rng, J=4, P=4)
        expected = np.linalg.inv(G) @ S @ np.linalg.inv(G).T
        for _ in range(10):
            sigma = asymptotic_covariance(GmmIngredients(G, S, random_weight(rng, 4))).sigma
            np.testing.assert_allclose(sigma, expected, rtol=1e-8, atol=1e-10)


def test_scale_equivariance(rng):
    c = 10.0
    for _ in range(20):
        G, S = random_instance(rng)
        W = random_weight(rng, G.shape[0])
        k = int(rng.integers(G.shape[0]))
        D = np.eye(G.shape[0])
        D[k, k] = c
        Dinv = np.linalg.inv(D)
        base = asymptotic_covariance(GmmIngredients(G, S, W)).sigma
        scaled = asymptotic_covariance(GmmIngredients(D @ G, D @ S @ D, Dinv @ W @ Dinv)).sigma
        np.testing.assert_allclose(scaled, base, rtol=1e-8, atol=1e-12)


def test_matrix_csv_round_trip(tmp_path, rng):
    a = rng.normal(size=(4, 3)) * 10.0 ** rng.integers(-8, 8, size=(4, 3))
    path = tmp_path / "m.csv"
    write_matrix_csv(a, path)
    assert np.array_equal(read_matrix_csv(path), a)
    assert path.read_text().splitlines()[0] == "j,k,value"
    np.testing.assert_array_equal(frame_to_matrix(matrix_to_frame(a)), a)


def test_matrix_csv_rejects_holes():
    df = matrix_to_frame(np.eye(2)).iloc[:-1]
    with pytest.raises(ValueError, match="missing"):
        frame_to_matrix(df)
