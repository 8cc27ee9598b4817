import numpy as np
import pytest
from conftest import random_instance, random_weight
from hypothesis import given, settings
from hypothesis import strategies as st

from momentsens import NOT_IDENTIFIED, GmmIngredients, MomentSensitivity, full_report
from momentsens.exceptions import NotOveridentified
from momentsens.gmm_core import asymptotic_covariance, optimal_covariance
from momentsens.sensitivity import m1, m2, m3, m4, m5, m6

MEAN_G = np.array([[-1.0], [-1.0]])
I2 = np.eye(2)
I3 = np.eye(3)


def unit(J, k):
    O = np.zeros((J, J))
    O[k, k] = 1.0
    return O


class TestHandCases:
    def test_identity(self):
        np.testing.assert_array_equal(m1(I3, I3), -I3)
        np.testing.assert_allclose(m2(I3, I3, 1), unit(3, 1))
        np.testing.assert_allclose(m3(I3, I3, 0), unit(3, 0))

    def test_mean_model(self):
        assert m2(MEAN_G, I2, 0)[0, 0] == pytest.approx(0.25, abs=1e-15)
        assert m4(MEAN_G, I2, I2, 1)[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert m5(MEAN_G, I2, 0)[0, 0] == pytest.approx(0.5, abs=1e-15)
        rep = full_report(GmmIngredients(MEAN_G, I2, I2))
        np.testing.assert_allclose(rep.m1, [[0.5, 0.5]], atol=1e-12)
        np.testing.assert_allclose(rep.e2, [[0.5, 0.5]], atol=1e-12)
        np.testing.assert_allclose(rep.e4, [[1.0, 1.0]], atol=1e-12)
        np.testing.assert_allclose(rep.e5, [[1.0, 1.0]], atol=1e-12)
        np.testing.assert_allclose(rep.e6, [[0.0, 0.0]], atol=1e-12)

    def test_drop_needs_overidentification(self):
        with pytest.raises(NotOveridentified):
            m4(I2, I2, I2, 0)
        with pytest.raises(NotOveridentified):
            m5(I2, I2, 0)
        rep = full_report(GmmIngredients(I2, I2, I2))
        assert not rep.dropped_identified.any()
        assert rep.value("E4", 0, 0) is NOT_IDENTIFIED

    def test_moment_index_range(self):
        with pytest.raises(IndexError):
            m2(MEAN_G, I2, 2)


def test_dropping_an_exclusive_moment_flags_not_identified():
    # parameter 0 only enters moment 0
    G = np.array([[1.0, 0.3], [0.0, 1.0], [0.0, 2.0]])
    S = np.eye(3)
    assert m4(G, S, S, 0) is NOT_IDENTIFIED
    assert m5(G, S, 0) is NOT_IDENTIFIED
    assert m4(G, S, S, 1) is not NOT_IDENTIFIED
    rep = full_report(GmmIngredients(G, S, S))
    np.testing.assert_array_equal(rep.dropped_identified, [False, True, True])
    assert np.isnan(rep.e4[:, 0]).all()
    frame = rep.to_frame()
    flagged = frame[frame.flag == "not_identified"]
    assert set(flagged.measure) == {"E4", "E5"}
    assert set(flagged.moment) == {"m1"}


def _fd(func, x0, h):
    return (func(x0 + h) - func(x0 - h)) / (2 * h)


def _close(a, fd, sigma_scale):
    # central differences resolve roughly eps/h relative to |Sigma|
    return np.max(np.abs(a - fd)) <= 1e-5 * np.abs(fd).max() + 1e-9 * sigma_scale


class TestDerivativeOracles:
    def test_m2_m3_m6_match_central_differences(self, rng):
        checked = 0
        while checked < 60:
            G, S = random_instance(rng, overidentified=True)
            J = G.shape[0]
            W = random_weight(rng, J)
            k = int(rng.integers(J))

            def sig_opt(s):
                S2 = S.copy()
                S2[k, k] = s
                return optimal_covariance(G, S2).sigma

            def sig_s(s):
                S2 = S.copy()
                S2[k, k] = s
                return asymptotic_covariance(GmmIngredients(G, S2, W)).sigma

            def sig_w(w):
                W2 = W.copy()
                W2[k, k] = w
                return asymptotic_covariance(GmmIngredients(G, S, W2)).sigma

            h_s = 1e-6 * S[k, k]
            h_w = 1e-6 * W[k, k]
            fd_opt = _fd(sig_opt, S[k, k], h_s)
            fd_s = _fd(sig_s, S[k, k], h_s)
            fd_w = _fd(sig_w, W[k, k], h_w)
            scale = np.abs(sig_s(S[k, k])).max()
            assert _close(m2(G, S, k), fd_opt, scale)
            assert _close(m3(G, W, k), fd_s, scale)
            assert _close(m6(G, W, S, k), fd_w, scale)
            checked += 1


def test_weights_are_irrelevant_when_just_identified(rng):
    for _ in range(30):
        P = int(rng.integers(1, 5))
        G, S = random_instance(rng, J=P, P=P)
        W = random_weight(rng, P)
        sigma = asymptotic_covariance(GmmIngredients(G, S, W)).sigma
        for k in range(P):
            assert np.abs(m6(G, W, S, k)).max() < 1e-8 * np.abs(sigma).max()


class TestOptimalWeighting:
    def test_e6_vanishes_and_e2_equals_e3(self, rng):
        for _ in range(50):
            G, S = random_instance(rng)
            rep = full_report(GmmIngredients(G, S, np.linalg.inv(S)))
            assert np.max(np.abs(rep.e6)) < 1e-8
            np.testing.assert_allclose(rep.e2, rep.e3, atol=1e-8)

    def test_m4_equals_m5_when_drop_leaves_just_identified(self, rng):
        for _ in range(30):
            P = int(rng.integers(1, 5))
            G, S = random_instance(rng, J=P + 1, P=P)
            W = np.linalg.inv(S)
            for k in range(P + 1):
                a, b = m4(G, W, S, k), m5(G, S, k)
                np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-8 * np.abs(b).max())


def test_psd_measures(rng):
    for _ in range(40):
        G, S = random_instance(rng, overidentified=True) if rng.random() < 0.5 else random_instance(rng, J=5, P=3)
        W = random_weight(rng, G.shape[0])
        for k in range(G.shape[0]):
            for mat in (m2(G, S, k), m3(G, W, k), m5(G, S, k)):
                assert np.linalg.eigvalsh(mat)[0] >= -1e-10 * max(1.0, np.abs(mat).max())
                assert np.diag(mat).min() >= -1e-12


def test_sigma_equals_m1_s_m1(rng):
    for _ in range(50):
        G, S = random_instance(rng)
        W = random_weight(rng, G.shape[0])
        M = m1(G, W)
        sigma = asymptotic_covariance(GmmIngredients(G, S, W)).sigma
        np.testing.assert_allclose(M @ S @ M.T, sigma, rtol=1e-9, atol=1e-9 * np.abs(sigma).max())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.sampled_from([0.01, 0.5, 10.0, 1000.0]))
def test_scaled_measures_ignore_moment_units(seed, c):
    rng = np.random.default_rng(seed)
    G, S = random_instance(rng, J=int(rng.integers(3, 7)), P=2)
    W = random_weight(rng, G.shape[0])
    k = int(rng.integers(G.shape[0]))
    D = np.eye(G.shape[0])
    D[k, k] = c
    Di = np.linalg.inv(D)
    base = full_report(GmmIngredients(G, S, W))
    scaled = full_report(GmmIngredients(D @ G, D @ S @ D, Di @ W @ Di))
    for name in ("E1", "E2", "E3", "E4", "E5", "E6"):
        np.testing.assert_allclose(scaled.matrix(name), base.matrix(name), rtol=1e-8, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_dropping_a_moment_never_helps_efficient_gmm(seed):
    rng = np.random.default_rng(seed)
    G, S = random_instance(rng, J=6, P=3)
    rep = full_report(GmmIngredients(G, S, np.linalg.inv(S)))
    assert np.nanmin(rep.e5) >= -1e-10


class TestEstimatorApi:
    def test_fit_from_matrices(self, rng):
        G, S = random_instance(rng, J=5, P=2)
        W = random_weight(rng, 5)
        est = MomentSensitivity(param_names=["a", "b"]).fit(G, S, W)
        ref = full_report(GmmIngredients(G, S, W))
        np.testing.assert_array_equal(est.e3_, ref.e3)
        assert est.report_.param_names == ["a", "b"]
        assert est.report_.moment_names == ["m1", "m2", "m3", "m4", "m5"]
        assert est.get_params() == {"param_names": ["a", "b"], "moment_names": None}

    def test_row_table(self, rng):
        G, S = random_instance(rng, J=4, P=2)
        rep = full_report(GmmIngredients(G, S, S), ["a", "b"])
        row = rep.row("b")
        assert list(row.columns) == ["E1", "E2", "E3", "E4", "E5", "E6"]
        np.testing.assert_array_equal(row["E2"].to_numpy(), rep.e2[1])

    def test_label_length_checked(self):
        with pytest.raises(ValueError, match="labels"):
            full_report(GmmIngredients(MEAN_G, I2, I2), ["a", "b"])
