import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perquad.kernels import KernelApprox, gram_matrix
from perquad.psd_analysis import (
    charact_matrix,
    default_tolerance,
    is_psd,
    largest_psd_alpha,
    random_psd,
    schur_gap_matrix,
    verify_charact_direction,
)
from perquad.spectra import BorderUnivariate, Explicit, convolution_square, truncate_at

MU = Explicit([[-1], [0], [1]], [1.0, 1.0, 1.0])


class TestIsPsd:
    def test_identity(self):
        v = is_psd(np.eye(4))
        assert v.is_psd and v.min_eigenvalue == pytest.approx(1.0)

    def test_indefinite(self):
        v = is_psd(np.diag([1.0, -1.0]))
        assert not v and v.min_eigenvalue == pytest.approx(-1.0)

    def test_random_gram(self, rng):
        M = random_psd(30, rng, rank=10)
        v = is_psd(M, 1e-10 * np.linalg.norm(M, 2))
        assert v.is_psd

    def test_errors(self):
        with pytest.raises(ValueError):
            is_psd(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            is_psd(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_default_tolerance(self):
        assert default_tolerance(np.eye(3)) == pytest.approx(3e-10)

    def test_empty(self):
        assert is_psd(np.zeros((0, 0))).is_psd


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**32 - 1))
def test_schur_gap_psd_property(n, seed):
    M = random_psd(n, np.random.default_rng(seed), rank=max(1, n // 2))
    assert is_psd(schur_gap_matrix(M)).is_psd


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_schur_gap_scaling(n, seed, c):
    M = random_psd(n, np.random.default_rng(seed))
    assert np.allclose(schur_gap_matrix(c * M), c * c * schur_gap_matrix(M), rtol=1e-12, atol=0)


class TestSchurGap:
    def test_identity(self):
        G = schur_gap_matrix(np.eye(2))
        assert np.array_equal(G, np.eye(2) - 0.5 * np.ones((2, 2)))
        assert is_psd(G).is_psd

    def test_rank_one(self):
        n = 5
        G = schur_gap_matrix(np.ones((n, n)))
        assert np.allclose(G, (1 - 1 / n) * np.ones((n, n)))
        assert is_psd(G).is_psd

    def test_single(self):
        assert schur_gap_matrix(np.array([[3.0]])).tolist() == [[0.0]]

    def test_complex_entries(self):
        M = np.array([[2, 1j], [-1j, 2]])
        assert np.allclose(schur_gap_matrix(M), [[2, 1 - 2], [1 - 2, 2]])


class TestCharact:
    def test_alpha_zero_is_gram(self, geo_kernel):
        x = [0.1, 0.4, 0.8]
        assert np.array_equal(charact_matrix(geo_kernel, x, 0.0), gram_matrix(geo_kernel, x))

    def test_sum_of_squares_psd(self, rng):
        K = KernelApprox.from_truncation(truncate_at(convolution_square(MU)))
        kappa, lam0 = K.diagonal_value, K.lambda0
        for n in (1, 2, 3):
            x = rng.random(n)
            # the theorem's criterion matrix K - (kappa / n) with h = lam_0
            assert is_psd(charact_matrix(K, x, kappa / (n * lam0**2))).is_psd

    def test_alpha_huge(self, geo_kernel):
        C = charact_matrix(geo_kernel, [0.1, 0.3], 1e6)
        assert np.all(np.diag(C).real < 0) and not is_psd(C).is_psd

    def test_negative_alpha(self, geo_kernel):
        with pytest.raises(ValueError):
            charact_matrix(geo_kernel, [0.1], -1.0)

    def test_verify_hand_example(self, rng):
        K = KernelApprox.from_truncation(truncate_at(convolution_square(MU)))
        kappa = K.diagonal_value
        rep = verify_charact_direction(K, rng.random(3), 3.0 / kappa)
        assert rep.verdict.is_psd and rep.holds
        assert rep.error.value >= K.lambda0 - kappa / 3 - rep.slack

    @pytest.mark.parametrize("x", [0.0, 0.3, 0.77])
    def test_sharp_alpha_single_node_is_psd(self, x):
        # at n = 1 and alpha = kappa / lam_0^2 the criterion matrix cancels to rounding level
        K = KernelApprox.from_truncation(truncate_at(convolution_square(MU)))
        rep = verify_charact_direction(K, [x], K.diagonal_value / K.lambda0**2)
        assert rep.verdict.is_psd and rep.holds
        assert rep.implied_bound == pytest.approx(K.lambda0 * (1 - K.lambda0 / K.diagonal_value), rel=1e-14)
        assert rep.error.value == pytest.approx(rep.implied_bound, rel=1e-12)

    def test_verify_tiny_alpha(self, geo_kernel):
        rep = verify_charact_direction(geo_kernel, [0.2, 0.7], 1e-9)
        assert rep.implied_bound < 0 and rep.holds

    def test_border_largest_alpha(self, border):
        K = KernelApprox.from_truncation(border)
        x = np.arange(8) / 8
        alpha = largest_psd_alpha(K, x)
        assert alpha > 0
        rep = verify_charact_direction(K, x, alpha)
        assert rep.verdict.is_psd and rep.gap >= -rep.slack

    def test_violation_raises(self, geo_kernel, monkeypatch):
        import perquad.psd_analysis as pa
        from perquad.quadrature import ErrorInterval

        monkeypatch.setattr(pa, "optimal_weights", lambda x, K: (np.zeros(len(x)), ErrorInterval(0, 0, 0)))
        with pytest.raises(AssertionError):
            verify_charact_direction(geo_kernel, [0.0], 2.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(0.05, 20.0))
def test_charact_direction_never_violated(n, seed, alpha):
    K = KernelApprox.from_truncation(truncate_at(convolution_square(MU)))
    x = np.random.default_rng(seed).random(n)
    assert verify_charact_direction(K, x, alpha).holds
