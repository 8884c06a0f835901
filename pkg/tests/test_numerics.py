import numpy as np
import pytest

from sketchpca.errors import DataError, DimensionError, UsageError
from sketchpca.numerics import RngStream, fwht_rows, haar_orthonormal, top_k_spectrum


class TestTopKSpectrum:
    def test_diagonal_case(self):
        M = np.diag([3.0, 2.0, 1.0])
        top = top_k_spectrum(M, 2)
        np.testing.assert_allclose(top.values, [9.0, 4.0], atol=1e-12)
        # right vectors are e1, e2 up to sign
        assert abs(abs(top.right_vectors[0, 0]) - 1.0) < 1e-12
        assert abs(abs(top.right_vectors[1, 1]) - 1.0) < 1e-12

    def test_identity(self):
        top = top_k_spectrum(np.eye(4), 1, tol=1e-8)
        assert abs(top.values[0] - 1.0) < 1e-12
        assert abs(np.linalg.norm(top.right_vectors[:, 0]) - 1.0) < 1e-10

    def test_full_spectrum_against_dense_oracle(self):
        rng = np.random.default_rng(7)
        M = rng.standard_normal((8, 5))
        top = top_k_spectrum(M, 5)
        oracle = np.sort(np.linalg.eigvalsh(M.T @ M))[::-1]
        np.testing.assert_allclose(top.values, oracle, atol=1e-8, rtol=1e-8)

    def test_agrees_with_dense_eigh_up_to_12(self):
        rng = np.random.default_rng(12)
        for rows in (2, 5, 9, 12):
            for cols in (2, 7, 12):
                M = rng.standard_normal((rows, cols))
                k = min(rows, cols)
                top = top_k_spectrum(M, k)
                oracle = np.sort(np.linalg.eigvalsh(M.T @ M))[::-1][:k]
                scale = max(abs(oracle[0]), 1.0)
                assert np.max(np.abs(top.values - oracle)) <= 1e-8 * scale

    def test_vectors_are_orthonormal_singular_pairs(self):
        rng = np.random.default_rng(3)
        M = rng.standard_normal((20, 9))
        top = top_k_spectrum(M, 4)
        V = top.right_vectors
        assert np.max(np.abs(np.linalg.norm(V, axis=0) - 1.0)) <= 1e-10
        off = V.T @ V - np.eye(4)
        assert np.max(np.abs(off)) <= 1e-8
        # left/right pair consistency: M v = sigma u
        sig = np.sqrt(top.values)
        assert np.max(np.abs(M @ V - top.left_vectors * sig)) <= 1e-8 * sig[0]

    def test_k_out_of_range(self):
        with pytest.raises(DimensionError):
            top_k_spectrum(np.eye(3), 4)
        with pytest.raises(DimensionError):
            top_k_spectrum(np.eye(3), 0)

    def test_nonfinite_entries(self):
        M = np.eye(3)
        M[0, 0] = np.nan
        with pytest.raises(DataError):
            top_k_spectrum(M, 1)

    def test_bad_tol(self):
        with pytest.raises(UsageError):
            top_k_spectrum(np.eye(3), 1, tol=0.0)


class TestHaar:
    def test_one_by_one(self):
        S = haar_orthonormal(1, 1, RngStream(0))
        assert S.shape == (1, 1)
        assert abs(abs(S[0, 0]) - 1.0) < 1e-12

    def test_rows_orthonormal(self):
        S = haar_orthonormal(3, 8, RngStream(1))
        assert np.max(np.abs(S @ S.T - np.eye(3))) <= 1e-10

    def test_projection_energy_monte_carlo(self):
        # mean of (Sw)^T (Sw) for fixed unit w approaches r/n
        r, n, draws = 50, 200, 500
        w = np.zeros(n)
        w[0] = 0.6
        w[3] = 0.8
        vals = np.empty(draws)
        for i in range(draws):
            S = haar_orthonormal(r, n, RngStream(99, i))
            vals[i] = np.sum((S @ w) ** 2)
        se = vals.std(ddof=1) / np.sqrt(draws)
        assert abs(vals.mean() - r / n) <= 3 * se

    def test_orthogonal_vectors_decorrelate(self):
        # for a^T b = 0, the sketched inner product has mean 0
        r, n, draws = 10, 40, 500
        a = np.zeros(n)
        a[0] = 1.0
        b = np.zeros(n)
        b[1] = 1.0
        vals = np.empty(draws)
        for i in range(draws):
            S = haar_orthonormal(r, n, RngStream(5, i))
            vals[i] = (S @ a) @ (S @ b)
        se = vals.std(ddof=1) / np.sqrt(draws)
        assert abs(vals.mean()) <= 4 * se

    def test_deterministic_per_stream(self):
        a = haar_orthonormal(4, 9, RngStream(123, 7))
        b = haar_orthonormal(4, 9, RngStream(123, 7))
        assert np.array_equal(a, b)
        c = haar_orthonormal(4, 9, RngStream(123, 8))
        assert not np.array_equal(a, c)

    def test_r_larger_than_n(self):
        with pytest.raises(DimensionError):
            haar_orthonormal(5, 3, RngStream(0))


def _hadamard_dense(n):
    H = np.array([[1.0]])
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H


class TestFwht:
    def test_h2_first_column(self):
        out = fwht_rows(np.array([[1.0], [0.0]]))
        np.testing.assert_allclose(out, [[1.0], [1.0]])

    def test_involution_scaled(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((16, 3))
        again = fwht_rows(fwht_rows(M))
        assert np.max(np.abs(again - 16 * M)) <= 1e-12 * np.max(np.abs(M)) * 16

    def test_matches_explicit_h8(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((8, 1))
        oracle = _hadamard_dense(8) @ x
        assert np.max(np.abs(fwht_rows(x) - oracle)) <= 1e-12

    def test_constant_columns_concentrate_in_first_row(self):
        M = np.tile(np.array([2.0, -1.0, 0.5]), (8, 1))
        out = fwht_rows(M)
        np.testing.assert_allclose(out[0], 8 * M[0], atol=1e-12)
        assert np.max(np.abs(out[1:])) <= 1e-12
        sums = out.sum(axis=1)
        assert abs(sums[0] - 8 * M[0].sum()) <= 1e-12

    def test_non_power_of_two(self):
        with pytest.raises(DimensionError):
            fwht_rows(np.zeros((6, 2)))


class TestRngStream:
    def test_same_coordinates_replay(self):
        g1 = RngStream(11, 3).generator()
        g2 = RngStream(11, 3).generator()
        assert np.array_equal(g1.standard_normal(10), g2.standard_normal(10))

    def test_different_streams_differ(self):
        a = RngStream(11, 3).generator().standard_normal(10)
        b = RngStream(11, 4).generator().standard_normal(10)
        assert not np.array_equal(a, b)

    def test_substreams_are_new_lanes(self):
        base = RngStream(11, 3)
        a = base.substream(0).generator().standard_normal(10)
        b = base.substream(1).generator().standard_normal(10)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, RngStream(11, 3).substream(0).generator().standard_normal(10))
