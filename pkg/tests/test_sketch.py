import numpy as np
import pytest

from sketchpca.errors import DataError, DimensionError, UsageError
from sketchpca.numerics import RngStream, fwht_rows
from sketchpca.sketch import (
    METHODS,
    SketchSpec,
    SpectralAtoms,
    apply_sketch,
    bucket_counts,
    build_sketch,
    operator_gram_esd,
)
from sketchpca.sketch import _CountSketch  # white-box for deterministic hash cases


def _build(method, r, n, seed=0, **kw):
    spec = SketchSpec(method=method, r=r, **kw)
    rng = RngStream(seed)
    data = np.random.default_rng(1234).standard_normal((n, 4))
    return build_sketch(spec, n, rng, data=data), data


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("n,p,r", [(10, 4, 3), (32, 8, 16), (17, 5, 6)])
def test_apply_matches_dense_oracle(method, n, p, r):
    spec = SketchSpec(method=method, r=r, osnap_s=2)
    Y = np.random.default_rng(n * 100 + r).standard_normal((n, p))
    for seed in (0, 1):
        op = build_sketch(spec, n, RngStream(seed), data=Y)
        fast = apply_sketch(op, Y)
        dense = op.to_dense() @ Y
        assert fast.shape == dense.shape
        assert np.max(np.abs(fast - dense)) <= 1e-12 * max(1.0, np.max(np.abs(dense)))


def test_countsketch_column_structure():
    op, _ = _build("countsketch", 4, 10)
    S = op.to_dense()
    assert S.shape == (4, 10)
    nnz = np.sum(S != 0, axis=0)
    assert np.array_equal(nnz, np.ones(10))
    assert set(np.abs(S[S != 0])) == {1.0}


def test_haar_square_is_orthogonal():
    op, _ = _build("haar", 2, 2)
    S = op.to_dense()
    assert np.max(np.abs(S @ S.T - np.eye(2))) <= 1e-10


def test_uniform_sample_kept_count_binomial():
    # Binomial(n, r/n) oracle: mean kept count near r
    n, r, draws = 1000, 500, 200
    counts = [
        build_sketch(SketchSpec("uniform_sample", r), n, RngStream(77, i)).r_effective
        for i in range(draws)
    ]
    assert abs(np.mean(counts) - r) <= 3 * np.sqrt(n * 0.25)


def test_orthogonal_invariance_of_gram_when_r_equals_n():
    n = 24
    Y = np.random.default_rng(5).standard_normal((n, 6))
    op = build_sketch(SketchSpec("haar", n), n, RngStream(3))
    SY = apply_sketch(op, Y)
    G0 = Y.T @ Y
    assert np.linalg.norm(SY.T @ SY - G0) <= 1e-8 * np.linalg.norm(G0)


def test_countsketch_on_identity_against_dense():
    Y = np.eye(4)
    op = build_sketch(SketchSpec("countsketch", 2), 4, RngStream(9))
    out = apply_sketch(op, Y)
    assert np.array_equal(out, op.to_dense() @ Y)
    # each output row is the signed indicator of the rows hashed to it
    for i in range(2):
        mask = op.hashes == i
        np.testing.assert_allclose(out[i], np.where(mask, op.signs, 0.0))


def test_srht_matches_padded_hadamard_product():
    n, p = 8, 3
    Y = np.random.default_rng(11).standard_normal((n, p))
    op = build_sketch(SketchSpec("srht", 4), n, RngStream(21))
    H = fwht_rows(np.eye(8))
    Sref = (H / np.sqrt(8))[op.kept] * op.signs[None, :]
    assert np.max(np.abs(apply_sketch(op, Y) - Sref @ Y)) <= 1e-12


def test_srht_pads_odd_sizes_without_error():
    n = 12  # pads to 16
    Y = np.random.default_rng(2).standard_normal((n, 3))
    op = build_sketch(SketchSpec("srht", 5), n, RngStream(4))
    assert op.n_padded == 16
    out = apply_sketch(op, Y)
    assert np.max(np.abs(out - op.to_dense() @ Y)) <= 1e-12
    esd = operator_gram_esd(op)
    assert np.array_equal(esd.values, [1.0])


class TestBucketCounts:
    def test_permutation_hash_gives_unit_buckets(self):
        spec = SketchSpec("countsketch", 6)
        op = _CountSketch(spec, 6, hashes=np.random.default_rng(0).permutation(6),
                          signs=np.ones(6, dtype=int))
        assert np.array_equal(bucket_counts(op), np.ones(6, dtype=int))

    def test_counts_sum_to_n(self):
        op, _ = _build("countsketch", 7, 50)
        assert bucket_counts(op).sum() == 50

    def test_multinomial_means(self):
        n, r, draws = 1000, 100, 100
        acc = np.zeros(r)
        sq = np.zeros(r)
        for i in range(draws):
            c = bucket_counts(build_sketch(SketchSpec("countsketch", r), n, RngStream(55, i)))
            acc += c
            sq += c.astype(float) ** 2
        mean = acc / draws
        var = sq / draws - mean**2
        se = np.sqrt(var / draws)
        assert np.all(np.abs(mean - n / r) <= 3.0 * se + 1e-9)

    def test_zero_bucket_fraction_poisson(self):
        # fraction of empty buckets approaches exp(-n/r) = exp(-2)
        n, r, draws = 1000, 500, 30
        fracs = [
            np.mean(bucket_counts(build_sketch(SketchSpec("countsketch", r), n, RngStream(66, i))) == 0)
            for i in range(draws)
        ]
        se = np.std(fracs, ddof=1) / np.sqrt(draws)
        assert abs(np.mean(fracs) - np.exp(-2.0)) <= 3 * se

    def test_wrong_method_rejected(self):
        op, _ = _build("haar", 3, 8)
        with pytest.raises(UsageError):
            bucket_counts(op)


class TestGramEsd:
    def test_haar_single_atom(self):
        op, _ = _build("haar", 3, 9)
        esd = operator_gram_esd(op)
        assert np.array_equal(esd.values, [1.0])
        assert np.array_equal(esd.weights, [1.0])

    def test_countsketch_atoms_are_bucket_counts(self):
        spec = SketchSpec("countsketch", 6)
        op = _CountSketch(spec, 8, hashes=np.array([0, 0, 1, 1, 3, 3, 3, 5]),
                          signs=np.ones(8, dtype=int))
        esd = operator_gram_esd(op)
        np.testing.assert_allclose(esd.values, [0.0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(esd.weights, [2 / 6, 1 / 6, 2 / 6, 1 / 6])

    def test_iid_moments_match_marchenko_pastur(self):
        # ESD of S S^T -> MP(xi): mean 1, second moment 1 + xi
        r, n, draws = 200, 1000, 8
        m1s, m2s = [], []
        for i in range(draws):
            esd = operator_gram_esd(build_sketch(SketchSpec("iid", r), n, RngStream(12, i)))
            m1s.append(esd.moment(1))
            m2s.append(esd.moment(2))
        se1 = np.std(m1s, ddof=1) / np.sqrt(draws)
        se2 = np.std(m2s, ddof=1) / np.sqrt(draws)
        assert abs(np.mean(m1s) - 1.0) <= 3 * se1 + 1e-4
        assert abs(np.mean(m2s) - 1.2) <= 3 * se2 + 1e-3

    def test_moment_ratio_one_for_orthonormal_rows(self):
        for method in ("haar", "srht", "uniform_sample", "countsketch_normalized", "dft"):
            op, _ = _build(method, 5, 20, seed=2)
            esd = operator_gram_esd(op)
            assert esd.moment(2) / esd.moment(1) ** 2 == 1.0

    def test_moment_ratio_exceeds_one_for_iid_and_countsketch(self):
        hits = 0
        for seed in range(5):
            for method in ("iid", "countsketch"):
                op, _ = _build(method, 8, 40, seed=seed)
                esd = operator_gram_esd(op)
                hits += esd.moment(2) / esd.moment(1) ** 2 > 1.0
        assert hits >= 9  # strictly greater with high empirical frequency


def test_srht_rows_are_delocalized():
    # z = (1/sqrt(n)) H D w has sup norm <= 4 log(n)/sqrt(n) for unit w
    for n in (64, 256, 1024, 4096):
        gen = np.random.default_rng(n)
        w = gen.standard_normal(n)
        w /= np.linalg.norm(w)
        signs = np.where(gen.random(n) < 0.5, -1.0, 1.0)
        z = fwht_rows(signs * w) / np.sqrt(n)
        assert np.max(np.abs(z)) <= 4.0 * np.log(n) / np.sqrt(n)


def test_normalized_countsketch_gram_is_identity_on_kept_buckets():
    op, _ = _build("countsketch_normalized", 6, 40, seed=3)
    S = op.to_dense()
    G = S @ S.T
    assert np.max(np.abs(G - np.eye(op.r_effective))) <= 1e-12
    # norm preservation on a single bucket's preimage (a row span vector)
    y = S[0]
    assert abs(np.linalg.norm(S @ y) - np.linalg.norm(y)) <= 1e-12


def test_uniform_sampling_never_increases_energy():
    Y = np.random.default_rng(8).standard_normal((30, 5))
    for seed in range(5):
        op = build_sketch(SketchSpec("uniform_sample", 12), 30, RngStream(seed))
        assert np.linalg.norm(apply_sketch(op, Y)) <= np.linalg.norm(Y) + 1e-12


def test_uniform_exact_r_and_signs_variants():
    op = build_sketch(SketchSpec("uniform_sample", 9, uniform_exact_r=True), 20, RngStream(1))
    assert op.r_effective == 9
    ops = build_sketch(SketchSpec("uniform_sample", 9, uniform_signs=True), 20, RngStream(1))
    S = ops.to_dense()
    assert set(np.abs(S[S != 0])) == {1.0}
    assert np.max(np.abs(S @ S.T - np.eye(ops.r_effective))) <= 1e-12


def test_osnap_column_invariants():
    op, _ = _build("osnap", 6, 25, osnap_s=3)
    S = op.to_dense()
    assert np.all(np.sum(S != 0, axis=0) == 3)
    np.testing.assert_allclose(np.linalg.norm(S, axis=0), np.ones(25), atol=1e-12)


def test_leverage_requires_data():
    with pytest.raises(UsageError):
        build_sketch(SketchSpec("leverage", 3), 10, RngStream(0))


def test_dimension_errors():
    with pytest.raises(DimensionError):
        build_sketch(SketchSpec("haar", 11), 10, RngStream(0))
    op, _ = _build("haar", 3, 10)
    with pytest.raises(DimensionError):
        apply_sketch(op, np.zeros((9, 2)))
    with pytest.raises(UsageError):
        SketchSpec("nonsense", 3)
    with pytest.raises(DimensionError):
        SketchSpec("osnap", 3, osnap_s=4)


def test_spectral_atoms_validation():
    with pytest.raises(DataError):
        SpectralAtoms(np.array([1.0, 2.0]), np.array([0.7, 0.7]))
    atoms = SpectralAtoms.from_counts([1.0, 2.0], [3, 1])
    assert atoms.moment(1) == 1.25
