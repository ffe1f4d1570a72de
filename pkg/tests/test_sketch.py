"""Sketching algorithms: spec plumbing, dense-matrix equivalence for all
six maps, adjointness, and the concentration behavior that separates
them."""

import math

import numpy as np
import pytest

from gradsketch.sketch import (
    ALGORITHMS,
    PRECONDITIONERS,
    SketchSpec,
    build_sketcher,
    ffd_adversarial_input,
    jl_distortion_trial,
)
from gradsketch.kron import next_pow2

from _dense_routes import dense_forward_matrix, normalized_hadamard, pad


def _unit(rng, n):
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


def _sparse_unit(rng, n, s=4):
    x = np.zeros(n)
    idx = rng.choice(n, size=s, replace=False)
    x[idx] = rng.standard_normal(s)
    return x / np.linalg.norm(x)


class TestSketchSpec:
    def test_canonical_json_frozen(self):
        spec = SketchSpec("affd", 4096, 256, seed=7)
        assert spec.to_json() == (
            '{"algorithm":"affd","n":4096,"d":256,'
            '"preconditioner":"hadamard","seed":7,"m":null}'
        )

    def test_roundtrip(self):
        for spec in (
            SketchSpec("dense", 100, 10, seed=3, preconditioner="fft"),
            SketchSpec("fjl", 64, 8, seed=0, m=512),
            SketchSpec("qk", 2 ** 12, 2 ** 6, seed=2 ** 63, max_block=64),
        ):
            assert SketchSpec.from_json(spec.to_json()) == spec

    def test_from_json_rejects_junk(self):
        good = SketchSpec("dense", 8, 4, seed=0).to_json()
        with pytest.raises(ValueError):
            SketchSpec.from_json(good.replace('"m":null', '"m":null,"mm":1'))
        with pytest.raises(ValueError):
            SketchSpec.from_json('{"algorithm":"dense","n":8}')
        with pytest.raises(ValueError):
            SketchSpec.from_json("[1,2]")

    def test_validation(self):
        with pytest.raises(ValueError):
            SketchSpec("hash", 64, 8, seed=0)
        with pytest.raises(ValueError):
            SketchSpec("dense", 64, 8, seed=0, preconditioner="dct")
        with pytest.raises(ValueError):
            SketchSpec("dense", 0, 1, seed=0)
        with pytest.raises(ValueError):
            SketchSpec("dense", 64, 8, seed=-1)
        with pytest.raises(ValueError):
            SketchSpec("dense", 64, 8, seed=2 ** 64)
        with pytest.raises(ValueError):
            SketchSpec("dense", 64, 0, seed=0)
        with pytest.raises(ValueError):
            SketchSpec("dense", 64, 128, seed=0)
        with pytest.raises(ValueError):
            SketchSpec("fjl", 64, 8, seed=0, m=1)
        with pytest.raises(ValueError):
            SketchSpec("dense", 64, 8, seed=0, max_block=1)
        # d may reach the padded dimension
        SketchSpec("dense", 1000, 1024, seed=0)


class TestBuild:
    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(200)
        v = rng.standard_normal(16)
        for algo in ALGORITHMS:
            spec = SketchSpec(algo, 200, 16, seed=99)
            a, b = build_sketcher(spec), build_sketcher(spec)
            np.testing.assert_array_equal(a.forward(x), b.forward(x))
            np.testing.assert_array_equal(a.transpose(v), b.transpose(v))

    def test_affd_shape(self):
        sk = build_sketcher(SketchSpec("affd", 2 ** 12, 2 ** 8, seed=1))
        out = sk.forward(np.ones(2 ** 12))
        assert out.shape == (256,)

    def test_ffd_divisibility(self):
        with pytest.raises(ValueError):
            build_sketcher(SketchSpec("ffd", 256, 24, seed=0))

    def test_qk_needs_factorizable_d(self):
        with pytest.raises(ValueError):
            build_sketcher(SketchSpec("qk", 256, 24, seed=0))
        # same d is fine where no factorization is needed
        sk = build_sketcher(SketchSpec("affd", 256, 24, seed=0))
        assert sk.forward(np.ones(256)).shape == (24,)

    def test_components_frozen(self):
        sk = build_sketcher(SketchSpec("affd", 64, 8, seed=5))
        for name, arr in sk.components.items():
            with pytest.raises(ValueError):
                arr[...] = 0.0


class TestForwardTranspose:
    def test_zero_maps_to_zero(self):
        for algo in ALGORITHMS:
            sk = build_sketcher(SketchSpec(algo, 128, 16, seed=3))
            assert not sk.forward(np.zeros(128)).any()
            assert not sk.transpose(np.zeros(16)).any()

    def test_shape_and_finiteness_checks(self):
        sk = build_sketcher(SketchSpec("dense", 64, 8, seed=0))
        with pytest.raises(ValueError):
            sk.forward(np.zeros(63))
        with pytest.raises(ValueError):
            sk.transpose(np.zeros(64))
        bad = np.zeros(64)
        bad[5] = np.nan
        with pytest.raises(ValueError):
            sk.forward(bad)
        bad[5] = np.inf
        with pytest.raises(ValueError):
            sk.forward(bad)

    def test_float32_input_cast(self):
        rng = np.random.default_rng(4)
        x64 = rng.standard_normal(128)
        x32 = x64.astype(np.float32)
        for algo in ALGORITHMS:
            sk = build_sketcher(SketchSpec(algo, 128, 16, seed=8))
            np.testing.assert_array_equal(
                sk.forward(x32), sk.forward(x32.astype(np.float64))
            )

    def test_dense_transpose_is_stored_matrix(self):
        sk = build_sketcher(SketchSpec("dense", 64, 8, seed=2))
        m = np.asarray(sk.components["dense.matrix"])
        v = np.random.default_rng(2).standard_normal(8)
        np.testing.assert_array_equal(sk.transpose(v), m.T @ v)

    def test_padding_transparent(self):
        # padded coordinates carry zero mass, so a 48-dim input behaves
        # exactly like its zero-padded 64-dim version
        rng = np.random.default_rng(6)
        x = rng.standard_normal(48)
        v = rng.standard_normal(8)
        for algo in ALGORITHMS:
            short = build_sketcher(SketchSpec(algo, 48, 8, seed=7))
            full = build_sketcher(SketchSpec(algo, 64, 8, seed=7))
            np.testing.assert_array_equal(short.forward(x), full.forward(pad(x, 64)))
            assert short.transpose(v).shape == (48,)
            np.testing.assert_array_equal(short.transpose(v), full.transpose(v)[:48])


class TestDenseEquivalence:
    CELLS = [(48, 8, 1024), (256, 32, 16)]

    def test_forward_matches_materialization(self):
        rng = np.random.default_rng(10)
        for n, d, mb in self.CELLS:
            for algo in ALGORITHMS:
                for pre in PRECONDITIONERS:
                    sk = build_sketcher(
                        SketchSpec(algo, n, d, seed=13, preconditioner=pre, max_block=mb)
                    )
                    mat = dense_forward_matrix(sk)
                    x = rng.standard_normal(n)
                    want = mat @ pad(x, next_pow2(n))
                    got = sk.forward(x)
                    err = np.abs(got - want).max() / max(1.0, np.abs(want).max())
                    assert err <= 1e-10, (algo, pre, n, err)

    def test_transpose_matches_materialization(self):
        rng = np.random.default_rng(11)
        for n, d, mb in self.CELLS:
            for algo in ALGORITHMS:
                for pre in PRECONDITIONERS:
                    sk = build_sketcher(
                        SketchSpec(algo, n, d, seed=14, preconditioner=pre, max_block=mb)
                    )
                    mat = dense_forward_matrix(sk)
                    v = rng.standard_normal(d)
                    want = (mat.T @ v)[:n]
                    got = sk.transpose(v)
                    err = np.abs(got - want).max() / max(1.0, np.abs(want).max())
                    assert err <= 1e-10, (algo, pre, n, err)


class TestAdjointAndLinearity:
    def test_adjoint_identity(self):
        rng = np.random.default_rng(20)
        for algo in ALGORITHMS:
            for pre in PRECONDITIONERS:
                sk = build_sketcher(
                    SketchSpec(algo, 300, 32, seed=21, preconditioner=pre)
                )
                for _ in range(10):
                    x = rng.standard_normal(300)
                    v = rng.standard_normal(32)
                    lhs = float(sk.forward(x) @ v)
                    rhs = float(x @ sk.transpose(v))
                    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs)), (algo, pre)

    def test_linearity(self):
        rng = np.random.default_rng(22)
        for algo in ALGORITHMS:
            sk = build_sketcher(SketchSpec(algo, 128, 16, seed=23))
            for _ in range(10):
                x, y = rng.standard_normal((2, 128))
                a, b = rng.standard_normal(2)
                lhs = sk.forward(a * x + b * y)
                rhs = a * sk.forward(x) + b * sk.forward(y)
                np.testing.assert_allclose(lhs, rhs, atol=1e-10 * np.abs(rhs).max())

    def test_transpose_linearity(self):
        rng = np.random.default_rng(24)
        for algo in ALGORITHMS:
            sk = build_sketcher(SketchSpec(algo, 128, 16, seed=25))
            u, w = rng.standard_normal((2, 16))
            a, b = 0.7, -1.3
            lhs = sk.transpose(a * u + b * w)
            rhs = a * sk.transpose(u) + b * sk.transpose(w)
            np.testing.assert_allclose(lhs, rhs, atol=1e-10 * np.abs(rhs).max())


class TestIsometryInExpectation:
    def test_mean_squared_norm_over_seeds(self):
        # E||Phi x||^2 == ||x||^2 for every algorithm; 10^4 independent
        # maps at desk size put the Monte Carlo error well inside 2%.
        n, d, reps = 32, 8, 10_000
        x = _unit(np.random.default_rng(30), n)
        for algo in ALGORITHMS:
            acc = 0.0
            for seed in range(reps):
                sk = build_sketcher(SketchSpec(algo, n, d, seed=seed))
                acc += float(np.linalg.norm(sk.forward(x)) ** 2)
            mean = acc / reps
            assert 0.98 <= mean <= 1.02, (algo, mean)


class TestConcentrationOrdering:
    def test_qk_fails_more_than_affd(self):
        # two Kronecker factors concentrate strictly worse than the
        # row-permuted double chain on sparse inputs, at every target
        # dimension; rates measured over 10 maps x 50 vectors
        n, eps = 2 ** 14, 0.1
        rng = np.random.default_rng(1234)
        for d in (2 ** 6, 2 ** 8, 2 ** 10):
            rates = {}
            for algo in ("affd", "qk"):
                fails = 0
                for seed in range(10):
                    sk = build_sketcher(SketchSpec(algo, n, d, seed=seed))
                    for _ in range(50):
                        if jl_distortion_trial(sk, _sparse_unit(rng, n)) >= eps:
                            fails += 1
                rates[algo] = fails / 500.0
            assert rates["qk"] > rates["affd"], (d, rates)


class TestJlDistortionTrial:
    def test_requires_unit_vector(self):
        sk = build_sketcher(SketchSpec("dense", 64, 8, seed=0))
        with pytest.raises(ValueError):
            jl_distortion_trial(sk, np.ones(64))

    def test_square_qk_is_exact_isometry(self):
        sk = build_sketcher(SketchSpec("qk", 1024, 1024, seed=3))
        x = _unit(np.random.default_rng(31), 1024)
        assert jl_distortion_trial(sk, x) <= 1e-10

    def test_affd_concentrates(self):
        sk = build_sketcher(SketchSpec("affd", 2 ** 14, 2 ** 10, seed=5))
        rng = np.random.default_rng(32)
        fails = sum(
            jl_distortion_trial(sk, _unit(rng, 2 ** 14)) >= 0.2 for _ in range(1000)
        )
        assert fails / 1000.0 <= 0.01


class TestFjlStructure:
    def test_row_sparsity_default(self):
        # q = ceil(log2(M)^2) with the default M = 4096 gives 144
        sk = build_sketcher(SketchSpec("fjl", 2 ** 12, 64, seed=9))
        assert sk._q == 144
        sk16 = build_sketcher(SketchSpec("fjl", 2 ** 12, 64, seed=9, m=16))
        assert sk16._q == 16

    def test_nonzero_count_near_expectation(self):
        n, d = 2 ** 12, 64
        sk = build_sketcher(SketchSpec("fjl", n, d, seed=10))
        q = sk._q
        p = q / n
        nnz = sk._sparse.nnz
        sd = math.sqrt(d * n * p * (1 - p))
        assert abs(nnz - d * q) <= 5 * sd

    def test_rows_sorted_unique_in_range(self):
        sk = build_sketcher(SketchSpec("fjl", 2 ** 10, 32, seed=11))
        m = sk._sparse
        for r in range(32):
            idx = m.indices[m.indptr[r] : m.indptr[r + 1]]
            assert (np.diff(idx) > 0).all()
            assert idx.min() >= 0 and idx.max() < 2 ** 10

    def test_value_scale(self):
        n, d = 2 ** 12, 64
        sk = build_sketcher(SketchSpec("fjl", n, d, seed=12))
        scale = 1.0 / math.sqrt(n * (sk._q / n))
        z = sk._sparse.data / scale
        assert abs(z.std() - 1.0) <= 0.05


class TestQkFactors:
    def test_sliced_rows_orthonormal(self):
        sk = build_sketcher(SketchSpec("qk", 2 ** 14, 2 ** 10, seed=13))
        assert sk.kron_shape.rows == (8, 128)
        assert sk.kron_shape.cols == (16, 1024)
        for f in sk.orth_factors:
            np.testing.assert_allclose(
                f.matrix @ f.matrix.T, np.eye(f.rows), atol=1e-10
            )

    def test_no_factors_elsewhere(self):
        sk = build_sketcher(SketchSpec("affd", 64, 8, seed=0))
        assert sk.orth_factors is None


class TestFfdBlocks:
    def test_transpose_block_structure(self):
        # transpose output concatenates n/d per-block features
        # H G_b P_b H B_b v; assembled here from the stored diagonals
        n, d = 64, 8
        sk = build_sketcher(SketchSpec("ffd", n, d, seed=17))
        h = normalized_hadamard(d)
        s = sk.components["ffd.signs"]
        g = sk.components["ffd.gauss"]
        perm = sk.components["ffd.perm"]
        v = np.random.default_rng(33).standard_normal(d)
        got = sk.transpose(v).reshape(n // d, d)
        for b in range(n // d):
            t = h @ (s[b] * v)
            t = t[perm[b]]
            want = h @ (g[b] * t)
            np.testing.assert_allclose(got[b], want, atol=1e-12)


class TestFfdAdversarial:
    def test_frozen_pattern(self):
        x = ffd_adversarial_input(64, 8)
        alt = np.array([1, -1, 1, -1, 1, -1, 1, -1]) / math.sqrt(8)
        np.testing.assert_allclose(x[:8], alt, atol=1e-15)
        assert not x[8:].any()
        assert abs(np.linalg.norm(x) - 1.0) <= 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            ffd_adversarial_input(100, 24)
        with pytest.raises(ValueError):
            ffd_adversarial_input(64, 8, column=8)
        with pytest.raises(ValueError):
            ffd_adversarial_input(4, 8)

    def test_single_chi2_survives(self):
        # squared sketch norm is one squared Gaussian: mean 1, variance 2
        n, d = 256, 8
        x = ffd_adversarial_input(n, d)
        sq = np.empty(1000)
        for seed in range(1000):
            sk = build_sketcher(SketchSpec("ffd", n, d, seed=seed))
            sq[seed] = np.linalg.norm(sk.forward(x)) ** 2
        assert 0.9 <= sq.mean() <= 1.15
        assert 1.7 <= sq.var(ddof=1) <= 2.3

    def test_no_concentration_vs_isotropic(self):
        # the same maps concentrate fine on a random unit vector
        n, d = 256, 8
        rng = np.random.default_rng(34)
        iso = _unit(rng, n)
        sq = np.empty(1000)
        for seed in range(1000):
            sk = build_sketcher(SketchSpec("ffd", n, d, seed=seed))
            sq[seed] = np.linalg.norm(sk.forward(iso)) ** 2
        assert sq.var(ddof=1) < 1.0
