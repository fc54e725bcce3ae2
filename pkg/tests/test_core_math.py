import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from groupgating.core_math import (
    PCAWhitening,
    dft2,
    fit_whitening,
    idft2,
    make_rng,
    rng_gaussian,
    rng_uniform,
    rng_von_mises,
    sigmoid,
)


def direct_dft2(a):
    """O(n^4) double sum, independent of the matrix formulation."""
    n = a.shape[0]
    out = np.zeros((n, n), dtype=complex)
    for ky in range(n):
        for kx in range(n):
            s = 0j
            for r in range(n):
                for c in range(n):
                    s += a[r, c] * complex(math.cos(-2 * math.pi * (ky * r + kx * c) / n),
                                           math.sin(-2 * math.pi * (ky * r + kx * c) / n))
            out[ky, kx] = s
    return out


def exact_white(rng, n, d):
    z = rng.standard_normal((n, d))
    z -= z.mean(axis=0)
    evals, evecs = np.linalg.eigh(z.T @ z / n)
    return z @ evecs / np.sqrt(evals)


class TestSigmoid:
    def test_symmetry_point(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5

    def test_pairs_sum_to_one(self):
        z = np.linspace(-30, 30, 601)
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), 1.0, atol=1e-15)

    def test_scalar_reference(self):
        assert sigmoid(np.array([2.0]))[0] == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), rel=1e-15)

    def test_open_interval_and_monotone(self):
        z = np.linspace(-35, 35, 1001)
        s = sigmoid(z)
        assert np.all((s > 0) & (s < 1))
        assert np.all(np.diff(s) >= 0)
        assert np.all(np.diff(sigmoid(np.linspace(-15, 15, 301))) > 0)

    def test_saturates_without_overflow(self):
        with np.errstate(over="raise"):
            s = sigmoid(np.array([-1000.0, 1000.0]))
        assert s[0] == 0.0 and s[1] == 1.0


class TestDFT:
    def test_constant_patch_is_dc_only(self):
        c, n = 1.7, 6
        f = dft2(np.full((n, n), c))
        assert f[0, 0] == pytest.approx(c * n * n)
        f[0, 0] = 0
        assert np.abs(f).max() < 1e-12

    def test_cosine_energy_at_plus_minus_k(self):
        n, k = 8, 3
        u = np.arange(n)
        patch = np.tile(np.cos(2 * np.pi * k * u / n), (n, 1))
        mag = np.abs(dft2(patch))
        assert mag[0, k] == pytest.approx(n * n / 2)
        assert mag[0, n - k] == pytest.approx(n * n / 2)
        mag[0, k] = mag[0, n - k] = 0
        assert mag.max() < 1e-10

    def test_matches_direct_summation(self):
        a = np.random.default_rng(3).standard_normal((4, 4))
        np.testing.assert_allclose(dft2(a), direct_dft2(a), atol=1e-10)

    def test_matches_numpy_fft(self):
        a = np.random.default_rng(4).standard_normal((13, 13))
        np.testing.assert_allclose(dft2(a), np.fft.fft2(a), atol=1e-10)

    @pytest.mark.parametrize("n", range(2, 17))
    def test_parseval(self, n):
        a = np.random.default_rng(n).standard_normal((n, n))
        lhs = np.sum(np.abs(dft2(a)) ** 2) / n ** 2
        assert lhs == pytest.approx(np.sum(a * a), rel=1e-8)

    def test_inverse(self):
        a = np.random.default_rng(5).standard_normal((7, 7))
        np.testing.assert_allclose(idft2(dft2(a)).real, a, atol=1e-12)

    @pytest.mark.parametrize("shape", [(3, 4), (5,), (1, 1)])
    def test_rejects_bad_shapes(self, shape):
        with pytest.raises(ValueError):
            dft2(np.zeros(shape))


class TestWhitening:
    def test_white_data_gives_orthonormal_forward(self):
        X = exact_white(np.random.default_rng(0), 500, 6)
        wt = fit_whitening(X, retain=1.0)
        assert wt.n_components_ == 6
        np.testing.assert_allclose(wt.forward_ @ wt.forward_.T, np.eye(6), atol=1e-8)
        np.testing.assert_allclose(wt.transform(X).var(axis=0), 1.0, atol=1e-3)

    def test_eigenvalue_mass_rule(self):
        X = exact_white(np.random.default_rng(1), 400, 2) * np.array([2.0, 1.0])
        wt = fit_whitening(X, retain=0.8)
        assert wt.n_components_ == 1
        assert wt.retained_variance_ == pytest.approx(0.8)
        assert fit_whitening(X, retain=0.81).n_components_ == 2

    def test_gaussian_sample_whitened_covariance(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((20, 20))
        X = rng.standard_normal((10_000, 20)) @ A
        Z = fit_whitening(X, retain=1.0).transform(X)
        np.testing.assert_allclose(np.cov(Z, rowvar=False, bias=True), np.eye(20), atol=1e-2)

    def test_components_ordered_by_eigenvalue(self):
        X = np.random.default_rng(3).standard_normal((2000, 5)) * np.array([1, 5, 2, 4, 3])
        wt = fit_whitening(X, retain=1.0)
        assert np.all(np.diff(wt.eigenvalues_) <= 0)
        np.testing.assert_allclose(wt.transform(X).var(axis=0), 1.0, atol=1e-3)

    def test_round_trip_on_retained_subspace(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((3000, 9)) @ rng.standard_normal((9, 9))
        wt = fit_whitening(X, retain=0.9)
        Z = wt.transform(X)
        np.testing.assert_allclose(wt.transform(wt.inverse_transform(Z)), Z, atol=1e-6)

    def test_reconstruction_error_equals_discarded_mass(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((3000, 9)) @ rng.standard_normal((9, 9))
        wt = fit_whitening(X, retain=0.9)
        err = np.mean(np.sum((wt.inverse_transform(wt.transform(X)) - X) ** 2, axis=1))
        assert err == pytest.approx(wt.eigenvalues_[wt.n_components_:].sum(), rel=1e-6)

    def test_rank_deficient_drops_null_directions(self):
        X = np.random.default_rng(6).standard_normal((500, 3))
        X = np.hstack([X, X[:, :1], np.zeros((500, 1))])
        wt = fit_whitening(X, retain=1.0)
        assert wt.n_components_ == 3
        assert np.all(np.isfinite(wt.forward_))

    @pytest.mark.parametrize("retain", [0.0, 1.5])
    def test_rejects_bad_retain(self, retain):
        with pytest.raises(ValueError):
            fit_whitening(np.random.default_rng(0).standard_normal((50, 3)), retain)

    def test_rejects_too_few_examples(self):
        with pytest.raises(ValueError):
            PCAWhitening().fit(np.zeros((3, 5)))


def bessel_i(nu, x, terms=60):
    return sum((x / 2) ** (2 * m + nu) / (math.factorial(m) * math.gamma(m + nu + 1))
               for m in range(terms))


class TestSampling:
    def test_von_mises_zero_kappa_is_uniform(self):
        s = rng_von_mises(make_rng(0), 0.0, 100_000)
        counts, _ = np.histogram(s, bins=20, range=(-np.pi, np.pi))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_uniform_mean(self):
        s = rng_uniform(make_rng(1), 100_000, -3, 3)
        assert abs(s.mean()) < 3 * math.sqrt(3.0) / math.sqrt(100_000)

    def test_von_mises_resultant_length(self):
        s = rng_von_mises(make_rng(2), 1.0, 100_000)
        r = np.hypot(np.cos(s).mean(), np.sin(s).mean())
        target = bessel_i(1, 1.0) / bessel_i(0, 1.0)
        assert target == pytest.approx(0.4464, abs=1e-4)
        assert abs(r - target) < 0.02

    @pytest.mark.parametrize("kappa", [0.0, 0.5, 4.0, 50.0])
    def test_von_mises_range(self, kappa):
        s = rng_von_mises(make_rng(3), kappa, 10_000)
        assert s.min() >= -np.pi and s.max() < np.pi

    def test_von_mises_matches_reference_distribution(self):
        s = rng_von_mises(make_rng(4), 2.0, 20_000)
        assert stats.kstest(s, stats.vonmises(2.0).cdf).pvalue > 0.01

    def test_negative_kappa_rejected(self):
        with pytest.raises(ValueError):
            rng_von_mises(make_rng(0), -0.1, 10)

    def test_reproducible_streams(self):
        for fn in (lambda r: rng_gaussian(r, 50), lambda r: rng_uniform(r, 50),
                   lambda r: rng_von_mises(r, 1.0, 50)):
            a, b = fn(make_rng(9, 1, 2)), fn(make_rng(9, 1, 2))
            assert a.tobytes() == b.tobytes()
            assert fn(make_rng(9, 1, 3)).tobytes() != a.tobytes()


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_parseval_property(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    assert np.sum(np.abs(dft2(a)) ** 2) / n ** 2 == pytest.approx(np.sum(a * a), rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 11), st.integers(0, 11), st.integers(0, 2**32 - 1))
def test_circular_shift_only_changes_phase(n, sy, sx, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    k = np.arange(n)
    ramp = np.exp(-2j * np.pi * (np.outer(k, np.ones(n)) * sy + np.outer(np.ones(n), k) * sx) / n)
    np.testing.assert_allclose(dft2(np.roll(a, (sy, sx), axis=(0, 1))), dft2(a) * ramp, atol=1e-6)
