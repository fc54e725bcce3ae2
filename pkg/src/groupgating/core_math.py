"""Numerical substrate: sigmoid, 2-D DFT, PCA whitening and seeded sampling."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

EIGEN_FLOOR = 1e-10


def sigmoid(z):
    """Logistic sigmoid, evaluated without overflow for large ``|z|``."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft2(patch):
    """Full complex 2-D DFT of a square patch, as two passes of 1-D DFTs.

    Coefficient ``[ky, kx]`` multiplies ``exp(-2 pi i (ky r + kx c) / n)``
    for pixel ``[r, c]``.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ValueError(f"dft2 needs a square 2-D patch, got shape {patch.shape}")
    n = patch.shape[0]
    if n < 2:
        raise ValueError("dft2 needs n >= 2")
    f = dft_matrix(n)
    return f @ patch @ f


def idft2(coef):
    coef = np.asarray(coef, dtype=np.complex128)
    n = coef.shape[0]
    f = np.conj(dft_matrix(n))
    return (f @ coef @ f) / (n * n)


class PCAWhitening(BaseEstimator, TransformerMixin):
    """PCA whitening that keeps the leading components holding ``retain``
    of the total variance.

    After ``fit``, ``forward_`` maps centred pixels to unit-variance
    components (rows ordered by decreasing eigenvalue) and ``inverse_``
    maps components back to pixel space.
    """

    def __init__(self, retain=0.95):
        self.retain = retain

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not 0.0 < self.retain <= 1.0:
            raise ValueError(f"retain must lie in (0, 1], got {self.retain}")
        n, d = X.shape
        if n < d:
            raise ValueError(f"need at least as many examples ({n}) as pixels ({d})")
        self.mean_ = X.mean(axis=0)
        xc = X - self.mean_
        cov = xc.T @ xc / n
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        # sign convention: largest-magnitude entry of each eigenvector positive
        idx = np.argmax(np.abs(evecs), axis=0)
        evecs = evecs * np.sign(evecs[idx, np.arange(d)])
        usable = evals > EIGEN_FLOOR * max(evals[0], 0.0)
        evals_ok = np.where(usable, evals, 0.0)
        total = evals_ok.sum()
        if total <= 0:
            raise ValueError("data has no variance to whiten")
        mass = np.cumsum(evals_ok) / total
        # small slack so retain=1.0 is met despite rounding in the cumsum
        k = int(np.searchsorted(mass, self.retain - 1e-12) + 1)
        k = min(k, int(usable.sum()))
        self.eigenvalues_ = evals
        self.n_components_ = k
        self.retained_variance_ = float(evals_ok[:k].sum() / total)
        scale = np.sqrt(evals[:k])
        self.forward_ = evecs[:, :k].T / scale[:, None]
        self.inverse_ = evecs[:, :k] * scale[None, :]
        return self

    def transform(self, X):
        check_is_fitted(self, "forward_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.forward_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "forward_")
        Z = check_array(Z, dtype=np.float64)
        return Z @ self.inverse_.T + self.mean_


def fit_whitening(patches, retain=0.95):
    return PCAWhitening(retain=retain).fit(patches)


# --- seeded sampling -------------------------------------------------------

def make_rng(seed, *keys):
    """Generator for the substream named by ``(seed, *keys)``.

    Keys are non-negative integers; the same tuple always yields the same
    stream (PCG64 is platform independent).
    """
    return np.random.default_rng([int(seed), *[int(k) for k in keys]])


def rng_gaussian(rng, size, mean=0.0, std=1.0):
    return rng.normal(mean, std, size=size)


def rng_uniform(rng, size, low=0.0, high=1.0):
    return rng.uniform(low, high, size=size)


def rng_von_mises(rng, kappa, size, mu=0.0):
    """Von Mises samples on [-pi, pi] by Best-Fisher rejection sampling."""
    if kappa < 0:
        raise ValueError(f"von Mises concentration must be >= 0, got {kappa}")
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape))
    if kappa < 1e-8:
        out = rng.uniform(-np.pi, np.pi, size=n)
    else:
        tau = 1.0 + np.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (tau - np.sqrt(2.0 * tau)) / (2.0 * kappa)
        r = (1.0 + rho * rho) / (2.0 * rho)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = max(2 * (n - filled), 16)
            u1, u2, u3 = rng.uniform(size=(3, m))
            z = np.cos(np.pi * u1)
            f = (1.0 + r * z) / (r + z)
            c = kappa * (r - f)
            with np.errstate(divide="ignore"):
                ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
            theta = np.sign(u3[ok] - 0.5) * np.arccos(np.clip(f[ok], -1.0, 1.0))
            take = min(theta.size, n - filled)
            out[filled:filled + take] = theta[:take]
            filled += take
    out = np.mod(out + mu + np.pi, 2.0 * np.pi) - np.pi
    return out.reshape(shape)
