"""Factored gated model: parameters, inference, reconstruction and gradients.

Examples are rows. With ``fx = X @ Wx`` and ``fy = Y @ Wy`` the products
fed to the mapping units are ``P[:, s] = fx[:, d_s] * fy[:, e_s]`` for the
pairs ``(d_s, e_s)`` of the core's product map. The decoder reuses ``Wh``:
``m = p_h @ Wh.T`` gates one side to predict the other.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .core_math import sigmoid
from .cores import CoreStructure

PARAM_NAMES = ("Wx", "Wy", "Wh", "bh", "bx", "by")


class UnsupportedOperation(RuntimeError):
    pass


@dataclass
class FactorModel:
    """All learnable parameters of a gated model plus its core structure."""

    Wx: np.ndarray
    Wy: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    core: CoreStructure = field(repr=False)

    def __post_init__(self):
        core = self.core
        if self.Wx.shape[1] != core.num_input_factors:
            raise ValueError(f"Wx has {self.Wx.shape[1]} factors, core needs {core.num_input_factors}")
        if self.Wy.shape[1] != core.num_output_factors:
            raise ValueError(f"Wy has {self.Wy.shape[1]} factors, core needs {core.num_output_factors}")
        if self.Wh.shape[0] != core.num_products:
            raise ValueError(f"Wh has {self.Wh.shape[0]} rows, core has {core.num_products} products")
        if self.bh.shape != (self.Wh.shape[1],):
            raise ValueError("bh must have one entry per mapping unit")
        if self.bx.shape != (self.Wx.shape[0],) or self.by.shape != (self.Wy.shape[0],):
            raise ValueError("reconstruction biases must match the image dimensions")

    @classmethod
    def init(cls, core, input_dim, output_dim, num_hidden, rng, std=0.01):
        """Gaussian weights with standard deviation ``std``; zero biases."""
        Wx = rng.normal(0.0, std, size=(input_dim, core.num_input_factors))
        Wy = rng.normal(0.0, std, size=(output_dim, core.num_output_factors))
        Wh = rng.normal(0.0, std, size=(core.num_products, num_hidden))
        return cls(Wx, Wy, Wh, np.zeros(num_hidden), np.zeros(input_dim),
                   np.zeros(output_dim), core)

    @property
    def num_hidden(self):
        return self.Wh.shape[1]

    @property
    def input_dim(self):
        return self.Wx.shape[0]

    @property
    def output_dim(self):
        return self.Wy.shape[0]

    def params(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return FactorModel(*(getattr(self, n).copy() for n in PARAM_NAMES), core=self.core)

    def num_parameters(self):
        return sum(getattr(self, n).size for n in PARAM_NAMES)


@lru_cache(maxsize=32)
def _scatter(core):
    """Sparse one-hot maps (slots -> input factors, slots -> output factors)."""
    pairs = core.pairs
    S = len(pairs)
    ones = np.ones(S)
    slots = np.arange(S)
    to_in = sp.csr_matrix((ones, (slots, pairs[:, 0])), shape=(S, core.num_input_factors))
    to_out = sp.csr_matrix((ones, (slots, pairs[:, 1])), shape=(S, core.num_output_factors))
    identity = (S == core.num_input_factors == core.num_output_factors
                and np.array_equal(pairs[:, 0], slots) and np.array_equal(pairs[:, 1], slots))
    return to_in, to_out, identity


class _Ops:
    """Gather/scatter between factor space and product slots."""

    def __init__(self, core):
        self.pairs = core.pairs
        self.to_in, self.to_out, self.identity = _scatter(core)

    def gather_in(self, fx):
        return fx if self.identity else fx[:, self.pairs[:, 0]]

    def gather_out(self, fy):
        return fy if self.identity else fy[:, self.pairs[:, 1]]

    def scatter_in(self, v):
        return v if self.identity else np.asarray(v @ self.to_in)

    def scatter_out(self, v):
        return v if self.identity else np.asarray(v @ self.to_out)


def _as_batch(a, dim, name):
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != dim:
        raise ValueError(f"{name} has {a.shape[1]} pixels, model expects {dim}")
    return a, single


def _forward(model, X, Y):
    ops = _Ops(model.core)
    fx = X @ model.Wx
    fy = Y @ model.Wy
    gx = ops.gather_in(fx)
    gy = ops.gather_out(fy)
    prods = gx * gy
    h = sigmoid(prods @ model.Wh + model.bh)
    return ops, fx, fy, gx, gy, prods, h


def infer(model, x, y):
    """Mapping-unit probabilities ``p(h_k | x, y)``; rows are examples."""
    X, single = _as_batch(x, model.input_dim, "x")
    Y, _ = _as_batch(y, model.output_dim, "y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("x and y must hold the same number of examples")
    h = _forward(model, X, Y)[-1]
    return h[0] if single else h


def factor_energy(model, x, y, h):
    """Factored energy ``sum_s (Wx^T x)[d_s] (Wy^T y)[e_s] (Wh h)[s]``."""
    ops = _Ops(model.core)
    fx = np.atleast_2d(np.asarray(x, dtype=np.float64)) @ model.Wx
    fy = np.atleast_2d(np.asarray(y, dtype=np.float64)) @ model.Wy
    return float(np.sum(ops.gather_in(fx) * ops.gather_out(fy) * (model.Wh @ h)))


def reconstruct_y(model, x, p_h):
    X, single = _as_batch(x, model.input_dim, "x")
    H = np.atleast_2d(np.asarray(p_h, dtype=np.float64))
    ops = _Ops(model.core)
    coef = ops.scatter_out((H @ model.Wh.T) * ops.gather_in(X @ model.Wx))
    out = coef @ model.Wy.T + model.by
    return out[0] if single else out


def reconstruct_x(model, y, p_h):
    if not model.core.symmetric:
        raise UnsupportedOperation("asymmetric models only reconstruct the output image")
    Y, single = _as_batch(y, model.output_dim, "y")
    H = np.atleast_2d(np.asarray(p_h, dtype=np.float64))
    ops = _Ops(model.core)
    coef = ops.scatter_in((H @ model.Wh.T) * ops.gather_out(Y @ model.Wy))
    out = coef @ model.Wx.T + model.bx
    return out[0] if single else out


def loss_and_grad(model, X, Y, X_clean=None, Y_clean=None, need_grad=True):
    """Minibatch-averaged reconstruction loss and its exact gradient.

    ``X``/``Y`` are the (possibly corrupted) encoder inputs; the loss
    compares reconstructions against ``X_clean``/``Y_clean``.
    """
    X, _ = _as_batch(X, model.input_dim, "X")
    Y, _ = _as_batch(Y, model.output_dim, "Y")
    X_clean = X if X_clean is None else np.atleast_2d(X_clean)
    Y_clean = Y if Y_clean is None else np.atleast_2d(Y_clean)
    B = X.shape[0]
    if B == 0:
        raise ValueError("empty minibatch")
    symmetric = model.core.symmetric
    ops, fx, fy, gx, gy, prods, h = _forward(model, X, Y)
    m = h @ model.Wh.T

    coef_y = ops.scatter_out(m * gx)
    ry = coef_y @ model.Wy.T + model.by - Y_clean
    loss = np.sum(ry * ry)
    if symmetric:
        coef_x = ops.scatter_in(m * gy)
        rx = coef_x @ model.Wx.T + model.bx - X_clean
        loss += np.sum(rx * rx)
    loss /= B
    if not need_grad:
        return loss, None

    scale = 2.0 / B
    dy = scale * ry
    g = {"by": dy.sum(axis=0)}
    dWy = dy.T @ coef_y
    dcoef_y = ops.gather_out(dy @ model.Wy)
    dm = dcoef_y * gx
    dgx = dcoef_y * m
    if symmetric:
        dx = scale * rx
        g["bx"] = dx.sum(axis=0)
        dWx = dx.T @ coef_x
        dcoef_x = ops.gather_in(dx @ model.Wx)
        dm += dcoef_x * gy
        dgy = dcoef_x * m
    else:
        g["bx"] = np.zeros_like(model.bx)
        dWx = np.zeros_like(model.Wx)
        dgy = np.zeros_like(gy)

    dWh = dm.T @ h
    da = (dm @ model.Wh) * h * (1.0 - h)
    g["bh"] = da.sum(axis=0)
    dWh += prods.T @ da
    dprods = da @ model.Wh.T
    dgx += dprods * gy
    dgy += dprods * gx
    dWx += X.T @ ops.scatter_in(dgx)
    dWy += Y.T @ ops.scatter_out(dgy)
    g.update(Wx=dWx, Wy=dWy, Wh=dWh)
    return loss, g


def loss(model, x, y, x_clean=None, y_clean=None):
    return loss_and_grad(model, x, y, x_clean, y_clean, need_grad=False)[0]


def grad(model, x, y, x_clean=None, y_clean=None):
    return loss_and_grad(model, x, y, x_clean, y_clean)[1]


def compose_tensor(model, max_size=10**6):
    """Dense three-way tensor ``w[i, j, k]`` implied by the factors (tiny models only)."""
    size = model.input_dim * model.output_dim * model.num_hidden
    if size > max_size:
        raise ValueError(f"composed tensor would have {size} entries (limit {max_size})")
    d, e = model.core.pairs[:, 0], model.core.pairs[:, 1]
    return np.einsum("is,js,sk->ijk", model.Wx[:, d], model.Wy[:, e], model.Wh)


# --- square-pooling baseline -------------------------------------------------

@dataclass
class SquarePoolingModel:
    """Energy model over the concatenation ``z = [x; y]``.

    ``p_h = sigmoid(bh + (Wc^T z)^2 @ Wh)`` and the decoder mirrors the
    gated one with both images tied to ``z``.
    """

    Wc: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray
    bz: np.ndarray

    @classmethod
    def init(cls, input_dim, num_factors, num_hidden, rng, std=0.01):
        return cls(rng.normal(0.0, std, size=(input_dim, num_factors)),
                   rng.normal(0.0, std, size=(num_factors, num_hidden)),
                   np.zeros(num_hidden), np.zeros(input_dim))

    @property
    def num_hidden(self):
        return self.Wh.shape[1]

    @property
    def input_dim(self):
        return self.Wc.shape[0]

    def params(self):
        return {"Wc": self.Wc, "Wh": self.Wh, "bh": self.bh, "bz": self.bz}

    def copy(self):
        return SquarePoolingModel(self.Wc.copy(), self.Wh.copy(), self.bh.copy(), self.bz.copy())

    def num_parameters(self):
        return sum(v.size for v in self.params().values())


def infer_square_pooling(model, x, y):
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if X.shape[1] + Y.shape[1] != model.input_dim:
        raise ValueError(f"[x; y] has {X.shape[1] + Y.shape[1]} entries, model expects {model.input_dim}")
    r = np.hstack([X, Y]) @ model.Wc
    h = sigmoid((r * r) @ model.Wh + model.bh)
    return h[0] if np.ndim(x) == 1 else h


def square_pooling_loss_and_grad(model, Z, Z_clean=None, need_grad=True):
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    Z_clean = Z if Z_clean is None else np.atleast_2d(Z_clean)
    B = Z.shape[0]
    r = Z @ model.Wc
    sq = r * r
    h = sigmoid(sq @ model.Wh + model.bh)
    m = h @ model.Wh.T
    coef = m * r
    res = coef @ model.Wc.T + model.bz - Z_clean
    loss = np.sum(res * res) / B
    if not need_grad:
        return loss, None
    dres = (2.0 / B) * res
    dWc = dres.T @ coef
    dcoef = dres @ model.Wc
    dm = dcoef * r
    dr = dcoef * m
    dWh = dm.T @ h
    da = (dm @ model.Wh) * h * (1.0 - h)
    dWh += sq.T @ da
    dr += 2.0 * r * (da @ model.Wh.T)
    dWc += Z.T @ dr
    return loss, {"Wc": dWc, "Wh": dWh, "bh": da.sum(axis=0), "bz": dres.sum(axis=0)}
