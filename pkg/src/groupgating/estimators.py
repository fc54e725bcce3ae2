"""Scikit-learn estimators wrapping the gated models.

Image pairs are passed as rows ``[x | y]`` (input image pixels followed
by output image pixels) so the estimators drop into ``Pipeline`` objects
next to scalers and classifiers. ``transform`` returns mapping-unit
probabilities.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core_math import PCAWhitening, make_rng
from .cores import CoreStructure
from .model import (
    FactorModel,
    SquarePoolingModel,
    infer,
    infer_square_pooling,
    reconstruct_x,
    reconstruct_y,
)
from .training import TrainConfig, mean_loss, train


def split_pairs(X):
    X = check_array(X, dtype=np.float64)
    if X.shape[1] % 2:
        raise ValueError(f"pair rows need an even number of columns, got {X.shape[1]}")
    d = X.shape[1] // 2
    return X[:, :d], X[:, d:]


def stack_pairs(x, y):
    return np.hstack([np.atleast_2d(x), np.atleast_2d(y)])


def build_core(kind, num_factors=None, group_size=1, grid=None, neighborhood=3, wraparound=True):
    if kind == "diagonal":
        return CoreStructure.diagonal(num_factors)
    if kind == "grouped":
        return CoreStructure.grouped(num_factors, group_size)
    if kind == "asym_grouped":
        if num_factors % group_size:
            raise ValueError("asymmetric models need num_factors divisible by group_size")
        return CoreStructure.asym_grouped(num_factors // group_size, group_size)
    if kind == "topographic":
        rows, cols = grid
        return CoreStructure.topographic(rows, cols, neighborhood, wraparound)
    raise ValueError(f"unknown core kind {kind!r}")


def topographic_mask(core, num_hidden):
    """Mask giving mapping unit ``k`` access to the products of group ``k mod G`` only."""
    slot_group = core.slot_groups()
    unit_group = np.arange(num_hidden) % len(core.groups)
    return slot_group[:, None] == unit_group[None, :]


def init_model(core, input_dim, output_dim, num_hidden, rng, std=0.01):
    model = FactorModel.init(core, input_dim, output_dim, num_hidden, rng, std)
    if core.kind == "topographic":
        model.Wh *= topographic_mask(core, num_hidden)
    return model


class _PairModelBase(BaseEstimator, TransformerMixin):

    def _train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, minibatch_size=self.minibatch_size,
                           epochs=self.epochs, noise=self.noise, noise_level=self.noise_level,
                           weight_init_std=self.weight_init_std, seed=self.random_state,
                           patience=self.patience, normalize_filters=self.normalize_filters)

    def _fit_model(self, model, X, X_valid, progress):
        x, y = split_pairs(X)
        xv = yv = None
        if X_valid is not None:
            xv, yv = split_pairs(X_valid)
        self.train_config_ = self._train_config()
        self.history_ = train(model, x, y, self.train_config_, xv, yv, progress=progress)
        self.model_ = self.history_.model
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, y=None):
        """Negative mean reconstruction error (larger is better)."""
        check_is_fitted(self, "model_")
        x, yy = split_pairs(X)
        return -mean_loss(self.model_, x, yy)


class GatedAutoencoder(_PairModelBase):
    """Factored gated autoencoder with a diagonal, grouped, asymmetric or
    topographic core.

    Parameters
    ----------
    core : {"diagonal", "grouped", "asym_grouped", "topographic"}
    num_factors : int
        Filters per image. For ``asym_grouped`` this is the number of
        output filters; the input side gets one filter per group. Ignored
        for ``topographic`` where the grid fixes it.
    num_hidden : int
        Mapping units.
    group_size : int
    grid : (rows, cols)
        Topographic filter grid.
    neighborhood : int
        Side of the square topographic neighbourhood.
    """

    def __init__(self, core="diagonal", num_factors=225, num_hidden=64, group_size=3,
                 grid=(10, 10), neighborhood=3, wraparound=True, learning_rate=0.03,
                 minibatch_size=100, epochs=60, noise="none", noise_level=0.0,
                 weight_init_std=0.05, patience=None, normalize_filters=False,
                 random_state=0):
        self.core = core
        self.num_factors = num_factors
        self.num_hidden = num_hidden
        self.group_size = group_size
        self.grid = grid
        self.neighborhood = neighborhood
        self.wraparound = wraparound
        self.learning_rate = learning_rate
        self.minibatch_size = minibatch_size
        self.epochs = epochs
        self.noise = noise
        self.noise_level = noise_level
        self.weight_init_std = weight_init_std
        self.patience = patience
        self.normalize_filters = normalize_filters
        self.random_state = random_state

    def build_core(self):
        return build_core(self.core, self.num_factors, self.group_size, self.grid,
                          self.neighborhood, self.wraparound)

    def fit(self, X, y=None, X_valid=None, progress=None):
        """Train on pair rows ``X``; ``y`` is ignored."""
        x, _ = split_pairs(X)
        d = x.shape[1]
        self.core_ = self.build_core()
        rng = make_rng(self.random_state, 1)
        model = init_model(self.core_, d, d, self.num_hidden, rng, self.weight_init_std)
        return self._fit_model(model, X, X_valid, progress)

    def transform(self, X):
        check_is_fitted(self, "model_")
        x, y = split_pairs(X)
        return infer(self.model_, x, y)

    def reconstruct(self, X):
        """``(x_hat, y_hat)``; ``x_hat`` is None for asymmetric cores."""
        check_is_fitted(self, "model_")
        x, y = split_pairs(X)
        h = infer(self.model_, x, y)
        x_hat = reconstruct_x(self.model_, y, h) if self.model_.core.symmetric else None
        return x_hat, reconstruct_y(self.model_, x, h)


class SquarePoolingAutoencoder(_PairModelBase):
    """Energy-model baseline: squared filter responses on ``[x; y]`` pooled
    by the mapping units, trained to reconstruct ``[x; y]``."""

    def __init__(self, num_factors=225, num_hidden=64, learning_rate=0.03, minibatch_size=100,
                 epochs=60, noise="none", noise_level=0.0, weight_init_std=0.05,
                 patience=None, normalize_filters=False, random_state=0):
        self.num_factors = num_factors
        self.num_hidden = num_hidden
        self.learning_rate = learning_rate
        self.minibatch_size = minibatch_size
        self.epochs = epochs
        self.noise = noise
        self.noise_level = noise_level
        self.weight_init_std = weight_init_std
        self.patience = patience
        self.normalize_filters = normalize_filters
        self.random_state = random_state

    def fit(self, X, y=None, X_valid=None, progress=None):
        X = check_array(X, dtype=np.float64)
        model = SquarePoolingModel.init(X.shape[1], self.num_factors, self.num_hidden,
                                        make_rng(self.random_state, 1), self.weight_init_std)
        return self._fit_model(model, X, X_valid, progress)

    def transform(self, X):
        check_is_fitted(self, "model_")
        x, y = split_pairs(X)
        return infer_square_pooling(self.model_, x, y)


class PairWhitening(BaseEstimator, TransformerMixin):
    """PCA whitening fit on the input images and applied to both halves of a pair row."""

    def __init__(self, retain=0.95):
        self.retain = retain

    def fit(self, X, y=None):
        x, _ = split_pairs(X)
        self.whitening_ = PCAWhitening(self.retain).fit(x)
        return self

    def transform(self, X):
        check_is_fitted(self, "whitening_")
        x, y = split_pairs(X)
        return stack_pairs(self.whitening_.transform(x), self.whitening_.transform(y))

    def inverse_transform(self, Z):
        check_is_fitted(self, "whitening_")
        x, y = split_pairs(Z)
        w = self.whitening_
        return stack_pairs(w.inverse_transform(x), w.inverse_transform(y))
