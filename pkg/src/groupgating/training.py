"""Minibatch SGD for the gated models and the square-pooling baseline."""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .core_math import make_rng
from .model import FactorModel, loss_and_grad, square_pooling_loss_and_grad

log = logging.getLogger(__name__)

NOISE_KINDS = ("none", "gaussian", "mask")


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"loss became {value} at epoch {epoch}, minibatch {batch}")
        self.epoch, self.batch, self.value = epoch, batch, value


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    minibatch_size: int = 100
    epochs: int = 20
    noise: str = "none"
    noise_level: float = 0.0
    weight_init_std: float = 0.01
    seed: int = 0
    patience: int = None
    normalize_filters: bool = False

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}")
        if self.noise == "mask" and not 0.0 <= self.noise_level < 1.0:
            raise ValueError("mask noise level must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: object
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    best_epoch: int = None

    def history_rows(self):
        valid = self.valid_loss or [float("nan")] * len(self.train_loss)
        return [(e + 1, t, v) for e, (t, v) in enumerate(zip(self.train_loss, valid))]


def corrupt(a, cfg, rng):
    if cfg.noise == "gaussian" and cfg.noise_level > 0:
        return a + rng.normal(0.0, cfg.noise_level, size=a.shape)
    if cfg.noise == "mask" and cfg.noise_level > 0:
        return a * (rng.random(a.shape) >= cfg.noise_level)
    return a


def _objective(model):
    if isinstance(model, FactorModel):
        def fn(X, Y, Xn, Yn, need_grad=True):
            return loss_and_grad(model, Xn, Yn, X, Y, need_grad=need_grad)
    else:
        def fn(X, Y, Xn, Yn, need_grad=True):
            return square_pooling_loss_and_grad(model, np.hstack([Xn, Yn]),
                                                np.hstack([X, Y]), need_grad=need_grad)
    return fn


def mean_loss(model, X, Y, batch=1000):
    fn = _objective(model)
    total = 0.0
    for s in range(0, len(X), batch):
        xb, yb = X[s:s + batch], Y[s:s + batch]
        total += fn(xb, yb, xb, yb, need_grad=False)[0] * len(xb)
    return total / len(X)


def _normalize_filters(model):
    # rescale factor columns to their common mean norm
    for name in ("Wx", "Wy", "Wc"):
        W = getattr(model, name, None)
        if W is None:
            continue
        norms = np.sqrt((W * W).sum(axis=0))
        W *= norms.mean() / np.maximum(norms, 1e-12)


def train(model, X, Y, cfg, X_valid=None, Y_valid=None, progress=None):
    """Train a copy of ``model`` on pairs ``(X, Y)``.

    Minibatches are reshuffled each epoch from the ``cfg.seed`` stream.
    With validation data and ``cfg.patience`` the parameters of the best
    validation epoch are returned. ``progress`` receives one
    ``(epoch, train_loss, valid_loss)`` tuple per epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    model = model.copy()
    fn = _objective(model)
    params = model.params()
    result = TrainResult(model)
    has_valid = X_valid is not None and len(X_valid) > 0
    best, best_params, stale = np.inf, None, 0
    rng = make_rng(cfg.seed, 7)
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        running = 0.0
        for b, s in enumerate(range(0, n, cfg.minibatch_size)):
            idx = order[s:s + cfg.minibatch_size]
            xb, yb = X[idx], Y[idx]
            value, g = fn(xb, yb, corrupt(xb, cfg, rng), corrupt(yb, cfg, rng))
            if not np.isfinite(value):
                raise TrainingDiverged(epoch + 1, b, value)
            running += value * len(idx)
            if lr:
                for name, p in params.items():
                    p -= lr * g[name]
                if cfg.normalize_filters:
                    _normalize_filters(model)
        result.train_loss.append(running / n)
        v = float("nan")
        if has_valid:
            v = mean_loss(model, X_valid, Y_valid)
            if not np.isfinite(v):
                raise TrainingDiverged(epoch + 1, -1, v)
            result.valid_loss.append(v)
        log.debug("epoch=%d train_loss=%.6g valid_loss=%.6g", epoch + 1, result.train_loss[-1], v)
        if progress is not None:
            progress(epoch + 1, result.train_loss[-1], v)
        if has_valid and cfg.patience is not None:
            if v < best:
                best, stale, result.best_epoch = v, 0, epoch + 1
                best_params = {k: p.copy() for k, p in params.items()}
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best_params is not None:
        for k, p in params.items():
            p[...] = best_params[k]
    return result
