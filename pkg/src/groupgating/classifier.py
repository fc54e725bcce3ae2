"""Multinomial logistic regression on mapping-unit activations."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

L2_GRID = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)


@dataclass
class LabeledFeatures:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1
        elif len(self.labels) and self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")


@dataclass
class ClassificationReport:
    accuracy: float
    per_class: np.ndarray
    confusion: np.ndarray
    hyperparameters: dict = field(default_factory=dict)

    def to_dict(self):
        return {"accuracy": self.accuracy,
                "per_class": [None if np.isnan(a) else float(a) for a in self.per_class],
                "confusion": self.confusion.tolist(),
                "hyperparameters": dict(self.hyperparameters)}


def softmax_xent(W, b, X, Y1h, l2):
    """Mean cross-entropy plus ``l2/2 * |W|^2`` and its gradient."""
    z = X @ W + b
    z -= z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    n = len(X)
    loss = -np.sum(Y1h * logp) / n + 0.5 * l2 * np.sum(W * W)
    d = (np.exp(logp) - Y1h) / n
    return loss, X.T @ d + l2 * W, d.sum(axis=0)


class LogisticRegressionGD(BaseEstimator, ClassifierMixin):
    """Softmax regression fit by full-batch L-BFGS on the exact gradient.

    Features are standardized with training-set statistics when
    ``standardize`` is set. The intercept is not penalized.
    """

    def __init__(self, l2=0.0, max_iter=1000, tol=1e-8, standardize=True):
        self.l2 = l2
        self.max_iter = max_iter
        self.tol = tol
        self.standardize = standardize

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit a classifier")
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale_ = np.where(sd > 1e-12, sd, 1.0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Xs = (X - self.mean_) / self.scale_
        k, d = len(self.classes_), X.shape[1]
        Y1h = (y[:, None] == self.classes_[None, :]).astype(np.float64)

        def f(theta):
            W = theta[:d * k].reshape(d, k)
            loss, gW, gb = softmax_xent(W, theta[d * k:], Xs, Y1h, self.l2)
            return loss, np.concatenate([gW.ravel(), gb])

        res = minimize(f, np.zeros(d * k + k), jac=True, method="L-BFGS-B",
                       options={"maxiter": self.max_iter, "gtol": self.tol, "ftol": 1e-12})
        self.coef_ = res.x[:d * k].reshape(d, k)
        self.intercept_ = res.x[d * k:]
        self.n_iter_ = res.nit
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return ((X - self.mean_) / self.scale_) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        z = self.decision_function(X)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        # argmax returns the first maximum: ties go to the lower class index
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


def fit_logreg(train, valid, grid=L2_GRID, **kwargs):
    """Fit one classifier per L2 strength and keep the best on validation.

    Returns the chosen classifier with ``validation_scores_`` and
    ``chosen_l2_`` attached. Ties keep the first grid entry.
    """
    if len(np.unique(train.labels)) < 2:
        raise ValueError("training labels hold a single class")
    best, scores = None, {}
    for l2 in grid:
        clf = LogisticRegressionGD(l2=l2, **kwargs).fit(train.features, train.labels)
        acc = float(np.mean(clf.predict(valid.features) == valid.labels))
        scores[l2] = acc
        if best is None or acc > scores[best.l2]:
            best = clf
    best.validation_scores_ = scores
    best.chosen_l2_ = best.l2
    return best


def confusion_matrix(labels, predicted, num_classes):
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, predicted), 1)
    return cm


def evaluate(clf, test, hyperparameters=None):
    pred = clf.predict(test.features)
    k = max(test.num_classes, int(np.max(clf.classes_)) + 1)
    cm = confusion_matrix(test.labels, pred, k)
    counts = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, np.diag(cm) / counts, np.nan)
    hp = dict(hyperparameters or {})
    if hasattr(clf, "chosen_l2_"):
        hp.setdefault("l2", clf.chosen_l2_)
    return ClassificationReport(float(np.trace(cm) / max(cm.sum(), 1)), per_class, cm, hp)


# --- parameter-count equivalence ---------------------------------------------

def grouped_products(num_factors, group_size):
    full, rest = divmod(num_factors, group_size)
    return full * group_size ** 2 + rest ** 2


def count_parameters(num_factors, input_dim, output_dim, num_hidden, group_size=1,
                     biases=False):
    """Closed-form parameter count of a (grouped) symmetric gated model."""
    n = (input_dim + output_dim) * num_factors
    n += grouped_products(num_factors, group_size) * num_hidden
    if biases:
        n += num_hidden + input_dim + output_dim
    return n


def parameter_equivalence(num_filters_diagonal, group_size, input_dim, num_hidden,
                          output_dim=None, convention="total"):
    """Grouped filter count matching a diagonal model's parameter budget.

    ``convention="total"`` counts both factor matrices and the mapping
    weights and returns the largest multiple of ``group_size`` that stays
    within budget. ``convention="table"`` counts a single factor matrix
    plus mapping weights and rounds to the nearest count; this is the
    bookkeeping behind the published filter pairings (225 -> 121 etc.).
    """
    if min(num_filters_diagonal, group_size, input_dim, num_hidden) < 1:
        raise ValueError("counts must be positive")
    if group_size == 1:
        return num_filters_diagonal
    if convention == "table":
        ratio = (input_dim + num_hidden) / (input_dim + group_size * num_hidden)
        return int(np.floor(num_filters_diagonal * ratio + 0.5))
    if convention != "total":
        raise ValueError(f"unknown convention {convention!r}")
    output_dim = input_dim if output_dim is None else output_dim
    budget = count_parameters(num_filters_diagonal, input_dim, output_dim, num_hidden)
    f = 0
    while count_parameters(f + group_size, input_dim, output_dim, num_hidden, group_size) <= budget:
        f += group_size
    return f
