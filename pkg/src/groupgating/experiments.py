"""End-to-end experiment pipeline: train a model, read out mapping units,
fit the classifier and score it on held-out pairs.

The learning rate of the transformation model is picked on validation
accuracy when more than one is configured; the classifier's L2 strength
is picked the same way inside :func:`fit_logreg`.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .classifier import LabeledFeatures, evaluate, fit_logreg, parameter_equivalence
from .config import model_params
from .core_math import make_rng
from .datagen import DatasetSpec, generate
from .estimators import build_core, init_model
from .model import FactorModel, SquarePoolingModel, infer, infer_square_pooling
from .training import TrainConfig, TrainingDiverged, train

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it for the error report."""

    def __init__(self, stage, message):
        super().__init__(f"stage={stage} {message}")
        self.stage = stage


@dataclass
class RunResult:
    model: object
    learning_rate: float
    valid_accuracy: float
    report: object
    history: object = None
    lr_scores: dict = field(default_factory=dict)

    @property
    def accuracy(self):
        return self.report.accuracy


def dataset_spec(cfg, task=None, counts=None, seed=None):
    d = cfg["data"]
    task = task or cfg["task"]
    params = d["task_params"] if task == cfg["task"] else {}
    return DatasetSpec(task, d["patch_size"], tuple(counts or d["counts"]),
                       d["seed"] if seed is None else seed, params)


def make_model(model_cfg, input_dim, output_dim, rng, std):
    m = model_params(model_cfg)
    if m["kind"] == "square_pooling":
        return SquarePoolingModel.init(input_dim + output_dim, m["num_factors"], m["num_hidden"],
                                       rng, std)
    core = build_core(m["kind"], m["num_factors"], m["group_size"], tuple(m["grid"]),
                      m["neighborhood"], m["wraparound"])
    return init_model(core, input_dim, output_dim, m["num_hidden"], rng, std)


def features(model, x, y):
    if isinstance(model, SquarePoolingModel):
        return infer_square_pooling(model, x, y)
    return infer(model, x, y)


def train_model(model_cfg, train_cfg, train_split, valid_split=None, progress=None):
    tc = TrainConfig(**train_cfg)
    d_in, d_out = train_split.x.shape[1], train_split.y.shape[1]
    model = make_model(model_cfg, d_in, d_out, make_rng(tc.seed, 1), tc.weight_init_std)
    xv = yv = None
    if valid_split is not None:
        xv, yv = valid_split.x, valid_split.y
    return train(model, train_split.x, train_split.y, tc, xv, yv, progress=progress)


def _labeled(model, split):
    return LabeledFeatures(features(model, split.x, split.y), split.labels,
                           split.meta.get("num_classes") or int(split.labels.max()) + 1)


def classify(model, splits, clf_cfg):
    """Fit the classifier on train features, select L2 on valid, report on test."""
    tr, va, te = (_labeled(model, s) for s in splits)
    clf = fit_logreg(tr, va, grid=tuple(clf_cfg["l2_grid"]), max_iter=clf_cfg["max_iter"])
    return clf, max(clf.validation_scores_.values()), evaluate(clf, te)


def train_and_evaluate(splits, model_cfg, train_cfg, clf_cfg, learning_rates=None, label=""):
    """Train one model per learning rate and keep the best on validation accuracy.

    A learning rate whose run diverges is skipped; if all diverge the
    stage fails.
    """
    rates = learning_rates or [train_cfg["learning_rate"]]
    best, scores = None, {}
    for lr in rates:
        tcfg = dict(train_cfg, learning_rate=lr)
        try:
            hist = train_model(model_cfg, tcfg, splits.train, splits.valid)
        except TrainingDiverged as exc:
            log.warning("event=diverged model=%s learning_rate=%g detail=%r", label, lr, str(exc))
            scores[lr] = float("nan")
            continue
        clf, vacc, report = classify(hist.model, splits, clf_cfg)
        scores[lr] = vacc
        log.info("event=trained model=%s learning_rate=%g train_loss=%.6g valid_accuracy=%.4f "
                 "test_accuracy=%.4f", label, lr, hist.train_loss[-1] if hist.train_loss else float("nan"),
                 vacc, report.accuracy)
        if best is None or vacc > best.valid_accuracy:
            best = RunResult(hist.model, lr, vacc, report, hist)
    if best is None:
        raise StageError("train", f"model={label} diverged at every learning rate {list(rates)}")
    best.lr_scores = scores
    return best


def equivalent_filters(cfg):
    t = cfg["table1"]
    if t["equivalent_filters"] is not None:
        return list(t["equivalent_filters"])
    d = cfg["data"]["patch_size"] ** 2
    k = cfg["model"]["num_hidden"]
    return [parameter_equivalence(f, t["group_size"], d, k, convention=t["equivalence"])
            for f in t["filters"]]


def reproduce_table1(cfg):
    """Rows ``(task, core_kind, num_filters, equivalent_filters, accuracy)``.

    Each configured diagonal filter count yields one diagonal and one
    grouped row; both carry the diagonal count in ``num_filters`` and the
    grouped count in ``equivalent_filters``, mirroring the table layout.
    Returns ``(rows, runs)`` where ``runs`` maps ``(task, kind, F)`` to the
    :class:`RunResult`.
    """
    t = cfg["table1"]
    eqs = equivalent_filters(cfg)
    rows, runs = [], {}
    for task in t["tasks"]:
        try:
            splits = generate(dataset_spec(cfg, task))
        except (ValueError, OSError) as exc:
            raise StageError("generate", f"task={task} {exc}") from exc
        for f_diag, f_group in zip(t["filters"], eqs):
            for kind, f in (("diagonal", f_diag), ("grouped", f_group)):
                mcfg = dict(cfg["model"], kind=kind, num_factors=f, group_size=t["group_size"])
                label = f"{task}/{kind}/{f}"
                run = train_and_evaluate(splits, mcfg, cfg["train"], cfg["classifier"],
                                         cfg["learning_rates"], label)
                runs[(task, kind, f)] = run
                rows.append((task, kind, f_diag, f_group, run.accuracy))
    return rows, runs


def accuracy_curves(cfg):
    """Gated vs square-pooling accuracy over training-set sizes.

    Returns ``(mean_rows, seed_rows)``: ``(model, train_size, accuracy)``
    averaged over seeds, and ``(model, train_size, seed, accuracy)``.
    Each seed draws its own dataset; smaller training sets are prefixes
    of the largest one. With ``epoch_scaling="equal_updates"`` a training
    set of size n runs ``ceil(epochs * max_size / n)`` epochs, so every
    size gets the same number of SGD steps.
    """
    c = cfg["curves"]
    sizes = sorted(c["train_sizes"])
    counts = list(cfg["data"]["counts"])
    counts[0] = sizes[-1]
    models = (("gated", dict(cfg["model"], **c["gated"])),
              ("square_pooling", dict(cfg["model"], **c["square_pooling"])))
    seed_rows = []
    for s in c["seeds"]:
        splits = generate(dataset_spec(cfg, counts=counts, seed=cfg["data"]["seed"] + s))
        for n in sizes:
            sub = type(splits)(splits.train.subset(slice(0, n)), splits.valid, splits.test,
                               splits.spec, splits.whitening)
            for name, mcfg in models:
                tcfg = dict(cfg["train"], seed=cfg["train"]["seed"] + s)
                if c["epoch_scaling"] == "equal_updates":
                    tcfg["epochs"] = math.ceil(tcfg["epochs"] * sizes[-1] / n)
                run = train_and_evaluate(sub, mcfg, tcfg, cfg["classifier"], cfg["learning_rates"],
                                         f"{name}/{n}/seed{s}")
                seed_rows.append((name, n, s, run.accuracy))
    mean_rows = []
    for name, _ in models:
        for n in sizes:
            accs = [a for m, k, _, a in seed_rows if m == name and k == n]
            mean_rows.append((name, n, float(np.mean(accs))))
    return mean_rows, seed_rows


def is_factor_model(model):
    return isinstance(model, FactorModel)
