import pytest

from groupgating import experiments
from groupgating.config import resolve

TINY = {
    "data": {"patch_size": 7, "counts": [40, 20, 20], "task_params": {"max_shift": 2.0}},
    "model": {"num_factors": 6, "num_hidden": 3},
    "train": {"epochs": 3},
    "classifier": {"l2_grid": [0.1]},
    "curves": {"train_sizes": [10, 40], "seeds": [0, 1],
               "gated": {"num_factors": 6}, "square_pooling": {"num_factors": 6}},
}


@pytest.fixture
def calls(monkeypatch):
    seen = []

    class Fake:
        accuracy = 0.5

    def fake(splits, model_cfg, train_cfg, clf_cfg, learning_rates=None, label=""):
        seen.append((label, len(splits.train), train_cfg["epochs"], train_cfg["seed"]))
        return Fake()

    monkeypatch.setattr(experiments, "train_and_evaluate", fake)
    return seen


@pytest.mark.parametrize("scaling,epochs", [("fixed", {10: 3, 40: 3}),
                                            ("equal_updates", {10: 12, 40: 3})])
def test_curve_epoch_scaling(calls, scaling, epochs):
    cfg = resolve(dict(TINY, curves=dict(TINY["curves"], epoch_scaling=scaling)))
    mean_rows, seed_rows = experiments.accuracy_curves(cfg)
    assert len(seed_rows) == 2 * 2 * 2 and len(mean_rows) == 4
    for _, n, e, _ in calls:
        assert e == epochs[n]
    assert {s for *_, s in calls} == {0, 1}


def test_curve_training_sets_are_prefixes(monkeypatch):
    sizes = []
    real = experiments.train_and_evaluate

    def spy(splits, *a, **k):
        sizes.append(splits.train.x.copy())
        return real(splits, *a, **k)

    monkeypatch.setattr(experiments, "train_and_evaluate", spy)
    cfg = resolve(dict(TINY, curves=dict(TINY["curves"], seeds=[0])))
    experiments.accuracy_curves(cfg)
    small, large = sizes[0], sizes[-1]
    assert (small == large[:len(small)]).all()


def test_explicit_equivalent_filters_win():
    cfg = resolve({"table1": {"filters": [225, 441], "equivalent_filters": [121, 237]}})
    assert experiments.equivalent_filters(cfg) == [121, 237]
    cfg = resolve({"model": {"num_hidden": 128}})
    assert experiments.equivalent_filters(cfg) == [121, 237]
