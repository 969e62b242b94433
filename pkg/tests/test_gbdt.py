import json
import logging

import numpy as np
import pytest
from sklearn.tree import DecisionTreeRegressor

from mainbreak import gbdt
from mainbreak.error import ConfigurationError, ModelError

from conftest import make_matrix


def exact_config(**settings):
    values = {"iterations": 1, "max_depth": 1, "subsample": 1.0, "learning_rate": 1.0,
              "min_samples_leaf": 1, "seed": 0}
    values.update(settings)
    return gbdt.TrainConfig(**values)


def noisy_problem(seed=3, n=200):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 10, size=(n, 3))
    p = 1 / (1 + np.exp(-(X[:, 0] - 5) - 0.3 * X[:, 1]))
    y = (rng.uniform(size=n) < p).astype(float)
    return X, y


def stump(feature, threshold, left, right, gain=1.0):
    return gbdt.RegressionTree(gbdt.SplitNode(feature=feature, threshold=threshold,
                                              gain=gain, n_samples=10,
                                              left=gbdt.Leaf(left), right=gbdt.Leaf(right)))


def test_best_split_midpoint():
    assert gbdt.best_split([1, 2, 3, 4], [0, 0, 1, 1], 1) == (2.5, 1.0)


def test_best_split_none_when_not_allowed():
    assert gbdt.best_split([5, 5, 5, 5], [0, 1, 0, 1], 1) is None
    assert gbdt.best_split([1, 2, 3], [0, 1, 1], 2) is None


def test_best_split_matches_sklearn():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.uniform(0, 100, size=60)
        y = rng.normal(size=60)
        threshold, gain = gbdt.best_split(x, y, 5)
        reference = DecisionTreeRegressor(max_depth=1, min_samples_leaf=5).fit(x[:, None], y)
        t = reference.tree_
        left, right = t.children_left[0], t.children_right[0]
        expected_gain = (t.impurity[0] * t.n_node_samples[0]
                         - t.impurity[left] * t.n_node_samples[left]
                         - t.impurity[right] * t.n_node_samples[right])
        assert threshold == pytest.approx(t.threshold[0])
        assert gain == pytest.approx(expected_gain)


def test_fit_tree_matches_sklearn_predictions():
    X, _ = noisy_problem()
    y = np.sin(X[:, 0]) + 0.1 * X[:, 2]
    tree = gbdt.fit_tree(X, y, max_depth=3, min_samples_leaf=5)
    reference = DecisionTreeRegressor(max_depth=3, min_samples_leaf=5).fit(X, y)
    assert np.allclose(tree.predict(X), reference.predict(X))


def test_fit_tree_shapes():
    X = np.array([[0, 1], [0, 2], [0, 3], [0, 4]], dtype=float)
    constant = gbdt.fit_tree(X, [0.25] * 4, max_depth=3, min_samples_leaf=1)
    assert constant.root == gbdt.Leaf(0.25, 4)

    root = gbdt.fit_tree(X, [0, 0, 1, 1], max_depth=1, min_samples_leaf=1).root
    assert isinstance(root, gbdt.SplitNode)
    assert (root.feature, root.threshold) == (1, 2.5)
    assert (root.left.value, root.right.value) == (0.0, 1.0)

    with pytest.raises(ModelError):
        gbdt.fit_tree(np.zeros((0, 2)), [], max_depth=1, min_samples_leaf=1)


def test_train_single_exact_iteration():
    matrix = make_matrix([[1], [2], [3], [4]], ["a"], labels=[0, 0, 1, 1])
    model = gbdt.train(matrix, exact_config())
    assert model.base_score == 0.5
    assert list(gbdt.predict_matrix(model, matrix)) == [0.0, 0.0, 1.0, 1.0]


def test_train_on_one_class_is_constant(caplog):
    matrix = make_matrix([[1], [2], [3]], ["a"], labels=[0, 0, 0])
    with caplog.at_level(logging.WARNING):
        model = gbdt.train(matrix, gbdt.TrainConfig())
    assert model.trees == ()
    assert "constant" in caplog.text
    assert list(gbdt.predict_matrix(model, matrix)) == [0.0, 0.0, 0.0]


def test_train_rejects_bad_labels():
    with pytest.raises(ModelError):
        gbdt.train(make_matrix([[1], [2]], ["a"], labels=[0, 2]), gbdt.TrainConfig())
    with pytest.raises(ModelError):
        gbdt.train(make_matrix([[1], [2]], ["a"]), gbdt.TrainConfig())


def test_base_score_is_label_mean():
    labels = [1] * 9 + [0] * 91
    matrix = make_matrix(np.arange(100)[:, None], ["a"], labels=labels)
    model = gbdt.train(matrix, gbdt.TrainConfig(iterations=5))
    assert model.base_score == pytest.approx(0.09)


def test_full_sample_objective_never_increases():
    X, y = noisy_problem()
    matrix = make_matrix(X, ["a", "b", "c"], labels=y)
    model = gbdt.train(matrix, gbdt.TrainConfig(iterations=100, learning_rate=0.1,
                                                subsample=1.0))
    assert len(model.objective) == 100
    assert np.all(np.diff(model.objective) <= 1e-12)
    assert model.objective[0] < np.var(y)


def test_training_is_deterministic():
    X, y = noisy_problem()
    matrix = make_matrix(X, ["a", "b", "c"], labels=y)
    first = gbdt.train(matrix, gbdt.TrainConfig(iterations=20, seed=5))
    second = gbdt.train(matrix, gbdt.TrainConfig(iterations=20, seed=5))
    other = gbdt.train(matrix, gbdt.TrainConfig(iterations=20, seed=6))
    assert np.array_equal(gbdt.raw_scores(first, X), gbdt.raw_scores(second, X))
    assert not np.array_equal(gbdt.raw_scores(first, X), gbdt.raw_scores(other, X))


def test_constant_column_changes_nothing():
    X, y = noisy_problem()
    config = gbdt.TrainConfig(iterations=20, seed=1)
    plain = gbdt.train(make_matrix(X, ["a", "b", "c"], labels=y), config)
    padded_values = np.hstack([np.full((X.shape[0], 1), 7.0), X])
    padded = make_matrix(padded_values, ["k", "a", "b", "c"], labels=y)
    model = gbdt.train(padded, config)
    assert np.array_equal(gbdt.predict_matrix(plain, padded), gbdt.predict_matrix(model, padded))


def test_trees_respect_max_depth():
    X, y = noisy_problem()
    model = gbdt.train(make_matrix(X, ["a", "b", "c"], labels=y),
                       gbdt.TrainConfig(iterations=10, max_depth=2, min_samples_leaf=1))
    assert all(tree.depth() <= 2 for tree, _ in model.trees)


def test_hand_built_model_prediction():
    model = gbdt.GbdtModel(base_score=0.2,
                           trees=((stump(0, 1.0, 0.1, 0.3), 0.5),
                                  (stump(1, 2.0, -0.1, 0.2), 0.5)),
                           feature_names=("a", "b"), config=gbdt.TrainConfig())
    assert gbdt.predict(model, {"a": 2, "b": 1}) == pytest.approx(0.30)
    assert gbdt.predict(model, {"b": 3, "a": 0, "extra": 9}) == pytest.approx(0.35)
    with pytest.raises(ModelError, match="'b'"):
        gbdt.predict(model, {"a": 1})


def test_predictions_are_clamped():
    high = gbdt.GbdtModel(base_score=0.9, trees=((stump(0, 0.0, -2.0, 0.5), 1.0),),
                          feature_names=("a",), config=gbdt.TrainConfig())
    matrix = make_matrix([[-1], [1]], ["a"])
    assert list(gbdt.predict_matrix(high, matrix)) == [0.0, 1.0]


def test_predict_matrix_aligns_by_name():
    model = gbdt.GbdtModel(base_score=0.2, trees=((stump(1, 2.0, 0.0, 0.4), 1.0),),
                           feature_names=("a", "b"), config=gbdt.TrainConfig())
    swapped = make_matrix([[3, 0], [1, 0]], ["b", "a"])
    assert list(gbdt.predict_matrix(model, swapped)) == pytest.approx([0.6, 0.2])
    with pytest.raises(ModelError, match="Missing feature column 'b'"):
        gbdt.predict_matrix(model, make_matrix([[1]], ["a"]))


def test_gini_importance():
    model = gbdt.GbdtModel(base_score=0.2,
                           trees=((stump(0, 1.0, 0.0, 0.1, gain=3.0), 0.1),
                                  (stump(1, 1.0, 0.0, 0.1, gain=1.0), 0.1)),
                           feature_names=("a", "b", "c"), config=gbdt.TrainConfig())
    assert gbdt.gini_importance(model) == pytest.approx({"a": 0.75, "b": 0.25, "c": 0.0})
    empty = gbdt.GbdtModel(base_score=0.0, trees=(), feature_names=("a",),
                           config=gbdt.TrainConfig())
    with pytest.raises(ModelError):
        gbdt.gini_importance(empty)


def test_model_document_round_trip(tmp_path):
    X, y = noisy_problem()
    matrix = make_matrix(X, ["a", "b", "c"], labels=y)
    model = gbdt.train(matrix, gbdt.TrainConfig(iterations=15))
    copy = gbdt.model_from_dict(json.loads(json.dumps(gbdt.model_to_dict(model))))
    assert np.array_equal(gbdt.predict_matrix(model, matrix), gbdt.predict_matrix(copy, matrix))
    assert copy.config == model.config

    path = tmp_path / "model.json"
    gbdt.save_model(model, path, run_config={"seed": 0})
    assert json.loads(path.read_text())["run_config"] == {"seed": 0}
    loaded = gbdt.load_model(path)
    assert np.array_equal(gbdt.raw_scores(model, X), gbdt.raw_scores(loaded, X))


def test_bad_model_documents():
    model = gbdt.GbdtModel(base_score=0.2, trees=((stump(0, 1.0, 0.0, 0.1), 0.1),),
                           feature_names=("a",), config=gbdt.TrainConfig())
    doc = gbdt.model_to_dict(model)
    with pytest.raises(ModelError, match="version"):
        gbdt.model_from_dict(dict(doc, version=99))
    with pytest.raises(ModelError):
        gbdt.model_from_dict({k: v for k, v in doc.items() if k != "trees"})


@pytest.mark.parametrize("settings", [
    {"iterations": 0},
    {"max_depth": 0},
    {"subsample": 0.0},
    {"subsample": 1.5},
    {"learning_rate": 0.0},
    {"min_samples_leaf": 0}
])
def test_train_config_validation(settings):
    with pytest.raises(ConfigurationError):
        gbdt.TrainConfig(**settings)
