"""Stochastic gradient-boosted regression trees on squared loss.

The model is f(x) = base_score + sum_j beta_j * h_j(x), where each h_j is a CART
regression tree fit to the residuals of the previous iterate on a fresh row
subsample, and beta_j is the learning rate.
"""
from dataclasses import asdict, dataclass, field
import json
import logging
import math

import jsonschema
import numpy as np

from mainbreak import CONFIG
from .error import ConfigurationError, ModelError


logger = logging.getLogger(__name__)

# Splits must reduce the sum of squares by more than this
MIN_SPLIT_GAIN = 1e-10


@dataclass(frozen=True)
class Leaf:
    value: float
    n_samples: int = 0


@dataclass(frozen=True)
class SplitNode:
    """Rows with x[feature] <= threshold go left."""
    feature: int
    threshold: float
    gain: float
    n_samples: int
    left: object
    right: object


def _route(node, X, rows, out):
    if isinstance(node, Leaf):
        out[rows] = node.value
        return
    go_left = X[rows, node.feature] <= node.threshold
    _route(node.left, X, rows[go_left], out)
    _route(node.right, X, rows[~go_left], out)


def _walk(node, depth=0):
    yield node, depth
    if isinstance(node, SplitNode):
        yield from _walk(node.left, depth + 1)
        yield from _walk(node.right, depth + 1)


@dataclass(frozen=True)
class RegressionTree:
    root: object

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=float)
        _route(self.root, X, np.arange(X.shape[0]), out)
        return out

    def splits(self):
        return [node for node, _ in _walk(self.root) if isinstance(node, SplitNode)]

    def depth(self):
        return max(depth for _, depth in _walk(self.root))


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 100
    max_depth: int = 3
    subsample: float = 0.5
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be at least 1, got {self.iterations}")
        if self.max_depth < 1:
            raise ConfigurationError(f"max_depth must be at least 1, got {self.max_depth}")
        if not 0 < self.subsample <= 1:
            raise ConfigurationError(f"subsample must be in (0, 1], got {self.subsample}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, "
                                     f"got {self.learning_rate}")
        if self.min_samples_leaf < 1:
            raise ConfigurationError(f"min_samples_leaf must be at least 1, "
                                     f"got {self.min_samples_leaf}")

    @classmethod
    def from_config(cls, config):
        return cls(iterations=int(config["iterations"]), max_depth=int(config["max_depth"]),
                   subsample=float(config["subsample"]),
                   learning_rate=float(config["learning_rate"]),
                   min_samples_leaf=int(config["min_samples_leaf"]),
                   seed=int(config["seed"]))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class GbdtModel:
    base_score: float
    # (RegressionTree, weight) pairs in boosting order
    trees: tuple
    feature_names: tuple
    config: TrainConfig
    # Full-sample mean squared loss after each iteration
    objective: tuple = field(default=())


def best_split(values, targets, min_samples_leaf):
    """Best threshold on one column by sum-of-squares reduction.

    Arguments:
        values (array): The column, one value per row.
        targets (array): Regression targets.
        min_samples_leaf (int): Minimum rows on each side.

    Returns:
        tuple: (threshold, gain), with the threshold midway between adjacent
            distinct values, or None if no split is allowed. Ties go to the
            smallest threshold.
    """
    x = np.asarray(values, dtype=float)
    y = np.asarray(targets, dtype=float)
    n = x.shape[0]
    if n < 2 * min_samples_leaf or n < 2:
        return None
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    sums = np.cumsum(y[order])
    n_left = np.arange(1, n)
    n_right = n - n_left
    valid = (xs[:-1] < xs[1:]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    if not valid.any():
        return None
    mean_left = sums[:-1] / n_left
    mean_right = (sums[-1] - sums[:-1]) / n_right
    # SS(parent) - SS(left) - SS(right)
    gains = n_left * n_right / n * (mean_left - mean_right) ** 2
    gains = np.where(valid, gains, -np.inf)
    k = int(np.argmax(gains))
    threshold = (xs[k] + xs[k + 1]) / 2.0
    if threshold >= xs[k + 1]:
        threshold = xs[k]
    return float(threshold), float(gains[k])


def _grow(X, y, depth, max_depth, min_samples_leaf):
    n = y.shape[0]
    value = float(np.mean(y))
    if depth >= max_depth or n < 2 * min_samples_leaf:
        return Leaf(value, n)
    best = None
    for feature in range(X.shape[1]):
        found = best_split(X[:, feature], y, min_samples_leaf)
        if found is None:
            continue
        threshold, gain = found
        key = (-gain, threshold, feature)
        if best is None or key < best:
            best = key
    if best is None or -best[0] <= MIN_SPLIT_GAIN:
        return Leaf(value, n)
    gain, threshold, feature = -best[0], best[1], best[2]
    go_left = X[:, feature] <= threshold
    return SplitNode(feature=feature, threshold=threshold, gain=gain, n_samples=n,
                     left=_grow(X[go_left], y[go_left], depth + 1, max_depth, min_samples_leaf),
                     right=_grow(X[~go_left], y[~go_left], depth + 1, max_depth,
                                 min_samples_leaf))


def fit_tree(X, y, max_depth, min_samples_leaf):
    """Grow a CART regression tree greedily, depth first.

    Growth stops at max_depth, below 2 * min_samples_leaf rows, or when no split
    has positive gain. Leaves hold the mean target of their rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape[0] < 1:
        raise ModelError("Cannot fit a tree to zero rows")
    return RegressionTree(_grow(X, y, 0, max_depth, min_samples_leaf))


def train(matrix, config):
    """Fit a stochastic gradient-boosted model to a labeled feature matrix.

    Arguments:
        matrix (FeatureMatrix): Labeled rows; labels must be 0 or 1.
        config (TrainConfig): Boosting settings and seed.

    Returns:
        GbdtModel: The fitted model. All-equal labels give a zero-tree model.
    """
    if matrix.labels is None:
        raise ModelError("Cannot train on an unlabeled matrix")
    X = np.asarray(matrix.values, dtype=float)
    y = np.asarray(matrix.labels, dtype=float)
    n = y.shape[0]
    if n < 2:
        raise ModelError(f"Need at least 2 rows to train, got {n}")
    if not np.all((y == 0) | (y == 1)):
        raise ModelError("Labels must be 0 or 1")

    base_score = float(np.mean(y))
    names = tuple(matrix.columns)
    if base_score in (0.0, 1.0):
        logger.warning(f"All {n} training labels are {int(base_score)}; "
                       f"model is the constant {base_score}")
        return GbdtModel(base_score=base_score, trees=(), feature_names=names, config=config)

    rng = np.random.default_rng(config.seed)
    n_sub = max(1, int(math.floor(config.subsample * n)))
    scores = np.full(n, base_score)
    trees = []
    objective = []
    for j in range(config.iterations):
        if n_sub < n:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
        else:
            rows = np.arange(n)
        residuals = y - scores
        tree = fit_tree(X[rows], residuals[rows], config.max_depth, config.min_samples_leaf)
        scores = scores + config.learning_rate * tree.predict(X)
        trees.append((tree, config.learning_rate))
        objective.append(float(np.mean((y - scores) ** 2)))
        logger.debug(f"Iteration {j + 1}: objective {objective[-1]:.6f}")
    return GbdtModel(base_score=base_score, trees=tuple(trees), feature_names=names,
                     config=config, objective=tuple(objective))


def raw_scores(model, X):
    """Unclamped base_score + sum of weighted tree outputs, accumulated in boosting order."""
    X = np.asarray(X, dtype=float)
    scores = np.full(X.shape[0], model.base_score)
    for tree, weight in model.trees:
        scores = scores + weight * tree.predict(X)
    return scores


def _aligned(model, columns, values):
    index = {name: i for i, name in enumerate(columns)}
    missing = [name for name in model.feature_names if name not in index]
    if missing:
        raise ModelError(f"Missing feature column '{missing[0]}'")
    return values[:, [index[name] for name in model.feature_names]]


def predict_matrix(model, matrix):
    """Risk scores in [0, 1] for every row, matching columns by name."""
    X = _aligned(model, matrix.columns, np.asarray(matrix.values, dtype=float))
    return np.clip(raw_scores(model, X), 0.0, 1.0)


def predict(model, row):
    """Risk score in [0, 1] for one row given as a mapping of column name to value."""
    missing = [name for name in model.feature_names if name not in row]
    if missing:
        raise ModelError(f"Missing feature column '{missing[0]}'")
    X = np.array([[float(row[name]) for name in model.feature_names]])
    return float(np.clip(raw_scores(model, X)[0], 0.0, 1.0))


def gini_importance(model):
    """Per-feature sum of split gains over all trees, normalized to sum to 1.

    Returns:
        dict: feature name -> importance, zero for features never split on.
    """
    totals = np.zeros(len(model.feature_names))
    for tree, _ in model.trees:
        for node in tree.splits():
            totals[node.feature] += node.gain
    if not totals.any():
        raise ModelError("Model has no splits; importances are undefined")
    totals = totals / totals.sum()
    return {name: float(value) for name, value in zip(model.feature_names, totals)}


#######################################
# Model files
#######################################

def _node_to_dict(node):
    if isinstance(node, Leaf):
        return {"value": node.value, "n_samples": node.n_samples}
    return {"feature": node.feature, "threshold": node.threshold, "gain": node.gain,
            "n_samples": node.n_samples, "left": _node_to_dict(node.left),
            "right": _node_to_dict(node.right)}


def _node_from_dict(doc):
    if "value" in doc:
        return Leaf(value=float(doc["value"]), n_samples=int(doc.get("n_samples", 0)))
    return SplitNode(feature=int(doc["feature"]), threshold=float(doc["threshold"]),
                     gain=float(doc["gain"]), n_samples=int(doc["n_samples"]),
                     left=_node_from_dict(doc["left"]), right=_node_from_dict(doc["right"]))


def model_to_dict(model, run_config=None):
    doc = {
        "version": CONFIG["MODEL_FORMAT_VERSION"],
        "config": model.config.to_dict(),
        "feature_names": list(model.feature_names),
        "base_score": model.base_score,
        "objective": list(model.objective),
        "trees": [{"weight": weight, "root": _node_to_dict(tree.root)}
                  for tree, weight in model.trees]
    }
    if run_config is not None:
        doc["run_config"] = run_config
    return doc


def model_from_dict(doc):
    try:
        jsonschema.validate(doc, CONFIG["MODEL_SCHEMA"])
    except jsonschema.ValidationError as e:
        # First line only; the full message repeats the whole document
        raise ModelError(f"Invalid model document: {str(e).splitlines()[0]}")
    if doc["version"] != CONFIG["MODEL_FORMAT_VERSION"]:
        raise ModelError(f"Unsupported model format version {doc['version']}")
    return GbdtModel(base_score=float(doc["base_score"]),
                     trees=tuple((RegressionTree(_node_from_dict(t["root"])), float(t["weight"]))
                                 for t in doc["trees"]),
                     feature_names=tuple(doc["feature_names"]),
                     config=TrainConfig(**doc["config"]),
                     objective=tuple(float(v) for v in doc.get("objective", [])))


def save_model(model, path, run_config=None):
    with open(path, "w") as f:
        json.dump(model_to_dict(model, run_config), f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path):
    with open(path) as f:
        return model_from_dict(json.load(f))
