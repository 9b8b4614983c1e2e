"""From-scratch classifiers on numpy: softmax logistic regression trained by
gradient descent, CART-style decision trees, a bootstrap random forest, and
SAMME-style adaptive boosting, plus minority oversampling and macro-F1.

Everything is deterministic given the TrainConfig seed, and every model
serializes to a versioned JSON-compatible dict whose round-trip reproduces
predictions exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

MODEL_FORMAT_VERSION = 1

_KINDS = ("logistic", "forest", "adaboost")

__all__ = [
    "TrainConfig",
    "LogisticModel",
    "DecisionTree",
    "ForestModel",
    "AdaBoostModel",
    "train_classifier",
    "smote_oversample",
    "macro_f1",
    "model_to_json",
    "model_from_json",
    "MODEL_FORMAT_VERSION",
]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for train_classifier.

    kind selects the model family.  learning_rate/iterations drive the
    logistic fit; n_estimators, max_depth, min_samples_leaf, max_features
    and bootstrap drive the tree ensembles.  class_weight "balanced" weights
    samples by n / (n_classes * n_class); for boosting this sets the initial
    sample weights.  max_depth None means unlimited for the forest and
    depth 1 for boosting stumps.
    """

    kind: str = "forest"
    learning_rate: float = 0.1
    iterations: int = 500
    n_estimators: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: str | None = "sqrt"
    bootstrap: bool = True
    class_weight: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.iterations < 1 or self.n_estimators < 1:
            raise ConfigError("iteration and estimator counts must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be positive or None")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be positive")
        if self.max_features not in ("sqrt", None):
            raise ConfigError("max_features must be 'sqrt' or None")
        if self.class_weight not in (None, "balanced"):
            raise ConfigError("class_weight must be None or 'balanced'")


def _as_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DataError("X must be 2-D with one row per label")
    if X.shape[0] == 0:
        raise DataError("cannot train on an empty dataset")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DataError("training data contains non-finite values")
    return X, y


def _sample_weights(y_idx, n_classes, class_weight):
    n = y_idx.size
    w = np.ones(n)
    if class_weight == "balanced":
        counts = np.bincount(y_idx, minlength=n_classes)
        w = n / (n_classes * counts[y_idx])
    return w


class LogisticModel:
    """Multinomial logistic regression with a bias term."""

    kind = "logistic"

    def __init__(self, weights, classes):
        self.weights = np.asarray(weights, dtype=float)
        self.classes = np.asarray(classes, dtype=float)
        self.n_features = self.weights.shape[1] - 1

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        z = X @ self.weights[:, :-1].T + self.weights[:, -1]
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self):
        return {
            "weights": [[float(v) for v in row] for row in self.weights],
            "classes": [float(c) for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["weights"]), np.array(d["classes"]))


def _fit_logistic(X, y_idx, n_classes, config):
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    w = _sample_weights(y_idx, n_classes, config.class_weight)
    w = w / w.sum()
    W = np.zeros((n_classes, d + 1))
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_idx] = 1.0
    for _ in range(config.iterations):
        z = Xb @ W.T
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        grad = ((p - onehot) * w[:, None]).T @ Xb
        W -= config.learning_rate * grad
    return W


class DecisionTree:
    """Binary CART tree stored as flat arrays.

    feature[i] is -1 at leaves; probs[i] holds the leaf class distribution.
    The split predicate is x[feature] <= threshold to the left child.
    """

    def __init__(self, feature, threshold, left, right, probs):
        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.probs = np.asarray(probs, dtype=float)

    def leaf_proba(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=int)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            cur = node[active]
            goes_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(goes_left, self.left[cur], self.right[cur])
        return self.probs[node]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "probs": [[float(v) for v in row] for row in self.probs],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["probs"])


def _best_split(X, y_idx, w, node_rows, n_classes, feature_ids, min_leaf):
    """Lowest weighted Gini split over the given features.

    Returns (feature, threshold, left_rows, right_rows) or None.  Ties keep
    the lowest feature id and then the smallest threshold.
    """
    best = None
    best_impurity = math.inf
    total_w = w[node_rows].sum()
    for f in feature_ids:
        xs = X[node_rows, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        rows_s = node_rows[order]
        ws = w[rows_s]
        cum_w = np.cumsum(ws)
        # weighted class counts left of each split position
        sq_left = np.zeros(xs_s.size - 1)
        sq_right = np.zeros(xs_s.size - 1)
        right_w = total_w - cum_w[:-1]
        for c in range(n_classes):
            cw_full = np.cumsum(ws * (y_idx[rows_s] == c))
            cw = cw_full[:-1]
            sq_left += cw * cw
            sq_right += (cw_full[-1] - cw) ** 2
        left_w = cum_w[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            gini_l = 1.0 - sq_left / (left_w * left_w)
            gini_r = 1.0 - sq_right / (right_w * right_w)
        impurity = (left_w * gini_l + right_w * gini_r) / total_w
        pos = np.arange(1, xs_s.size)
        valid = (xs_s[1:] > xs_s[:-1]) & (pos >= min_leaf) & (xs_s.size - pos >= min_leaf)
        if not valid.any():
            continue
        imp = np.where(valid, impurity, math.inf)
        i = int(np.argmin(imp))
        if imp[i] < best_impurity - 1e-15:
            thr = 0.5 * (xs_s[i] + xs_s[i + 1])
            best_impurity = imp[i]
            best = (f, float(thr), rows_s[: i + 1], rows_s[i + 1 :])
    return best


def _build_tree(X, y_idx, w, n_classes, max_depth, min_leaf, max_features, rng):
    n, d = X.shape
    if max_features == "sqrt":
        n_feats = max(1, int(round(math.sqrt(d))))
    else:
        n_feats = d
    feature, threshold, left, right, probs = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        probs.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        counts = np.bincount(y_idx[rows], weights=w[rows], minlength=n_classes)
        probs[node] = counts / counts.sum()
        pure = np.count_nonzero(counts) <= 1
        if pure or (max_depth is not None and depth >= max_depth) or rows.size < 2 * min_leaf:
            continue
        if n_feats < d:
            feats = np.sort(rng.choice(d, size=n_feats, replace=False))
        else:
            feats = np.arange(d)
        split = _best_split(X, y_idx, w, rows, n_classes, feats, min_leaf)
        if split is None:
            continue
        f, thr, rows_l, rows_r = split
        feature[node] = f
        threshold[node] = thr
        nl = new_node()
        nr = new_node()
        left[node] = nl
        right[node] = nr
        stack.append((nr, rows_r, depth + 1))
        stack.append((nl, rows_l, depth + 1))
    return DecisionTree(feature, threshold, left, right, np.vstack(probs))


class ForestModel:
    """Bagged trees; class probabilities are the unweighted mean of leaf
    distributions, and predictions break ties toward the lowest class index."""

    kind = "forest"

    def __init__(self, trees, classes):
        self.trees = list(trees)
        self.classes = np.asarray(classes, dtype=float)
        self.n_features = None

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        acc = np.zeros((X.shape[0], self.classes.size))
        for tree in self.trees:
            acc += tree.leaf_proba(X)
        return acc / len(self.trees)

    def predict(self, X):
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self):
        return {
            "trees": [t.to_dict() for t in self.trees],
            "classes": [float(c) for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([DecisionTree.from_dict(t) for t in d["trees"]], np.array(d["classes"]))


class AdaBoostModel:
    """SAMME boosting over shallow trees; probabilities are the normalized
    weighted votes of the base learners."""

    kind = "adaboost"

    def __init__(self, trees, alphas, classes):
        self.trees = list(trees)
        self.alphas = np.asarray(alphas, dtype=float)
        self.classes = np.asarray(classes, dtype=float)
        self.n_features = None

    def predict_proba(self, X):
        X = np.asarray(X, dtype=float)
        votes = np.zeros((X.shape[0], self.classes.size))
        for alpha, tree in zip(self.alphas, self.trees):
            hard = np.argmax(tree.leaf_proba(X), axis=1)
            votes[np.arange(X.shape[0]), hard] += alpha
        return votes / votes.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self):
        return {
            "trees": [t.to_dict() for t in self.trees],
            "alphas": [float(a) for a in self.alphas],
            "classes": [float(c) for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            [DecisionTree.from_dict(t) for t in d["trees"]],
            np.array(d["alphas"]),
            np.array(d["classes"]),
        )


def _fit_forest(X, y_idx, n_classes, config):
    n = X.shape[0]
    w = _sample_weights(y_idx, n_classes, config.class_weight)
    streams = np.random.SeedSequence(config.seed).spawn(config.n_estimators)
    trees = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        if config.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        tree = _build_tree(
            X[rows],
            y_idx[rows],
            w[rows],
            n_classes,
            config.max_depth,
            config.min_samples_leaf,
            config.max_features,
            rng,
        )
        trees.append(tree)
    return trees


def _fit_adaboost(X, y_idx, n_classes, config):
    n = X.shape[0]
    w = _sample_weights(y_idx, n_classes, config.class_weight)
    w = w / w.sum()
    depth = config.max_depth if config.max_depth is not None else 1
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    trees, alphas = [], []
    for _ in range(config.n_estimators):
        tree = _build_tree(
            X, y_idx, w, n_classes, depth, config.min_samples_leaf, None, rng
        )
        hard = np.argmax(tree.leaf_proba(X), axis=1)
        err = float(w[hard != y_idx].sum())
        if err >= 1.0 - 1.0 / n_classes:
            break  # no better than chance on current weights
        err = max(err, 1e-10)
        alpha = math.log((1.0 - err) / err) + math.log(n_classes - 1.0)
        trees.append(tree)
        alphas.append(alpha)
        if err <= 1e-10:
            break  # perfect fit, further rounds cannot change votes
        w = w * np.exp(alpha * (hard != y_idx))
        w = w / w.sum()
    if not trees:
        raise DataError("boosting base learner is no better than chance")
    return trees, alphas


def train_classifier(X, y, config):
    """Train a classifier of the configured kind; deterministic given the seed."""
    X, y = _as_xy(X, y)
    classes = np.unique(y)
    if classes.size < 2:
        raise DataError("training labels contain a single class")
    y_idx = np.searchsorted(classes, y)
    if config.kind == "logistic":
        W = _fit_logistic(X, y_idx, classes.size, config)
        model = LogisticModel(W, classes)
    elif config.kind == "forest":
        trees = _fit_forest(X, y_idx, classes.size, config)
        model = ForestModel(trees, classes)
    else:
        trees, alphas = _fit_adaboost(X, y_idx, classes.size, config)
        model = AdaBoostModel(trees, alphas, classes)
    model.n_features = X.shape[1]
    return model


def smote_oversample(X, y, k_neighbors=5, seed=0):
    """Equalize class counts by synthesizing minority samples.

    Each synthetic point is x + u * (x_nn - x) for a random same-class
    neighbor x_nn among the k nearest (Euclidean) and u ~ Uniform[0, 1).
    Originals are preserved and synthetics appended, per class in label
    order.  Every minority class must have at least k_neighbors + 1 samples.
    """
    if k_neighbors < 1:
        raise ConfigError("k_neighbors must be positive")
    X, y = _as_xy(X, y)
    classes = np.unique(y)
    counts = {c: int((y == c).sum()) for c in classes}
    n_max = max(counts.values())
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    new_X, new_y = [X], [y]
    for c in classes:
        need = n_max - counts[c]
        if need == 0:
            continue
        if counts[c] < k_neighbors + 1:
            raise DataError(
                f"class {c} has {counts[c]} samples, need at least {k_neighbors + 1}"
            )
        rows = np.flatnonzero(y == c)
        Xc = X[rows]
        sq = (Xc * Xc).sum(axis=1)
        dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Xc @ Xc.T), 0.0)
        np.fill_diagonal(dist2, np.inf)
        neighbor_ids = np.argsort(dist2, axis=1, kind="stable")[:, :k_neighbors]
        base = rng.integers(0, Xc.shape[0], size=need)
        pick = rng.integers(0, k_neighbors, size=need)
        u = rng.random(size=need)
        nn = neighbor_ids[base, pick]
        synth = Xc[base] + u[:, None] * (Xc[nn] - Xc[base])
        new_X.append(synth)
        new_y.append(np.full(need, c))
    return np.vstack(new_X), np.concatenate(new_y)


def macro_f1(y_true, y_pred, classes=None):
    """Unweighted mean of per-class F1; a class with no true or predicted
    samples contributes 0."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise DataError("macro_f1 requires aligned labels")
    if y_true.size == 0:
        raise DataError("macro_f1 of empty labels is undefined")
    if classes is None:
        classes = np.unique(np.concatenate([y_true, y_pred]))
    else:
        classes = np.asarray(classes, dtype=float)
        if classes.size == 0:
            raise ConfigError("classes must be non-empty")
    scores = []
    for c in classes:
        tp = float(((y_true == c) & (y_pred == c)).sum())
        fp = float(((y_true != c) & (y_pred == c)).sum())
        fn = float(((y_true == c) & (y_pred != c)).sum())
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(scores))


_MODEL_CLASSES = {
    "logistic": LogisticModel,
    "forest": ForestModel,
    "adaboost": AdaBoostModel,
}


def model_to_json(model):
    """Serialize a trained model to a JSON-compatible dict."""
    payload = model.to_dict()
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "n_features": model.n_features,
        "model": payload,
    }


def model_from_json(doc):
    """Inverse of model_to_json; predictions round-trip exactly."""
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ConfigError(f"unsupported model format {doc.get('format_version')!r}")
    kind = doc.get("kind")
    if kind not in _MODEL_CLASSES:
        raise ConfigError(f"unknown model kind {kind!r}")
    model = _MODEL_CLASSES[kind].from_dict(doc["model"])
    model.n_features = doc.get("n_features")
    return model
