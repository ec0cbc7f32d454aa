"""Classical classifiers on flattened pixels, written from scratch.

The six kinds, with the fixed defaults used everywhere:

    logistic_regression  multinomial softmax regression, full-batch GD, 200 epochs, lr 0.1
    knn                  Euclidean k-nearest neighbours (k=3); vote ties -> lowest class
    gaussian_nb          per-class, per-pixel Gaussian; variance floor 1e-3
    decision_tree        CART with Gini impurity, max_depth 12
    linear_svm           one-vs-rest hinge loss, SGD sub-gradient steps, lambda 1e-4, 50 epochs
    mlp                  one ReLU hidden layer (128) + softmax, mini-batch GD

Models predict indices into their own ``classes`` list; labels passed to
``train_baseline`` are global class ids.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import core

KINDS = ("logistic_regression", "knn", "gaussian_nb", "decision_tree", "linear_svm", "mlp")


@dataclass(frozen=True)
class BaselineKind:
    name: str
    k: int = 3
    max_depth: int = 12
    hidden: int = 128
    seed: int = 0
    epochs: int | None = None
    learning_rate: float | None = None

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValueError(f"unknown baseline {self.name!r}; choose from {KINDS}")
        if self.k < 1 or self.max_depth < 1 or self.hidden < 1:
            raise ValueError("k, max_depth and hidden must be >= 1")


@dataclass
class BaselineModel:
    kind: BaselineKind
    classes: np.ndarray
    arrays: dict = field(default_factory=dict)

    @property
    def num_features(self) -> int:
        return int(self.arrays["num_features"])


def _flat(images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    return x.reshape(len(x), -1)


def train_baseline(kind: BaselineKind, images, labels) -> BaselineModel:
    x = _flat(images)
    labels = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    classes, y = np.unique(labels, return_inverse=True)
    if len(classes) < 2 and kind.name in ("linear_svm", "logistic_regression"):
        raise ValueError(f"{kind.name} needs at least two classes")
    model = BaselineModel(kind, classes, {"num_features": np.array(x.shape[1])})
    _TRAIN[kind.name](model, x, y)
    return model


def predict_baseline(model: BaselineModel, images) -> np.ndarray:
    """Predicted global class ids."""
    x = _flat(images)
    if x.shape[1] != model.num_features:
        raise ValueError(f"expected {model.num_features} features, got {x.shape[1]}")
    return model.classes[_PREDICT[model.kind.name](model, x)]


def decision_scores(model: BaselineModel, images) -> np.ndarray:
    """Per-class scores for the linear models (argmax gives the prediction)."""
    x = _flat(images)
    a = model.arrays
    if model.kind.name in ("logistic_regression", "linear_svm"):
        return x @ a["w"].T + a["b"]
    raise ValueError(f"{model.kind.name} has no linear scores")


def _first_argmax(scores) -> np.ndarray:
    return np.argmax(scores, axis=1)  # numpy returns the first maximum


# -- logistic regression ----------------------------------------------------

def _train_logreg(model, x, y):
    kind = model.kind
    k = len(model.classes)
    onehot = core.one_hot(y, k)
    w = np.zeros((k, x.shape[1]))
    b = np.zeros(k)
    lr = kind.learning_rate or 0.1
    for _ in range(kind.epochs or 200):
        d = core.softmax_cross_entropy_backward(core.softmax(x @ w.T + b), onehot)
        w -= lr * (d.T @ x)
        b -= lr * d.sum(axis=0)
    model.arrays.update(w=w, b=b)


def _predict_linear(model, x):
    return _first_argmax(x @ model.arrays["w"].T + model.arrays["b"])


# -- k nearest neighbours -----------------------------------------------------

def _train_knn(model, x, y):
    model.arrays.update(x=x.copy(), y=y.copy())


def _knn_block(train_x, train_y, k, n_classes, q):
    d2 = cdist(q, train_x, "sqeuclidean")
    # stable sort so equal distances keep training order
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    votes = np.zeros((len(q), n_classes), dtype=np.int64)
    np.add.at(votes, (np.repeat(np.arange(len(q)), k), train_y[nearest].ravel()), 1)
    return _first_argmax(votes)


def _predict_knn(model, x, block: int = 256):
    a = model.arrays
    k = min(model.kind.k, len(a["y"]))
    chunks = [x[s:s + block] for s in range(0, len(x), block)]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        parts = list(pool.map(lambda q: _knn_block(a["x"], a["y"], k, len(model.classes), q), chunks))
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


# -- gaussian naive bayes -----------------------------------------------------

VAR_FLOOR = 1e-3


def _train_gnb(model, x, y):
    k = len(model.classes)
    means = np.stack([x[y == c].mean(axis=0) for c in range(k)])
    var = np.stack([x[y == c].var(axis=0) for c in range(k)])
    prior = np.bincount(y, minlength=k) / len(y)
    model.arrays.update(mean=means, var=np.maximum(var, VAR_FLOOR), log_prior=np.log(prior))


def gnb_log_posterior(model, x) -> np.ndarray:
    """Unnormalised log posterior per class."""
    a = model.arrays
    var, mean = a["var"], a["mean"]
    ll = -0.5 * (np.log(2 * np.pi * var).sum(1)[None, :]
                 + ((x[:, None, :] - mean[None]) ** 2 / var[None]).sum(-1))
    return ll + a["log_prior"]


def _predict_gnb(model, x, block: int = 256):
    return np.concatenate([_first_argmax(gnb_log_posterior(model, x[s:s + block]))
                           for s in range(0, len(x), block)]) if len(x) else np.zeros(0, dtype=np.int64)


# -- CART decision tree -------------------------------------------------------

GINI_TIE = 1e-12


def best_gini_split(x, y, n_classes, max_cells: int = 2_000_000):
    """(feature, threshold, weighted child impurity) minimising Gini, or None.

    Thresholds are midpoints between consecutive distinct sorted values;
    samples with value <= threshold go left. Ties in impurity go to the
    lowest feature, then the lowest threshold.
    """
    n, d = x.shape
    chunk = max(1, max_cells // (n * n_classes))
    best = None
    for f0 in range(0, d, chunk):
        xs = x[:, f0:f0 + chunk]
        order = np.argsort(xs, axis=0, kind="stable")
        sx = np.take_along_axis(xs, order, axis=0)
        sy = y[order]  # (n, c)
        counts = np.zeros((n, xs.shape[1], n_classes))
        np.put_along_axis(counts, sy[..., None], 1.0, axis=2)
        left = np.cumsum(counts, axis=0)[:-1]  # split after position i
        total = left[-1] + counts[-1]
        right = total[None] - left
        nl = np.arange(1, n)[:, None].astype(np.float64)
        nr = n - nl
        gini_l = 1.0 - (left ** 2).sum(-1) / nl ** 2
        gini_r = 1.0 - (right ** 2).sum(-1) / nr ** 2
        imp = (nl * gini_l + nr * gini_r) / n
        valid = sx[1:] > sx[:-1]
        imp = np.where(valid, imp, np.inf)
        lowest = imp.min()
        if not np.isfinite(lowest):
            continue
        # equal impurities can differ by round-off; treat them as ties and
        # take the lowest feature, then the lowest split position
        tied = imp.T.ravel() <= lowest + GINI_TIE
        fi, pos = divmod(int(np.argmax(tied)), n - 1)
        if best is None or imp[pos, fi] < best[2] - GINI_TIE:
            thr = 0.5 * (sx[pos, fi] + sx[pos + 1, fi])
            best = (f0 + fi, float(thr), float(imp[pos, fi]))
    return best


def _train_tree(model, x, y):
    k = len(model.classes)
    feature, threshold, left, right, value = [], [], [], [], []

    def node(idx, depth):
        nid = len(feature)
        counts = np.bincount(y[idx], minlength=k)
        feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
        value.append(int(np.argmax(counts)))
        if depth >= model.kind.max_depth or np.count_nonzero(counts) <= 1 or len(idx) < 2:
            return nid
        split = best_gini_split(x[idx], y[idx], k)
        if split is None:
            return nid
        f, t, imp = split
        parent = 1.0 - ((counts / len(idx)) ** 2).sum()
        if imp >= parent:
            return nid
        mask = x[idx, f] <= t
        feature[nid], threshold[nid] = f, t
        left[nid] = node(idx[mask], depth + 1)
        right[nid] = node(idx[~mask], depth + 1)
        return nid

    node(np.arange(len(y)), 0)
    model.arrays.update(feature=np.array(feature), threshold=np.array(threshold),
                        left=np.array(left), right=np.array(right), value=np.array(value))


def _predict_tree(model, x):
    a = model.arrays
    nodes = np.zeros(len(x), dtype=np.int64)
    while True:
        f = a["feature"][nodes]
        active = f >= 0
        if not active.any():
            return a["value"][nodes]
        rows = np.flatnonzero(active)
        go_left = x[rows, f[rows]] <= a["threshold"][nodes[rows]]
        nodes[rows] = np.where(go_left, a["left"][nodes[rows]], a["right"][nodes[rows]])


# -- linear SVM ---------------------------------------------------------------

SVM_LAMBDA = 1e-4


def _train_svm(model, x, y):
    """All one-vs-rest machines step together on each sample.

    Step size 1 / (lambda * (t + t0)) with t0 chosen so the first step is eta0.
    """
    kind = model.kind
    k = len(model.classes)
    n, d = x.shape
    rng = np.random.default_rng(kind.seed)
    sign = np.where(core.one_hot(y, k) > 0, 1.0, -1.0)
    w = np.zeros((k, d))
    b = np.zeros(k)
    lam = SVM_LAMBDA
    eta0 = kind.learning_rate or 0.01
    t0 = 1.0 / (lam * eta0)
    t = 0
    for _ in range(kind.epochs or 50):
        for i in rng.permutation(n):
            eta = 1.0 / (lam * (t0 + t))
            xi = x[i]
            margin = sign[i] * (w @ xi + b)
            viol = margin < 1.0
            w *= 1.0 - eta * lam
            if viol.any():
                w[viol] += eta * sign[i, viol, None] * xi
                b[viol] += eta * sign[i, viol]
            t += 1
    model.arrays.update(w=w, b=b)


# -- MLP ----------------------------------------------------------------------

def _train_mlp(model, x, y):
    kind = model.kind
    k = len(model.classes)
    rng = np.random.default_rng(kind.seed)
    w1 = core.glorot_uniform(rng, kind.hidden, x.shape[1])
    b1 = np.zeros(kind.hidden)
    w2 = core.glorot_uniform(rng, k, kind.hidden)
    b2 = np.zeros(k)
    onehot = core.one_hot(y, k)
    lr = kind.learning_rate or 0.1
    for _ in range(kind.epochs or 30):
        order = rng.permutation(len(x))
        for s in range(0, len(x), 32):
            idx = order[s:s + 32]
            z1 = x[idx] @ w1.T + b1
            h = np.maximum(z1, 0.0)
            d2 = core.softmax_cross_entropy_backward(core.softmax(h @ w2.T + b2), onehot[idx])
            d1 = core.relu_backward(d2 @ w2, z1)
            w2 -= lr * d2.T @ h
            b2 -= lr * d2.sum(0)
            w1 -= lr * d1.T @ x[idx]
            b1 -= lr * d1.sum(0)
    model.arrays.update(w1=w1, b1=b1, w2=w2, b2=b2)


def _predict_mlp(model, x):
    a = model.arrays
    h = np.maximum(x @ a["w1"].T + a["b1"], 0.0)
    return _first_argmax(h @ a["w2"].T + a["b2"])


_TRAIN = {
    "logistic_regression": _train_logreg,
    "knn": _train_knn,
    "gaussian_nb": _train_gnb,
    "decision_tree": _train_tree,
    "linear_svm": _train_svm,
    "mlp": _train_mlp,
}
_PREDICT = {
    "logistic_regression": _predict_linear,
    "knn": _predict_knn,
    "gaussian_nb": _predict_gnb,
    "decision_tree": _predict_tree,
    "linear_svm": _predict_linear,
    "mlp": _predict_mlp,
}


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GLYPHLAB_THREADS", "1")))
    except ValueError:
        return 1
