"""Stacked sparse autoencoder with a softmax head.

Training runs in three stages: each sparse autoencoder layer is fit
greedily on the codes of the layer below, a softmax classifier is fit on
the top codes, and then encoders and head are fine-tuned jointly on
labelled data. All stages use full-batch scaled conjugate gradient by
default; ``optimizer="gd"`` switches to mini-batch gradient descent that
uses each layer's ``learning_rate``.

Hidden units are sigmoid so that their mean activation can be compared
against the sparsity target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import core
from .scg import scg_minimize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AETrainConfig:
    l2_weight: float
    sparsity_weight: float
    sparsity_target: float
    iterations: int
    learning_rate: float
    hidden_size: int

    def __post_init__(self):
        if self.l2_weight < 0 or self.sparsity_weight < 0:
            raise ValueError("l2_weight and sparsity_weight must be >= 0")
        if not 0.0 < self.sparsity_target < 1.0:
            raise ValueError("sparsity_target must lie in (0, 1)")
        if self.iterations < 0 or self.learning_rate <= 0 or self.hidden_size < 1:
            raise ValueError("iterations >= 0, learning_rate > 0, hidden_size >= 1 required")


# Per-layer settings for layers 1..3: iterations and learning rates from
# the pretraining schedule, L2 / sparsity weight / sparsity target from the
# tuned-parameter table.
LAYER_ITERATIONS = (350, 300, 350)
LAYER_LEARNING_RATES = (0.15, 0.1, 0.1)
LAYER_L2 = (0.004, 0.002, 0.002)
LAYER_SPARSITY_WEIGHT = (4.0, 4.0, 4.0)
LAYER_SPARSITY_TARGET = (0.15, 0.1, 0.1)
HEAD_L2 = LAYER_L2[2]
# The per-layer L2 weights were set against a reconstruction loss summed over
# 784 pixels; cross-entropy is an order of magnitude smaller, so fine-tuning
# scales every L2 term (encoders and head) down by this factor.
FINETUNE_L2_SCALE = 0.1

PRESETS = {
    "ae2": (100, 50),
    "ae3": (100, 100, 50),
}


def layer_configs(layer_sizes) -> list[AETrainConfig]:
    if len(layer_sizes) > len(LAYER_ITERATIONS):
        raise ValueError(f"no tabulated settings beyond {len(LAYER_ITERATIONS)} layers")
    return [
        AETrainConfig(
            l2_weight=LAYER_L2[i],
            sparsity_weight=LAYER_SPARSITY_WEIGHT[i],
            sparsity_target=LAYER_SPARSITY_TARGET[i],
            iterations=LAYER_ITERATIONS[i],
            learning_rate=LAYER_LEARNING_RATES[i],
            hidden_size=size,
        )
        for i, size in enumerate(layer_sizes)
    ]


@dataclass
class AELayer:
    w_enc: np.ndarray  # (hidden, input)
    b_enc: np.ndarray
    w_dec: np.ndarray  # (input, hidden)
    b_dec: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_enc.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_enc.shape[0]

    @classmethod
    def init(cls, rng: np.random.Generator, input_size: int, hidden_size: int) -> "AELayer":
        return cls(
            core.glorot_uniform(rng, hidden_size, input_size),
            np.zeros(hidden_size),
            core.glorot_uniform(rng, input_size, hidden_size),
            np.zeros(input_size),
        )

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w_enc.ravel(), self.b_enc, self.w_dec.ravel(), self.b_dec])

    @classmethod
    def unflatten(cls, theta, input_size: int, hidden_size: int) -> "AELayer":
        d, h = input_size, hidden_size
        i = 0
        w_enc = theta[i:i + h * d].reshape(h, d); i += h * d
        b_enc = theta[i:i + h]; i += h
        w_dec = theta[i:i + d * h].reshape(d, h); i += d * h
        b_dec = theta[i:i + d]
        return cls(w_enc, b_enc, w_dec, b_dec)

    def encode(self, x):
        return core.sigmoid(x @ self.w_enc.T + self.b_enc)

    def reconstruct(self, x):
        return core.sigmoid(self.encode(x) @ self.w_dec.T + self.b_dec)


@dataclass
class SoftmaxHead:
    weight: np.ndarray  # (classes, features)
    bias: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    def probabilities(self, features):
        return core.softmax(features @ self.weight.T + self.bias)


@dataclass
class AEStack:
    layers: list
    head: SoftmaxHead | None = None
    # global class labels predicted by head rows, e.g. [10, ..., 49] for characters
    classes: list = field(default_factory=list)

    def __post_init__(self):
        for lower, upper in zip(self.layers, self.layers[1:]):
            if lower.hidden_size != upper.input_size:
                raise ValueError(
                    f"dimension chain broken: {lower.hidden_size} -> {upper.input_size}"
                )
        if self.head is not None and self.layers and self.head.weight.shape[1] != self.layers[-1].hidden_size:
            raise ValueError("head width does not match the top hidden layer")

    @property
    def layer_sizes(self) -> list[int]:
        return [layer.hidden_size for layer in self.layers]

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    def encode(self, x):
        for layer in self.layers:
            x = layer.encode(x)
        return x


def ae_objective(layer: AELayer, batch, cfg: AETrainConfig):
    """Sparse autoencoder loss and its gradient (flat, in :meth:`AELayer.flatten` order).

    total = mean squared reconstruction error (summed over pixels)
            + l2 * (|W_enc|^2 + |W_dec|^2)
            + beta * sum_j KL(rho || mean activation of hidden unit j)
    """
    x = np.asarray(batch, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    h = core.sigmoid(x @ layer.w_enc.T + layer.b_enc)
    xhat = core.sigmoid(h @ layer.w_dec.T + layer.b_dec)
    diff = xhat - x
    rho_hat = h.mean(axis=0)
    lam, beta, rho = cfg.l2_weight, cfg.sparsity_weight, cfg.sparsity_target

    loss = core.LossBreakdown(
        reconstruction=float(np.sum(diff * diff) / n),
        l2_penalty=float(lam * (np.sum(layer.w_enc ** 2) + np.sum(layer.w_dec ** 2))),
        sparsity_penalty=float(beta * np.sum(core.kl_sparsity(rho, rho_hat))),
    )

    d_out = core.sigmoid_backward(2.0 * diff / n, xhat)
    g_w_dec = d_out.T @ h + 2.0 * lam * layer.w_dec
    g_b_dec = d_out.sum(axis=0)
    d_hidden = d_out @ layer.w_dec + beta * core.kl_sparsity_grad(rho, rho_hat) / n
    d_hidden = core.sigmoid_backward(d_hidden, h)
    g_w_enc = d_hidden.T @ x + 2.0 * lam * layer.w_enc
    g_b_enc = d_hidden.sum(axis=0)
    grad = np.concatenate([g_w_enc.ravel(), g_b_enc, g_w_dec.ravel(), g_b_dec])
    return loss, grad


def _gd_minimize(objective, theta, epochs, learning_rate, n_samples, batch_size, rng):
    """Mini-batch gradient descent; ``objective(theta, idx)`` sees one batch."""
    theta = theta.copy()
    for _ in range(epochs):
        order = rng.permutation(n_samples)
        for start in range(0, n_samples, batch_size):
            _, grad = objective(theta, order[start:start + batch_size])
            theta -= learning_rate * grad
    return theta


def train_layer(
    x,
    cfg: AETrainConfig,
    rng: np.random.Generator,
    *,
    optimizer: str = "scg",
    batch_size: int = 100,
    history: list | None = None,
) -> AELayer:
    d, hsize = x.shape[1], cfg.hidden_size
    layer = AELayer.init(rng, d, hsize)

    def f(theta, idx=None):
        batch = x if idx is None else x[idx]
        loss, grad = ae_objective(AELayer.unflatten(theta, d, hsize), batch, cfg)
        return loss.total, grad

    if optimizer == "scg":
        res = scg_minimize(f, layer.flatten(), cfg.iterations)
        theta = res.theta
        if history is not None:
            history.append(res)
    elif optimizer == "gd":
        theta = _gd_minimize(f, layer.flatten(), cfg.iterations, cfg.learning_rate,
                             x.shape[0], batch_size, rng)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    return AELayer.unflatten(theta.copy(), d, hsize)


def pretrain_stack(
    train_images,
    layer_sizes,
    cfgs=None,
    *,
    seed: int = 0,
    optimizer: str = "scg",
    history: list | None = None,
) -> AEStack:
    """Greedy layer-wise pretraining; returns a headless stack.

    Each layer draws its initial weights from its own child stream of
    ``seed``, so layer 1 is identical no matter how many layers follow.
    """
    layer_sizes = list(layer_sizes)
    if not layer_sizes:
        raise ValueError("layer_sizes must be nonempty")
    cfgs = layer_configs(layer_sizes) if cfgs is None else list(cfgs)
    if len(cfgs) != len(layer_sizes):
        raise ValueError("one config per layer required")
    for size, cfg in zip(layer_sizes, cfgs):
        if cfg.hidden_size != size:
            raise ValueError(f"config hidden_size {cfg.hidden_size} != layer size {size}")

    x = _flat(train_images)
    streams = np.random.SeedSequence(seed).spawn(len(layer_sizes))
    layers = []
    for i, (cfg, ss) in enumerate(zip(cfgs, streams)):
        log.info("pretraining layer %d: %d -> %d, %d iterations", i + 1, x.shape[1], cfg.hidden_size, cfg.iterations)
        layer = train_layer(x, cfg, np.random.default_rng(ss), optimizer=optimizer, history=history)
        layers.append(layer)
        x = layer.encode(x)
    return AEStack(layers)


def _flat(images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    return x.reshape(x.shape[0], -1)


def head_objective(weight_shape, features, onehot, l2: float):
    k, h = weight_shape

    def f(theta):
        w = theta[: k * h].reshape(k, h)
        b = theta[k * h:]
        probs = core.softmax(features @ w.T + b)
        value = float(np.mean(core.cross_entropy(onehot, probs)) + l2 * np.sum(w * w))
        d_logits = core.softmax_cross_entropy_backward(probs, onehot)
        grad = np.concatenate([(d_logits.T @ features + 2.0 * l2 * w).ravel(), d_logits.sum(axis=0)])
        return value, grad

    return f


def train_softmax_head(
    features,
    labels,
    num_classes: int,
    iterations: int = LAYER_ITERATIONS[2],
    *,
    l2: float = HEAD_L2,
    history: list | None = None,
) -> SoftmaxHead:
    """Multinomial logistic layer on frozen features, fit by SCG from zero weights."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.size and labels.max() >= num_classes:
        raise ValueError(f"label {labels.max()} >= num_classes {num_classes}")
    onehot = core.one_hot(labels, num_classes)
    k, h = num_classes, features.shape[1]
    f = head_objective((k, h), features, onehot, l2)
    res = scg_minimize(f, np.zeros(k * h + k), iterations)
    if history is not None:
        history.append(res)
    return SoftmaxHead(res.theta[: k * h].reshape(k, h).copy(), res.theta[k * h:].copy())


def stack_to_theta(stack: AEStack) -> np.ndarray:
    parts = []
    for layer in stack.layers:
        parts += [layer.w_enc.ravel(), layer.b_enc]
    parts += [stack.head.weight.ravel(), stack.head.bias]
    return np.concatenate(parts)


def theta_to_stack(theta, template: AEStack) -> AEStack:
    """Encoder/head parameters from ``theta``; decoders copied from ``template``."""
    i = 0
    layers = []
    for layer in template.layers:
        h, d = layer.w_enc.shape
        w = theta[i:i + h * d].reshape(h, d).copy(); i += h * d
        b = theta[i:i + h].copy(); i += h
        layers.append(AELayer(w, b, layer.w_dec, layer.b_dec))
    k, h = template.head.weight.shape
    w = theta[i:i + k * h].reshape(k, h).copy(); i += k * h
    b = theta[i:i + k].copy()
    return AEStack(layers, SoftmaxHead(w, b), list(template.classes))


def finetune_objective(template: AEStack, x, onehot, l2s, head_l2):
    """Mean cross-entropy of the whole stack plus per-layer L2 on weights."""
    shapes = [layer.w_enc.shape for layer in template.layers]
    k, top = template.head.weight.shape

    def f(theta):
        i = 0
        ws, bs = [], []
        for h, d in shapes:
            ws.append(theta[i:i + h * d].reshape(h, d)); i += h * d
            bs.append(theta[i:i + h]); i += h
        wh = theta[i:i + k * top].reshape(k, top); i += k * top
        bh = theta[i:i + k]

        acts = [x]
        for w, b in zip(ws, bs):
            acts.append(core.sigmoid(acts[-1] @ w.T + b))
        probs = core.softmax(acts[-1] @ wh.T + bh)
        value = float(np.mean(core.cross_entropy(onehot, probs)))
        value += sum(l2 * float(np.sum(w * w)) for l2, w in zip(l2s, ws))
        value += head_l2 * float(np.sum(wh * wh))

        delta = core.softmax_cross_entropy_backward(probs, onehot)
        grads = [(delta.T @ acts[-1] + 2.0 * head_l2 * wh).ravel(), delta.sum(axis=0)]
        upstream = delta @ wh
        for j in range(len(ws) - 1, -1, -1):
            d_pre = core.sigmoid_backward(upstream, acts[j + 1])
            gw = d_pre.T @ acts[j] + 2.0 * l2s[j] * ws[j]
            gb = d_pre.sum(axis=0)
            grads = [gw.ravel(), gb] + grads
            upstream = d_pre @ ws[j]
        return value, np.concatenate(grads)

    return f


def fine_tune(
    stack: AEStack,
    images,
    labels,
    iterations: int,
    cfgs=None,
    *,
    head_l2: float = HEAD_L2,
    l2_scale: float = FINETUNE_L2_SCALE,
    history: list | None = None,
    callback=None,
) -> AEStack:
    """Jointly refine encoders and head on labelled data. ``labels`` index head rows.

    ``callback(iteration, value, stack)`` runs after every SCG iteration.
    """
    if stack.head is None:
        raise ValueError("fine_tune needs a stack with a softmax head")
    if iterations <= 0:
        return stack
    cfgs = layer_configs(stack.layer_sizes) if cfgs is None else cfgs
    x = _flat(images)
    onehot = core.one_hot(labels, stack.head.num_classes)
    if l2_scale < 0:
        raise ValueError("l2_scale must be >= 0")
    f = finetune_objective(stack, x, onehot, [l2_scale * c.l2_weight for c in cfgs], l2_scale * head_l2)
    hook = None
    if callback is not None:
        def hook(state, value):
            callback(state.iteration, value, theta_to_stack(state.theta, stack))
    res = scg_minimize(f, stack_to_theta(stack), iterations, callback=hook)
    if history is not None:
        history.append(res)
    return theta_to_stack(res.theta, stack)


def predict_ae(stack: AEStack, images):
    """Argmax class (lowest index on ties) and probability rows.

    Returned labels index the head rows; map through ``stack.classes`` for
    global labels.
    """
    x = _flat(images)
    if x.shape[1] != stack.input_size:
        raise ValueError(f"expected inputs of dimension {stack.input_size}, got {x.shape[1]}")
    probs = stack.head.probabilities(stack.encode(x))
    return probs.argmax(axis=1), probs


@dataclass
class AEFitReport:
    pretrain: list = field(default_factory=list)
    head: list = field(default_factory=list)
    finetune: list = field(default_factory=list)


def fit_autoencoder(
    images,
    labels,
    layer_sizes,
    num_classes: int,
    *,
    seed: int = 0,
    optimizer: str = "scg",
    cfgs=None,
    head_iterations: int = LAYER_ITERATIONS[2],
    finetune_iterations: int = 200,
    finetune_l2_scale: float = FINETUNE_L2_SCALE,
    classes=None,
    callback=None,
) -> tuple[AEStack, AEFitReport]:
    """Pretrain, fit the head, fine-tune. ``labels`` are head-row indices."""
    report = AEFitReport()
    cfgs = layer_configs(layer_sizes) if cfgs is None else list(cfgs)
    stack = pretrain_stack(images, layer_sizes, cfgs, seed=seed, optimizer=optimizer, history=report.pretrain)
    feats = stack.encode(_flat(images))
    log.info("training softmax head: %d classes, %d iterations", num_classes, head_iterations)
    stack.head = train_softmax_head(feats, labels, num_classes, head_iterations, history=report.head)
    stack.classes = list(range(num_classes)) if classes is None else list(classes)
    log.info("fine-tuning: %d iterations", finetune_iterations)
    stack = fine_tune(stack, images, labels, finetune_iterations, cfgs, l2_scale=finetune_l2_scale,
                      history=report.finetune, callback=callback)
    return stack, report


def with_iterations(cfgs, iterations) -> list[AETrainConfig]:
    return [replace(c, iterations=n) for c, n in zip(cfgs, iterations)]
