"""Small convolutional classifier trained with rmsprop.

Architecture: a stem of ``conv (valid) -> relu -> optional 2x2 max-pool``
blocks, then fully connected relu layers, then a linear layer and softmax.
The hidden FC widths are the configurable part; the default stem is two
3x3 blocks with 8 and 16 filters, each pooled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import core
from .report import RunHistory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel: int = 3
    pool: bool = True


DEFAULT_STEM = (ConvBlock(8, 3, True), ConvBlock(16, 3, True))
FC_WEIGHT_DECAY = (0.09, 0.06, 0.06)


@dataclass(frozen=True)
class CNNSpec:
    blocks: tuple = DEFAULT_STEM
    fc_sizes: tuple = (100, 50)
    num_classes: int = 10
    # L2 coefficient per hidden FC layer; conv kernels and the output layer are not decayed
    weight_decay: tuple = ()
    input_shape: tuple = (28, 28)

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("at least one conv block required")
        if len(self.weight_decay) not in (0, len(self.fc_sizes)):
            raise ValueError("weight_decay needs one entry per hidden FC layer")
        if any(d < 0 for d in self.weight_decay):
            raise ValueError("weight_decay must be >= 0")
        self.block_shapes()  # validates the shape algebra

    def block_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, height, width) after each block."""
        h, w = self.input_shape
        out = []
        for b in self.blocks:
            h, w = h - b.kernel + 1, w - b.kernel + 1
            if h < 1 or w < 1:
                raise ValueError(f"kernel {b.kernel} does not fit; spatial dims underflow")
            if b.pool:
                if h < 2 or w < 2:
                    raise ValueError("pooling a map smaller than 2x2")
                h, w = h // 2, w // 2
            out.append((b.filters, h, w))
        return out

    @property
    def flat_size(self) -> int:
        c, h, w = self.block_shapes()[-1]
        return c * h * w

    def decay(self, i: int) -> float:
        return self.weight_decay[i] if self.weight_decay else 0.0

    def param_shapes(self) -> list[tuple]:
        shapes = []
        c = 1
        for b in self.blocks:
            shapes += [(b.filters, c, b.kernel, b.kernel), (b.filters,)]
            c = b.filters
        widths = [self.flat_size, *self.fc_sizes, self.num_classes]
        for fan_in, fan_out in zip(widths, widths[1:]):
            shapes += [(fan_out, fan_in), (fan_out,)]
        return shapes


PRESETS = {
    "cnn2": (100, 50),
    "cnn3": (100, 100, 50),
}


def preset_spec(name: str, num_classes: int) -> CNNSpec:
    fc = PRESETS[name]
    return CNNSpec(fc_sizes=fc, num_classes=num_classes, weight_decay=FC_WEIGHT_DECAY[: len(fc)])


def init_params(spec: CNNSpec, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    params = []
    for shape in spec.param_shapes():
        if len(shape) == 1:
            params.append(np.zeros(shape))
        elif len(shape) == 4:
            f, c, k, _ = shape
            params.append(core.glorot_uniform(rng, f * k * k, c * k * k, shape))
        else:
            params.append(core.glorot_uniform(rng, shape[0], shape[1]))
    return params


def flatten_params(params) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def unflatten_params(spec: CNNSpec, theta) -> list[np.ndarray]:
    out, i = [], 0
    for shape in spec.param_shapes():
        n = int(np.prod(shape))
        out.append(np.asarray(theta[i:i + n]).reshape(shape))
        i += n
    return out


def _as_batch(spec: CNNSpec, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != tuple(spec.input_shape):
        raise ValueError(f"expected inputs of shape {spec.input_shape}, got {x.shape[1:]}")
    return x[:, None]


def cnn_forward(spec: CNNSpec, params, batch):
    """Class probabilities (N, classes) and the cache for :func:`cnn_backward`."""
    x = _as_batch(spec, batch)
    nb = len(spec.blocks)
    cache = {"blocks": [], "fc": []}
    for i, b in enumerate(spec.blocks):
        pre = core.conv2d_forward(x, params[2 * i], params[2 * i + 1])
        act = np.maximum(pre, 0.0)
        entry = {"input": x, "pre": pre}
        if b.pool:
            act, arg = core.maxpool_2x2(act)
            entry["argmax"] = arg
        cache["blocks"].append(entry)
        x = act
    cache["flat_shape"] = x.shape
    a = x.reshape(x.shape[0], -1)
    n_fc = len(spec.fc_sizes)
    for j in range(n_fc + 1):
        w, b = params[2 * nb + 2 * j], params[2 * nb + 2 * j + 1]
        z = a @ w.T + b
        cache["fc"].append((a, z))
        a = np.maximum(z, 0.0) if j < n_fc else z
    probs = core.softmax(a)
    cache["probs"] = probs
    return probs, cache


def loss_from_probs(spec: CNNSpec, params, probs, onehot) -> float:
    nb = len(spec.blocks)
    loss = float(np.mean(core.cross_entropy(onehot, probs)))
    for j in range(len(spec.fc_sizes)):
        w = params[2 * nb + 2 * j]
        loss += spec.decay(j) * float(np.sum(w * w))
    return loss


def cnn_backward(spec: CNNSpec, params, batch, targets, cache=None):
    """Gradient of mean cross-entropy + weight decay, as a list shaped like ``params``.

    ``targets`` are head-row labels or a one-hot matrix.
    """
    if cache is None:
        _, cache = cnn_forward(spec, params, batch)
    probs = cache["probs"]
    onehot = _onehot(targets, spec.num_classes)
    nb = len(spec.blocks)
    n_fc = len(spec.fc_sizes)
    grads = [None] * len(params)

    delta = core.softmax_cross_entropy_backward(probs, onehot)
    for j in range(n_fc, -1, -1):
        a, z = cache["fc"][j]
        if j < n_fc:
            delta = core.relu_backward(delta, z)
        w = params[2 * nb + 2 * j]
        gw = delta.T @ a
        if j < n_fc:
            gw = gw + 2.0 * spec.decay(j) * w
        grads[2 * nb + 2 * j] = gw
        grads[2 * nb + 2 * j + 1] = delta.sum(axis=0)
        delta = delta @ w

    up = delta.reshape(cache["flat_shape"])
    for i in range(nb - 1, -1, -1):
        entry = cache["blocks"][i]
        if spec.blocks[i].pool:
            up = core.maxpool_2x2_backward(up, entry["argmax"], entry["pre"].shape)
        up = core.relu_backward(up, entry["pre"])
        dx, dw, db = core.conv2d_backward(up, entry["input"], params[2 * i])
        grads[2 * i], grads[2 * i + 1] = dw, db
        up = dx
    return grads


def _onehot(targets, k):
    t = np.asarray(targets)
    return t.astype(np.float64) if t.ndim == 2 else core.one_hot(t, k)


@dataclass
class RMSPropState:
    cache: list
    decay: float = 0.9
    epsilon: float = 1e-8
    learning_rate: float = 1e-3

    @classmethod
    def zeros_like(cls, params, **kw) -> "RMSPropState":
        return cls([np.zeros_like(p) for p in params], **kw)


def rmsprop_step(state: RMSPropState, params, grads):
    """In-place on ``state.cache``; returns the updated parameter arrays."""
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"parameter/gradient shape mismatch: {p.shape} vs {g.shape}")
        c = state.decay * state.cache[i] + (1.0 - state.decay) * g * g
        state.cache[i] = c
        out.append(p - state.learning_rate * g / np.sqrt(c + state.epsilon))
    return out


def predict_cnn(spec: CNNSpec, params, images, batch_size: int = 256):
    images = np.asarray(images, dtype=np.float64)
    probs = np.concatenate(
        [cnn_forward(spec, params, images[s:s + batch_size])[0] for s in range(0, len(images), batch_size)]
    ) if len(images) else np.zeros((0, spec.num_classes))
    return probs.argmax(axis=1), probs


@dataclass
class CNNTrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    decay: float = 0.9
    epsilon: float = 1e-8
    seed: int = 0
    extra: dict = field(default_factory=dict)


def train_cnn(spec: CNNSpec, train, valid=None, cfg: CNNTrainConfig | None = None):
    """Fit with rmsprop on mini-batches; ``train``/``valid`` are (images, labels).

    The sample order is reshuffled every epoch from ``cfg.seed``; the last
    short batch is kept. Returns (params, RunHistory) where each epoch
    records mean training loss and the validation error in percent (the
    training error when no validation set is given).
    """
    cfg = cfg or CNNTrainConfig()
    x, y = np.asarray(train[0], dtype=np.float64), np.asarray(train[1])
    n = len(x)
    if n == 0:
        raise ValueError("empty training set")
    if cfg.batch_size > n:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds {n} training samples")
    init_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init_params(spec, int(init_ss.generate_state(1)[0]))
    rng = np.random.default_rng(shuffle_ss)
    state = RMSPropState.zeros_like(params, decay=cfg.decay, epsilon=cfg.epsilon, learning_rate=cfg.learning_rate)
    onehot = core.one_hot(y, spec.num_classes)
    vx, vy = (x, y) if valid is None else (np.asarray(valid[0], dtype=np.float64), np.asarray(valid[1]))
    history = RunHistory()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            probs, cache = cnn_forward(spec, params, x[idx])
            total += loss_from_probs(spec, params, probs, onehot[idx]) * len(idx)
            grads = cnn_backward(spec, params, None, onehot[idx], cache)
            params = rmsprop_step(state, params, grads)
        pred, _ = predict_cnn(spec, params, vx)
        err = 100.0 * float(np.mean(pred != vy)) if len(vy) else 0.0
        history.add(epoch, total / n, err)
        log.info("epoch %d: loss %.4f, error %.2f%%", epoch, total / n, err)
    return params, history
