"""Numerical kernel shared by every learner.

Tensors are plain float64 numpy arrays. Gradients are written out by hand
next to each forward function; nothing here keeps state.

Convolution follows the cross-correlation convention (the kernel is not
flipped), in both the forward and backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_EPS = 1e-12
RHO_HAT_EPS = 1e-10


@dataclass(frozen=True)
class LossBreakdown:
    reconstruction: float
    l2_penalty: float
    sparsity_penalty: float

    @property
    def total(self) -> float:
        return self.reconstruction + self.l2_penalty + self.sparsity_penalty


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def relu_backward(upstream, x):
    """Route ``upstream`` through relu at pre-activation ``x`` (subgradient 0 at 0)."""
    return np.where(as_tensor(x) > 0.0, upstream, 0.0)


def sigmoid(x):
    x = as_tensor(x)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(upstream, y):
    """Gradient through sigmoid given its *output* ``y``."""
    return upstream * y * (1.0 - y)


def softmax(z):
    """Row-wise softmax over the last axis, shifted by the row max."""
    z = as_tensor(z)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def kl_sparsity(rho, rho_hat):
    """KL(rho || rho_hat) for Bernoulli means; elementwise over ``rho_hat``."""
    rho_hat = np.clip(as_tensor(rho_hat), RHO_HAT_EPS, 1.0 - RHO_HAT_EPS)
    out = rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))
    return out if out.ndim else float(out)


def kl_sparsity_grad(rho, rho_hat):
    """d KL / d rho_hat, evaluated at the clamped ``rho_hat``."""
    rho_hat = np.clip(as_tensor(rho_hat), RHO_HAT_EPS, 1.0 - RHO_HAT_EPS)
    return -rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat)


def cross_entropy(target, pred):
    """-sum t_i log p_i for one sample, or the per-row values for a batch."""
    target = as_tensor(target)
    pred = as_tensor(pred)
    if target.shape != pred.shape:
        raise ValueError(f"dimension mismatch: target {target.shape} vs pred {pred.shape}")
    logp = np.log(np.clip(pred, PROB_EPS, 1.0))
    out = -(target * logp).sum(axis=-1)
    return out if out.ndim else float(out)


def softmax_cross_entropy_backward(probs, onehot):
    """Gradient of the mean batch cross-entropy w.r.t. the logits."""
    return (probs - onehot) / probs.shape[0]


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"label out of range for {num_classes} classes")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def conv2d_valid(image, kernel, bias: float = 0.0):
    """Single-channel valid cross-correlation."""
    image = as_tensor(image)
    kernel = as_tensor(kernel)
    h, w = image.shape
    kh, kw = kernel.shape
    if kh > h or kw > w:
        raise ValueError(f"kernel {kernel.shape} larger than image {image.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(image, (kh, kw))
    return np.einsum("ijuv,uv->ij", windows, kernel) + bias


def im2col(x, k: int):
    """(N, C, H, W) -> (N, H-k+1, W-k+1, C*k*k) patch matrix."""
    n, c, h, w = x.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    # win: (N, C, Ho, Wo, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h - k + 1, w - k + 1, c * k * k)


def conv2d_forward(x, weight, bias):
    """Multi-channel valid cross-correlation.

    x: (N, C, H, W); weight: (F, C, k, k); bias: (F,). Returns (N, F, Ho, Wo).
    """
    f, c, k, k2 = weight.shape
    if k != k2:
        raise ValueError("kernels must be square")
    if x.shape[1] != c:
        raise ValueError(f"expected {c} input channels, got {x.shape[1]}")
    if k > x.shape[2] or k > x.shape[3]:
        raise ValueError(f"kernel {k}x{k} larger than input {x.shape[2:]}")
    cols = im2col(x, k)
    out = cols @ weight.reshape(f, -1).T + bias
    return out.transpose(0, 3, 1, 2)


def conv2d_backward(upstream, x, weight):
    """Gradients (dx, dweight, dbias) of :func:`conv2d_forward`."""
    f, c, k, _ = weight.shape
    n, _, h, w = x.shape
    cols = im2col(x, k)
    g = upstream.transpose(0, 2, 3, 1)  # (N, Ho, Wo, F)
    dweight = np.tensordot(g, cols, axes=([0, 1, 2], [0, 1, 2])).reshape(weight.shape)
    dbias = g.sum(axis=(0, 1, 2))
    # full correlation with the flipped kernel == scatter of patch gradients
    dcols = (g @ weight.reshape(f, -1)).reshape(n, h - k + 1, w - k + 1, c, k, k)
    dx = np.zeros_like(x)
    ho, wo = h - k + 1, w - k + 1
    for u in range(k):
        for v in range(k):
            dx[:, :, u:u + ho, v:v + wo] += dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
    return dx, dweight, dbias


def maxpool_2x2(fmap):
    """2x2 stride-2 max pooling over the last two axes.

    Odd trailing rows/columns are dropped. Returns the pooled map and the
    flat (0..3) argmax inside each window; ties go to the first element in
    row-major order.
    """
    fmap = as_tensor(fmap)
    h, w = fmap.shape[-2:]
    if h < 2 or w < 2:
        raise ValueError(f"map {h}x{w} too small for 2x2 pooling")
    ho, wo = h // 2, w // 2
    x = fmap[..., : 2 * ho, : 2 * wo]
    x = x.reshape(*x.shape[:-2], ho, 2, wo, 2)
    x = np.moveaxis(x, -3, -2).reshape(*x.shape[:-4], ho, wo, 4)
    arg = x.argmax(axis=-1)
    return np.take_along_axis(x, arg[..., None], axis=-1)[..., 0], arg


def maxpool_2x2_backward(upstream, argmax, in_shape):
    """Send each pooled gradient to the recorded argmax cell; zeros elsewhere."""
    ho, wo = argmax.shape[-2:]
    lead = argmax.shape[:-2]
    win = np.zeros((*lead, ho, wo, 4))
    np.put_along_axis(win, argmax[..., None], upstream[..., None], axis=-1)
    win = win.reshape(*lead, ho, wo, 2, 2)
    win = np.moveaxis(win, -2, -3).reshape(*lead, 2 * ho, 2 * wo)
    out = np.zeros(in_shape)
    out[..., : 2 * ho, : 2 * wo] = win
    return out


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_out, fan_in))


def numeric_gradient(f, theta, step: float = 1e-5):
    """Central finite differences of scalar ``f`` at flat ``theta``."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + step
        fp = f(theta)
        theta[i] = old - step
        fm = f(theta)
        theta[i] = old
        grad[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
