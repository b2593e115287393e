"""From-scratch differentiable layers over float64 numpy arrays.

Conventions: sequence tensors are (batch, length, channels); flat tensors
are (batch, features). Every layer caches what its backward pass needs
during forward; backward before forward is an error. Gradients accumulate
into Param.grad and are zeroed by the optimizer step.
"""
from __future__ import annotations

import numpy as np


class Param:
    """A learnable tensor with its gradient and momentum buffer."""

    __slots__ = ("name", "value", "grad", "velocity")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    def parameters(self) -> list:
        return []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _need_cache(self, cache, who: str):
        if cache is None:
            raise RuntimeError(f"{who}.backward called before forward")
        return cache


class Conv1D(Layer):
    """Same-padded 1D convolution; kernel size must be odd.

    Weights are (kernel, in_channels, out_channels); output length equals
    input length via symmetric zero padding.
    """

    def __init__(self, kernel: int, in_channels: int, out_channels: int,
                 rng: np.random.Generator, name: str = "conv"):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd for same padding")
        self.kernel = kernel
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = Param(f"{name}.weight", fan_in_uniform(
            rng, (kernel, in_channels, out_channels), kernel * in_channels))
        self.bias = Param(f"{name}.bias", np.zeros(out_channels))
        self._x_padded = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, training=False):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ValueError(
                f"expected (batch, length, {self.in_channels}) input, got {x.shape}")
        b, length, _ = x.shape
        pad = self.kernel // 2
        xp = np.zeros((b, length + 2 * pad, self.in_channels))
        xp[:, pad:pad + length] = x
        y = np.tile(self.bias.value, (b, length, 1))
        for j in range(self.kernel):
            y += xp[:, j:j + length] @ self.weight.value[j]
        self._x_padded = xp
        self._length = length
        return y

    def backward(self, grad):
        xp = self._need_cache(self._x_padded, "Conv1D")
        length = self._length
        pad = self.kernel // 2
        self.bias.grad += grad.sum(axis=(0, 1))
        gxp = np.zeros_like(xp)
        for j in range(self.kernel):
            self.weight.grad[j] += np.einsum("blc,blo->co", xp[:, j:j + length], grad)
            gxp[:, j:j + length] += grad @ self.weight.value[j].T
        return gxp[:, pad:pad + length]


class BatchNorm(Layer):
    """Per-channel standardization over all non-channel axes.

    Training uses batch statistics and folds them into running stats
    (retention factor `momentum`; the first batch initializes them).
    Evaluation uses the running stats and fails loudly if none exist yet.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9,
                 name: str = "bn"):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(f"{name}.gamma", np.ones(channels))
        self.beta = Param(f"{name}.beta", np.zeros(channels))
        self.running_mean = None
        self.running_var = None
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x, training=False):
        if x.shape[-1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if training:
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs batch size >= 2 in training")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if self.running_mean is None:
                self.running_mean = mean.copy()
                self.running_var = var.copy()
            else:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1.0 - m) * mean
                self.running_var = m * self.running_var + (1.0 - m) * var
        else:
            if self.running_mean is None:
                raise RuntimeError("batch norm evaluated before any training batch")
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, training)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, grad):
        xhat, inv_std, axes, training = self._need_cache(self._cache, "BatchNorm")
        self.gamma.grad += (grad * xhat).sum(axis=axes)
        self.beta.grad += grad.sum(axis=axes)
        gxhat = grad * self.gamma.value
        if not training:
            return gxhat * inv_std
        n = xhat.size // xhat.shape[-1]
        return (inv_std / n) * (
            n * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2):
        self.slope = slope
        self._mask = None

    def forward(self, x, training=False):
        self._mask = x > 0.0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, grad):
        mask = self._need_cache(self._mask, "LeakyReLU")
        return np.where(mask, grad, self.slope * grad)


class MaxPool1D(Layer):
    """Width-2 max pooling along the length axis; odd tails are dropped."""

    def __init__(self):
        self._cache = None

    def forward(self, x, training=False):
        b, length, c = x.shape
        half = length // 2
        if half == 0:
            raise ValueError("sequence too short to pool")
        pairs = x[:, :2 * half].reshape(b, half, 2, c)
        idx = pairs.argmax(axis=2)
        self._cache = (idx, x.shape)
        return np.take_along_axis(pairs, idx[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, grad):
        idx, shape = self._need_cache(self._cache, "MaxPool1D")
        b, length, c = shape
        half = length // 2
        gpairs = np.zeros((b, half, 2, c))
        np.put_along_axis(gpairs, idx[:, :, None, :], grad[:, :, None, :], axis=2)
        gx = np.zeros(shape)
        gx[:, :2 * half] = gpairs.reshape(b, 2 * half, c)
        return gx


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, name: str = "fc"):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Param(f"{name}.weight",
                            fan_in_uniform(rng, (in_features, out_features), in_features))
        self.bias = Param(f"{name}.bias", np.zeros(out_features))
        self._x = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f"expected (batch, {self.in_features}) input, got {x.shape}")
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, grad):
        x = self._need_cache(self._x, "Dense")
        self.weight.grad += x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value.T


class Dropout(Layer):
    """Inverted dropout: training scales kept units by 1/keep so that
    evaluation is the identity. fixed_mask (same shape as the input, values
    already divided by keep) pins the mask for gradient checking."""

    def __init__(self, rate: float = 0.5, rng: np.random.Generator | None = None):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate
        self.rng = rng
        self.fixed_mask = None
        self._mask = None

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._mask = np.ones(())
            return x
        if self.fixed_mask is not None:
            self._mask = self.fixed_mask
        else:
            if self.rng is None:
                raise RuntimeError("dropout needs an RNG in training mode")
            keep = 1.0 - self.rate
            self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad):
        mask = self._need_cache(self._mask, "Dropout")
        return grad * mask


class Flatten(Layer):
    """(batch, length, channels) -> (batch, channels * length), channel-major:
    the flat index runs over channels first, positions within a channel
    second. The order is part of the checkpoint contract."""

    def __init__(self):
        self._shape = None

    def forward(self, x, training=False):
        if x.ndim != 3:
            raise ValueError(f"expected a 3D tensor, got shape {x.shape}")
        self._shape = x.shape
        b, length, c = x.shape
        return x.transpose(0, 2, 1).reshape(b, c * length)

    def backward(self, grad):
        b, length, c = self._need_cache(self._shape, "Flatten")
        return grad.reshape(b, c, length).transpose(0, 2, 1)


class Sigmoid(Layer):
    def __init__(self):
        self._y = None

    def forward(self, x, training=False):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, grad):
        y = self._need_cache(self._y, "Sigmoid")
        return grad * y * (1.0 - y)


class Softmax(Layer):
    def __init__(self):
        self._p = None

    def forward(self, x, training=False):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._p = e / e.sum(axis=-1, keepdims=True)
        return self._p

    def backward(self, grad):
        p = self._need_cache(self._p, "Softmax")
        return p * (grad - (grad * p).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of integer labels under softmax(logits).

    Returns (loss, gradient wrt logits, probabilities); the gradient is
    the fused (p - onehot) / batch form.
    """
    if logits.ndim != 2:
        raise ValueError("logits must be (batch, classes)")
    if len(labels) != len(logits):
        raise ValueError("labels length does not match batch")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(len(labels)), labels]))
    p = np.exp(z - lse[:, None])
    grad = p.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    grad /= len(labels)
    return loss, grad, p


def mean_squared_error(pred: np.ndarray, target: np.ndarray):
    """Mean over all elements; returns (loss, gradient wrt pred)."""
    if pred.shape != target.shape:
        raise ValueError("shape mismatch")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff
