"""Layers with hand-written backward passes.

Every layer follows the same small protocol:

    y = layer.forward(x, train=False, rng=None)
    dx = layer.backward(dy)          # fills layer.grads
    layer.parameters()               # [(name, array), ...], updated in place by optimizers
    layer.gradients()                # aligned with parameters()

``backward`` consumes the cache of the most recent train-mode ``forward``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError, NumericError, ShapeError, StateError
from .tensor import Rng


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def parameters(self):
        return list(self.params.items())

    def gradients(self):
        return [self.grads[name] for name in self.params]

    def buffers(self):
        return []

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{self.kind}: backward called without a preceding train-mode forward")
        cache, self._cache = self._cache, None
        return cache

    def __repr__(self):
        return f"{type(self).__name__}()"


class Conv2d(Layer):
    """Same-padded, stride-1 convolution computed as im2col + matmul.

    weight: (Cout, Cin, k, k), bias: (Cout,). Only odd ``k`` is supported so
    that padding ``k // 2`` preserves the spatial size.
    """

    kind = "conv2d"

    def __init__(self, weight, bias):
        super().__init__()
        cout, cin, kh, kw = weight.shape
        if kh != kw or kh % 2 == 0:
            raise ShapeError(f"conv kernel must be square and odd, got {kh}x{kw}")
        if bias.shape != (cout,):
            raise ShapeError(f"bias shape {bias.shape} does not match {cout} output channels")
        self.params = {"weight": weight, "bias": bias}
        self.k = kh
        self.pad = kh // 2

    def _im2col(self, x):
        n, c, h, w = x.shape
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (self.k, self.k), axis=(2, 3))  # n, c, h, w, k, k
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * self.k * self.k)

    def forward(self, x, train=False, rng=None):
        w, b = self.params["weight"], self.params["bias"]
        if x.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d expects N x {w.shape[1]} x H x W input, got {x.shape}")
        n, _, h, wd = x.shape
        cols = self._im2col(x)
        # one product per sample: BLAS rounding must not depend on the batch size
        y = np.matmul(cols.reshape(n, h * wd, -1), w.reshape(w.shape[0], -1).T)
        y += b
        y = y.reshape(n, h, wd, -1).transpose(0, 3, 1, 2)
        if train:
            self._cache = (x.shape, cols)
        return np.ascontiguousarray(y)

    def backward(self, dy):
        x_shape, cols = self._take_cache()
        w = self.params["weight"]
        n, c, h, wd = x_shape
        cout = w.shape[0]
        dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, cout)
        self.grads["weight"] = (dy_mat.T @ cols).reshape(w.shape)
        self.grads["bias"] = dy_mat.sum(axis=0)
        dcols = (dy_mat @ w.reshape(cout, -1)).reshape(n, h, wd, c, self.k, self.k)
        p, k = self.pad, self.k
        dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=dy.dtype)
        for u in range(k):
            for v in range(k):
                dxp[:, :, u:u + h, v:v + wd] += dcols[:, :, :, :, u, v].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + wd].copy()


class BatchNorm2d(Layer):
    """Per-channel normalization over (N, H, W).

    Batch variance is biased (1/m) for normalization; the running variance
    is fed the unbiased estimate m/(m-1), as PyTorch does.
    """

    kind = "batchnorm2d"

    def __init__(self, channels, dtype=np.float32, momentum=0.1, eps=1e-5):
        super().__init__()
        if not 0 < momentum < 1:
            raise ConfigError(f"batch-norm momentum must be in (0, 1), got {momentum}")
        self.params = {
            "gamma": np.ones(channels, dtype=dtype),
            "beta": np.zeros(channels, dtype=dtype),
        }
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, train=False, rng=None):
        gamma, beta = self.params["gamma"], self.params["beta"]
        if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
            raise ShapeError(f"batchnorm2d expects N x {gamma.shape[0]} x H x W input, got {x.shape}")
        shape = (1, -1, 1, 1)
        if not train:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            scale = (gamma * inv).astype(x.dtype)
            shift = (beta - self.running_mean * gamma * inv).astype(x.dtype)
            return x * scale.reshape(shape) + shift.reshape(shape)

        m = x.shape[0] * x.shape[2] * x.shape[3]
        if m < 2:
            raise DataError("batch-norm in train mode needs at least 2 values per channel")
        mean = x.mean(axis=(0, 2, 3))
        xc = x - mean.reshape(shape)
        var = (xc * xc).mean(axis=(0, 2, 3))
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv.reshape(shape)
        mom = self.momentum
        self.running_mean[...] = (1 - mom) * self.running_mean + mom * mean
        self.running_var[...] = (1 - mom) * self.running_var + mom * var * (m / (m - 1))
        self._cache = (xhat, inv, m)
        return xhat * gamma.reshape(shape) + beta.reshape(shape)

    def backward(self, dy):
        xhat, inv, m = self._take_cache()
        gamma = self.params["gamma"]
        dbeta = dy.sum(axis=(0, 2, 3))
        dgamma = (dy * xhat).sum(axis=(0, 2, 3))
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        shape = (1, -1, 1, 1)
        k = (gamma * inv / m).reshape(shape)
        return k * (m * dy - dbeta.reshape(shape) - xhat * dgamma.reshape(shape))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dy):
        # gradient at exactly 0 is 0
        return dy * self._take_cache()


class MaxPool2d(Layer):
    """2x2 / stride 2 max pooling. Odd trailing rows and columns are dropped.

    On ties the gradient goes to the first maximum in row-major window order.
    """

    kind = "maxpool2d"

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        if h < 2 or w < 2:
            raise ShapeError(f"maxpool2d needs H, W >= 2, got {h}x{w}")
        ho, wo = h // 2, w // 2
        win = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
        idx = win.argmax(axis=-1)
        y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        if train:
            self._cache = (x.shape, idx)
        return y

    def backward(self, dy):
        x_shape, idx = self._take_cache()
        n, c, h, w = x_shape
        ho, wo = h // 2, w // 2
        win = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
        np.put_along_axis(win, idx[..., None], dy[..., None], axis=-1)
        win = win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :, :2 * ho, :2 * wo] = win
        return dx


def adaptive_pool_matrix(in_size, out_size, dtype=np.float64):
    """Row i averages input positions [floor(i*L/O), ceil((i+1)*L/O))."""
    if out_size < 1:
        raise ShapeError(f"adaptive pool output size must be >= 1, got {out_size}")
    mat = np.zeros((out_size, in_size), dtype=dtype)
    for i in range(out_size):
        lo = (i * in_size) // out_size
        hi = -((-(i + 1) * in_size) // out_size)
        mat[i, lo:hi] = 1.0 / (hi - lo)
    return mat


class AdaptiveAvgPool2d(Layer):
    kind = "adaptive_avgpool2d"

    def __init__(self, out_hw):
        super().__init__()
        self.out_hw = tuple(int(v) for v in out_hw)
        if len(self.out_hw) != 2 or min(self.out_hw) < 1:
            raise ShapeError(f"adaptive pool output must be two sizes >= 1, got {out_hw}")
        self._mats = {}

    def _matrices(self, h, w, dtype):
        key = (h, w, np.dtype(dtype).str)
        if key not in self._mats:
            self._mats[key] = (
                adaptive_pool_matrix(h, self.out_hw[0], dtype),
                adaptive_pool_matrix(w, self.out_hw[1], dtype),
            )
        return self._mats[key]

    def forward(self, x, train=False, rng=None):
        ph, pw = self._matrices(x.shape[2], x.shape[3], x.dtype)
        if train:
            self._cache = x.shape
        return np.matmul(np.matmul(ph, x), pw.T)

    def backward(self, dy):
        x_shape = self._take_cache()
        ph, pw = self._matrices(x_shape[2], x_shape[3], dy.dtype)
        return np.matmul(np.matmul(ph.T, dy), pw)


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-p), eval mode is the identity."""

    kind = "dropout"

    def __init__(self, p=0.2):
        super().__init__()
        if not 0 <= p < 1:
            raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x, train=False, rng=None):
        if not train:
            return x
        if self.p == 0:
            mask = np.ones_like(x)
        else:
            if rng is None:
                raise StateError("dropout in train mode needs an rng")
            keep = rng.random(x.shape) >= self.p
            mask = keep.astype(x.dtype) / x.dtype.type(1 - self.p)
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._take_cache()

    def __repr__(self):
        return f"Dropout(p={self.p})"


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train=False, rng=None):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._take_cache())


class Dense(Layer):
    """y = x @ weight + bias with weight of shape (F, C)."""

    kind = "dense"

    def __init__(self, weight, bias):
        super().__init__()
        if bias.shape != (weight.shape[1],):
            raise ShapeError(f"bias shape {bias.shape} does not match weight {weight.shape}")
        self.params = {"weight": weight, "bias": bias}

    def forward(self, x, train=False, rng=None):
        w = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != w.shape[0]:
            raise ShapeError(f"dense expects N x {w.shape[0]} input, got {x.shape}")
        if train:
            self._cache = x
        return np.matmul(x[:, None, :], w)[:, 0, :] + self.params["bias"]

    def backward(self, dy):
        x = self._take_cache()
        self.grads["weight"] = x.T @ dy
        self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"].T


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns ``(loss, dlogits)`` with ``dlogits = (softmax - onehot) / N``.
    """
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsumexp - z[rows, labels]))
    probs = np.exp(z - logsumexp[:, None])
    probs[rows, labels] -= 1
    return loss, probs / n


def relative_error(analytic, numeric, floor=1e-5):
    """||a - n|| / max(||a||, ||n||, floor).

    The floor keeps exactly-zero gradients (a conv bias feeding batch-norm)
    from turning finite-difference roundoff into a relative error of 1.
    """
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / denom)


def grad_check(layer, x, h=1e-5, seed=0, params=True, return_all=False):
    """Worst relative error between analytic and central-difference gradients.

    The output is scalarized as ``sum(r * y)`` for a fixed random ``r``. The
    input gradient and (if ``params``) every parameter gradient are checked.
    ``layer`` is anything following the layer protocol, including a model.
    """
    if np.asarray(x).dtype != np.float64:
        raise ConfigError("grad_check requires float64 inputs")
    x = np.array(x, dtype=np.float64)
    drop_rng = Rng(seed, ("grad_check", "dropout"))

    def run(inp, train=True):
        return layer.forward(inp, train=train, rng=drop_rng.child(0))

    y = run(x)
    r = Rng(seed, ("grad_check", "projection")).uniform(-1.0, 1.0, np.shape(y))

    def scalar(inp):
        out = run(inp)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{getattr(layer, 'kind', 'layer')}: non-finite output during grad_check")
        return float(np.sum(r * out))

    run(x)
    dx = layer.backward(r)
    analytic = {"input": dx}
    if params:
        for (name, _), g in zip(layer.parameters(), layer.gradients()):
            analytic[name] = np.array(g)

    targets = {"input": x}
    if params:
        targets.update(dict(layer.parameters()))

    errors = {}
    for name, arr in targets.items():
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = num.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = scalar(x)
            flat[i] = old - h
            fm = scalar(x)
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * h)
        a = analytic[name]
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(num))):
            raise NumericError(f"non-finite gradient for {name}")
        errors[name] = relative_error(a, num)
    worst = max(errors.values())
    return (worst, errors) if return_all else worst


__all__ = [
    "AdaptiveAvgPool2d", "BatchNorm2d", "Conv2d", "Dense", "Dropout", "Flatten", "Layer",
    "MaxPool2d", "ReLU", "adaptive_pool_matrix", "grad_check", "relative_error", "softmax",
    "softmax_cross_entropy",
]
