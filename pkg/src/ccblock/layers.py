"""Hand-differentiated layers: conv, 2x2 max pool, ReLU, batch norm, dense,
flatten, and the softmax cross-entropy head.

Every layer caches exactly what its backward needs during forward and
raises StateError if backward runs first. Parameters are plain numpy
arrays mutated in place by the optimizer; gradients land in `self.grads`
after backward, keyed like `params()`.
"""

import numpy as np

from .tensor import ShapeError, col2im, conv_out_size, im2col, matmul

BN_EPS = 1e-5
BN_STAT_MOMENTUM = 0.99


class StateError(RuntimeError):
    """Backward invoked without a cached forward pass."""


class Layer:
    """Shared plumbing: parameter/gradient registry and trainability flag."""

    trainable = True

    def __init__(self):
        self.grads = {}
        self._cache = None

    def params(self) -> dict:
        return {}

    def state(self) -> dict:
        """Non-trainable persistent arrays (serialized but never optimized)."""
        return {}

    def _take_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called before forward")
        cache, self._cache = self._cache, None
        return cache


class Conv2D(Layer):
    """3x3 (or test-sized) convolution via per-sample im2col + GEMM.

    weight: outC x inC x kh x kw, bias: outC. Backbone convs use pad=1,
    CCBlock convs pad=0; both stride 1 in this model.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1, pad: int = 0):
        super().__init__()
        if weight.ndim != 4 or bias.shape != (weight.shape[0],):
            raise ShapeError(
                f"conv params inconsistent: weight {weight.shape}, bias {bias.shape}"
            )
        self.weight = weight
        self.bias = bias
        self.stride = stride
        self.pad = pad

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def out_shape(self, in_shape):
        c, h, w = in_shape
        oc, ic, kh, kw = self.weight.shape
        if c != ic:
            raise ShapeError(
                f"conv expects {ic} input channels, got {c} (weight {self.weight.shape})"
            )
        return (
            oc,
            conv_out_size(h, kh, self.stride, self.pad),
            conv_out_size(w, kw, self.stride, self.pad),
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        oc, ic, kh, kw = self.weight.shape
        co, ho, wo = self.out_shape(x.shape[1:])
        wmat = self.weight.reshape(oc, ic * kh * kw).astype(x.dtype, copy=False)
        bias = self.bias.astype(x.dtype, copy=False)[:, None]
        out = np.empty((n, oc, ho, wo), dtype=x.dtype)
        for i in range(n):
            cols = im2col(x[i], kh, kw, self.stride, self.pad)
            out[i] = (matmul(wmat, cols) + bias).reshape(oc, ho, wo)
        self._cache = x
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._take_cache()
        n, c, h, w = x.shape
        oc, ic, kh, kw = self.weight.shape
        wmat = self.weight.reshape(oc, ic * kh * kw).astype(dout.dtype, copy=False)
        dw = np.zeros((oc, ic * kh * kw), dtype=dout.dtype)
        db = np.zeros(oc, dtype=dout.dtype)
        dx = np.empty_like(x)
        for i in range(n):
            cols = im2col(x[i], kh, kw, self.stride, self.pad)
            dmat = dout[i].reshape(oc, -1)
            dw += matmul(dmat, cols.T)
            db += dmat.sum(axis=1)
            dcols = matmul(wmat.T, dmat)
            dx[i] = col2im(dcols, c, h, w, kh, kw, self.stride, self.pad)
        self.grads = {"weight": dw.reshape(self.weight.shape), "bias": db}
        return dx


class MaxPool2x2(Layer):
    """Non-overlapping 2x2 max pooling; ties go to the first slot in
    row-major window order so backward is deterministic."""

    trainable = False

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
        return (c, h // 2, w // 2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        self.out_shape((c, h, w))
        windows = (
            x.reshape(n, c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h // 2, w // 2, 4)
        )
        argmax = windows.argmax(axis=-1)  # first max wins ties
        out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, argmax)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        (n, c, h, w), argmax = self._take_cache()
        dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
        np.put_along_axis(dwin, argmax[..., None], dout[..., None], axis=-1)
        return (
            dwin.reshape(n, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )


class ReLU(Layer):
    trainable = False

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout * self._take_cache()


class BatchNorm2D(Layer):
    """Per-channel batch normalization over (N, H, W).

    Train mode normalizes with batch statistics and updates the running
    stats as running <- momentum*running + (1-momentum)*batch (biased
    batch variance); infer mode uses running stats only.
    """

    def __init__(self, channels: int, eps: float = BN_EPS,
                 stat_momentum: float = BN_STAT_MOMENTUM, dtype=np.float32):
        super().__init__()
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.eps = eps
        self.stat_momentum = stat_momentum

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def out_shape(self, in_shape):
        if in_shape[0] != self.gamma.shape[0]:
            raise ShapeError(
                f"batchnorm over {self.gamma.shape[0]} channels got input {in_shape}"
            )
        return in_shape

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        n, c, h, w = x.shape
        self.out_shape(x.shape[1:])
        gamma = self.gamma.astype(x.dtype, copy=False)
        beta = self.beta.astype(x.dtype, copy=False)
        if train:
            m = n * h * w
            if m < 2:
                raise ShapeError(
                    "batchnorm train mode needs >=2 values per channel, got 1"
                )
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
            mom = self.stat_momentum
            self.running_mean[...] = mom * self.running_mean + (1 - mom) * mu
            self.running_var[...] = mom * self.running_var + (1 - mom) * var
            self._cache = ("train", xhat, inv_std, m)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var.astype(x.dtype) + self.eps)
            xhat = (x - self.running_mean.astype(x.dtype)[None, :, None, None]) \
                * inv_std[None, :, None, None]
            self._cache = ("infer", xhat, inv_std, n * h * w)
        return gamma[None, :, None, None] * xhat + beta[None, :, None, None]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        mode, xhat, inv_std, m = self._take_cache()
        gamma = self.gamma.astype(dout.dtype, copy=False)
        dgamma = (dout * xhat).sum(axis=(0, 2, 3))
        dbeta = dout.sum(axis=(0, 2, 3))
        self.grads = {"gamma": dgamma, "beta": dbeta}
        dxhat = dout * gamma[None, :, None, None]
        if mode == "infer":
            return dxhat * inv_std[None, :, None, None]
        # batch-statistics chain rule, all reductions per channel
        sum_dxhat = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        return (inv_std[None, :, None, None] / m) * (
            m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat
        )


class Dense(Layer):
    """Fully connected layer: out = x @ weight.T + bias, weight is out x in."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        super().__init__()
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ShapeError(
                f"dense params inconsistent: weight {weight.shape}, bias {bias.shape}"
            )
        self.weight = weight
        self.bias = bias

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def out_shape(self, in_shape):
        (features,) = in_shape
        if features != self.weight.shape[1]:
            raise ShapeError(
                f"dense expects {self.weight.shape[1]} inputs, got {features}"
            )
        return (self.weight.shape[0],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out_shape(x.shape[1:])
        self._cache = x
        w = self.weight.astype(x.dtype, copy=False)
        return matmul(x, w.T) + self.bias.astype(x.dtype, copy=False)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        x = self._take_cache()
        self.grads = {
            "weight": matmul(dout.T, x),
            "bias": dout.sum(axis=0),
        }
        return matmul(dout, self.weight.astype(dout.dtype, copy=False))


class Flatten(Layer):
    trainable = False

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout.reshape(self._take_cache())


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max-subtraction for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch.

    Returns (loss, probs); the gradient wrt logits is (probs - onehot) / N.
    Loss goes through log-sum-exp so saturated rows never hit log(0).
    """
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float((lse - shifted[np.arange(n), labels]).mean())
    probs = np.exp(shifted - lse[:, None])
    return loss, probs


def softmax_xent_backward(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return dlogits / n
