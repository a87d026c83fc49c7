"""Small float64 neural-net engine: layers, reverse-mode grads, AdaM.

Only the pieces the workbench needs: strided valid conv, batchnorm, relu,
softplus, dropout, dense, flatten, softmax, global average pooling. Layers
cache what backward needs; dropout masks are keyed by (layer seed, step) so
a forward pass is reproducible at any time. Arrays are plain numpy float64
throughout ("tensors" here are just ndarrays).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_seed, generator

Tensor = np.ndarray

CHECKPOINT_MAGIC = b"SACNNCKPT"
CHECKPOINT_VERSION = 1

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
ADAM_EPS = 1e-8


def he_uniform(shape, fan_in, seed):
    bound = math.sqrt(6.0 / fan_in)
    return generator(seed).uniform(-bound, bound, size=shape)


class Layer:
    """Base: stateless unless it owns parameters or buffers."""

    def attach(self, seed: int):
        self._seed = seed

    @property
    def params(self) -> list[np.ndarray]:
        return []

    @property
    def grads(self) -> list[np.ndarray]:
        return []

    @property
    def buffers(self) -> list[np.ndarray]:
        return []

    def load_params(self, arrays: list[np.ndarray]):
        if arrays:
            raise ValueError(f"{type(self).__name__} takes no parameters")

    def load_buffers(self, arrays: list[np.ndarray]):
        if arrays:
            raise ValueError(f"{type(self).__name__} takes no buffers")

    def forward(self, x, train, step):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _need_cache(self, cache):
        if cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward before forward")
        return cache

    def spec(self) -> dict:
        return {"kind": self.KIND}


def _im2col(x, kh, kw, stride):
    n, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow), oh, ow


def _col2im(dcols, x_shape, kh, kw, stride, oh, ow):
    n, c, h, w = x_shape
    dx = np.zeros(x_shape)
    dcols = dcols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += dcols[:, :, i, j]
    return dx


class Conv2d(Layer):
    """Valid-padding strided convolution on NCHW input; in-channels inferred."""

    KIND = "conv2d"

    def __init__(self, out_channels: int, kernel: int, stride: int = 1):
        if stride < 1:
            raise ValueError(f"stride must be >= 1, got {stride}")
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.w = None
        self.b = None
        self.dw = None
        self.db = None
        self._cache = None

    def _build(self, in_channels):
        k = self.kernel
        self.w = he_uniform(
            (self.out_channels, in_channels, k, k), in_channels * k * k, self._seed
        )
        self.b = np.zeros(self.out_channels)

    def forward(self, x, train, step):
        if x.ndim != 4:
            raise ValueError(f"conv2d expects NCHW input, got shape {x.shape}")
        if self.w is None:
            self._build(x.shape[1])
        if x.shape[1] != self.w.shape[1]:
            raise ValueError(f"conv2d built for {self.w.shape[1]} channels, got {x.shape}")
        if x.shape[2] < self.kernel or x.shape[3] < self.kernel:
            raise ValueError(f"conv2d kernel {self.kernel} exceeds input {x.shape}")
        cols, oh, ow = _im2col(x, self.kernel, self.kernel, self.stride)
        out = self.w.reshape(self.out_channels, -1) @ cols + self.b[:, None]
        self._cache = (x.shape, cols, oh, ow)
        return out.reshape(x.shape[0], self.out_channels, oh, ow)

    def backward(self, grad):
        x_shape, cols, oh, ow = self._need_cache(self._cache)
        n = x_shape[0]
        g = grad.reshape(n, self.out_channels, oh * ow)
        w_flat = self.w.reshape(self.out_channels, -1)
        self.dw = np.einsum("nop,nkp->ok", g, cols).reshape(self.w.shape)
        self.db = g.sum(axis=(0, 2))
        dcols = np.einsum("ok,nop->nkp", w_flat, g)
        return _col2im(dcols, x_shape, self.kernel, self.kernel, self.stride, oh, ow)

    @property
    def params(self):
        return [] if self.w is None else [self.w, self.b]

    @property
    def grads(self):
        return [] if self.dw is None else [self.dw, self.db]

    def load_params(self, arrays):
        w, b = arrays
        self.w, self.b = w, b

    def spec(self):
        return {
            "kind": self.KIND,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
        }


class BatchNorm(Layer):
    """Per-channel normalization: batch stats in train, running stats in eval."""

    KIND = "batchnorm"

    def __init__(self):
        self.gamma = None
        self.beta = None
        self.dgamma = None
        self.dbeta = None
        self.run_mean = None
        self.run_var = None
        self._cache = None

    def _axes_and_shape(self, x):
        if x.ndim == 4:
            return (0, 2, 3), (1, x.shape[1], 1, 1)
        if x.ndim == 2:
            return (0,), (1, x.shape[1])
        raise ValueError(f"batchnorm expects 2D or 4D input, got shape {x.shape}")

    def _build(self, width):
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.run_mean = np.zeros(width)
        self.run_var = np.ones(width)

    def forward(self, x, train, step):
        axes, shape = self._axes_and_shape(x)
        if self.gamma is None:
            self._build(x.shape[1])
        if x.shape[1] != self.gamma.size:
            raise ValueError(f"batchnorm built for width {self.gamma.size}, got {x.shape}")
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.run_mean = BN_MOMENTUM * self.run_mean + (1 - BN_MOMENTUM) * mean
            self.run_var = BN_MOMENTUM * self.run_var + (1 - BN_MOMENTUM) * var
        else:
            mean, var = self.run_mean, self.run_var
        inv = 1.0 / np.sqrt(var.reshape(shape) + BN_EPS)
        xhat = (x - mean.reshape(shape)) * inv
        self._cache = (xhat, inv, axes, shape, train)
        return self.gamma.reshape(shape) * xhat + self.beta.reshape(shape)

    def backward(self, grad):
        xhat, inv, axes, shape, train = self._need_cache(self._cache)
        self.dgamma = (grad * xhat).sum(axis=axes)
        self.dbeta = grad.sum(axis=axes)
        scaled = grad * self.gamma.reshape(shape) * inv
        if not train:
            return scaled
        mean_g = scaled.mean(axis=axes).reshape(shape)
        mean_gx = (scaled * xhat).mean(axis=axes).reshape(shape) * xhat
        return scaled - mean_g - mean_gx

    @property
    def params(self):
        return [] if self.gamma is None else [self.gamma, self.beta]

    @property
    def grads(self):
        return [] if self.dgamma is None else [self.dgamma, self.dbeta]

    @property
    def buffers(self):
        return [] if self.run_mean is None else [self.run_mean, self.run_var]

    def load_params(self, arrays):
        self.gamma, self.beta = arrays
        if self.run_mean is None:
            self.run_mean = np.zeros_like(self.gamma)
            self.run_var = np.ones_like(self.gamma)

    def load_buffers(self, arrays):
        self.run_mean, self.run_var = arrays


class ReLU(Layer):
    KIND = "relu"

    def __init__(self):
        self._cache = None

    def forward(self, x, train, step):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad):
        keep = self._need_cache(self._cache)
        return np.where(keep, grad, 0.0)


class Softplus(Layer):
    KIND = "softplus"

    def __init__(self):
        self._cache = None

    def forward(self, x, train, step):
        self._cache = x
        out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
        # strictly positive even where the exp underflows
        return np.maximum(out, np.finfo(np.float64).tiny)

    def backward(self, grad):
        x = self._need_cache(self._cache)
        return grad / (1.0 + np.exp(-x))


class Dropout(Layer):
    """Inverted dropout; the mask depends only on (layer seed, step)."""

    KIND = "dropout"

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._cache = None

    def forward(self, x, train, step):
        if not train or self.rate == 0.0:
            self._cache = None
            return x
        u = generator(derive_seed(self._seed, "mask", step)).random(x.shape)
        mask = (u >= self.rate) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, grad):
        if self._cache is None:
            return grad
        return grad * self._cache

    def spec(self):
        return {"kind": self.KIND, "rate": self.rate}


class Dense(Layer):
    """Affine map on (N, features) input; in-features inferred."""

    KIND = "dense"

    def __init__(self, width: int):
        self.width = width
        self.w = None
        self.b = None
        self.dw = None
        self.db = None
        self._cache = None

    def forward(self, x, train, step):
        if x.ndim != 2:
            raise ValueError(f"dense expects (batch, features), got shape {x.shape}")
        if self.w is None:
            self.w = he_uniform((x.shape[1], self.width), x.shape[1], self._seed)
            self.b = np.zeros(self.width)
        if x.shape[1] != self.w.shape[0]:
            raise ValueError(f"dense built for {self.w.shape[0]} features, got {x.shape}")
        self._cache = x
        return x @ self.w + self.b

    def backward(self, grad):
        x = self._need_cache(self._cache)
        self.dw = x.T @ grad
        self.db = grad.sum(axis=0)
        return grad @ self.w.T

    @property
    def params(self):
        return [] if self.w is None else [self.w, self.b]

    @property
    def grads(self):
        return [] if self.dw is None else [self.dw, self.db]

    def load_params(self, arrays):
        self.w, self.b = arrays

    def spec(self):
        return {"kind": self.KIND, "width": self.width}


class Flatten(Layer):
    KIND = "flatten"

    def __init__(self):
        self._cache = None

    def forward(self, x, train, step):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._need_cache(self._cache))


class Softmax(Layer):
    KIND = "softmax"

    def __init__(self):
        self._cache = None

    def forward(self, x, train, step):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=-1, keepdims=True)
        self._cache = p
        return p

    def backward(self, grad):
        p = self._need_cache(self._cache)
        dot = (grad * p).sum(axis=-1, keepdims=True)
        return p * (grad - dot)


class GlobalAvgPool(Layer):
    """NCHW -> (N, C) spatial mean."""

    KIND = "gap"

    def __init__(self):
        self._cache = None

    def forward(self, x, train, step):
        if x.ndim != 4:
            raise ValueError(f"global pool expects NCHW input, got shape {x.shape}")
        self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad):
        n, c, h, w = self._need_cache(self._cache)
        return np.broadcast_to(grad[:, :, None, None], (n, c, h, w)) / (h * w)


_LAYER_KINDS = {
    cls.KIND: cls
    for cls in (Conv2d, BatchNorm, ReLU, Softplus, Dropout, Dense, Flatten, Softmax, GlobalAvgPool)
}


def layer_from_spec(spec: dict) -> Layer:
    kind = spec.get("kind")
    if kind not in _LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}")
    kwargs = {k: v for k, v in spec.items() if k != "kind"}
    return _LAYER_KINDS[kind](**kwargs)


class Network:
    """Ordered layer stack with seeded parameter init."""

    def __init__(self, layers, seed: int = 0):
        self.layers = list(layers)
        self.seed = seed
        for index, layer in enumerate(self.layers):
            layer.attach(derive_seed(seed, "layer", index))

    def forward(self, x, train: bool = False, step: int = 0) -> np.ndarray:
        out = np.asarray(x, dtype=np.float64)
        for index, layer in enumerate(self.layers):
            try:
                out = layer.forward(out, train, step)
            except ValueError as exc:
                raise ValueError(f"layer {index} ({layer.KIND}): {exc}") from None
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        out = grad
        for layer in reversed(self.layers):
            out = layer.backward(out)
        return out

    @property
    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads]


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of integer labels; grad w.r.t. probs."""
    n = probs.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = np.zeros_like(probs)
    grad[np.arange(n), labels] = -1.0 / (np.maximum(picked, 1e-300) * n)
    return loss, grad


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred - target
    return float((diff * diff).mean()), 2.0 * diff / diff.size


def smooth_l1(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Huber loss: quadratic inside |d| < delta, linear outside."""
    diff = pred - target
    a = np.abs(diff)
    inside = a < delta
    loss = np.where(inside, 0.5 * diff * diff, delta * (a - 0.5 * delta))
    grad = np.where(inside, diff, delta * np.sign(diff)) / diff.size
    return float(loss.mean()), grad


def gradcheck(net: Network, x: np.ndarray, step: int = 0, seed: int = 0, max_params: int = 200) -> float:
    """Max relative error between backprop and central differences.

    The scalar probe loss is a fixed random projection of the output, so its
    output-gradient is exact and every parameter's path is exercised. The
    projection is scaled to keep the loss near 1e-3: relative errors are
    scale-free, but float rounding of an O(1) loss divided by 2h would swamp
    parameters whose true gradient is exactly zero (dropped-out paths).
    """
    h = 1e-5
    out0 = net.forward(x, True, step)
    r = generator(derive_seed(seed, "probe")).normal(size=out0.shape)
    r *= 1e-3 / (np.linalg.norm(r) * max(np.linalg.norm(out0), 1e-12))

    def loss():
        return float((net.forward(x, True, step) * r).sum())

    net.forward(x, True, step)
    net.backward(r)
    params = net.params
    grads = [g.copy() for g in net.grads]
    coords = [(t, i) for t, g in zip(params, grads) for i in range(g.size)]
    if len(coords) > max_params:
        picks = generator(derive_seed(seed, "sample")).choice(len(coords), max_params, replace=False)
        coords = [coords[i] for i in picks]
    flat_grads = {id(t): g.ravel() for t, g in zip(params, grads)}
    worst = 0.0
    for tensor, index in coords:
        orig = tensor.flat[index]
        tensor.flat[index] = orig + h
        up = loss()
        tensor.flat[index] = orig - h
        down = loss()
        tensor.flat[index] = orig
        numeric = (up - down) / (2 * h)
        analytic = flat_grads[id(tensor)][index]
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.95
    epochs: int = 1
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch size >= 1")

    def rate_at(self, epoch: int) -> float:
        return self.learning_rate * self.decay**epoch


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, config: TrainConfig, step_index: int, epoch: int = 0):
    """In-place AdaM update with bias correction; lr = base * decay^epoch."""
    if step_index < 1:
        raise ValueError("step_index starts at 1")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in parameter {i} at step {step_index}")
    lr = config.rate_at(epoch)
    c1 = 1.0 - config.beta1**step_index
    c2 = 1.0 - config.beta2**step_index
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= config.beta1
        m += (1 - config.beta1) * g
        v *= config.beta2
        v += (1 - config.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params, state


def save_checkpoint(net: Network, meta: dict | None = None) -> bytes:
    """Versioned binary: magic, JSON layer table, float64 LE payloads."""
    params = net.params
    buffers = [b for layer in net.layers for b in layer.buffers]
    header = {
        "layers": [layer.spec() for layer in net.layers],
        "param_shapes": [list(p.shape) for p in params],
        "buffer_shapes": [list(b.shape) for b in buffers],
        "seed": net.seed,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(a.astype("<f8").tobytes() for a in params + buffers)
    return CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(blob)) + blob + payload


def load_checkpoint(data: bytes) -> tuple[Network, dict]:
    if data[:9] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    version, header_len = struct.unpack_from("<II", data, 9)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 9 + 8
    header = json.loads(data[offset : offset + header_len].decode("utf-8"))
    offset += header_len
    counts = [int(np.prod(s)) if s else 1 for s in header["param_shapes"] + header["buffer_shapes"]]
    if len(data) != offset + 8 * sum(counts):
        raise ValueError("checkpoint payload length mismatch")

    def take(shapes):
        nonlocal offset
        arrays = []
        for shape in shapes:
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(data, "<f8", count, offset).reshape(shape).copy()
            arrays.append(arr)
            offset += count * 8
        return arrays

    params = take(header["param_shapes"])
    buffers = take(header["buffer_shapes"])

    net = Network([layer_from_spec(s) for s in header["layers"]], seed=header["seed"])
    p_idx = b_idx = 0
    for layer in net.layers:
        n_params = 2 if layer.KIND in ("conv2d", "batchnorm", "dense") else 0
        n_buffers = 2 if layer.KIND == "batchnorm" else 0
        layer.load_params(params[p_idx : p_idx + n_params])
        layer.load_buffers(buffers[b_idx : b_idx + n_buffers])
        p_idx += n_params
        b_idx += n_buffers
    if p_idx != len(params) or b_idx != len(buffers):
        raise ValueError("checkpoint shape table does not match layer stack")
    return net, header["meta"]
