"""Layers of the from-scratch network engine.

Tensors are NHWC (``batch, rows, cols, channels``); dense layers take
``(batch, features)``. Convolution kernels are stored as
``(kh, kw, in_channels, out_channels)``. Convolutions are computed as a sum
over kernel offsets of strided slices times a ``(cin, cout)`` matrix, which
keeps forward and backward passes symmetric and easy to verify.

``forward(x, cache=False)`` never mutates the layer, so inference on a
trained model can run concurrently. Training calls ``forward(x, cache=True)``
followed by ``backward(dout)``, which fills ``grads``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import DimensionError, ParameterError

LAYER_KINDS = ("conv2d", "transposed_conv2d", "maxpool2d", "relu", "dense")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: Tuple[int, int] = (1, 1)
    stride: int = 1
    # "same" or explicit (before, after) zero padding per spatial axis; for
    # transposed convolutions this is the crop applied to the full output.
    padding: object = "same"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if isinstance(self.padding, list):
            object.__setattr__(self, "padding", tuple(self.padding))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = list(self.kernel)
        if isinstance(self.padding, tuple):
            d["padding"] = list(self.padding)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


def conv(cin, cout, k=3, padding="same", stride=1) -> LayerSpec:
    return LayerSpec("conv2d", cin, cout, (k, k), stride, padding)


def _same_pad(k: int) -> tuple:
    if k % 2 == 0:
        raise ParameterError(f"'same' padding needs an odd kernel, got {k}")
    return (k // 2, k // 2)


class Layer:
    spec: LayerSpec

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params: dict = {}
        self.grads: dict = {}
        self._cache = None

    def output_shape(self, shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x, cache: bool = False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def _init_params(self, rng, dtype, fan_in, wshape, nbias):
        bound = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-bound, bound, size=wshape).astype(dtype)
        self.params["b"] = np.zeros(nbias, dtype=dtype)


def _window(k, s, n_out):
    return slice(k, k + s * (n_out - 1) + 1, s)


class Conv2D(Layer):
    def __init__(self, spec, rng, dtype=np.float32):
        super().__init__(spec)
        kh, kw = spec.kernel
        if spec.padding == "same":
            if spec.stride != 1:
                raise ParameterError("'same' padding is only defined for stride 1")
            self.pad = (_same_pad(kh), _same_pad(kw))
        else:
            p = tuple(spec.padding)
            self.pad = (p, p)
        self._init_params(rng, dtype, kh * kw * spec.in_channels,
                          (kh, kw, spec.in_channels, spec.out_channels), spec.out_channels)

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.spec.in_channels:
            raise DimensionError(
                f"conv2d expects (H, W, {self.spec.in_channels}), got {shape}")
        kh, kw = self.spec.kernel
        s = self.spec.stride
        (a, b), (c, d) = self.pad
        ho = (shape[0] + a + b - kh) // s + 1
        wo = (shape[1] + c + d - kw) // s + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"conv2d output would be empty for input {shape}")
        return (ho, wo, self.spec.out_channels)

    def forward(self, x, cache=False):
        W, b = self.params["W"], self.params["b"]
        kh, kw = self.spec.kernel
        s = self.spec.stride
        ho, wo, cout = self.output_shape(x.shape[1:])
        xp = np.pad(x, ((0, 0), self.pad[0], self.pad[1], (0, 0)))
        out = np.zeros((x.shape[0], ho, wo, cout), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                out += xp[:, _window(i, s, ho), _window(j, s, wo), :] @ W[i, j]
        out += b
        if cache:
            self._cache = (xp, x.shape)
        return out

    def backward(self, dout):
        xp, xshape = self._cache
        W = self.params["W"]
        kh, kw = self.spec.kernel
        s = self.spec.stride
        ho, wo = dout.shape[1:3]
        dW = np.empty_like(W)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                rs, cs = _window(i, s, ho), _window(j, s, wo)
                dW[i, j] = np.tensordot(xp[:, rs, cs, :], dout, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, rs, cs, :] += dout @ W[i, j].T
        self.grads = {"W": dW, "b": dout.sum(axis=(0, 1, 2))}
        (a, _), (c, _) = self.pad
        return dxp[:, a:a + xshape[1], c:c + xshape[2], :]


class ConvTranspose2D(Layer):
    """Adjoint of a strided convolution; ``padding`` crops the full output."""

    def __init__(self, spec, rng, dtype=np.float32):
        super().__init__(spec)
        kh, kw = spec.kernel
        crop = (0, 0) if spec.padding == "same" else tuple(spec.padding)
        self.crop = crop
        self._init_params(rng, dtype, kh * kw * spec.in_channels,
                          (kh, kw, spec.in_channels, spec.out_channels), spec.out_channels)

    def _full(self, h, w):
        kh, kw = self.spec.kernel
        s = self.spec.stride
        return ((h - 1) * s + kh, (w - 1) * s + kw)

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.spec.in_channels:
            raise DimensionError(
                f"transposed_conv2d expects (H, W, {self.spec.in_channels}), got {shape}")
        hf, wf = self._full(shape[0], shape[1])
        ho, wo = hf - sum(self.crop), wf - sum(self.crop)
        if ho < 1 or wo < 1:
            raise DimensionError(f"transposed_conv2d output would be empty for {shape}")
        return (ho, wo, self.spec.out_channels)

    def forward(self, x, cache=False):
        W, b = self.params["W"], self.params["b"]
        kh, kw = self.spec.kernel
        s = self.spec.stride
        n, h, w, _ = x.shape
        hf, wf = self._full(h, w)
        full = np.zeros((n, hf, wf, self.spec.out_channels), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                full[:, _window(i, s, h), _window(j, s, w), :] += x @ W[i, j]
        c0, c1 = self.crop
        out = full[:, c0:hf - c1, c0:wf - c1, :] + b
        if cache:
            self._cache = x
        return out

    def backward(self, dout):
        x = self._cache
        W = self.params["W"]
        kh, kw = self.spec.kernel
        s = self.spec.stride
        n, h, w, _ = x.shape
        hf, wf = self._full(h, w)
        c0, c1 = self.crop
        dfull = np.zeros((n, hf, wf, dout.shape[3]), dtype=dout.dtype)
        dfull[:, c0:hf - c1, c0:wf - c1, :] = dout
        dW = np.empty_like(W)
        dx = np.zeros_like(x)
        for i in range(kh):
            for j in range(kw):
                sl = dfull[:, _window(i, s, h), _window(j, s, w), :]
                dW[i, j] = np.tensordot(x, sl, axes=([0, 1, 2], [0, 1, 2]))
                dx += sl @ W[i, j].T
        self.grads = {"W": dW, "b": dout.sum(axis=(0, 1, 2))}
        return dx


class MaxPool2D(Layer):
    def __init__(self, spec, rng=None, dtype=None):
        super().__init__(spec)
        if spec.kernel != (2, 2) or spec.stride != 2:
            raise ParameterError("only 2x2 max-pooling with stride 2 is supported")

    def output_shape(self, shape):
        if len(shape) != 3 or shape[0] % 2 or shape[1] % 2:
            raise DimensionError(f"maxpool2d needs even spatial dims, got {shape}")
        return (shape[0] // 2, shape[1] // 2, shape[2])

    def _windows(self, x):
        n, h, w, c = x.shape
        r = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        return r.reshape(n, h // 2, w // 2, c, 4)

    def forward(self, x, cache=False):
        self.output_shape(x.shape[1:])
        win = self._windows(x)
        idx = np.argmax(win, axis=-1)
        if cache:
            self._cache = (x.shape, idx)
        return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (n, h, w, c), idx = self._cache
        dwin = np.zeros(dout.shape + (4,), dtype=dout.dtype)
        np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
        dwin = dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return dwin.reshape(n, h, w, c)


class ReLU(Layer):
    def __init__(self, spec, rng=None, dtype=None):
        super().__init__(spec)

    def output_shape(self, shape):
        return tuple(shape)

    def forward(self, x, cache=False):
        if cache:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._cache


class Dense(Layer):
    def __init__(self, spec, rng, dtype=np.float32):
        super().__init__(spec)
        self._init_params(rng, dtype, spec.in_channels,
                          (spec.in_channels, spec.out_channels), spec.out_channels)

    def output_shape(self, shape):
        if tuple(shape) != (self.spec.in_channels,):
            raise DimensionError(f"dense expects ({self.spec.in_channels},), got {shape}")
        return (self.spec.out_channels,)

    def forward(self, x, cache=False):
        if cache:
            self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._cache
        self.grads = {"W": x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


LAYER_CLASSES = {
    "conv2d": Conv2D,
    "transposed_conv2d": ConvTranspose2D,
    "maxpool2d": MaxPool2D,
    "relu": ReLU,
    "dense": Dense,
}


def make_layer(spec: LayerSpec, rng, dtype=np.float32) -> Layer:
    return LAYER_CLASSES[spec.kind](spec, rng, dtype)


class ClassAvgPoolHead:
    """Averages a one-channel map over the live cells of each class block.

    Linear in its input; dead cells carry zero weight, so they receive zero
    gradient.
    """

    def __init__(self, layout, dtype=np.float32):
        self.layout = layout
        rows, cols = layout.plane_shape
        P = np.zeros((rows * cols, layout.c), dtype=np.float64)
        cls = layout.atom_class(np.arange(layout.n))
        P[layout.flat_cells, cls] = 1.0 / layout.atoms_per_class
        self.pool = P.astype(dtype)

    @property
    def input_shape(self) -> tuple:
        return self.layout.plane_shape + (1,)

    def forward(self, fmap):
        n = fmap.shape[0]
        return fmap.reshape(n, -1) @ self.pool.astype(fmap.dtype, copy=False)

    def backward(self, dscores):
        rows, cols = self.layout.plane_shape
        g = dscores @ self.pool.T.astype(dscores.dtype, copy=False)
        return g.reshape(-1, rows, cols, 1)

    def astype(self, dtype):
        return ClassAvgPoolHead(self.layout, dtype)


def layer_param_count(spec: LayerSpec) -> Optional[int]:
    """Analytic trainable-parameter count for one layer."""
    if spec.kind in ("conv2d", "transposed_conv2d"):
        kh, kw = spec.kernel
        return kh * kw * spec.in_channels * spec.out_channels + spec.out_channels
    if spec.kind == "dense":
        return spec.in_channels * spec.out_channels + spec.out_channels
    return 0
