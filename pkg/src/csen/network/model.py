"""Network container and the four architectures used in the experiments."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..dictionary import ClassLayout
from ..errors import DimensionError, UnsupportedOperationError
from .layers import ClassAvgPoolHead, LayerSpec, conv, layer_param_count, make_layer

RELU = LayerSpec("relu")
MAXPOOL = LayerSpec("maxpool2d", kernel=(2, 2), stride=2)


class NetworkModel:
    """An ordered layer stack, optionally followed by a class-block head.

    Convolutional models take ``(N, H, W)`` or ``(N, H, W, 1)`` planes and
    end in a one-channel map that the :class:`ClassAvgPoolHead` turns into
    class scores. Dense models take ``(N, d)`` vectors and their last layer
    emits the scores directly.
    """

    def __init__(self, specs: Sequence[LayerSpec], input_shape: tuple,
                 layout: Optional[ClassLayout] = None, name: str = "custom",
                 seed: int = 0, dtype=np.float32):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.layout = layout
        self.name = name
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.layers = [make_layer(s, rng, self.dtype) for s in self.specs]
        self.head = ClassAvgPoolHead(layout, self.dtype) if layout is not None else None
        self.shapes = self._probe_shapes()

    def _probe_shapes(self) -> list:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        if self.head is not None and shapes[-1] != self.head.input_shape:
            raise DimensionError(
                f"{self.name}: final map {shapes[-1]} does not match the "
                f"class-block head input {self.head.input_shape}")
        return shapes

    @property
    def is_spatial(self) -> bool:
        return self.head is not None

    @property
    def n_classes(self) -> int:
        if self.head is not None:
            return self.layout.c
        return self.shapes[-1][0]

    def param_count(self) -> int:
        return sum(layer.param_count() for layer in self.layers)

    def analytic_param_count(self) -> int:
        return sum(layer_param_count(s) for s in self.specs)

    def parameters(self):
        """``(key, array)`` pairs in a stable order."""
        out = []
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((f"layer{i}.{name}", layer.params[name]))
        return out

    def gradients(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((f"layer{i}.{name}", layer.grads[name]))
        return out

    def set_parameters(self, tensors: dict) -> None:
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                src = np.asarray(tensors[f"layer{i}.{name}"])
                if src.shape != p.shape:
                    raise DimensionError(
                        f"layer{i}.{name}: shape {src.shape} != expected {p.shape}")
                layer.params[name] = src.astype(self.dtype)

    def astype(self, dtype) -> "NetworkModel":
        """Copy of the model with parameters cast to ``dtype``."""
        clone = NetworkModel(self.specs, self.input_shape, self.layout, self.name,
                             self.seed, dtype)
        clone.set_parameters(dict(self.parameters()))
        return clone

    def _prepare(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if self.is_spatial and x.ndim == len(self.input_shape):
            x = x[..., None]
        if x.shape[1:] != self.input_shape:
            raise DimensionError(
                f"{self.name}: input shape {x.shape[1:]} != expected {self.input_shape}")
        return x

    def forward_map(self, x, cache: bool = False):
        """Output of the layer stack, before the head."""
        h = self._prepare(x)
        for layer in self.layers:
            h = layer.forward(h, cache=cache)
        return h

    def forward(self, x, cache: bool = False):
        """Class scores ``(N, c)``; softmax is left to the loss."""
        h = self.forward_map(x, cache=cache)
        return self.head.forward(h) if self.head is not None else h

    def backward(self, dscores):
        g = self.head.backward(dscores) if self.head is not None else dscores
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def final_map(self, x) -> np.ndarray:
        if not self.is_spatial:
            raise UnsupportedOperationError(f"{self.name} has no spatial output map")
        return self.forward_map(x)[..., 0]

    def describe(self) -> list:
        rows = []
        for spec, shape, layer in zip(self.specs, self.shapes[1:], self.layers):
            rows.append((spec.kind, spec.kernel, shape, layer.param_count()))
        return rows


def _plane_input(layout: ClassLayout) -> tuple:
    return layout.plane_shape + (1,)


def build_csen1(layout: ClassLayout, seed: int = 0, dtype=np.float32) -> NetworkModel:
    specs = [conv(1, 48), RELU, conv(48, 24), RELU, conv(24, 1)]
    return NetworkModel(specs, _plane_input(layout), layout, "csen1", seed, dtype)


def build_csen2(layout: ClassLayout, seed: int = 0, dtype=np.float32) -> NetworkModel:
    if layout.plane_rows % 2 or layout.plane_cols % 2:
        raise DimensionError(
            f"csen2 needs even plane dims, got {layout.plane_shape}")
    # stride-2 transposed 3x3 conv spans 2H+1 cells; dropping the last one
    # doubles the pooled size exactly
    up = LayerSpec("transposed_conv2d", 24, 24, (3, 3), 2, (0, 1))
    specs = [conv(1, 48), RELU, MAXPOOL, conv(48, 24), RELU, up, RELU, conv(24, 1)]
    return NetworkModel(specs, _plane_input(layout), layout, "csen2", seed, dtype)


def build_reconnet_baseline(layout: ClassLayout, seed: int = 0,
                            dtype=np.float32) -> NetworkModel:
    block = [conv(1, 64, 11), RELU, conv(64, 32, 1), RELU, conv(32, 1, 7)]
    specs = block + [RELU] + block
    return NetworkModel(specs, _plane_input(layout), layout, "reconnet", seed, dtype)


DEFAULT_MLP_HIDDEN = (512, 256, 128, 64)


def build_mlp(input_dim: int, hidden: Sequence[int] = DEFAULT_MLP_HIDDEN, c: int = 4,
              seed: int = 0, dtype=np.float32) -> NetworkModel:
    widths = [int(input_dim)] + [int(h) for h in hidden] + [int(c)]
    if min(widths) < 1:
        raise DimensionError(f"layer widths must be positive, got {widths}")
    specs = []
    for a, b in zip(widths[:-1], widths[1:]):
        specs += [LayerSpec("dense", a, b), RELU]
    specs.pop()
    return NetworkModel(specs, (input_dim,), None, "mlp", seed, dtype)


BUILDERS = {
    "csen1": build_csen1,
    "csen2": build_csen2,
    "reconnet": build_reconnet_baseline,
}
