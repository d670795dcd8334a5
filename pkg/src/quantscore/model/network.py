"""Network description, parameter storage and the inference/backprop drivers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from ..errors import DomainError, ShapeError
from . import layers as L

KINDS = ("conv2d", "maxpool2d", "relu", "flatten", "fully_connected")
QUANTIZABLE_KINDS = ("conv2d", "fully_connected")

# layer index -> {"weight": array, "bias": array}
WeightStore = Dict[int, Dict[str, np.ndarray]]

# called with (quantizable ordinal, layer index, activation) -> activation
ActivationHook = Callable[[int, int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LayerDef:
    kind: str
    units: int = 0  # filters for conv2d, output features for fully_connected
    kernel: int = 0
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv2d", "maxpool2d") and (self.kernel <= 0 or self.stride <= 0):
            raise DomainError(f"{self.kind} needs a positive kernel and stride")
        if self.kind in QUANTIZABLE_KINDS and self.units <= 0:
            raise DomainError(f"{self.kind} needs a positive unit count")
        if self.padding < 0:
            raise DomainError("padding must be nonnegative")

    @property
    def quantizable(self) -> bool:
        return self.kind in QUANTIZABLE_KINDS


def conv2d(filters, kernel=3, stride=1, padding=1):
    return LayerDef("conv2d", units=filters, kernel=kernel, stride=stride, padding=padding)


def maxpool2d(kernel=2, stride=None):
    return LayerDef("maxpool2d", kernel=kernel, stride=stride or kernel)


def relu():
    return LayerDef("relu")


def flatten():
    return LayerDef("flatten")


def fully_connected(units):
    return LayerDef("fully_connected", units=units)


@dataclass(frozen=True)
class NetworkDef:
    layers: tuple
    input_shape: tuple  # (channels, height, width)
    num_classes: int
    _shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "_shapes", tuple(self._infer_shapes()))

    def _infer_shapes(self):
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv2d":
                if len(shape) != 3:
                    raise ShapeError(f"conv2d expects (c, h, w) input, got {shape}", layer=i)
                c, h, w = shape
                ho = (h + 2 * layer.padding - layer.kernel) // layer.stride + 1
                wo = (w + 2 * layer.padding - layer.kernel) // layer.stride + 1
                if ho <= 0 or wo <= 0:
                    raise ShapeError(f"kernel {layer.kernel} does not fit input {shape}", layer=i)
                shape = (layer.units, ho, wo)
            elif layer.kind == "maxpool2d":
                if len(shape) != 3:
                    raise ShapeError(f"maxpool2d expects (c, h, w) input, got {shape}", layer=i)
                c, h, w = shape
                ho = (h - layer.kernel) // layer.stride + 1
                wo = (w - layer.kernel) // layer.stride + 1
                if ho <= 0 or wo <= 0:
                    raise ShapeError(f"pool {layer.kernel} does not fit input {shape}", layer=i)
                shape = (c, ho, wo)
            elif layer.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif layer.kind == "fully_connected":
                if len(shape) != 1:
                    raise ShapeError(f"fully_connected expects flat input, got {shape}", layer=i)
                shape = (layer.units,)
            out.append(shape)
        if out and out[-1] != (self.num_classes,):
            raise ShapeError(
                f"network emits {out[-1]} but num_classes is {self.num_classes}",
                layer=len(self.layers) - 1,
            )
        return out

    def output_shape(self, index: int) -> tuple:
        return self._shapes[index]

    def input_shape_of(self, index: int) -> tuple:
        return self.input_shape if index == 0 else self._shapes[index - 1]

    @property
    def quantizable_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.quantizable]

    def param_shapes(self, index: int) -> dict[str, tuple]:
        layer = self.layers[index]
        in_shape = self.input_shape_of(index)
        if layer.kind == "conv2d":
            return {
                "weight": (layer.units, in_shape[0], layer.kernel, layer.kernel),
                "bias": (layer.units,),
            }
        if layer.kind == "fully_connected":
            return {"weight": (layer.units, in_shape[0]), "bias": (layer.units,)}
        return {}

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [asdict(layer) for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkDef":
        return cls(
            tuple(LayerDef(**layer) for layer in d["layers"]),
            tuple(d["input_shape"]),
            int(d["num_classes"]),
        )

    def arch_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def simple_cnn(input_shape=(1, 28, 28), num_classes=10) -> NetworkDef:
    """Two 3x3 conv blocks (32 and 64 filters) with 2x2 pooling, then fc(128) and fc(K)."""
    return NetworkDef(
        (
            conv2d(32),
            relu(),
            maxpool2d(2),
            conv2d(64),
            relu(),
            maxpool2d(2),
            flatten(),
            fully_connected(128),
            relu(),
            fully_connected(num_classes),
        ),
        input_shape,
        num_classes,
    )


def init_weights(net: NetworkDef, seed: int = 0) -> WeightStore:
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    weights: WeightStore = {}
    for i in net.quantizable_indices:
        shapes = net.param_shapes(i)
        fan_in = int(np.prod(shapes["weight"][1:]))
        bound = 1.0 / np.sqrt(fan_in)
        weights[i] = {
            name: rng.uniform(-bound, bound, size=shape).astype(np.float32)
            for name, shape in shapes.items()
        }
    return weights


def check_weights(net: NetworkDef, weights: WeightStore) -> None:
    expected = set(net.quantizable_indices)
    if set(weights) != expected:
        raise ShapeError(f"weights cover layers {sorted(weights)}, network needs {sorted(expected)}")
    for i in expected:
        for name, shape in net.param_shapes(i).items():
            if name not in weights[i]:
                raise ShapeError(f"missing {name}", layer=i)
            if weights[i][name].shape != shape:
                raise ShapeError(f"{name} has shape {weights[i][name].shape}, expected {shape}", layer=i)


def copy_weights(weights: WeightStore) -> WeightStore:
    return {i: {k: v.copy() for k, v in params.items()} for i, params in weights.items()}


def _check_batch(net: NetworkDef, batch: np.ndarray):
    if batch.ndim != 4 or tuple(batch.shape[1:]) != net.input_shape:
        raise ShapeError(
            f"batch shape {batch.shape} does not match (n, {', '.join(map(str, net.input_shape))})",
            layer="input",
        )


def forward(
    net: NetworkDef,
    weights: WeightStore,
    batch: np.ndarray,
    act_hook: Optional[ActivationHook] = None,
) -> np.ndarray:
    """Logits for ``batch``.

    ``act_hook`` sees each quantizable layer's output; a ReLU directly after a
    conv/fc layer is fused into that layer, so the hook observes the rectified
    activation.
    """
    _check_batch(net, batch)
    x = batch
    ordinal = 0
    layers = net.layers
    i = 0
    while i < len(layers):
        layer = layers[i]
        try:
            if layer.kind == "conv2d":
                p = weights[i]
                x, _ = L.conv2d_forward(x, p["weight"], p["bias"], layer.stride, layer.padding)
            elif layer.kind == "fully_connected":
                p = weights[i]
                x, _ = L.linear_forward(x, p["weight"], p["bias"])
            elif layer.kind == "maxpool2d":
                x, _ = L.maxpool2d_forward(x, layer.kernel, layer.stride)
            elif layer.kind == "relu":
                x = np.maximum(x, x.dtype.type(0))
            elif layer.kind == "flatten":
                x = x.reshape(x.shape[0], -1)
        except (ValueError, KeyError) as exc:
            raise ShapeError(str(exc), layer=i) from exc
        if layer.quantizable:
            if i + 1 < len(layers) and layers[i + 1].kind == "relu":
                x = np.maximum(x, x.dtype.type(0))
                i += 1
            if act_hook is not None:
                x = act_hook(ordinal, i, x)
            ordinal += 1
        i += 1
    return x


def forward_train(net: NetworkDef, weights: WeightStore, batch: np.ndarray):
    """Forward pass that keeps the caches needed by :func:`backward`."""
    _check_batch(net, batch)
    x = batch
    caches = []
    for i, layer in enumerate(net.layers):
        if layer.kind == "conv2d":
            p = weights[i]
            x, cache = L.conv2d_forward(x, p["weight"], p["bias"], layer.stride, layer.padding)
        elif layer.kind == "fully_connected":
            p = weights[i]
            x, cache = L.linear_forward(x, p["weight"], p["bias"])
        elif layer.kind == "maxpool2d":
            x, cache = L.maxpool2d_forward(x, layer.kernel, layer.stride)
        elif layer.kind == "relu":
            x, cache = L.relu_forward(x)
        else:
            cache = x.shape
            x = x.reshape(x.shape[0], -1)
        caches.append(cache)
    return x, caches


def backward(net: NetworkDef, caches, dlogits: np.ndarray) -> WeightStore:
    grads: WeightStore = {}
    d = dlogits
    for i in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[i], caches[i]
        if layer.kind == "conv2d":
            d, dw, db = L.conv2d_backward(d, cache, need_dx=i > 0)
            grads[i] = {"weight": dw, "bias": db}
        elif layer.kind == "fully_connected":
            d, dw, db = L.linear_backward(d, cache)
            grads[i] = {"weight": dw, "bias": db}
        elif layer.kind == "maxpool2d":
            d = L.maxpool2d_backward(d, cache)
        elif layer.kind == "relu":
            d = L.relu_backward(d, cache)
        else:
            d = d.reshape(cache)
    return grads


class FloatModel:
    """Full-precision model: a network definition bound to its weights."""

    def __init__(self, net: NetworkDef, weights: WeightStore):
        check_weights(net, weights)
        self.net = net
        self.weights = weights

    def forward(self, batch: np.ndarray) -> np.ndarray:
        return forward(self.net, self.weights, batch)


def predict(model, images: np.ndarray, batch_size: int = 500) -> np.ndarray:
    """Class predictions; ties in the logits go to the lowest class index."""
    preds = [
        np.argmax(model.forward(images[s:s + batch_size]), axis=1)
        for s in range(0, len(images), batch_size)
    ]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate_model(model, dataset, batch_size: int = 500) -> float:
    if len(dataset) == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    preds = predict(model, dataset.images, batch_size)
    return float(np.mean(preds == dataset.labels))


def evaluate_accuracy(net: NetworkDef, weights: WeightStore, dataset, batch_size: int = 500) -> float:
    return evaluate_model(FloatModel(net, weights), dataset, batch_size)
