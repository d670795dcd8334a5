"""Simulated post-training quantization.

Weights use a symmetric per-tensor grid, activations an affine per-tensor
grid whose range comes from calibration. Everything is quantize-dequantize
("fake" quantization): arithmetic stays in float32, only the values are
snapped to the grid. A bit-width of 32 means the layer is left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .model.network import NetworkDef, WeightStore, check_weights, forward

QUANT_BITS = (2, 4, 8, 16)
ALLOWED_BITS = QUANT_BITS + (32,)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def _check_bits(bits, allowed=QUANT_BITS):
    if bits not in allowed:
        raise DomainError(f"bit-width {bits} not in {allowed}")


@dataclass(frozen=True)
class QuantConfig:
    per_layer_bits: tuple
    weight_scheme: str = "symmetric"
    activation_scheme: str = "affine"

    def __post_init__(self):
        bits = tuple(int(b) for b in self.per_layer_bits)
        if not bits:
            raise DomainError("a quantization config needs at least one layer")
        for b in bits:
            _check_bits(b, ALLOWED_BITS)
        object.__setattr__(self, "per_layer_bits", bits)
        if self.weight_scheme != "symmetric" or self.activation_scheme != "affine":
            raise DomainError("only symmetric weights and affine activations are supported")

    @classmethod
    def parse(cls, text: str) -> "QuantConfig":
        """Parse the ``"8-8-8-4"`` topology notation."""
        try:
            return cls(tuple(int(part) for part in text.strip().split("-")))
        except ValueError as exc:
            raise DomainError(f"cannot parse bit-width topology {text!r}") from exc

    @classmethod
    def uniform(cls, bits: int, num_layers: int) -> "QuantConfig":
        return cls((bits,) * num_layers)

    def __str__(self) -> str:
        return "-".join(str(b) for b in self.per_layer_bits)

    def __len__(self) -> int:
        return len(self.per_layer_bits)

    def to_json(self) -> dict:
        return {
            "per_layer_bits": list(self.per_layer_bits),
            "weight_scheme": self.weight_scheme,
            "activation_scheme": self.activation_scheme,
        }

    @classmethod
    def from_json(cls, d: dict) -> "QuantConfig":
        return cls(tuple(d["per_layer_bits"]), d.get("weight_scheme", "symmetric"), d.get("activation_scheme", "affine"))


def quantize_weights_symmetric(w: np.ndarray, bits: int) -> tuple[np.ndarray, float]:
    """Integer grid values and scale; ``q * scale`` is the dequantized tensor.

    The grid is symmetric, [-(2^(b-1) - 1), 2^(b-1) - 1]. An all-zero tensor
    gets scale 0 and an all-zero grid.
    """
    _check_bits(bits)
    w = np.asarray(w, dtype=np.float64)
    if not np.isfinite(w).all():
        raise DomainError("weights must be finite")
    qmax = 2 ** (bits - 1) - 1
    peak = float(np.abs(w).max()) if w.size else 0.0
    if peak == 0.0:
        return np.zeros(w.shape, dtype=np.int32), 0.0
    scale = peak / qmax
    q = np.clip(round_half_away(w / scale), -qmax, qmax).astype(np.int32)
    return q, scale


def fake_quantize_weights(w: np.ndarray, bits: int) -> np.ndarray:
    if bits == 32:
        return w
    q, scale = quantize_weights_symmetric(w, bits)
    return (q * scale).astype(np.float32)


@dataclass(frozen=True)
class AffineParams:
    scale: float
    zero_point: int
    low: float
    high: float
    bits: int

    @classmethod
    def from_range(cls, low: float, high: float, bits: int) -> "AffineParams":
        """Grid over ``[low, high]`` widened to contain 0, so zero stays exactly representable.

        Without the widening a range such as [1, 2] would clamp the zero
        point to 0 and leave most of the range off the grid.
        """
        _check_bits(bits)
        if low > high:
            raise DomainError(f"activation range min {low} exceeds max {high}")
        low, high = min(float(low), 0.0), max(float(high), 0.0)
        qmax = 2 ** bits - 1
        scale = (high - low) / qmax
        if scale == 0.0:
            return cls(0.0, 0, float(low), float(high), bits)
        zero_point = int(np.clip(round_half_away(np.float64(-low / scale)), 0, qmax))
        return cls(float(scale), zero_point, float(low), float(high), bits)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.scale == 0.0:
            return np.full(x.shape, self.low, dtype=np.float32)
        qmax = 2 ** self.bits - 1
        q = np.clip(round_half_away(x.astype(np.float64) / self.scale) + self.zero_point, 0, qmax)
        return ((q - self.zero_point) * self.scale).astype(np.float32)


def quantize_activations_affine(x: np.ndarray, stats: tuple[float, float], bits: int) -> np.ndarray:
    """Fake-quantize ``x`` on the affine grid spanning ``stats = (min, max)``."""
    low, high = stats
    return AffineParams.from_range(low, high, bits).apply(np.asarray(x))


@dataclass(frozen=True)
class CalibrationStats:
    activation_min: tuple
    activation_max: tuple
    sample_count: int

    def __post_init__(self):
        object.__setattr__(self, "activation_min", tuple(float(v) for v in self.activation_min))
        object.__setattr__(self, "activation_max", tuple(float(v) for v in self.activation_max))
        if self.sample_count <= 0:
            raise DomainError("calibration stats need at least one sample")
        if len(self.activation_min) != len(self.activation_max):
            raise DomainError("min/max lists differ in length")
        for lo, hi in zip(self.activation_min, self.activation_max):
            if lo > hi:
                raise DomainError(f"calibrated min {lo} exceeds max {hi}")

    def range_of(self, ordinal: int) -> tuple[float, float]:
        return self.activation_min[ordinal], self.activation_max[ordinal]

    def to_json(self) -> dict:
        return {
            "activation_min": list(self.activation_min),
            "activation_max": list(self.activation_max),
            "sample_count": self.sample_count,
        }


def calibrate(net: NetworkDef, weights: WeightStore, calib_images: np.ndarray, batch_size: int = 256) -> CalibrationStats:
    """Running min/max of every quantizable layer's output over the calibration images.

    Pass images drawn with :func:`quantscore.data.sample_calibration`.
    """
    if hasattr(calib_images, "images"):
        calib_images = calib_images.images
    if len(calib_images) == 0:
        raise DomainError("calibration set is empty")
    n_layers = len(net.quantizable_indices)
    lows = [np.inf] * n_layers
    highs = [-np.inf] * n_layers

    def observe(ordinal, _index, x):
        lows[ordinal] = min(lows[ordinal], float(x.min()))
        highs[ordinal] = max(highs[ordinal], float(x.max()))
        return x

    for start in range(0, len(calib_images), batch_size):
        forward(net, weights, calib_images[start:start + batch_size], act_hook=observe)
    return CalibrationStats(tuple(lows), tuple(highs), len(calib_images))


class QuantizedModel:
    """A network with fake-quantized weights and activation quantizers.

    Immutable after construction; :meth:`forward` only reads state.
    """

    def __init__(self, net: NetworkDef, weights: WeightStore, act_params: Sequence, config: QuantConfig):
        self.net = net
        self.weights = weights
        self.act_params = tuple(act_params)
        self.config = config

    def _hook(self, ordinal, _index, x):
        params = self.act_params[ordinal]
        return x if params is None else params.apply(x)

    def forward(self, batch: np.ndarray) -> np.ndarray:
        if all(p is None for p in self.act_params):
            return forward(self.net, self.weights, batch)
        return forward(self.net, self.weights, batch, act_hook=self._hook)


def apply_quantization(
    net: NetworkDef,
    weights: WeightStore,
    config: QuantConfig,
    stats: CalibrationStats | None,
) -> QuantizedModel:
    check_weights(net, weights)
    indices = net.quantizable_indices
    if len(config) != len(indices):
        raise DomainError(f"config has {len(config)} bit-widths but the network has {len(indices)} quantizable layers")
    qweights: WeightStore = {}
    act_params = []
    for ordinal, (index, bits) in enumerate(zip(indices, config.per_layer_bits)):
        if bits == 32:
            qweights[index] = weights[index]
            act_params.append(None)
            continue
        if stats is None or ordinal >= len(stats.activation_min):
            raise DomainError(f"no calibration range for quantizable layer {ordinal}")
        qweights[index] = {
            "weight": fake_quantize_weights(weights[index]["weight"], bits),
            # biases stay in float32, as integer pipelines keep them at 32 bits
            "bias": weights[index]["bias"],
        }
        act_params.append(AffineParams.from_range(*stats.range_of(ordinal), bits))
    return QuantizedModel(net, qweights, act_params, config)


def compression_ratio(config: QuantConfig, mode: str = "uniform", net: NetworkDef | None = None) -> float:
    """Storage compression relative to 32-bit floats.

    ``uniform``: 32/b, defined only when every layer shares b.
    ``geometric``: 32 / mean(per-layer bits), the GA's unweighted form.
    ``size_weighted``: 32 / parameter-weighted mean bits (weights only; needs ``net``).
    """
    bits = config.per_layer_bits
    if mode == "uniform":
        if len(set(bits)) != 1:
            raise DomainError(f"uniform compression is undefined for mixed config {config}")
        return 32.0 / bits[0]
    if mode == "geometric":
        return 32.0 / (sum(bits) / len(bits))
    if mode == "size_weighted":
        if net is None:
            raise DomainError("size-weighted compression needs the network definition")
        counts = [int(np.prod(net.param_shapes(i)["weight"])) for i in net.quantizable_indices]
        if len(counts) != len(bits):
            raise DomainError("config length does not match the network")
        return 32.0 * sum(counts) / sum(b * c for b, c in zip(bits, counts))
    raise DomainError(f"unknown compression mode {mode!r}")
