"""Small deterministic conv/pool network used as the feature extractor.

Weights are drawn from numpy's PCG64 generator seeded with the spec seed:
for each conv layer, in order, a standard-normal (out, in, k, k) block is
drawn in C order and scaled by sqrt(2 / (in * k * k)); biases are zero.
Same seed, same weights, on every platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FeatureMap, PixelBox, ValidationError, resize_nearest
from .formats import save_feature_map
from .netgeom import LayerSpec


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel: int
    stride: int
    pad: int
    in_channels: int
    out_channels: int

    def __post_init__(self):
        LayerSpec("conv", self.kernel, self.stride, self.pad)  # geometry checks
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValidationError("conv channel counts must be >= 1")


@dataclass(frozen=True)
class PoolLayerSpec:
    kernel: int
    stride: int
    pad: int

    def __post_init__(self):
        LayerSpec("pool", self.kernel, self.stride, self.pad)
        if self.pad >= self.kernel:
            raise ValidationError("pool pad must be smaller than its kernel")


@dataclass(frozen=True)
class ToyNetSpec:
    layers: tuple
    seed: int

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        channels = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayerSpec):
                if channels is not None and layer.in_channels != channels:
                    raise ValidationError(
                        f"layer {i}: expects {layer.in_channels} input channels "
                        f"but the previous layer produces {channels}"
                    )
                channels = layer.out_channels
        if channels is None:
            raise ValidationError("network needs at least one conv layer")
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def in_channels(self) -> int:
        for layer in self.layers:
            if isinstance(layer, ConvLayerSpec):
                return layer.in_channels
        raise ValidationError("network has no conv layer to fix input channels")

    @property
    def out_channels(self) -> int:
        channels = self.in_channels
        for layer in self.layers:
            if isinstance(layer, ConvLayerSpec):
                channels = layer.out_channels
        return channels

    def geometry_layers(self) -> list[LayerSpec]:
        return [
            LayerSpec(
                "conv" if isinstance(l, ConvLayerSpec) else "pool",
                l.kernel,
                l.stride,
                l.pad,
            )
            for l in self.layers
        ]


@dataclass(frozen=True, eq=False)
class ToyNet:
    spec: ToyNetSpec
    weights: tuple  # (w, b) per conv layer, None per pool layer


def default_spec(in_channels: int = 3, seed: int = 0) -> ToyNetSpec:
    """Three stride-2 conv layers; cumulative stride 8, receptive field 15."""
    chans = (in_channels, 8, 16, 32)
    layers = tuple(
        ConvLayerSpec(3, 2, 1, chans[i], chans[i + 1]) for i in range(3)
    )
    return ToyNetSpec(layers, seed)


def init_toynet(spec: ToyNetSpec) -> ToyNet:
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    weights = []
    for layer in spec.layers:
        if isinstance(layer, ConvLayerSpec):
            fan_in = layer.in_channels * layer.kernel * layer.kernel
            w = rng.standard_normal(
                (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            ) * np.sqrt(2.0 / fan_in)
            b = np.zeros(layer.out_channels, dtype=np.float32)
            weights.append((w.astype(np.float32), b))
        else:
            weights.append(None)
    return ToyNet(spec, tuple(weights))


def _conv2d(x: np.ndarray, layer: ConvLayerSpec, w: np.ndarray, b: np.ndarray,
            index: int) -> np.ndarray:
    c, h, w_in = x.shape
    spec = LayerSpec("conv", layer.kernel, layer.stride, layer.pad)
    out_h, out_w = spec.out_len(h), spec.out_len(w_in)
    if out_h < 1 or out_w < 1:
        raise ValidationError(
            f"layer {index} (conv k={layer.kernel}): input {h}x{w_in} too small"
        )
    p = layer.pad
    xp = np.zeros((c, h + 2 * p, w_in + 2 * p), dtype=np.float32)
    xp[:, p : p + h, p : p + w_in] = x
    out = np.zeros((layer.out_channels, out_h, out_w), dtype=np.float32)
    s = layer.stride
    for dy in range(layer.kernel):
        for dx in range(layer.kernel):
            view = xp[:, dy : dy + (out_h - 1) * s + 1 : s,
                      dx : dx + (out_w - 1) * s + 1 : s]
            out += np.einsum("oc,chw->ohw", w[:, :, dy, dx], view)
    return out + b[:, None, None]


def _maxpool(x: np.ndarray, layer: PoolLayerSpec, index: int) -> np.ndarray:
    c, h, w_in = x.shape
    spec = LayerSpec("pool", layer.kernel, layer.stride, layer.pad)
    out_h, out_w = spec.out_len(h), spec.out_len(w_in)
    if out_h < 1 or out_w < 1:
        raise ValidationError(
            f"layer {index} (pool k={layer.kernel}): input {h}x{w_in} too small"
        )
    p = layer.pad
    xp = np.full((c, h + 2 * p, w_in + 2 * p), -np.inf, dtype=np.float32)
    xp[:, p : p + h, p : p + w_in] = x
    out = np.full((c, out_h, out_w), -np.inf, dtype=np.float32)
    s = layer.stride
    for dy in range(layer.kernel):
        for dx in range(layer.kernel):
            view = xp[:, dy : dy + (out_h - 1) * s + 1 : s,
                      dx : dx + (out_w - 1) * s + 1 : s]
            np.maximum(out, view, out=out)
    return out


def forward(net: ToyNet, image: FeatureMap) -> FeatureMap:
    """Full forward pass: conv layers are followed by a rectifier."""
    if image.channels != net.spec.in_channels:
        raise ValidationError(
            f"image has {image.channels} channels, network expects "
            f"{net.spec.in_channels}"
        )
    x = image.values
    for i, (layer, params) in enumerate(zip(net.spec.layers, net.weights)):
        if isinstance(layer, ConvLayerSpec):
            w, b = params
            x = np.maximum(_conv2d(x, layer, w, b, i), 0.0)
        else:
            x = _maxpool(x, layer, i)
    return FeatureMap(x)


def forward_region(
    net: ToyNet, image: FeatureMap, box: PixelBox, warp_side: int
) -> FeatureMap:
    """Crop-and-warp baseline: crop the box, warp it square, run forward."""
    if box.x1 >= image.width or box.y1 >= image.height:
        raise ValidationError(f"box {box} exceeds image {image.height}x{image.width}")
    if warp_side < 1:
        raise ValidationError("warp side must be >= 1")
    crop = image.values[:, box.y0 : box.y1 + 1, box.x0 : box.x1 + 1]
    warped = resize_nearest(crop, warp_side, warp_side)
    return forward(net, FeatureMap(warped))


def export_weights(net: ToyNet, out_dir: Path | str) -> list[Path]:
    """Dump each conv layer's kernel bank as a tensor file for inspection."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, params in enumerate(net.weights):
        if params is None:
            continue
        w, _ = params
        o, c, kh, kw = w.shape
        path = out_dir / f"layer_{i:02d}_weights.cfmt"
        save_feature_map(path, FeatureMap(w.reshape(o, c * kh, kw)))
        written.append(path)
    return written


def spec_from_json(obj) -> ToyNetSpec:
    layers = []
    for entry in obj["layers"]:
        kind = entry["kind"]
        if kind == "conv":
            layers.append(
                ConvLayerSpec(
                    int(entry["kernel"]),
                    int(entry["stride"]),
                    int(entry["pad"]),
                    int(entry["in_channels"]),
                    int(entry["out_channels"]),
                )
            )
        elif kind == "pool":
            layers.append(
                PoolLayerSpec(
                    int(entry["kernel"]), int(entry["stride"]), int(entry["pad"])
                )
            )
        else:
            raise ValidationError(f"unknown layer kind {kind!r}")
    return ToyNetSpec(tuple(layers), int(obj.get("seed", 0)))


def spec_to_json(spec: ToyNetSpec) -> dict:
    layers = []
    for layer in spec.layers:
        if isinstance(layer, ConvLayerSpec):
            layers.append(
                {
                    "kind": "conv",
                    "kernel": layer.kernel,
                    "stride": layer.stride,
                    "pad": layer.pad,
                    "in_channels": layer.in_channels,
                    "out_channels": layer.out_channels,
                }
            )
        else:
            layers.append(
                {
                    "kind": "pool",
                    "kernel": layer.kernel,
                    "stride": layer.stride,
                    "pad": layer.pad,
                }
            )
    return {"seed": spec.seed, "layers": layers}


def load_spec(path: Path | str) -> ToyNetSpec:
    return spec_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
