"""Network construction from an architecture document.

The generator is built exactly as the document describes: n downconv stages
(4x4 stride 2), n upconv stages, and concatenating skip connections where the
skip bit is 1.  Construction re-derives the channel arithmetic from the
document's own layer list and fails loudly, naming the layer, on any
mismatch -- a corrupted document must never train silently.

Block ordering follows the standard image-translation U-Net: the outermost
encoder stage is a bare convolution, inner encoder stages are
LeakyReLU-conv-norm (no norm at the bottleneck), decoder stages are
ReLU-deconv-norm with dropout on the innermost three, and the output stage
ends in tanh.  Normalization layers add a small number of parameters on top
of the document's conv weights; nothing else does.

The discriminator is a fixed conditional patch classifier and is not part
of the searched description.
"""

from __future__ import annotations

import json
from importlib import resources

import torch
from torch import nn

KERNEL = 4
STRIDE = 2


class DocumentError(ValueError):
    """Architecture document is malformed or internally inconsistent."""


def load_defaults() -> dict:
    with resources.files("evounet_trainer").joinpath("defaults.json").open() as fh:
        return json.load(fh)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DocumentError(message)


def validate_document(document: dict) -> tuple[list[dict], list[dict], list[int]]:
    """Check the document's layer table against its own wiring rules.

    Returns (encoder_layers, decoder_layers, skips); decoder layers come in
    computation order (innermost first).
    """
    try:
        layers = document["layers"]
        skips = [int(b) for b in document["skips"]]
        image_channels = int(document["image_channels"])
        image_resolution = int(document["image_resolution"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"missing or malformed document field: {exc}")

    _require(len(layers) % 2 == 0 and len(layers) >= 2, "layer count must be even")
    depth = len(layers) // 2
    _require(len(skips) == depth - 1, f"expected {depth - 1} skip bits, got {len(skips)}")

    encoders = layers[:depth]
    decoders = layers[depth:]
    for k, layer in enumerate(encoders, start=1):
        name = f"E{k}"
        _require(layer["kind"] == "downconv", f"layer {name}: expected kind downconv")
        _require(layer["index"] == k, f"layer {name}: index out of order")
        _require(
            layer["kernel"] == KERNEL and layer["stride"] == STRIDE,
            f"layer {name}: kernel/stride must be {KERNEL}/{STRIDE}",
        )
        expected_in = image_channels if k == 1 else encoders[k - 2]["out_channels"]
        _require(
            layer["in_channels"] == expected_in,
            f"layer {name}: expected in_channels {expected_in}, "
            f"document says {layer['in_channels']}",
        )
        _require(
            layer["out_resolution"] * 2 == layer["in_resolution"],
            f"layer {name}: downconv must halve the resolution",
        )
    for i, layer in enumerate(decoders):
        k = depth - i
        name = f"D{k}"
        _require(layer["kind"] == "upconv", f"layer {name}: expected kind upconv")
        _require(layer["index"] == k, f"layer {name}: index out of order")
        if k == depth:
            expected_in = encoders[-1]["out_channels"]
        else:
            expected_in = decoders[i - 1]["out_channels"]
            if skips[k - 1]:
                expected_in += encoders[k - 1]["out_channels"]
        _require(
            layer["in_channels"] == expected_in,
            f"layer {name}: expected in_channels {expected_in}, "
            f"document says {layer['in_channels']}",
        )
        expected_out = image_channels if k == 1 else encoders[k - 2]["out_channels"]
        _require(
            layer["out_channels"] == expected_out,
            f"layer {name}: expected out_channels {expected_out}, "
            f"document says {layer['out_channels']}",
        )
        _require(
            layer["in_resolution"] * 2 == layer["out_resolution"],
            f"layer {name}: upconv must double the resolution",
        )
    _require(
        encoders[0]["in_resolution"] == image_resolution
        and decoders[-1]["out_resolution"] == image_resolution,
        "layer resolutions do not span the image resolution",
    )
    return encoders, decoders, skips


class GeneratorFromDocument(nn.Module):
    """Encoder-decoder generator instantiated from an architecture document."""

    def __init__(self, document: dict, dropout: float = 0.5):
        super().__init__()
        encoders, decoders, skips = validate_document(document)
        self.depth = len(encoders)
        self.skip_bits = skips

        down = []
        for k, layer in enumerate(encoders, start=1):
            block: list[nn.Module] = []
            if k > 1:
                block.append(nn.LeakyReLU(0.2, inplace=True))
            block.append(
                nn.Conv2d(layer["in_channels"], layer["out_channels"], KERNEL, STRIDE, 1)
            )
            if 1 < k < self.depth:
                block.append(nn.BatchNorm2d(layer["out_channels"]))
            down.append(nn.Sequential(*block))
        self.down_blocks = nn.ModuleList(down)

        up = []
        for i, layer in enumerate(decoders):
            k = self.depth - i
            block = [
                nn.ReLU(inplace=True),
                nn.ConvTranspose2d(
                    layer["in_channels"], layer["out_channels"], KERNEL, STRIDE, 1
                ),
            ]
            if k > 1:
                block.append(nn.BatchNorm2d(layer["out_channels"]))
                if k >= self.depth - 2 and dropout > 0:
                    block.append(nn.Dropout(dropout))
            else:
                block.append(nn.Tanh())
            up.append(nn.Sequential(*block))
        self.up_blocks = nn.ModuleList(up)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = []
        h = x
        for block in self.down_blocks:
            h = block(h)
            features.append(h)
        for i, block in enumerate(self.up_blocks):
            k = self.depth - i
            if k < self.depth and self.skip_bits[k - 1]:
                h = torch.cat([h, features[k - 1]], dim=1)
            h = block(h)
        return h

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


class PatchDiscriminator(nn.Module):
    """Fixed conditional patch classifier over concat(source, target)."""

    MIN_RESOLUTION = 32

    def __init__(self, image_channels: int = 3, base: int = 64):
        super().__init__()
        c = base
        self.net = nn.Sequential(
            nn.Conv2d(2 * image_channels, c, KERNEL, STRIDE, 1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(c, 2 * c, KERNEL, STRIDE, 1),
            nn.BatchNorm2d(2 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * c, 4 * c, KERNEL, STRIDE, 1),
            nn.BatchNorm2d(4 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(4 * c, 8 * c, KERNEL, 1, 1),
            nn.BatchNorm2d(8 * c),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(8 * c, 1, KERNEL, 1, 1),
        )

    def forward(self, source: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([source, target], dim=1))
