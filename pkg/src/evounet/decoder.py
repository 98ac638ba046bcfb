"""Genome decoding: fixed-length codes to a concrete generator description.

The generator is an encoder-decoder with n = L_c1 mirrored stages (default 8),
every convolution 4x4 stride 2, so each encoder stage halves the spatial side
and each decoder stage doubles it.  For stage k (1-based, E1 outermost):

    E_k : in  = image_channels        if k == 1 else c1[k-1]
          out = c1[k]
    D_n : in  = c1[n]                            (bottleneck, never skipped)
    D_k : in  = D_{k+1}.out + skip_k * c1[k]     for k < n
          out = c1[k-1] for k >= 2, image_channels for k == 1

Skip k concatenates the E_k output into the D_k input; skip 1 is the
outermost connection (largest feature maps).  Decoding is pure and injective:
distinct genomes produce distinct graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DocumentError, ResolutionError
from .genome import Genome, format_genome

KERNEL = 4
STRIDE = 2

DOWNCONV = "downconv"
UPCONV = "upconv"

#: JSON schema of the architecture document (the contract consumed by
#: external trainers).
ARCHITECTURE_SCHEMA = {
    "type": "object",
    "required": ["image_channels", "image_resolution", "layers", "skips", "genome"],
    "properties": {
        "image_channels": {"type": "integer", "minimum": 1},
        "image_resolution": {"type": "integer", "minimum": 2},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "kind", "index", "in_channels", "out_channels",
                    "in_resolution", "out_resolution", "kernel", "stride",
                ],
                "properties": {
                    "kind": {"enum": [DOWNCONV, UPCONV]},
                    "index": {"type": "integer", "minimum": 1},
                    "in_channels": {"type": "integer", "minimum": 1},
                    "out_channels": {"type": "integer", "minimum": 1},
                    "in_resolution": {"type": "integer", "minimum": 1},
                    "out_resolution": {"type": "integer", "minimum": 1},
                    "kernel": {"const": KERNEL},
                    "stride": {"const": STRIDE},
                },
                "additionalProperties": False,
            },
        },
        "skips": {"type": "array", "items": {"enum": [0, 1]}},
        "genome": {"type": "string"},
        "cost": {"type": "object"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class LayerSpec:
    """One convolutional layer of the generator."""

    kind: str  # DOWNCONV or UPCONV
    index: int  # stage number: E1..En or Dn..D1
    in_channels: int
    out_channels: int
    in_resolution: int
    out_resolution: int
    kernel: int = KERNEL
    stride: int = STRIDE

    @property
    def name(self) -> str:
        prefix = "E" if self.kind == DOWNCONV else "D"
        return f"{prefix}{self.index}"


@dataclass(frozen=True)
class ArchitectureGraph:
    """Layer-by-layer generator description produced by decoding a genome."""

    layers: tuple[LayerSpec, ...]  # E1..En then Dn..D1
    skips: tuple[int, ...]  # skip k wires E_k output into D_k input
    image_channels: int
    image_resolution: int
    source_genome: Genome

    @property
    def depth(self) -> int:
        return len(self.layers) // 2

    def encoder_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers[: self.depth]

    def decoder_layers(self) -> tuple[LayerSpec, ...]:
        """Decoder stages in computation order Dn..D1."""
        return self.layers[self.depth:]


def decode(
    genome: Genome, image_channels: int = 3, image_resolution: int = 256
) -> ArchitectureGraph:
    """Expand a genome into its full generator description.

    `image_resolution` must be a multiple of 2^n where n is the number of
    encoder stages, so every stage halves/doubles the side exactly.
    """
    c1 = genome.channel_code
    c2 = genome.skip_code
    n = len(c1)
    min_side = 2**n
    if image_resolution < min_side or image_resolution % min_side != 0:
        raise ResolutionError(
            f"image resolution {image_resolution} is not a multiple of 2^{n} = {min_side}"
        )

    layers: list[LayerSpec] = []
    for k in range(1, n + 1):
        layers.append(
            LayerSpec(
                kind=DOWNCONV,
                index=k,
                in_channels=image_channels if k == 1 else c1[k - 2],
                out_channels=c1[k - 1],
                in_resolution=image_resolution >> (k - 1),
                out_resolution=image_resolution >> k,
            )
        )
    prev_out = c1[n - 1]
    for k in range(n, 0, -1):
        in_channels = prev_out
        if k < n and c2[k - 1]:
            in_channels += c1[k - 1]
        out_channels = c1[k - 2] if k >= 2 else image_channels
        layers.append(
            LayerSpec(
                kind=UPCONV,
                index=k,
                in_channels=in_channels,
                out_channels=out_channels,
                in_resolution=image_resolution >> k,
                out_resolution=image_resolution >> (k - 1),
            )
        )
        prev_out = out_channels

    return ArchitectureGraph(
        layers=tuple(layers),
        skips=tuple(c2),
        image_channels=image_channels,
        image_resolution=image_resolution,
        source_genome=genome,
    )


def export_architecture(graph: ArchitectureGraph) -> dict:
    """Emit the architecture document (JSON-ready dict, see ARCHITECTURE_SCHEMA)."""
    return {
        "image_channels": graph.image_channels,
        "image_resolution": graph.image_resolution,
        "layers": [
            {
                "kind": layer.kind,
                "index": layer.index,
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "in_resolution": layer.in_resolution,
                "out_resolution": layer.out_resolution,
                "kernel": layer.kernel,
                "stride": layer.stride,
            }
            for layer in graph.layers
        ],
        "skips": list(graph.skips),
        "genome": format_genome(graph.source_genome),
    }


def import_architecture(document: dict) -> ArchitectureGraph:
    """Rebuild an ArchitectureGraph from its document form.

    The genome recorded in the document is re-decoded and the result is
    checked layer-by-layer against the document, so a corrupted or
    inconsistent document fails loudly.
    """
    try:
        genome_text = document["genome"]
        image_channels = int(document["image_channels"])
        image_resolution = int(document["image_resolution"])
        doc_layers = document["layers"]
        doc_skips = [int(b) for b in document["skips"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"architecture document missing or malformed field: {exc}")

    genome = _genome_from_text(genome_text)
    graph = decode(genome, image_channels, image_resolution)
    exported = export_architecture(graph)
    if exported["layers"] != doc_layers:
        raise DocumentError(
            "document layers are inconsistent with its genome "
            f"({genome_text!r})"
        )
    if exported["skips"] != doc_skips:
        raise DocumentError("document skips are inconsistent with its genome")
    return graph


def _genome_from_text(text: str) -> Genome:
    # Lenient parse: the document is self-describing, so no SearchSpace is
    # needed; consistency with the layer table is checked afterwards.
    try:
        c1_text, c2_text = text.split("|")
        channels = tuple(int(v) for v in c1_text.split(","))
        skips = tuple(int(v) for v in c2_text.split(",")) if c2_text else ()
    except ValueError as exc:
        raise DocumentError(f"unparseable genome string {text!r}: {exc}")
    return Genome(channel_code=channels, skip_code=skips)
