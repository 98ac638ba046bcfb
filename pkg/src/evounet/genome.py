"""Search space and genome representation.

A generator variant is identified by a pair of fixed-length codes:

    channel code c1  -- output channel count of each encoder stage,
                        drawn from the channel alphabet (default
                        {64, 128, 256, 512}, 8 positions)
    skip code c2     -- one bit per mirrored encoder/decoder pair,
                        1 keeps the concatenating skip connection
                        (7 positions; the bottleneck pair has none)

Canonical text form: "64,128,256,512,512,512,512,512|1,1,1,1,1,1,1"
(comma-separated decimals, '|' between codes, no whitespace).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GenomeFormatError, SpaceSizeOverflowError, UnsupportedSpaceError

DEFAULT_CHANNEL_CHOICES = (64, 128, 256, 512)
DEFAULT_CODE_LENGTH = 8

_INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class SearchSpace:
    """Alphabets and code lengths defining one family of genomes."""

    channel_choices: tuple[int, ...] = DEFAULT_CHANNEL_CHOICES
    skip_choices: tuple[int, ...] = (0, 1)
    channel_code_length: int = DEFAULT_CODE_LENGTH
    skip_code_length: int = DEFAULT_CODE_LENGTH - 1

    def __post_init__(self):
        object.__setattr__(self, "channel_choices", tuple(self.channel_choices))
        object.__setattr__(self, "skip_choices", tuple(self.skip_choices))
        if not self.channel_choices:
            raise ValueError("channel_choices must be non-empty")
        if any(c < 1 for c in self.channel_choices):
            raise ValueError("channel choices must all be >= 1")
        if list(self.channel_choices) != sorted(set(self.channel_choices)):
            raise ValueError("channel_choices must be strictly increasing")
        if self.skip_choices != (0, 1):
            raise ValueError("skip_choices must be exactly (0, 1)")
        if self.channel_code_length < 1:
            raise ValueError("channel_code_length must be >= 1")
        if self.skip_code_length != self.channel_code_length - 1:
            raise ValueError(
                "skip_code_length must be channel_code_length - 1 "
                f"(got {self.skip_code_length} for {self.channel_code_length} stages)"
            )


@dataclass(frozen=True)
class Genome:
    """One point of the search space: a (channel code, skip code) pair."""

    channel_code: tuple[int, ...]
    skip_code: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "channel_code", tuple(self.channel_code))
        object.__setattr__(self, "skip_code", tuple(self.skip_code))


def default_space() -> SearchSpace:
    """The space searched by default: 4 channel choices x 8 stages, 7 skips."""
    return SearchSpace()


def validate_genome(genome: Genome, space: SearchSpace) -> None:
    """Raise GenomeFormatError unless `genome` belongs to `space`."""
    if len(genome.channel_code) != space.channel_code_length:
        raise GenomeFormatError(
            f"channel code has length {len(genome.channel_code)}, "
            f"expected {space.channel_code_length}"
        )
    if len(genome.skip_code) != space.skip_code_length:
        raise GenomeFormatError(
            f"skip code has length {len(genome.skip_code)}, "
            f"expected {space.skip_code_length}"
        )
    allowed = set(space.channel_choices)
    for pos, value in enumerate(genome.channel_code, start=1):
        if value not in allowed:
            raise GenomeFormatError(
                f"value {value} at c1 position {pos} is not in the channel alphabet "
                f"{space.channel_choices}"
            )
    for pos, bit in enumerate(genome.skip_code, start=1):
        if bit not in (0, 1):
            raise GenomeFormatError(f"value {bit} at c2 position {pos} is not a bit")


def search_space_size(space: SearchSpace) -> int:
    """Number of distinct genomes: |choices|^L_c1 * 2^L_c2."""
    size = len(space.channel_choices) ** space.channel_code_length
    size *= 2**space.skip_code_length
    if size > _INT64_MAX:
        raise SpaceSizeOverflowError(
            f"space size {size} exceeds 64-bit integer range"
        )
    return size


def baseline_genome(space: SearchSpace) -> Genome:
    """The original U-Net generator: widths 64-128-256-512 then 512 to the
    bottleneck, every skip connection present.

    Only defined for the default space.
    """
    if space != default_space():
        raise UnsupportedSpaceError(
            "baseline genome is only defined for the default search space"
        )
    return Genome(
        channel_code=(64, 128, 256, 512, 512, 512, 512, 512),
        skip_code=(1, 1, 1, 1, 1, 1, 1),
    )


def random_genome(space: SearchSpace, rng: np.random.Generator) -> Genome:
    """Sample a genome uniformly: each c1 position i.i.d. from the channel
    alphabet, each c2 bit i.i.d. from {0, 1}.  Deterministic given rng state."""
    channels = tuple(
        space.channel_choices[rng.integers(0, len(space.channel_choices))]
        for _ in range(space.channel_code_length)
    )
    skips = tuple(int(rng.integers(0, 2)) for _ in range(space.skip_code_length))
    return Genome(channel_code=channels, skip_code=skips)


def format_genome(genome: Genome) -> str:
    """Canonical text form; injective over valid genomes."""
    c1 = ",".join(str(v) for v in genome.channel_code)
    c2 = ",".join(str(b) for b in genome.skip_code)
    return f"{c1}|{c2}"


def parse_genome(text: str, space: SearchSpace) -> Genome:
    """Parse the canonical text form, validating against `space`.

    Errors name the offending code and 1-based position.
    """
    parts = text.strip().split("|")
    if len(parts) != 2:
        raise GenomeFormatError(
            f"expected exactly one '|' separating the two codes, got {len(parts) - 1}"
        )
    channels = _parse_code(parts[0], "c1")
    skips = _parse_code(parts[1], "c2") if parts[1] else []
    if parts[1] == "" and space.skip_code_length != 0:
        raise GenomeFormatError("skip code is empty")
    genome = Genome(channel_code=tuple(channels), skip_code=tuple(skips))
    validate_genome(genome, space)
    return genome


def _parse_code(text: str, name: str) -> list[int]:
    values = []
    for pos, token in enumerate(text.split(","), start=1):
        token = token.strip()
        try:
            values.append(int(token))
        except ValueError:
            raise GenomeFormatError(
                f"token {token!r} at {name} position {pos} is not an integer"
            ) from None
    return values
