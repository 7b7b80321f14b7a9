"""Entity universe construction and masked-variant materialization.

A meme's entities are its text tokens followed by its image patches. The
patch count is tied to the token count: side = ceil(sqrt(num_tokens)),
patches = side**2, arranged as a banded grid whose band sizes differ by at
most one (larger bands first, top/left).
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data_model import GrayImage, Meme
from .errors import EmptyTextError, ImageTooSmallError, LengthMismatchError

DEFAULT_PLACEHOLDER = "[MASK]"

_STRIP = string.punctuation


@dataclass(frozen=True)
class TokenSequence:
    """Normalized tokens plus the character spans of the raw whitespace
    tokens they came from (spans include surrounding punctuation, so
    replacing a span swaps out the whole raw token)."""

    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]


def _normalize(raw: str) -> str:
    return raw.strip(_STRIP).lower()


def tokenize(text: str) -> TokenSequence:
    """Lowercased whitespace tokens with leading/trailing punctuation
    stripped; tokens that normalize to nothing are dropped."""
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    pos = 0
    for raw in text.split():
        start = text.index(raw, pos)
        pos = start + len(raw)
        norm = _normalize(raw)
        if norm:
            tokens.append(norm)
            spans.append((start, start + len(raw)))
    if not tokens:
        raise EmptyTextError(f"no tokens in {text!r}")
    return TokenSequence(tokens=tuple(tokens), spans=tuple(spans))


def effective_tokens(text: str, placeholder: str = DEFAULT_PLACEHOLDER) -> list[str | None]:
    """Tokens of a possibly-masked text; masked slots come back as None.

    Raw whitespace tokens equal to the placeholder are masked slots; the
    rest are normalized like :func:`tokenize`. The slot count matches the
    original meme's token count, so the entity universe is mask-invariant.
    """
    out: list[str | None] = []
    for raw in text.split():
        if raw == placeholder:
            out.append(None)
            continue
        norm = _normalize(raw)
        if norm:
            out.append(norm)
    return out


@dataclass(frozen=True)
class PatchGrid:
    """side**2 rectangles partitioning an image into contiguous bands."""

    side: int
    row_edges: tuple[int, ...]
    col_edges: tuple[int, ...]

    @property
    def total(self) -> int:
        return self.side * self.side

    def rects(self) -> list[tuple[int, int, int, int]]:
        """(row0, row1, col0, col1) per patch, row-major."""
        out = []
        for i in range(self.side):
            for j in range(self.side):
                out.append(
                    (self.row_edges[i], self.row_edges[i + 1],
                     self.col_edges[j], self.col_edges[j + 1])
                )
        return out


def band_edges(extent: int, bands: int) -> tuple[int, ...]:
    """Split ``extent`` into ``bands`` contiguous runs, sizes differing by
    at most 1, larger runs first."""
    base, extra = divmod(extent, bands)
    edges = [0]
    for b in range(bands):
        edges.append(edges[-1] + base + (1 if b < extra else 0))
    return tuple(edges)


def grid_side(num_tokens: int) -> int:
    return math.isqrt(num_tokens - 1) + 1 if num_tokens > 0 else 0


def patch_grid(image: GrayImage, num_tokens: int) -> PatchGrid:
    if num_tokens < 1:
        raise ValueError("num_tokens must be >= 1")
    side = grid_side(num_tokens)
    if side > image.height or side > image.width:
        raise ImageTooSmallError(
            f"grid side {side} exceeds image {image.width}x{image.height}"
        )
    return PatchGrid(
        side=side,
        row_edges=band_edges(image.height, side),
        col_edges=band_edges(image.width, side),
    )


@dataclass(frozen=True)
class EntityIndex:
    """Entity layout: 0..num_text-1 are tokens, then num_patch patches."""

    num_text: int
    num_patch: int

    def __post_init__(self):
        expected = grid_side(self.num_text) ** 2
        if self.num_patch != expected:
            raise ValueError(f"num_patch must be {expected} for {self.num_text} tokens")

    @property
    def total(self) -> int:
        return self.num_text + self.num_patch

    @property
    def token_indices(self) -> range:
        return range(self.num_text)

    @property
    def patch_indices(self) -> range:
        return range(self.num_text, self.total)


def entity_universe(meme: Meme) -> EntityIndex:
    tokens = tokenize(meme.text)
    grid = patch_grid(meme.image, len(tokens.tokens))
    return EntityIndex(num_text=len(tokens.tokens), num_patch=grid.total)


def full_mask(index: EntityIndex) -> np.ndarray:
    return np.ones(index.total, dtype=bool)


def empty_mask(index: EntityIndex) -> np.ndarray:
    return np.zeros(index.total, dtype=bool)


@dataclass(frozen=True)
class MaskPolicy:
    """How masked entities are neutralized.

    ``fill`` is one of zero (0), gray (the fixed ``fill_value``, default
    mid-gray 128) or mean (source image mean, rounded). Masked tokens are
    replaced by ``placeholder``; the placeholder is reserved and should not
    occur verbatim in meme texts.
    """

    fill: str = "gray"
    fill_value: int = 128
    placeholder: str = DEFAULT_PLACEHOLDER

    def __post_init__(self):
        if self.fill not in ("zero", "gray", "mean"):
            raise ValueError(f"fill must be zero, gray or mean, got {self.fill!r}")
        if not 0 <= self.fill_value <= 255:
            raise ValueError("fill_value must lie in [0, 255]")

    def fill_for(self, image: GrayImage) -> int:
        if self.fill == "zero":
            return 0
        if self.fill == "mean":
            return int(round(image.mean()))
        return self.fill_value


DEFAULT_POLICY = MaskPolicy()


@dataclass(frozen=True)
class MaskedMeme:
    """A meme after masking: placeholder tokens, neutralized patches."""

    text: str
    image: GrayImage


def materialize(meme: Meme, mask, policy: MaskPolicy = DEFAULT_POLICY) -> MaskedMeme:
    """Apply a presence mask (True = keep) to a meme.

    Unmasked content is byte-identical to the source; an all-true mask
    reproduces the meme exactly.
    """
    bits = np.asarray(mask, dtype=bool).ravel()
    tokens = tokenize(meme.text)
    grid = patch_grid(meme.image, len(tokens.tokens))
    n = len(tokens.tokens) + grid.total
    if bits.shape[0] != n:
        raise LengthMismatchError(f"mask has {bits.shape[0]} bits, universe has {n}")

    text = meme.text
    for idx in range(len(tokens.tokens) - 1, -1, -1):
        if not bits[idx]:
            start, end = tokens.spans[idx]
            text = text[:start] + policy.placeholder + text[end:]

    keep = np.ascontiguousarray(bits[len(tokens.tokens):], dtype=np.uint8)
    if keep.all():
        image = meme.image
    else:
        filled = _kernels.fill_patches(
            meme.image.pixels,
            np.asarray(grid.row_edges, dtype=np.int64),
            np.asarray(grid.col_edges, dtype=np.int64),
            keep,
            policy.fill_for(meme.image),
        )
        image = GrayImage(filled)
    return MaskedMeme(text=text, image=image)


def as_masked(meme: Meme) -> MaskedMeme:
    """View a meme as its own unmasked materialization."""
    return MaskedMeme(text=meme.text, image=meme.image)
