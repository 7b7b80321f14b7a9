"""Sample and dataset representations, disk ingestion, caption transform.

Datasets are UTF-8 JSONL files, one record per line::

    {"id": str, "text": str, "label": 0|1,
     "image": {"pgm": relative-path} | {"width": int, "height": int, "pixels": [int, ...]},
     "caption": str (optional), "celebrities": [str, ...] (optional)}

Confounder files use the same fields plus ``group_id`` and ``role``
(one of original / text_confounder / image_confounder). Referenced PGM
files are binary P5 with maxval 255, resolved relative to the dataset file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    DuplicateIdError,
    EmptyInputError,
    IncompleteGroupError,
    MalformedRecordError,
    MissingFileError,
    PixelOutOfRangeError,
    RoleInvariantViolatedError,
)

DEFAULT_SEPARATOR = " "

_ROLES = ("original", "text_confounder", "image_confounder")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Grayscale image; ``pixels`` is a read-only uint8 array of shape (h, w)."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be 2-D and non-empty, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            vals = np.asarray(arr, dtype=np.int64)
            if vals.min() < 0 or vals.max() > 255:
                raise PixelOutOfRangeError(
                    f"intensities must lie in [0, 255], got [{vals.min()}, {vals.max()}]"
                )
            arr = vals.astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_flat(cls, width: int, height: int, flat) -> "GrayImage":
        flat = list(flat)
        if width < 1 or height < 1 or len(flat) != width * height:
            raise ValueError(f"pixel count {len(flat)} != {width}x{height}")
        return cls(np.asarray(flat, dtype=np.int64).reshape(height, width))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def mean(self) -> float:
        return float(self.pixels.mean())

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )


@dataclass(frozen=True)
class Meme:
    """One sample: overlaid text, grayscale image, optional metadata, binary label."""

    id: str
    text: str
    image: GrayImage
    label: int
    caption: str | None = None
    celebrities: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("meme id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"meme {self.id!r}: text empty after trimming")
        if self.label not in (0, 1):
            raise ValueError(f"meme {self.id!r}: label must be 0 or 1, got {self.label!r}")
        if self.celebrities is not None:
            object.__setattr__(self, "celebrities", tuple(self.celebrities))


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    samples: tuple[Meme, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for m in self.samples:
            if m.id in seen:
                raise DuplicateIdError(m.id)
            seen.add(m.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Meme]:
        return iter(self.samples)

    def __getitem__(self, i) -> Meme:
        return self.samples[i]

    def labels(self) -> list[int]:
        return [m.label for m in self.samples]


@dataclass(frozen=True)
class ConfounderGroup:
    """A hateful original plus its benign text- and image-confounder variants.

    The text confounder keeps the original image (pixel-equal) with edited
    text; the image confounder keeps the original text (string-equal) with a
    swapped image. Captions and celebrity names ride on each member and feed
    the extended (+) evaluation sets.
    """

    group_id: str
    original: Meme
    text_confounder: Meme
    image_confounder: Meme

    def __post_init__(self):
        if self.original.label != 1:
            raise RoleInvariantViolatedError(self.group_id, "original must be labeled hateful (1)")
        if self.text_confounder.image != self.original.image:
            raise RoleInvariantViolatedError(
                self.group_id, "text_confounder image differs from original image"
            )
        if self.image_confounder.text != self.original.text:
            raise RoleInvariantViolatedError(
                self.group_id, "image_confounder text differs from original text"
            )


@dataclass(frozen=True)
class ConfounderEvalSets:
    """Aligned evaluation sets; index i of every set derives from groups[i]."""

    text_set: LabeledDataset
    image_set: LabeledDataset
    text_set_extended: LabeledDataset
    image_set_extended: LabeledDataset


# --- PGM -------------------------------------------------------------------


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM file with maxval 255."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(str(path))
    data = path.read_bytes()
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError(f"{path}: truncated PGM header")
        fields.append(data[start:i])
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: maxval must be 255, got {maxval}")
    i += 1  # single whitespace byte after maxval
    raster = data[i : i + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: raster has {len(raster)} bytes, expected {width * height}")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def write_pgm(image: GrayImage, path) -> None:
    path = Path(path)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    path.write_bytes(header + image.pixels.tobytes())


# --- JSONL ingestion -------------------------------------------------------


def _image_from_record(rec: dict, base_dir: Path) -> GrayImage:
    img = rec["image"]
    if not isinstance(img, dict):
        raise ValueError("image must be an object")
    if "pgm" in img:
        return read_pgm(base_dir / img["pgm"])
    return GrayImage.from_flat(int(img["width"]), int(img["height"]), img["pixels"])


def _meme_from_record(rec: dict, base_dir: Path) -> Meme:
    celebs = rec.get("celebrities")
    return Meme(
        id=str(rec["id"]),
        text=str(rec["text"]),
        image=_image_from_record(rec, base_dir),
        label=int(rec["label"]),
        caption=rec.get("caption"),
        celebrities=tuple(celebs) if celebs is not None else None,
    )


def _iter_records(path: Path):
    if not path.exists():
        raise MissingFileError(str(path))
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(path, line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise MalformedRecordError(path, line_no, "record is not a JSON object")
            yield line_no, rec


def load_dataset(path) -> LabeledDataset:
    """Load a JSONL dataset; sample order is preserved from the file."""
    path = Path(path)
    samples = []
    seen: set[str] = set()
    for line_no, rec in _iter_records(path):
        try:
            meme = _meme_from_record(rec, path.parent)
        except (PixelOutOfRangeError, MissingFileError, DuplicateIdError):
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecordError(path, line_no, str(exc)) from exc
        if meme.id in seen:
            raise DuplicateIdError(meme.id)
        seen.add(meme.id)
        samples.append(meme)
    return LabeledDataset(name=path.stem, samples=tuple(samples))


def _meme_to_record(meme: Meme) -> dict:
    rec = {
        "id": meme.id,
        "text": meme.text,
        "label": meme.label,
        "image": {
            "width": meme.image.width,
            "height": meme.image.height,
            "pixels": [int(v) for v in meme.image.pixels.ravel()],
        },
    }
    if meme.caption is not None:
        rec["caption"] = meme.caption
    if meme.celebrities is not None:
        rec["celebrities"] = list(meme.celebrities)
    return rec


def save_dataset(dataset: LabeledDataset, path) -> None:
    """Write a dataset as JSONL with inline pixels (round-trips via load_dataset)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for meme in dataset:
            fh.write(json.dumps(_meme_to_record(meme), sort_keys=True) + "\n")


def load_confounders(path) -> list[ConfounderGroup]:
    """Load confounder groups; every group must supply all three roles."""
    path = Path(path)
    by_group: dict[str, dict[str, Meme]] = {}
    order: list[str] = []
    for line_no, rec in _iter_records(path):
        try:
            group_id = str(rec["group_id"])
            role = rec["role"]
            if role not in _ROLES:
                raise ValueError(f"unknown role {role!r}")
            meme = _meme_from_record(rec, path.parent)
        except (PixelOutOfRangeError, MissingFileError):
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecordError(path, line_no, str(exc)) from exc
        if group_id not in by_group:
            by_group[group_id] = {}
            order.append(group_id)
        if role in by_group[group_id]:
            raise MalformedRecordError(path, line_no, f"duplicate role {role!r} in group {group_id!r}")
        by_group[group_id][role] = meme
    groups = []
    for gid in order:
        roles = by_group[gid]
        missing = set(_ROLES) - set(roles)
        if missing:
            raise IncompleteGroupError(gid, missing)
        groups.append(
            ConfounderGroup(
                group_id=gid,
                original=roles["original"],
                text_confounder=roles["text_confounder"],
                image_confounder=roles["image_confounder"],
            )
        )
    return groups


def save_confounders(groups: list[ConfounderGroup], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for g in groups:
            for role in _ROLES:
                rec = _meme_to_record(getattr(g, role))
                rec["group_id"] = g.group_id
                rec["role"] = role
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# --- transforms ------------------------------------------------------------


def augment_with_caption(meme: Meme, separator: str = DEFAULT_SEPARATOR) -> Meme:
    """Append the caption to the text; identity when the caption is absent/empty.

    Not idempotent when a caption is present: applying it twice appends the
    caption twice.
    """
    if not meme.caption:
        return meme
    return replace(meme, text=meme.text + separator + meme.caption)


def _extended_text(meme: Meme, separator: str) -> str:
    parts = [meme.text]
    if meme.caption:
        parts.append(meme.caption)
    if meme.celebrities:
        parts.extend(meme.celebrities)
    return separator.join(parts)


def build_confounder_eval_sets(
    groups: list[ConfounderGroup], separator: str = DEFAULT_SEPARATOR
) -> ConfounderEvalSets:
    """Assemble the four aligned confounder evaluation sets.

    The plain sets collect the text/image confounder memes; the extended
    sets additionally append each meme's caption and celebrity names to its
    text (order: text, caption, names).
    """
    if not groups:
        raise EmptyInputError("no confounder groups given")
    text_memes = tuple(g.text_confounder for g in groups)
    image_memes = tuple(g.image_confounder for g in groups)
    text_ext = tuple(
        replace(m, text=_extended_text(m, separator)) for m in text_memes
    )
    image_ext = tuple(
        replace(m, text=_extended_text(m, separator)) for m in image_memes
    )
    return ConfounderEvalSets(
        text_set=LabeledDataset("T", text_memes),
        image_set=LabeledDataset("I", image_memes),
        text_set_extended=LabeledDataset("T_plus", text_ext),
        image_set_extended=LabeledDataset("I_plus", image_ext),
    )
