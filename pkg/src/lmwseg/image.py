"""Grayscale image / label map containers and PGM (P2/P5) input-output.

PGM is the canonical raster format here because it round-trips bit-exactly
with no dependencies.  Images hold integer intensities only; label maps are
written as 16-bit PGM (maxval 65535).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_WHITESPACE = b" \t\r\n\x0b\x0c"


class PgmError(ValueError):
    """Malformed PNM stream.  ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Rectangular grid of integer intensities in [0, maxval], row-major."""

    pixels: np.ndarray
    maxval: int = 255

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"pixels must be a non-empty 2-D array, got shape {px.shape}")
        if not np.issubdtype(px.dtype, np.integer):
            raise ValueError(f"pixel dtype must be integral, got {px.dtype}")
        if not 1 <= self.maxval <= 65535:
            raise ValueError(f"maxval must be in [1, 65535], got {self.maxval}")
        if px.min() < 0 or px.max() > self.maxval:
            raise ValueError("pixel values outside [0, maxval]")
        px = px.astype(np.int32, copy=True)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.maxval == other.maxval and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Row-major non-negative integer labels; 0 is background."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValueError(f"labels must be a non-empty 2-D array, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise ValueError(f"label dtype must be integral, got {lab.dtype}")
        if lab.min() < 0:
            raise ValueError("labels must be non-negative")
        lab = lab.astype(np.int32, copy=True)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def to_image(self) -> GrayImage:
        """16-bit image view of the labels, for PGM export."""
        if self.labels.max() > 65535:
            raise ValueError("label values exceed 65535, cannot export as PGM")
        return GrayImage(self.labels, maxval=65535)

    @classmethod
    def from_image(cls, image: GrayImage) -> "LabelMap":
        return cls(image.pixels)


def _read_token(data: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next header token, skipping whitespace and '#' comments.

    Returns (token, token_start, position_after_token).
    """
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            nl = data.find(b"\n", pos)
            pos = n if nl < 0 else nl + 1
        else:
            break
    if pos >= n:
        raise PgmError("unexpected end of data while reading header", pos)
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    return data[start:pos], start, pos


def _read_int_token(data: bytes, pos: int, what: str) -> tuple[int, int]:
    token, start, pos = _read_token(data, pos)
    try:
        value = int(token)
    except ValueError:
        raise PgmError(f"invalid {what} {token!r}", start) from None
    return value, pos


def load_pgm(data: bytes) -> GrayImage:
    """Decode a P2 (ASCII) or P5 (binary) PGM byte stream."""
    if len(data) < 2:
        raise PgmError("not a PNM stream", 0)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"unsupported magic {magic!r}", 0)
    pos = 2
    width, pos = _read_int_token(data, pos, "width")
    height, pos = _read_int_token(data, pos, "height")
    if width < 1 or height < 1:
        raise PgmError(f"invalid dimensions {width}x{height}", pos)
    maxval_pos = pos
    maxval, pos = _read_int_token(data, pos, "maxval")
    if not 1 <= maxval <= 65535:
        raise PgmError(f"maxval {maxval} outside [1, 65535]", maxval_pos)

    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates maxval from the raster
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise PgmError("missing whitespace before binary raster", pos)
        pos += 1
        bytes_per = 1 if maxval < 256 else 2
        need = count * bytes_per
        if len(data) - pos < need:
            raise PgmError(
                f"truncated raster: need {need} bytes, have {len(data) - pos}", len(data)
            )
        dtype = np.uint8 if bytes_per == 1 else np.dtype(">u2")
        flat = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.int32)
    else:
        values = []
        for _ in range(count):
            try:
                value, pos = _read_int_token(data, pos, "sample")
            except PgmError:
                raise PgmError(
                    f"truncated raster: need {count} samples, have {len(values)}", pos
                ) from None
            values.append(value)
        flat = np.array(values, dtype=np.int32)
    if flat.min(initial=0) < 0 or flat.max(initial=0) > maxval:
        raise PgmError("sample value outside [0, maxval]", pos)
    return GrayImage(flat.reshape(height, width), maxval=maxval)


def save_pgm(image: GrayImage) -> bytes:
    """Encode as binary P5; 1 byte/sample if maxval < 256 else 2 bytes big-endian."""
    header = f"P5\n{image.width} {image.height}\n{image.maxval}\n".encode("ascii")
    if image.maxval < 256:
        body = image.pixels.astype(np.uint8).tobytes()
    else:
        body = image.pixels.astype(">u2").tobytes()
    return header + body


def save_labels_pgm(labels: LabelMap) -> bytes:
    return save_pgm(labels.to_image())


def load_labels_pgm(data: bytes) -> LabelMap:
    return LabelMap.from_image(load_pgm(data))
