"""Netpbm image I/O, label maps and initial partitions.

Images are held as float64 arrays of shape ``(height, width, channels)``;
label maps as int64 arrays of shape ``(height, width)``.  All connectivity
is 4-connectivity.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class RasterError(ValueError):
    """Base class for image and label-map decoding problems."""


class UnsupportedFormatError(RasterError):
    pass


class MalformedHeaderError(RasterError):
    pass


class TruncatedDataError(RasterError):
    pass


class DimensionMismatchError(RasterError):
    pass


class EmptyLabelMapError(RasterError):
    pass


@dataclass(frozen=True)
class RasterImage:
    data: np.ndarray  # (height, width, channels), float64

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"bad image shape {data.shape}")
        if data.shape[2] not in (1, 3):
            raise ValueError("images carry 1 or 3 channels")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_values(cls, values, width: int, height: int, channels: int = 1) -> "RasterImage":
        """Build an image from a flat row-major value sequence."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != width * height * channels:
            raise ValueError("value count does not match width*height*channels")
        return cls(arr.reshape(height, width, channels))


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray  # (height, width), int64, values 0..region_count-1
    region_count: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.region_count == other.region_count and np.array_equal(self.labels, other.labels)


# -- netpbm decoding ---------------------------------------------------------

_MAGICS = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}


def _read_header(buf: bytes, count: int):
    """Return ``count`` whitespace-separated header tokens and the offset after them.

    Comments (``#`` to end of line) are skipped.  For binary formats exactly one
    whitespace byte separates the last token from the raster.
    """
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and (buf[pos:pos + 1].isspace() or buf[pos:pos + 1] == b"#"):
            if buf[pos:pos + 1] == b"#":
                eol = buf.find(b"\n", pos)
                pos = n if eol < 0 else eol + 1
            else:
                pos += 1
        if pos >= n:
            raise MalformedHeaderError("header ends before all fields were read")
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    return tokens, pos


def _decode_netpbm(buf: bytes):
    magic = buf[:2]
    if magic not in _MAGICS:
        raise UnsupportedFormatError(f"unsupported magic number {magic!r}")
    channels, binary = _MAGICS[magic]
    tokens, pos = _read_header(buf[2:], 3)
    pos += 2
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeaderError(f"non-integer header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise MalformedHeaderError(f"maxval {maxval} outside 1..65535")
    count = width * height * channels
    if binary:
        if pos >= len(buf) or not buf[pos:pos + 1].isspace():
            raise MalformedHeaderError("missing whitespace after maxval")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = buf[pos:pos + count * dtype.itemsize]
        if len(raw) < count * dtype.itemsize:
            raise TruncatedDataError(f"expected {count} samples, file holds {len(raw) // dtype.itemsize}")
        values = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    else:
        body = buf[pos:].split()
        if len(body) < count:
            raise TruncatedDataError(f"expected {count} samples, file holds {len(body)}")
        try:
            values = np.array([int(t) for t in body[:count]], dtype=np.int64)
        except ValueError:
            raise MalformedHeaderError("non-integer sample in ASCII raster") from None
    if values.size and values.max() > maxval:
        raise MalformedHeaderError("sample exceeds declared maxval")
    return width, height, channels, maxval, values


def load_image(path) -> RasterImage:
    """Read a P2/P3/P5/P6 netpbm file."""
    buf = Path(path).read_bytes()
    width, height, channels, _, values = _decode_netpbm(buf)
    return RasterImage.from_values(values, width, height, channels)


def save_image(img: RasterImage, path) -> None:
    """Write ``img`` as binary PGM (1 channel) or PPM (3 channels).

    Values are rounded and clipped to 0..65535; 8-bit storage is used when
    everything fits.
    """
    vals = np.clip(np.rint(img.data), 0, 65535).astype(np.int64)
    maxval = 255 if vals.max(initial=0) <= 255 else 65535
    magic = b"P5" if img.channels == 1 else b"P6"
    dtype = "u1" if maxval == 255 else ">u2"
    header = b"%s\n%d %d\n%d\n" % (magic, img.width, img.height, maxval)
    Path(path).write_bytes(header + vals.astype(dtype).tobytes())


# -- partitions --------------------------------------------------------------

def _components(height: int, width: int, same_right: np.ndarray, same_down: np.ndarray) -> LabelMap:
    """4-connected components of the pixel grid restricted to the given links."""
    n = height * width
    idx = np.arange(n).reshape(height, width)
    rows = np.concatenate([idx[:, :-1][same_right], idx[:-1, :][same_down]])
    cols = np.concatenate([idx[:, 1:][same_right], idx[1:, :][same_down]])
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return _relabel(comp.reshape(height, width))


def _relabel(labels: np.ndarray) -> LabelMap:
    """Renumber labels contiguously in row-major order of first appearance."""
    flat = labels.ravel()
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return LabelMap(rank[inverse].reshape(labels.shape).astype(np.int64), int(uniq.size))


def pixel_grid_partition(img: RasterImage) -> LabelMap:
    labels = np.arange(img.width * img.height, dtype=np.int64).reshape(img.height, img.width)
    return LabelMap(labels, img.width * img.height)


def flat_zone_partition(img: RasterImage) -> LabelMap:
    """Maximal 4-connected zones of identical pixel values."""
    d = img.data
    same_right = np.all(d[:, :-1] == d[:, 1:], axis=2)
    same_down = np.all(d[:-1, :] == d[1:, :], axis=2)
    return _components(img.height, img.width, same_right, same_down)


def split_label_map(labels: np.ndarray) -> LabelMap:
    """Relabel an arbitrary integer grid, splitting labels that are not 4-connected."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise EmptyLabelMapError("label map has no pixels")
    same_right = labels[:, :-1] == labels[:, 1:]
    same_down = labels[:-1, :] == labels[1:, :]
    return _components(labels.shape[0], labels.shape[1], same_right, same_down)


def validate_label_map(lm: LabelMap) -> None:
    """Raise ``ValueError`` unless labels are contiguous, all used and 4-connected."""
    labels = lm.labels
    if labels.ndim != 2 or labels.size == 0:
        raise ValueError("label map must be a non-empty 2-D grid")
    used = np.unique(labels)
    if used.size != lm.region_count or used[0] != 0 or used[-1] != lm.region_count - 1:
        raise ValueError("labels are not exactly 0..region_count-1")
    if split_label_map(labels).region_count != lm.region_count:
        raise ValueError("some region is not 4-connected")


_RAW_HEADER = struct.Struct("<II")


def load_label_map(path, img: RasterImage) -> LabelMap:
    """Read a 16-bit PGM or raw little-endian u32 label grid matching ``img``.

    Labels are renumbered contiguously and disconnected labels are split.
    """
    buf = Path(path).read_bytes()
    if not buf:
        raise EmptyLabelMapError(f"{path}: empty label map")
    if buf[:2] in (b"P2", b"P5"):
        width, height, _, _, values = _decode_netpbm(buf)
    elif buf[:2] in _MAGICS or (buf[:1] == b"P" and buf[1:2].isdigit()):
        raise UnsupportedFormatError(f"{path}: label maps must be PGM or raw u32")
    else:
        if len(buf) < _RAW_HEADER.size:
            raise TruncatedDataError(f"{path}: raw label header truncated")
        width, height = _RAW_HEADER.unpack_from(buf)
        if width * height == 0:
            raise EmptyLabelMapError(f"{path}: zero-sized label map")
        body = buf[_RAW_HEADER.size:]
        if len(body) < 4 * width * height:
            raise TruncatedDataError(f"{path}: raw label grid truncated")
        values = np.frombuffer(body[:4 * width * height], dtype="<u4").astype(np.int64)
    if (width, height) != (img.width, img.height):
        raise DimensionMismatchError(
            f"label map is {width}x{height}, image is {img.width}x{img.height}")
    return split_label_map(values.reshape(height, width))


def save_label_map(lm: LabelMap, path) -> None:
    """Write a label map; ``.pgm`` paths get 16-bit big-endian P5, others raw u32."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        if lm.region_count > 65536:
            raise ValueError("too many regions for a 16-bit PGM label map")
        header = b"P5\n%d %d\n65535\n" % (lm.width, lm.height)
        path.write_bytes(header + lm.labels.astype(">u2").tobytes())
    else:
        path.write_bytes(_RAW_HEADER.pack(lm.width, lm.height) + lm.labels.astype("<u4").tobytes())


def render_partition(lm: LabelMap, img: RasterImage) -> RasterImage:
    """Paint every pixel with the mean color of its region."""
    flat = lm.labels.ravel()
    area = np.bincount(flat, minlength=lm.region_count).astype(np.float64)
    data = img.data.reshape(-1, img.channels)
    means = np.stack([np.bincount(flat, weights=data[:, ch], minlength=lm.region_count)
                      for ch in range(img.channels)], axis=1) / area[:, None]
    return RasterImage(means[flat].reshape(img.data.shape))
