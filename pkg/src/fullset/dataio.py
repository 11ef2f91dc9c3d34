"""IDX ingestion, binarization, splitting and the packed-bit dataset container."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ParseError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
SPLIT_TAGS = ("train", "validation", "test", "sampled")

_DS_MAGIC = b"BIMG"
_DS_VERSION = 1
_DS_HEADER = struct.Struct("<4sIIIIBB")


@dataclass
class BinaryImage:
    bits: np.ndarray
    height: int
    width: int
    label: int | None = None

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if self.bits.size != self.height * self.width:
            raise InputError(f"{self.bits.size} bits do not fill a {self.height}x{self.width} grid")
        if np.any(self.bits > 1):
            raise InputError("bits must be 0 or 1")

    @property
    def n(self):
        return self.bits.size

    def grid(self):
        return self.bits.reshape(self.height, self.width)


@dataclass
class Dataset:
    """A batch of same-shaped binary images stored as an ``(N, n)`` bit matrix.

    ``energies`` is filled in by the sampler; ``meta`` carries provenance
    such as the sampling seed.
    """

    bits: np.ndarray
    height: int
    width: int
    labels: np.ndarray | None = None
    split_tag: str = "train"
    energies: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim == 1 and bits.size == 0:
            bits = bits.reshape(0, self.height * self.width)
        if bits.ndim != 2 or bits.shape[1] != self.height * self.width:
            raise InputError(f"bit matrix of shape {bits.shape} does not match {self.height}x{self.width}")
        if bits.size and bits.max() > 1:
            raise InputError("bits must be 0 or 1")
        self.bits = bits
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (bits.shape[0],):
                raise InputError("one label per image required")
        if self.split_tag not in SPLIT_TAGS:
            raise InputError(f"split_tag must be one of {SPLIT_TAGS}")

    def __len__(self):
        return self.bits.shape[0]

    def __getitem__(self, i):
        label = None if self.labels is None else int(self.labels[i])
        return BinaryImage(self.bits[i], self.height, self.width, label)

    @property
    def n_pixels(self):
        return self.height * self.width

    def subset(self, index, split_tag=None):
        index = np.asarray(index)
        return Dataset(
            self.bits[index],
            self.height,
            self.width,
            None if self.labels is None else self.labels[index],
            split_tag or self.split_tag,
            None if self.energies is None else self.energies[index],
            dict(self.meta),
        )

    def with_label(self, label):
        if self.labels is None:
            raise InputError("dataset has no labels")
        return self.subset(np.flatnonzero(self.labels == label))

    def without_label(self, label):
        if self.labels is None:
            raise InputError("dataset has no labels")
        return self.subset(np.flatnonzero(self.labels != label))

    @classmethod
    def from_images(cls, images, split_tag="train"):
        images = list(images)
        if not images:
            raise InputError("cannot infer image shape from an empty list")
        h, w = images[0].height, images[0].width
        if any((im.height, im.width) != (h, w) for im in images):
            raise InputError("all images must share one shape")
        labels = [im.label for im in images]
        lab = None if any(l is None for l in labels) else np.array(labels)
        return cls(np.stack([im.bits for im in images]), h, w, lab, split_tag)


def _maybe_gunzip(data):
    data = bytes(data)
    if data[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise ParseError(f"corrupt gzip stream: {exc}", 0) from exc
    return data


def parse_idx(data):
    """Decode an IDX ubyte stream (optionally gzip-compressed).

    Returns ``(N, rows, cols)`` uint8 for image files and ``(N,)`` uint8 for
    label files.
    """
    buf = _maybe_gunzip(data)
    if len(buf) < 4:
        raise ParseError("stream shorter than the IDX magic", 0)
    (magic,) = struct.unpack_from(">I", buf, 0)
    if magic == IMAGES_MAGIC:
        ndim = 3
    elif magic == LABELS_MAGIC:
        ndim = 1
    else:
        raise ParseError(f"bad IDX magic 0x{magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise ParseError("truncated IDX dimension header", 4)
    dims = struct.unpack_from(f">{ndim}I", buf, 4)
    count = 1
    for i, d in enumerate(dims):
        count *= d
        if count > 2**40:
            raise ParseError("IDX dimensions overflow", 4 + 4 * i)
    if len(buf) < header + count:
        raise ParseError(f"truncated IDX payload: need {count} bytes, have {len(buf) - header}", len(buf))
    if len(buf) > header + count:
        raise ParseError("trailing bytes after IDX payload", header + count)
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=header).reshape(dims).copy()


def serialize_idx(array):
    """Encode images ``(N, rows, cols)`` or labels ``(N,)`` as uncompressed IDX."""
    array = np.asarray(array)
    if array.ndim == 3:
        magic = IMAGES_MAGIC
    elif array.ndim == 1:
        magic = LABELS_MAGIC
    else:
        raise InputError("IDX writer supports 1-d labels or 3-d images")
    if array.size and (array.min() < 0 or array.max() > 255):
        raise InputError("IDX ubyte values must lie in 0..255")
    head = struct.pack(f">I{array.ndim}I", magic, *array.shape)
    return head + array.astype(np.uint8).tobytes()


def read_idx(path):
    return parse_idx(Path(path).read_bytes())


def load_idx_dataset(images_path, labels_path=None, threshold=128, split_tag="train"):
    """Read IDX images (and labels) and binarize them into a :class:`Dataset`."""
    images = read_idx(images_path)
    if images.ndim != 3:
        raise ParseError(f"{images_path} is not an image file", 0)
    labels = None
    if labels_path is not None:
        labels = read_idx(labels_path)
        if labels.ndim != 1:
            raise ParseError(f"{labels_path} is not a label file", 0)
        if labels.shape[0] != images.shape[0]:
            raise ParseError(f"{labels.shape[0]} labels for {images.shape[0]} images", 4)
    _, h, w = images.shape
    return Dataset(binarize(images, threshold).reshape(images.shape[0], h * w), h, w, labels, split_tag)


def binarize(image, threshold=128):
    """1 where intensity >= threshold, else 0. Works on any array shape."""
    if not 0 <= threshold <= 255:
        raise InputError(f"threshold {threshold} outside 0..255")
    return (np.asarray(image) >= threshold).astype(np.uint8)


def encode(image):
    """Row-major per-site basis indices of an image."""
    if isinstance(image, BinaryImage):
        return image.bits.astype(np.intp)
    arr = np.asarray(image)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise InputError("basis indices must be 0 or 1")
    return arr.reshape(-1).astype(np.intp)


def split(dataset, fraction, seed=0):
    """Seeded shuffle, then the first ``round(fraction * N)`` images go left.

    Returns ``(train, validation)``.
    """
    if not 0.0 < fraction < 1.0:
        raise InputError(f"split fraction {fraction} must lie in (0, 1)")
    n = len(dataset)
    if n == 0:
        raise InputError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(fraction * n))
    return dataset.subset(perm[:cut], "train"), dataset.subset(perm[cut:], "validation")


def dataset_to_bytes(ds):
    """Packed-bit container; labels are int8 with -1 for "unlabeled"."""
    has_labels = ds.labels is not None
    tag = SPLIT_TAGS.index(ds.split_tag)
    head = _DS_HEADER.pack(_DS_MAGIC, _DS_VERSION, len(ds), ds.height, ds.width, int(has_labels), tag)
    payload = np.packbits(ds.bits, axis=1).tobytes() if len(ds) else b""
    labels = ds.labels.astype(np.int8).tobytes() if has_labels else b""
    return head + payload + labels


def dataset_from_bytes(buf):
    if len(buf) < _DS_HEADER.size:
        raise ParseError("truncated dataset header", 0)
    magic, version, n, h, w, has_labels, tag = _DS_HEADER.unpack_from(buf, 0)
    if magic != _DS_MAGIC:
        raise ParseError(f"bad dataset magic {magic!r}", 0)
    if version != _DS_VERSION:
        raise ParseError(f"unsupported dataset version {version}", 4)
    if tag >= len(SPLIT_TAGS):
        raise ParseError(f"unknown split tag {tag}", _DS_HEADER.size - 1)
    row = (h * w + 7) // 8
    off = _DS_HEADER.size
    need = off + n * row + (n if has_labels else 0)
    if len(buf) != need:
        raise ParseError(f"dataset payload size {len(buf)} != expected {need}", min(len(buf), need))
    packed = np.frombuffer(buf, dtype=np.uint8, count=n * row, offset=off).reshape(n, row)
    bits = np.unpackbits(packed, axis=1, count=h * w) if n else np.zeros((0, h * w), np.uint8)
    labels = None
    if has_labels:
        labels = np.frombuffer(buf, dtype=np.int8, count=n, offset=off + n * row).astype(np.int64)
    return Dataset(bits, h, w, labels, SPLIT_TAGS[tag])


def save_dataset(ds, path):
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path):
    return dataset_from_bytes(Path(path).read_bytes())


def text_grid(image, on="#", off="."):
    """One character per pixel, one line per image row."""
    grid = image.grid() if isinstance(image, BinaryImage) else np.asarray(image)
    return "\n".join("".join(on if b else off for b in row) for row in grid)
