"""Reader of the IDX files MNIST is distributed in.

Layout (big-endian)::

    u32 magic | u32 count | u32 rows | u32 cols | u8 pixels...   (images)
    u32 magic | u32 count | u8 labels...                         (labels)

Gzip-compressed files are accepted as well.
"""

import gzip
import logging
import math
import pathlib
import struct

import numpy as np

from catharm._internal import utils
from catharm.dataio.dataset import Dataset
from catharm.exceptions import IdxBadMagic, IdxDimensionMismatch, IdxTruncated

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
SIDE = 28
GZIP_MAGIC = b"\x1f\x8b"


def read_bytes(path):
    data = pathlib.Path(path).read_bytes()
    if data[:2] == GZIP_MAGIC:
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise IdxTruncated(f"{path}: corrupted gzip stream.") from exc
    return data


def parse_idx(data, magic, ndim, source="<bytes>"):
    """Header dimensions and payload of an IDX buffer.

    :param data: Whole file content.
    :type data: :class:`bytes`
    :param magic: Expected magic number.
    :param ndim: Expected number of dimensions.
    :return: The dimensions and the unsigned byte payload.
    :rtype: :class:`tuple`
    :raises IdxBadMagic: If the magic number differs.
    :raises IdxTruncated: If the file is shorter than its header declares.
    """
    header = 4 * (1 + ndim)
    if len(data) < 4:
        raise IdxTruncated(f"{source}: {len(data)} bytes, no IDX header.")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise IdxBadMagic(f"{source}: magic 0x{found:08x}, expected 0x{magic:08x}.")
    if len(data) < header:
        raise IdxTruncated(f"{source}: header needs {header} bytes, got {len(data)}.")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = math.prod(dims)
    if len(data) < header + size:
        raise IdxTruncated(f"{source}: payload needs {size} bytes, got {len(data) - header}.")
    return dims, np.frombuffer(data, dtype=np.uint8, count=size, offset=header)


def load_mnist_idx(images_path, labels_path, limit=None):
    """MNIST images (pixels scaled to ``[0, 1]``) and digit labels.

    :param images_path: IDX3 image file, possibly gzipped.
    :param labels_path: IDX1 label file, possibly gzipped.
    :param limit: Keep only the first `limit` samples.
    :type limit: :class:`int` or `None`
    :rtype: :class:`Dataset`
    :raises IdxDimensionMismatch: If images are not 28x28 or counts differ.
    """
    images_data = read_bytes(images_path)
    labels_data = read_bytes(labels_path)
    (count, rows, cols), pixels = parse_idx(images_data, IMAGES_MAGIC, 3, str(images_path))
    (label_count,), labels = parse_idx(labels_data, LABELS_MAGIC, 1, str(labels_path))
    if (rows, cols) != (SIDE, SIDE):
        raise IdxDimensionMismatch(f"{images_path}: images are {rows}x{cols}, expected 28x28.")
    if count != label_count:
        raise IdxDimensionMismatch(f"{count} images but {label_count} labels.")
    if labels.size and labels.max() > 9:
        raise IdxDimensionMismatch(f"{labels_path}: label {labels.max()} is not a digit.")

    if limit is not None:
        count = min(count, int(limit))
    features = pixels[: count * SIDE * SIDE].reshape(count, SIDE * SIDE) / 255.0
    labels = labels[:count].astype(np.int64)
    logger.info("Loaded %d MNIST images from %s.", count, images_path)
    return Dataset(
        features=features,
        labels=labels,
        classes=tuple(str(d) for d in range(10)),
        columns={"digit": labels},
        provenance=utils.sha256_of(images_data, labels_data),
        image_shape=(SIDE, SIDE),
    )


def write_idx(path, array, magic):
    """Write `array` (uint8) as an IDX file, gzipped when `path` ends with ``.gz``."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    data = struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()
    path = pathlib.Path(path)
    path.write_bytes(gzip.compress(data, mtime=0) if path.suffix == ".gz" else data)
