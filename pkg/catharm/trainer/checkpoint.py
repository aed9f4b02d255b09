"""Binary checkpoint of a bundle.

Layout (little-endian)::

    b"CTHM" | u32 version | u32 entry count
    per entry: u16 name length | name (UTF-8) | u8 ndim | u32 dims... | f64 values...
    u32 metadata length | metadata (UTF-8 JSON)

Entries are sorted by name and values are row-major.
"""

import json
import logging
import pathlib
import struct

import numpy as np

from catharm._internal.dumpers import BinaryFile
from catharm.exceptions import BadMagic, CheckpointError, Truncated, VersionMismatch
from catharm.functors import ModelBundle
from catharm.numcore import Tensor

logger = logging.getLogger(__name__)

MAGIC = b"CTHM"
VERSION = 1


def encode_checkpoint(bundle, metadata=None):
    """Checkpoint bytes of `bundle`, its architecture merged into `metadata`."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(bundle.parameters))]
    for name in sorted(bundle.parameters):
        array = bundle.parameters[name].data
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    document = dict(metadata or {})
    document["architecture"] = bundle.architecture()
    encoded = json.dumps(document, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(encoded)) + encoded)
    return b"".join(chunks)


class _Reader:
    def __init__(self, data, source):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, size):
        if self.offset + size > len(self.data):
            raise Truncated(
                f"{self.source}: ends at byte {len(self.data)}, needs {self.offset + size}."
            )
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data, source="<checkpoint>"):
    """Bundle and metadata held by checkpoint bytes.

    :raises BadMagic: If the bytes do not start with the magic.
    :raises VersionMismatch: If the format version is not supported.
    :raises Truncated: If the bytes end early.
    :raises CheckpointError: If the content is otherwise malformed.
    """
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{source}: not a catharm checkpoint.")
    reader = _Reader(data, source)
    reader.take(len(MAGIC))
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise VersionMismatch(f"{source}: format version {version}, expected {VERSION}.")
    parameters = {}
    try:
        for _ in range(count):
            (length,) = reader.unpack("<H")
            name = reader.take(length).decode("utf-8")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I")
            if 0 in shape:
                raise CheckpointError(f"{source}: parameter {name!r} has an empty dimension.")
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            values = np.frombuffer(reader.take(8 * size), dtype="<f8")
            parameters[name] = Tensor(values.astype(np.float64), shape)
        (length,) = reader.unpack("<I")
        metadata = json.loads(reader.take(length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{source}: malformed content ({exc}).") from exc
    if reader.offset != len(data):
        raise CheckpointError(f"{source}: {len(data) - reader.offset} trailing bytes.")
    try:
        bundle = ModelBundle.from_architecture(metadata["architecture"], parameters)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{source}: inconsistent architecture ({exc}).") from exc
    return bundle, metadata


def save_checkpoint(bundle, path, metadata=None):
    """Write the checkpoint of `bundle` atomically."""
    BinaryFile(path).dump_in(encode_checkpoint(bundle, metadata))
    logger.info("Saved checkpoint %s.", path)


def read_checkpoint(path):
    """Bundle and metadata of a checkpoint file."""
    path = pathlib.Path(path)
    return decode_checkpoint(path.read_bytes(), str(path))


def load_checkpoint(path):
    return read_checkpoint(path)[0]
