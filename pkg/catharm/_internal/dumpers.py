import contextlib
import csv
import json
import logging
import os
import pathlib
import tempfile
from abc import ABC, abstractmethod

import numpy as np
import tomli_w

from catharm import signals
from catharm._internal import utils

logger = logging.getLogger(__name__)


class BaseDumper(ABC):
    """Write one output file atomically.

    Content goes to a temporary sibling file which replaces the target only
    once fully written, so readers never observe a partial file.
    """

    def __init__(self, path):
        self._path = pathlib.Path(path)

    @property
    def path(self):
        return self._path

    @abstractmethod
    def dump_in(self, content):
        raise NotImplementedError

    def mkdir(self):
        self._path.parent.mkdir(parents=True, exist_ok=True)

    @contextlib.contextmanager
    def open(self, mode="w", **kwargs):  # noqa: A003
        self.mkdir()
        if "b" not in mode:
            kwargs.setdefault("encoding", "utf-8")
            kwargs.setdefault("newline", "\n")
        fd, tmp = tempfile.mkstemp(prefix=f".{self._path.name}.", dir=self._path.parent)
        try:
            with os.fdopen(fd, mode, **kwargs) as file:
                yield file
            os.replace(tmp, self._path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
            raise
        logger.debug("Wrote %s.", self._path)
        signals.file_written.emit(path=self._path)

    def __hash__(self):
        return hash(self._path)

    def __repr__(self):
        return utils.make_repr(self, path=self._path)

    def __eq__(self, other):
        return type(self) is type(other) and utils.attrs_eq(self, other, "_path")


class BinaryFile(BaseDumper):
    def dump_in(self, content):
        with self.open(mode="wb") as file:
            file.write(bytes(content))


class JsonFile(BaseDumper):
    def dump_in(self, content):
        with self.open() as file:
            json.dump(content, file, indent=2, sort_keys=True)
            file.write("\n")


class CsvFile(BaseDumper):
    """CSV with a header row, comma separator and LF line endings."""

    def __init__(self, path, header):
        super().__init__(path)
        self._header = list(header)

    def dump_in(self, content):
        with self.open() as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(self._header)
            writer.writerows(content)


class Toml(BaseDumper):
    def dump_in(self, content):
        with self.open(mode="wb") as file:
            tomli_w.dump(content, file)


class PgmFile(BaseDumper):
    """Binary graymap (P5) with max value 255."""

    def dump_in(self, content):
        pixels = np.asarray(content)
        if pixels.ndim != 2 or pixels.dtype != np.uint8:
            raise ValueError("A PGM image is a 2-D array of uint8.")
        height, width = pixels.shape
        with self.open(mode="wb") as file:
            file.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            file.write(np.ascontiguousarray(pixels).tobytes())
