"""CSV tables described by a schema.

A schema is a line-oriented file of ``column,kind,role`` triples, ``#``
starting a comment. Kinds are ``numeric`` or ``categorical``; roles are

``feature``
    the column becomes model input (one-hot encoded when categorical),
``label``
    the class label (exactly one such column),
``covariate``
    kept aside as a raw covariate column only,
``both``
    model input and covariate column,
``ignore``
    dropped.
"""

import csv
import dataclasses
import io
import logging
import pathlib

import numpy as np

from catharm._internal import utils
from catharm.dataio.dataset import Dataset
from catharm.exceptions import DataError, MissingColumn

logger = logging.getLogger(__name__)

KINDS = ("numeric", "categorical")
ROLES = ("feature", "label", "covariate", "both", "ignore")
MISSING = ("", "?", "NA", "nan")


@dataclasses.dataclass(frozen=True)
class SchemaColumn:
    name: str
    kind: str
    role: str

    @property
    def feature(self):
        return self.role in ("feature", "both")

    @property
    def covariate(self):
        return self.role in ("covariate", "both")


@dataclasses.dataclass(frozen=True)
class Schema:
    columns: tuple
    text: str = ""

    @property
    def label(self):
        return next(column for column in self.columns if column.role == "label")

    @property
    def used(self):
        return [column for column in self.columns if column.role != "ignore"]


def parse_schema(text, source="<schema>"):
    """Parse schema text.

    :raises DataError: On malformed lines, unknown kinds or roles, or not exactly one label.
    """
    columns = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [field.strip() for field in line.split(",")]
        if len(fields) != 3:
            raise DataError(f"{source}:{number}: expected 'column,kind,role', got {line!r}.")
        name, kind, role = fields
        if kind not in KINDS:
            raise DataError(f"{source}:{number}: unknown kind {kind!r}.")
        if role not in ROLES:
            raise DataError(f"{source}:{number}: unknown role {role!r}.")
        columns.append(SchemaColumn(name, kind, role))
    labels = [column.name for column in columns if column.role == "label"]
    if len(labels) != 1:
        raise DataError(f"{source}: expected one label column, got {labels}.")
    return Schema(tuple(columns), text)


def load_schema(path):
    path = pathlib.Path(path)
    return parse_schema(path.read_text(encoding="utf-8"), str(path))


def _label(value):
    return value[:-1] if value.endswith(".") else value


def load_tabular_csv(path, schema, reference=None, subsample=None, seed=0):
    """Read a CSV file into a :class:`Dataset`.

    Rows with a missing or unparsable cell in a used column are dropped
    and counted (``extras["dropped"]``). Categorical features are one-hot
    encoded over their sorted levels, taken from `reference` when given so
    a test file shares the encoding of its training file.

    :param path: CSV file with a header row.
    :param schema: Column description.
    :type schema: :class:`Schema`
    :param reference: Dataset whose levels and classes are reused.
    :type reference: :class:`Dataset` or `None`
    :param subsample: Keep a seeded random subset of that many rows.
    :type subsample: :class:`int` or `None`
    :rtype: :class:`Dataset`
    :raises MissingColumn: If the header lacks a schema column.
    """
    path = pathlib.Path(path)
    data = path.read_bytes()
    reader = csv.reader(io.StringIO(data.decode("utf-8")), skipinitialspace=True)
    header = [name.strip() for name in next(reader, [])]
    positions = {}
    for column in schema.used:
        if column.name not in header:
            raise MissingColumn(f"{path}: no column {column.name!r} in the header.")
        positions[column.name] = header.index(column.name)

    rows, dropped = [], 0
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        record = {}
        try:
            for column in schema.used:
                cell = row[positions[column.name]].strip()
                if cell in MISSING:
                    raise ValueError(cell)
                record[column.name] = float(cell) if column.kind == "numeric" else cell
        except (IndexError, ValueError):
            dropped += 1
            continue
        rows.append(record)
    if dropped:
        logger.warning("Dropped %d rows with missing or unparsable cells from %s.", dropped, path)

    levels = dict(reference.extras["levels"]) if reference is not None else {}
    for column in schema.used:
        if column.kind == "categorical" and column.feature and column.name not in levels:
            levels[column.name] = sorted({record[column.name] for record in rows})
    label = schema.label.name
    classes = (
        tuple(reference.classes)
        if reference is not None
        else tuple(sorted({_label(record[label]) for record in rows}))
    )

    kept = []
    for record in rows:
        if _label(record[label]) not in classes or any(
            record[name] not in levels[name] for name in levels if name in record
        ):
            dropped += 1
            continue
        kept.append(record)
    if subsample is not None and subsample < len(kept):
        rng = np.random.default_rng(seed)
        kept = [kept[i] for i in np.sort(rng.choice(len(kept), size=subsample, replace=False))]

    names, numeric_mask, blocks = [], [], []
    for column in schema.used:
        if not column.feature:
            continue
        if column.kind == "numeric":
            names.append(column.name)
            numeric_mask.append(True)
            blocks.append(np.array([[record[column.name]] for record in kept]).reshape(-1, 1))
        else:
            index = {level: i for i, level in enumerate(levels[column.name])}
            onehot = np.zeros((len(kept), len(index)))
            for row, record in enumerate(kept):
                onehot[row, index[record[column.name]]] = 1.0
            names.extend(f"{column.name}={level}" for level in levels[column.name])
            numeric_mask.extend([False] * len(index))
            blocks.append(onehot)

    raw = np.hstack(blocks) if blocks else np.zeros((len(kept), 0))
    columns = {
        column.name: np.array(
            [record[column.name] for record in kept],
            dtype=np.float64 if column.kind == "numeric" else object,
        )
        for column in schema.used
        if column.covariate
    }
    label_index = {name: i for i, name in enumerate(classes)}
    dataset = Dataset(
        features=raw,
        labels=np.array([label_index[_label(record[label])] for record in kept], dtype=np.int64),
        classes=classes,
        raw=raw,
        columns=columns,
        standardize=np.array(numeric_mask, dtype=bool),
        provenance=utils.sha256_of(data, schema.text),
        feature_names=tuple(names),
        extras={"levels": levels, "dropped": dropped},
    )
    logger.info(
        "Loaded %d rows, %d features and %d classes from %s.",
        dataset.m,
        dataset.p,
        len(classes),
        path,
    )
    return dataset.standardized()
