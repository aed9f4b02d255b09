"""Dataset directives of experiment plans and their loading."""

import dataclasses
import importlib.resources
import logging
import pathlib

from catharm.dataio.mnist import load_mnist_idx
from catharm.dataio.synth import synth_monotone
from catharm.dataio.tabular import load_schema, load_tabular_csv, parse_schema
from catharm.dataio.transforms import ROTATE, SCALE, augment_with_transforms, make_successor_pairs
from catharm.exceptions import DataError
from catharm.pairing import PairSet

logger = logging.getLogger(__name__)

TABULAR, MNIST, SYNTH = "tabular", "mnist", "synth"
KINDS = (TABULAR, MNIST, SYNTH)
PAIRS = ("none", "successor", ROTATE, SCALE, "transforms")
SUCCESSOR_COLUMN = "digit"


@dataclasses.dataclass(frozen=True)
class DatasetDirective:
    """Where the samples of an experiment come from."""

    kind: str
    path: str = None
    test_path: str = None
    schema: str = None
    """name of a bundled schema (``german``, ``adult``) or a schema file"""

    images: str = None
    labels: str = None
    test_images: str = None
    test_labels: str = None
    pairs: str = "none"
    rotate_steps: int = 10
    scale_steps: int = 10
    limit: int = None
    subsample: int = None
    m: int = 1000
    p: int = 8
    effect: float = 2.0
    seed: int = None
    """data seed, defaults to the training seed"""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"Unknown dataset kind {self.kind!r}, expected one of {KINDS}.")
        if self.pairs not in PAIRS:
            raise ValueError(f"Unknown pairs {self.pairs!r}, expected one of {PAIRS}.")
        if self.pairs != "none" and self.kind != MNIST:
            raise ValueError(f"Pairs {self.pairs!r} need an mnist dataset.")

    @property
    def columns(self):
        """Covariate source columns the dataset provides, `None` when unknown until loaded."""
        if self.kind == MNIST:
            if self.pairs == "none":
                return {SUCCESSOR_COLUMN}
            return {SUCCESSOR_COLUMN, ROTATE, SCALE}
        if self.kind == SYNTH:
            return {"g"}
        return None


def resolve_schema(schema, data_dir=None):
    """Bundled schema by name, or a schema file."""
    bundled = importlib.resources.files("catharm").joinpath("schemas", f"{schema}.schema")
    if bundled.is_file():
        return parse_schema(bundled.read_text(encoding="utf-8"), f"{schema}.schema")
    return load_schema(_resolve(schema, data_dir))


def _resolve(path, data_dir):
    path = pathlib.Path(path)
    if not path.is_absolute() and data_dir is not None:
        path = pathlib.Path(data_dir) / path
    if not path.exists():
        raise DataError(f"No such file: {path}.")
    return path


def transform_specs(directive):
    if directive.pairs == "transforms":
        return [(ROTATE, ROTATE, directive.rotate_steps), (SCALE, SCALE, directive.scale_steps)]
    steps = directive.rotate_steps if directive.pairs == ROTATE else directive.scale_steps
    return [(directive.pairs, directive.pairs, steps)]


def _with_pairs(dataset, directive, seed):
    if directive.pairs == "successor":
        pairs = make_successor_pairs(dataset, seed, SUCCESSOR_COLUMN)
        return dataset.with_pairs({SUCCESSOR_COLUMN: pairs})
    if directive.pairs in (ROTATE, SCALE, "transforms"):
        return augment_with_transforms(dataset, transform_specs(directive))
    return dataset


def attach_pairs(dataset, specs):
    """Key the external pairs of `dataset` by the covariates reading their column."""
    pairsets = {}
    for spec in specs:
        if spec.column in dataset.pairsets:
            pairsets[spec.name] = PairSet(spec.name, dataset.pairsets[spec.column].entries)
    return dataset.with_pairs(pairsets)


def load_dataset(directive, data_dir=None, seed=0):
    """Train samples, and test samples when the directive names a test file.

    :param directive: What to load.
    :type directive: :class:`DatasetDirective`
    :param data_dir: Directory relative paths are resolved against.
    :param seed: Seed of the subsampling and pairing, unless the directive sets one.
    :return: ``(train, test)``, `test` being `None` without test files.
    :rtype: :class:`tuple`
    :raises DataError: On unreadable or inconsistent files.
    """
    seed = directive.seed if directive.seed is not None else seed
    test = None
    if directive.kind == SYNTH:
        train = synth_monotone(directive.m, directive.p, directive.effect, seed)
    elif directive.kind == TABULAR:
        if directive.path is None or directive.schema is None:
            raise DataError("Tabular datasets need a path and a schema.")
        schema = resolve_schema(directive.schema, data_dir)
        train = load_tabular_csv(
            _resolve(directive.path, data_dir), schema, subsample=directive.subsample, seed=seed
        )
        if directive.test_path is not None:
            test_path = _resolve(directive.test_path, data_dir)
            test = load_tabular_csv(test_path, schema, reference=train)
            test = test.standardized(train.standardizer)
    else:
        if directive.images is None or directive.labels is None:
            raise DataError("MNIST datasets need images and labels.")
        train = load_mnist_idx(
            _resolve(directive.images, data_dir),
            _resolve(directive.labels, data_dir),
            directive.limit,
        )
        train = _with_pairs(train, directive, seed)
        if directive.test_images is not None and directive.test_labels is not None:
            test = load_mnist_idx(
                _resolve(directive.test_images, data_dir),
                _resolve(directive.test_labels, data_dir),
                directive.limit,
            )
            if directive.pairs in (ROTATE, SCALE, "transforms"):
                test = augment_with_transforms(test, transform_specs(directive))
    logger.info("Loaded %r (test part: %s).", train, "no" if test is None else test.m)
    return train, test
