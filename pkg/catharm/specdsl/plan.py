"""Experiment plans and their construction from parsed spec blocks."""

import collections
import dataclasses
import logging
import math
import pathlib

from catharm._internal import utils
from catharm.dataio.loaders import TABULAR, DatasetDirective, resolve_schema
from catharm.exceptions import CatharmError, SpecError
from catharm.functors import LatentSpec
from catharm.metrics import MetricsOptions
from catharm.objective import LossWeights
from catharm.pairing import DEFAULT_LAMBDA, LABEL_COLUMN, CovariateSpec
from catharm.specdsl.lexer import ParseError
from catharm.specdsl.parser import Call, Ident, parse_blocks
from catharm.trainer import TrainConfig

logger = logging.getLogger(__name__)

BLOCKS = ("dataset", "latent", "covariate", "loss", "train", "metrics")
REQUIRED = ("dataset", "latent", "train")
DEFAULT_FOLDS = 5
COVARIATE_FIELDS = (
    "kind",
    "column",
    "anchor",
    "range",
    "constraint",
    "loss",
    "policy",
    "include_d0",
)


@dataclasses.dataclass(frozen=True)
class ExperimentPlan:
    """Everything a run needs: data, networks, covariates, objective, optimization, metrics."""

    dataset: DatasetDirective
    latent: LatentSpec
    covariates: tuple = ()
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    metrics: MetricsOptions = dataclasses.field(default_factory=MetricsOptions)

    @property
    def weights(self):
        return self.train.weights

    def covariate(self, name):
        for spec in self.covariates:
            if spec.name == name:
                return spec
        raise KeyError(f"Unknown covariate {name!r}.")

    def settings(self):
        """Run settings the plan declares."""
        return {"seed": self.train.seed}


class _Invalid(Exception):
    pass


_Where = collections.namedtuple("_Where", "line column")
_START = _Where(1, 1)


# -- value converters


def _integer(value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise _Invalid("expected an integer")
    return value


def _optional_integer(value):
    return None if value == Ident("none") else _integer(value)


def _real(value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _Invalid("expected a number")
    try:
        value = float(value)
    except OverflowError:
        raise _Invalid("number out of range") from None
    if not math.isfinite(value):
        raise _Invalid("expected a finite number")
    return value


def _boolean(value):
    if not isinstance(value, bool):
        raise _Invalid("expected true or false")
    return value


def _text(value):
    if isinstance(value, str):
        return value
    if isinstance(value, Ident):
        return value.name
    raise _Invalid("expected a name or a quoted string")


def _choice(*options):
    def convert(value):
        name = _text(value)
        if name not in options:
            raise _Invalid(f"expected one of {', '.join(options)}")
        return name

    return convert


def _call(value, *names):
    if not isinstance(value, Call) or value.name not in names:
        raise _Invalid(f"expected {' or '.join(name + '(...)' for name in names)}")
    return value


def _level(value):
    if isinstance(value, (Ident, Call)) or isinstance(value, bool):
        raise _Invalid("levels are numbers or quoted strings")
    return value


def _bins(value):
    if isinstance(value, Call):
        call = _call(value, "edges", "levels")
        if call.name == "edges":
            return {"edges": tuple(_real(arg) for arg in call.args)}
        return {"levels": tuple(_level(arg) for arg in call.args)}
    return {"width": _real(value)}


def _range(value):
    call = _call(value, "range")
    if len(call.args) != 2:
        raise _Invalid("range takes two bounds")
    return tuple(_real(arg) for arg in call.args)


def _morphism(value):
    if value == Ident("none"):
        return ("none", None)
    call = _call(value, "orthogonal", "linear")
    if len(call.args) != 1:
        raise _Invalid(f"{call.name} takes the morphism dimension")
    return (call.name, _integer(call.args[0]))


def _network(value):
    if value == Ident("none"):
        return None
    call = _call(value, "mlp")
    if len(call.args) < 2:
        raise _Invalid("mlp needs at least an input and an output width")
    widths = []
    for arg in call.args:
        if isinstance(arg, Ident) and arg.name in ("auto", "p", "k"):
            widths.append(arg.name)
        else:
            width = _integer(arg)
            if width < 1:
                raise _Invalid("widths must be positive")
            widths.append(width)
    return tuple(widths)


def _metrics(value):
    call = _call(value, "set")
    return tuple(_text(arg) for arg in call.args)


def _steps(value):
    call = _call(value, "set")
    return tuple(_integer(arg) for arg in call.args)


def _bandwidth(value):
    return None if value == Ident("median") else _real(value)


KEYS = {
    "dataset": {
        "kind": _choice("tabular", "mnist", "synth"),
        "path": _text,
        "test_path": _text,
        "schema": _text,
        "images": _text,
        "labels": _text,
        "test_images": _text,
        "test_labels": _text,
        "pairs": _choice("none", "successor", "rotate", "scale", "transforms"),
        "rotate_steps": _integer,
        "scale_steps": _integer,
        "limit": _optional_integer,
        "subsample": _optional_integer,
        "m": _integer,
        "p": _integer,
        "effect": _real,
        "seed": _optional_integer,
    },
    "latent": {
        "dim": _integer,
        "encoder": _network,
        "activation": _choice("linear", "relu", "sigmoid", "tanh"),
        "decoder": _network,
        "output": _choice("linear", "relu", "sigmoid", "tanh"),
        "classifier": _network,
    },
    "covariate": {
        "name": _text,
        "kind": _choice("categorical", "ordinal"),
        "column": _text,
        "bins": _bins,
        "anchor": _real,
        "range": _range,
        "constraint": _choice("invariance", "equivariance"),
        "morphism": _morphism,
        "lambda": _real,
        "loss": _choice("l2", "mmd"),
        "policy": _choice("all", "matched"),
        "include_d0": _boolean,
    },
    "loss": {
        "reconstruction": _real,
        "prediction": _real,
        "structure": _real,
        "orthogonality": _real,
        "bandwidth": _bandwidth,
    },
    "train": {
        "epochs": _integer,
        "batch_size": _integer,
        "learning_rate": _real,
        "optimizer": _choice("adam", "sgd"),
        "beta1": _real,
        "beta2": _real,
        "eps": _real,
        "seed": _integer,
        "folds": _integer,
        "max_pairs": _integer,
        "max_power": _integer,
        "retraction": _boolean,
    },
    "metrics": {
        "select": _metrics,
        "nuisance": _text,
        "probe": _choice("logistic", "mlp"),
        "probe_seed": _integer,
        "mse_steps": _steps,
        "mse_limit": _integer,
    },
}


class _Builder:
    def __init__(self, blocks, errors):
        self.errors = errors
        self.blocks = {}
        self.covariates = []
        for block in blocks:
            if block.name not in BLOCKS:
                expected = ", ".join(BLOCKS)
                self.error(block, f"unknown block {block.name!r}, expected one of {expected}")
            elif block.name == "covariate":
                self.covariates.append(self.read(block))
            elif block.name in self.blocks:
                first = self.blocks[block.name][0]
                self.error(block, f"duplicate block {block.name!r} (first at line {first.line})")
            else:
                self.blocks[block.name] = self.read(block)
        for name in REQUIRED:
            if name not in self.blocks:
                self.error(_START, f"missing block {name!r}")

    def error(self, where, message, token=""):
        self.errors.append(ParseError(where.line, where.column, message, token))

    def read(self, block):
        """The block, its converted values and the entry of every key."""
        values, entries = {}, {}
        for entry in block.entries:
            convert = KEYS[block.name].get(entry.key)
            if convert is None:
                self.error(entry, f"unknown key {entry.key!r} in block {block.name!r}", entry.key)
                continue
            if entry.key in entries:
                first = entries[entry.key].line
                message = f"duplicate key {entry.key!r} (first at line {first})"
                self.error(entry, message, entry.key)
                continue
            try:
                values[entry.key] = convert(entry.value)
            except _Invalid as exc:
                self.error(entry, f"{entry.key}: {exc}", entry.key)
                continue
            entries[entry.key] = entry
        return block, values, entries

    def build(self):
        dataset = self.dataset()
        latent, latent_lines = self.latent()
        covariates = self.covariate_specs(dataset, latent, latent_lines)
        weights = self.weights(latent, covariates)
        train = self.train(weights)
        metrics = self.metrics(covariates)
        if self.errors or None in (dataset, latent, train, metrics) or covariates is None:
            return None
        return ExperimentPlan(dataset, latent, tuple(covariates), train, metrics)

    def construct(self, block, cls, **kwargs):
        try:
            return cls(**kwargs)
        except (CatharmError, ValueError, TypeError) as exc:
            self.error(block, str(exc))
            return None

    def dataset(self):
        if "dataset" not in self.blocks:
            return None
        block, values, _ = self.blocks["dataset"]
        if "kind" not in values:
            self.error(block, "dataset needs a kind")
            return None
        return self.construct(block, DatasetDirective, **values)

    def latent(self):
        if "latent" not in self.blocks:
            return None, {}
        block, values, entries = self.blocks["latent"]
        if "dim" not in values:
            self.error(block, "latent needs a dim")
            return None, entries
        n = values["dim"]
        where = entries["dim"]
        kwargs = {"n": n}
        for key in ("activation", "output"):
            if key in values:
                kwargs[key] = values[key]
        targets = (("encoder", "hidden"), ("decoder", "decoder"), ("classifier", "classifier"))
        for key, target in targets:
            widths = values.get(key)
            if widths is None:
                continue
            inner = widths[-1] if key == "encoder" else widths[0]
            if inner not in (n, "auto"):
                self.error(
                    entries[key],
                    f"{key} latent width {inner} at line {entries[key].line} does not match "
                    f"latent dim {n} at line {where.line}",
                )
                continue
            if any(isinstance(width, str) for width in widths[1:-1]):
                self.error(entries[key], f"{key} hidden widths must be integers")
                continue
            kwargs[target] = tuple(widths[1:-1])
        return self.construct(block, LatentSpec, **kwargs), entries

    def _columns(self, dataset):
        if dataset is None:
            return None
        if dataset.kind == TABULAR and dataset.schema is not None:
            try:
                schema = resolve_schema(dataset.schema)
            except CatharmError:
                return None
            return {column.name for column in schema.columns if column.covariate}
        return dataset.columns

    def covariate_specs(self, dataset, latent, latent_lines):
        specs, seen = [], {}
        columns = self._columns(dataset)
        failed = False
        for block, values, entries in self.covariates:
            if "name" not in values:
                self.error(block, "covariate needs a name")
                failed = True
                continue
            name = values["name"]
            if name in seen:
                self.error(
                    block,
                    f"duplicate covariate {name!r} declared at lines "
                    f"{seen[name]} and {block.line}",
                    name,
                )
                failed = True
                continue
            seen[name] = block.line
            kwargs = {key: values[key] for key in COVARIATE_FIELDS if key in values}
            kwargs.update(values.get("bins", {}))
            kwargs["weight"] = values.get("lambda", DEFAULT_LAMBDA)
            morphism, dim = values.get("morphism", ("none", None))
            kwargs["morphism"] = morphism
            kwargs["morphism_dim"] = dim
            if dim is not None and latent is not None and dim != latent.n:
                self.error(
                    entries["morphism"],
                    f"morphism dimension {dim} at line {entries['morphism'].line} does not match "
                    f"latent dim {latent.n} at line {latent_lines['dim'].line}",
                )
                failed = True
            column = kwargs.get("column", name)
            if columns is not None and column != LABEL_COLUMN and column not in columns:
                where = entries.get("column", block)
                self.error(where, f"covariate {name!r} reads unknown column {column!r}", column)
                failed = True
            spec = self.construct(block, CovariateSpec, name=name, **kwargs)
            if spec is None:
                failed = True
            else:
                specs.append(spec)
        return None if failed else specs

    def weights(self, latent, covariates):
        block, values, entries = self.blocks.get("loss", (None, {}, {}))
        has_decoder = latent is not None and latent.decoder is not None
        kwargs = {
            "lambda_r": values.get("reconstruction", 1.0 if has_decoder else 0.0),
            "lambda_p": values.get("prediction", 1.0),
            "lambda_s": values.get("structure", 1.0),
            "mu_orth": values.get("orthogonality", 0.1),
            "lambda_per_covariate": {spec.name: spec.weight for spec in covariates or ()},
        }
        where = block or _START
        if latent is not None and kwargs["lambda_r"] > 0 and not has_decoder:
            self.error(entries.get("reconstruction", where), "reconstruction needs a decoder")
            return None
        return self.construct(where, LossWeights, **kwargs)

    def train(self, weights):
        if "train" not in self.blocks or weights is None:
            return None
        block, values, _ = self.blocks["train"]
        kwargs = dict(values)
        kwargs.setdefault("folds", DEFAULT_FOLDS)
        kwargs["weights"] = weights
        if "loss" in self.blocks:
            kwargs["bandwidth"] = self.blocks["loss"][1].get("bandwidth")
        return self.construct(block, TrainConfig, **kwargs)

    def metrics(self, covariates):
        block, values, entries = self.blocks.get("metrics", (None, {}, {}))
        kwargs = dict(values)
        if "loss" in self.blocks:
            kwargs["bandwidth"] = self.blocks["loss"][1].get("bandwidth")
        nuisance = values.get("nuisance")
        if nuisance is not None and covariates is not None:
            if nuisance not in [spec.name for spec in covariates]:
                message = f"nuisance {nuisance!r} is not a covariate"
                self.error(entries["nuisance"], message, nuisance)
                return None
        return self.construct(block or _START, MetricsOptions, **kwargs)


def parse(source):
    """Plan of a spec text, or every error found in it.

    Never raises on bad input: undecodable bytes, syntax errors and
    validation errors are all returned.

    :param source: Spec text (bytes are decoded as UTF-8).
    :type source: :class:`str` or :class:`bytes`
    :return: The plan, or the list of :class:`ParseError`.
    :rtype: :class:`ExperimentPlan` or :class:`list`
    """
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            return [ParseError(1, exc.start + 1, "spec is not valid UTF-8")]
    blocks, errors = parse_blocks(source)
    plan = _Builder(blocks, errors).build()
    if errors or plan is None:
        return sorted(set(errors), key=lambda error: (error.line, error.column, error.message))
    return plan


def load_plan(path):
    """Plan of a spec file.

    :raises SpecError: Holding every error of the spec.
    """
    path = pathlib.Path(path)
    result = parse(path.read_bytes())
    if isinstance(result, list):
        raise SpecError([f"{path}:{error}" for error in result])
    logger.info("Loaded plan %s.", path)
    return result


def plan_hash(plan):
    """SHA-256 of the canonical text of `plan`."""
    from catharm.specdsl.formatter import format_plan

    return utils.sha256_of(format_plan(plan))
