"""Walks through the latent space along the learned morphisms.

A traversal plan is an ordered list of ``(covariate, exponent)`` steps. The
steps act on the latent code of a sample left to right, the first step
being applied first; the result is decoded (a generated sample) or
classified (an answer to a hypothetical question).
"""

import dataclasses
import logging
import math

import numpy as np

from catharm.dataio.transforms import TRANSFORMS, transform_rows
from catharm.exceptions import (
    DataError,
    DegenerateInput,
    FractionalPowerOnNonOrthogonal,
    MorphismError,
)
from catharm.functors import apply_morphism, classify, decode, encode
from catharm.numcore import Tensor

logger = logging.getLogger(__name__)

SEPARATOR = 128


@dataclasses.dataclass(frozen=True)
class TraversalPlan:
    steps: tuple = ()
    """``(covariate, exponent)`` pairs in application order"""

    source: int = None
    """index of the source sample, when known"""

    def __post_init__(self):
        object.__setattr__(
            self, "steps", tuple((str(name), _exponent(value)) for name, value in self.steps)
        )

    def __str__(self):
        return ",".join(f"{name}:{_format_exponent(value)}" for name, value in self.steps)

    @property
    def covariates(self):
        return [name for name, _ in self.steps]


def _exponent(value):
    value = float(value)
    return int(value) if value.is_integer() else value


def _format_exponent(value):
    return f"{value:+d}" if isinstance(value, int) else f"{value:+g}"


def parse_plan(text, source=None):
    """Plan from ``name:exponent[,name:exponent]*``, the empty text being the empty plan.

    :raises ValueError: On a malformed step.
    """
    steps = []
    for chunk in filter(None, (part.strip() for part in text.split(","))):
        name, sep, exponent = chunk.partition(":")
        if not sep or not name.strip():
            raise ValueError(f"Expected 'covariate:exponent', got {chunk!r}.")
        try:
            value = float(exponent)
        except ValueError:
            raise ValueError(f"Invalid exponent {exponent!r} in {chunk!r}.") from None
        if not math.isfinite(value):
            raise ValueError(f"Invalid exponent {exponent!r} in {chunk!r}.")
        steps.append((name.strip(), value))
    return TraversalPlan(tuple(steps), source)


def check_plan(bundle, plan):
    """Check every step names a morphism of `bundle` able to take its exponent.

    :raises MorphismError: On an unknown covariate.
    :raises FractionalPowerOnNonOrthogonal: On a real exponent of a non-orthogonal morphism.
    """
    for name, exponent in plan.steps:
        if name not in bundle.morphism_flags:
            raise MorphismError(
                f"No morphism for covariate {name!r}, known: {sorted(bundle.morphism_flags)}."
            )
        if isinstance(exponent, float) and not bundle.morphism_flags[name]:
            raise FractionalPowerOnNonOrthogonal(
                f"Real exponent {exponent} needs an orthogonal morphism, {name!r} is not."
            )


def traverse_latent(bundle, z, plan):
    """Latent code(s) `z` moved by every step of `plan`."""
    check_plan(bundle, plan)
    z = Tensor.of(z)
    for name, exponent in plan.steps:
        z = apply_morphism(bundle.morphism(name), exponent, z)
    return z


def generate_hypothetical(bundle, s, plan):
    """Decoded latent code of `s` after the steps of `plan`, ``F^-1(W... F(s))``."""
    return decode(bundle, traverse_latent(bundle, encode(bundle, s), plan))


def answer_hypothetical(bundle, s, plan):
    """Class probabilities of `s` after the steps of `plan`, ``C(W... F(s))``."""
    return classify(bundle, traverse_latent(bundle, encode(bundle, s), plan))


def interpolate(bundle, s, covariate, a_from, a_to, step):
    """Frames ``F^-1(W^a F(s))`` for `a` from `a_from` to `a_to` (inclusive) by `step`.

    :raises ValueError: If `step` is not positive.
    :raises FractionalPowerOnNonOrthogonal: If the morphism is not orthogonal.
    """
    if not step > 0:
        raise ValueError(f"Interpolation step must be positive, got {step}.")
    if not bundle.morphism(covariate).orthogonal:
        raise FractionalPowerOnNonOrthogonal(
            f"Interpolation needs an orthogonal morphism, {covariate!r} is not."
        )
    direction = 1.0 if a_to >= a_from else -1.0
    count = int(math.floor(abs(a_to - a_from) / step + 1e-9)) + 1
    z = encode(bundle, s)
    frames = []
    for k in range(count):
        a = a_from + direction * k * step
        moved = apply_morphism(bundle.morphism(covariate), _exponent(round(a, 12)), z)
        frames.append(decode(bundle, moved))
    return frames


def nearest_class(image, pool, labels):
    """Label of the pool image with the smallest mean squared error to `image`.

    Ties go to the smallest pool index.
    """
    image = np.asarray(image, dtype=np.float64).reshape(1, -1)
    pool = np.asarray(pool, dtype=np.float64).reshape(len(pool), -1)
    errors = np.mean((pool - image) ** 2, axis=1)
    return int(np.asarray(labels)[int(np.argmin(errors))])


def unit_steps(plan):
    """Cumulative plans of a traversal taken one unit of exponent at a time.

    The first plan is empty; a real exponent ends with its fractional part.
    """
    prefixes = [TraversalPlan((), plan.source)]
    done = []
    for name, exponent in plan.steps:
        sign = 1 if exponent >= 0 else -1
        whole, rest = int(abs(exponent)), abs(exponent) - int(abs(exponent))
        units = [sign] * whole + ([sign * rest] if rest > 0 else [])
        reached = 0
        for unit in units:
            reached += unit
            prefixes.append(TraversalPlan(tuple(done) + ((name, reached),), plan.source))
        done.append((name, exponent))
    return prefixes


def traverse_grid(bundle, s, plans):
    """Generated samples of every cumulative step of every plan, one row per plan."""
    return [
        [generate_hypothetical(bundle, s, step) for step in unit_steps(plan)] for plan in plans
    ]


def image_grid(rows, shape, separator=SEPARATOR):
    """Tile rows of images in one 8-bit image with 1-pixel separator lines.

    Pixel values in ``[0, 1]`` are quantized to ``[0, 255]``; short rows are
    padded with black tiles.
    """
    height, width = shape
    cols = max((len(row) for row in rows), default=0)
    grid = np.full(
        (len(rows) * (height + 1) - 1 if rows else 0, cols * (width + 1) - 1 if cols else 0),
        separator,
        dtype=np.uint8,
    )
    for r, row in enumerate(rows):
        for c in range(cols):
            tile = np.zeros(shape)
            if c < len(row):
                tile = np.asarray(Tensor.of(row[c]).data).reshape(shape)
            pixels = np.clip(np.rint(tile * 255.0), 0, 255).astype(np.uint8)
            top, left = r * (height + 1), c * (width + 1)
            grid[top : top + height, left : left + width] = pixels
    return grid


def hypothetical_shift(bundle, dataset, covariate, delta):
    """Mean class probabilities of every source bin before and after moving by `delta` bins.

    :param dataset: Samples with the codes of `covariate`.
    :type dataset: :class:`~catharm.dataio.Dataset`
    :return: ``before``, ``after`` and ``shift`` probability lists by bin code.
    :rtype: :class:`dict`
    :raises MorphismError: If `covariate` has no morphism.
    """
    plan = TraversalPlan(((covariate, delta),))
    check_plan(bundle, plan)
    codes = dataset.codes[covariate]
    z = encode(bundle, Tensor(dataset.features))
    before = classify(bundle, z).data
    after = classify(bundle, traverse_latent(bundle, z, plan)).data
    shifts = {}
    for code in np.unique(codes):
        rows = codes == code
        mean_before = before[rows].mean(axis=0)
        mean_after = after[rows].mean(axis=0)
        shifts[int(code)] = {
            "count": int(rows.sum()),
            "before": mean_before.tolist(),
            "after": mean_after.tolist(),
            "shift": (mean_after - mean_before).tolist(),
        }
    logger.info("Shifted %d bins of %s by %s.", len(shifts), covariate, delta)
    return shifts


def base_rows(dataset, transforms=()):
    """Rows of `dataset` with code 0 for every transform covariate."""
    base = np.ones(dataset.m, dtype=bool)
    for name, codes in dataset.codes.items():
        if name in TRANSFORMS or name in transforms:
            base &= np.asarray(codes) == 0
    return np.flatnonzero(base)


def transform_mse(bundle, dataset, plan, transforms=None, limit=None):
    """Mean squared error of generated images against the reference transforms.

    Every base image ``s`` of `dataset` is encoded, moved by `plan`, decoded
    and compared pixel by pixel with the image the reference transforms make
    of ``s`` when applied in the order of the steps. The error of ``s`` itself
    against the same reference is returned alongside, as the baseline of a
    model ignoring the steps.

    :param bundle: Trained bundle with a decoder.
    :param dataset: Image samples, a transform-augmented test part included.
    :type dataset: :class:`~catharm.dataio.Dataset`
    :param plan: Integer steps; every covariate names a transform.
    :type plan: :class:`TraversalPlan`
    :param transforms: Transform of a covariate, when it is not named after it.
    :type transforms: :class:`dict` of :class:`str` to :class:`str`
    :param limit: Use the first `limit` base images only.
    :return: ``(mse, baseline)``.
    :rtype: :class:`tuple`
    :raises DataError: If the dataset has no images or a step is not a transform step.
    :raises DegenerateInput: If the dataset has no base image.
    """
    check_plan(bundle, plan)
    if not dataset.images:
        raise DataError("Transform errors need an image dataset.")
    transforms = dict(transforms or {})
    for name, exponent in plan.steps:
        if not isinstance(exponent, int):
            raise DataError(f"Reference transforms take whole steps, got {name}:{exponent}.")
    rows = base_rows(dataset, transforms)
    if limit is not None:
        rows = rows[:limit]
    if not rows.size:
        raise DegenerateInput("No untransformed image to start from.")

    images = dataset.features[rows]
    targets = images
    for name, exponent in plan.steps:
        targets = transform_rows(
            targets, dataset.image_shape, transforms.get(name, name), exponent
        )
    generated = generate_hypothetical(bundle, Tensor(images), plan).data
    mse = float(np.mean((generated - targets) ** 2))
    baseline = float(np.mean((images - targets) ** 2))
    logger.debug("Transform error of %s: %.5f (baseline %.5f).", plan, mse, baseline)
    return mse, baseline
