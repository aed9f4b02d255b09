"""Image transforms and the pairs they induce.

Rotations turn images counter-clockwise by 5 degrees per step; scalings pad
one pixel on each side per step and resize back. Both use bilinear
interpolation and fill out-of-frame pixels with 0.
"""

import dataclasses
import logging

import numpy as np
from scipy import ndimage

from catharm._internal import utils
from catharm.exceptions import DataError, EmptyClass
from catharm.pairing import PairSet

logger = logging.getLogger(__name__)

ROTATE, SCALE = "rotate", "scale"
DEGREES_PER_STEP = 5.0


def rotate(image, k):
    """Counter-clockwise rotation by ``5 k`` degrees."""
    if k == 0:
        return np.array(image, dtype=np.float64)
    rotated = ndimage.rotate(
        np.asarray(image, dtype=np.float64),
        DEGREES_PER_STEP * k,
        reshape=False,
        order=1,
        mode="constant",
        cval=0.0,
    )
    return np.clip(rotated, 0.0, 1.0)


def scale(image, k):
    """Pad `k` zero pixels on each side, then resize back to the original size."""
    image = np.asarray(image, dtype=np.float64)
    if k == 0:
        return image.copy()
    if k < 0:
        raise DataError("Scaling only pads, the number of steps must be nonnegative.")
    padded = np.pad(image, k, mode="constant", constant_values=0.0)
    factors = [size / padded_size for size, padded_size in zip(image.shape, padded.shape)]
    zoomed = ndimage.zoom(padded, factors, order=1, mode="constant", cval=0.0)
    return np.clip(zoomed[: image.shape[0], : image.shape[1]], 0.0, 1.0)


TRANSFORMS = {ROTATE: rotate, SCALE: scale}


def transform_image(image, transform, k):
    """Apply `k` steps of the transform called `transform` to one image."""
    if transform not in TRANSFORMS:
        raise DataError(f"Unknown transform {transform!r}, expected one of {sorted(TRANSFORMS)}.")
    return TRANSFORMS[transform](image, k)


def transform_rows(rows, shape, transform, k):
    """Transform flattened images, one per row."""
    return np.stack(
        [transform_image(row.reshape(shape), transform, k).reshape(-1) for row in rows]
    )


def augment_with_transforms(dataset, transforms):
    """Base images followed by their transformed copies, with one pair set per transform.

    :param dataset: Image dataset.
    :type dataset: :class:`~catharm.dataio.Dataset`
    :param transforms: ``(covariate name, transform, max steps)`` triples.
    :return: The augmented dataset, its pairs carried in ``pairsets``.
    :rtype: :class:`~catharm.dataio.Dataset`
    :raises DataError: If the dataset does not hold images.
    """
    if not dataset.images:
        raise DataError("Transform pairs need an image dataset.")
    m = dataset.m
    blocks, labels = [dataset.raw], [dataset.labels]
    codes = {name: [np.zeros(m, dtype=np.int64)] for name, _, _ in transforms}
    pairsets = {}
    offset = m
    for name, transform, steps in transforms:
        entries = []
        for k in range(1, steps + 1):
            blocks.append(transform_rows(dataset.raw, dataset.image_shape, transform, k))
            labels.append(dataset.labels)
            for other in codes:
                codes[other].append(np.full(m, k if other == name else 0, dtype=np.int64))
            base = np.arange(m)
            entries.append(np.stack([base, offset + base, np.full(m, -k)], axis=1))
            offset += m
        pairsets[name] = PairSet(name, np.vstack(entries) if entries else ())
        logger.info("Built %d %s pairs over %d steps.", len(pairsets[name]), transform, steps)

    features = np.vstack(blocks)
    codes = {name: np.concatenate(parts) for name, parts in codes.items()}
    columns = {name: np.asarray(column) for name, column in dataset.columns.items()}
    columns = {name: np.tile(column, len(blocks)) for name, column in columns.items()}
    columns.update(codes)
    return dataclasses.replace(
        dataset,
        features=features,
        labels=np.concatenate(labels),
        raw=features,
        columns=columns,
        codes=dict(codes),
        pairsets=pairsets,
        provenance=utils.sha256_of(dataset.provenance, repr(transforms)),
        extras={},
    )


def make_transform_pairs(dataset, transform, max_steps, name=None):
    """Augmented dataset and the ``(base, transformed, -k)`` pairs for ``k = 1..max_steps``.

    Base images have code 0 and their ``k``-step copies code ``k``.
    """
    name = name or transform
    augmented = augment_with_transforms(dataset, [(name, transform, max_steps)])
    return augmented, augmented.pairsets[name]


def make_successor_pairs(dataset, seed=0, covariate="digit"):
    """Pairs of a digit-``l`` image with a digit-``(l + 1)`` image.

    Both classes are shuffled with `seed` and zipped, giving
    ``min(|l|, |l + 1|)`` pairs with ``d = -1`` per consecutive label pair.

    :raises EmptyClass: If a label between the smallest and the largest one has no sample.
    """
    rng = np.random.default_rng(seed)
    present = np.unique(dataset.labels)
    if present.size < 2:
        raise EmptyClass("Successor pairs need at least two consecutive labels.")
    entries = []
    members = {}
    for label in range(int(present[0]), int(present[-1]) + 1):
        indices = np.flatnonzero(dataset.labels == label)
        if not indices.size:
            raise EmptyClass(f"No sample with label {label}.")
        members[label] = rng.permutation(indices)
    for label in range(int(present[0]), int(present[-1])):
        low, high = members[label], members[label + 1]
        count = min(len(low), len(high))
        entries.append(np.stack([low[:count], high[:count], np.full(count, -1)], axis=1))
    pairs = PairSet(covariate, np.vstack(entries))
    logger.info("Built %d successor pairs.", len(pairs))
    return pairs
