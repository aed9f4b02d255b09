"""Seeded stratified splits."""

import numpy as np

from catharm.exceptions import DataError

HOLDOUT_FRACTION = 0.2


def _stratified_order(labels, seed):
    rng = np.random.default_rng(seed)
    return np.concatenate(
        [rng.permutation(np.flatnonzero(labels == label)) for label in np.unique(labels)]
    )


def kfold_split(dataset, k, seed=0):
    """Sorted test indices of each of the `k` folds.

    Samples are shuffled within their class, classes are laid end to end
    and dealt round robin, so fold sizes and per-fold class counts differ by
    at most one.

    :param dataset: Dataset or label array.
    :raises DataError: If ``k < 2`` or `k` exceeds the number of samples.
    """
    labels = np.asarray(getattr(dataset, "labels", dataset))
    if k < 2:
        raise DataError(f"Cross-validation needs at least 2 folds, got {k}.")
    if k > len(labels):
        raise DataError(f"Cannot split {len(labels)} samples in {k} folds.")
    order = _stratified_order(labels, seed)
    return [np.sort(order[fold::k]) for fold in range(k)]


def holdout_split(dataset, fraction=HOLDOUT_FRACTION, seed=0):
    """Stratified ``(train, test)`` indices, `fraction` of the samples held out."""
    labels = np.asarray(getattr(dataset, "labels", dataset))
    if not 0 < fraction < 1:
        raise DataError(f"Holdout fraction must be in (0, 1), got {fraction}.")
    k = max(2, round(1 / fraction))
    test = kfold_split(labels, k, seed)[0]
    train = np.setdiff1d(np.arange(len(labels)), test)
    return train, test


def fold_indices(dataset, k, seed=0):
    """``(train, test)`` index pairs of every fold."""
    m = len(getattr(dataset, "labels", dataset))
    return [(np.setdiff1d(np.arange(m), test), test) for test in kfold_split(dataset, k, seed)]
