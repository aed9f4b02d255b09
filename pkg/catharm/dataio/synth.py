"""Synthetic tabular data with a known monotone covariate effect."""

import logging

import numpy as np

from catharm._internal import utils
from catharm.dataio.dataset import Dataset
from catharm.exceptions import DataError

logger = logging.getLogger(__name__)

GROUPS = 3


def synth_monotone(m, p, effect=1.0, seed=0):
    """Gaussian features and a binary label whose log-odds grow with an ordinal covariate.

    The covariate ``g`` takes values in ``{0, 1, 2}`` and shifts every
    feature along a random direction ``u``. The class-1 log-odds are
    ``s . beta + effect * (g - 1)`` with ``beta`` orthogonal to ``u``, so the
    label depends on ``g`` only through `effect`. The true class-1
    probabilities are kept in ``extras["probabilities"]``.

    :param m: Number of samples.
    :param p: Number of features.
    :param effect: Log-odds shift per step of ``g``.
    :param seed: Generator seed.
    :rtype: :class:`Dataset`
    """
    if m < 1 or p < 1:
        raise DataError(f"Need m >= 1 and p >= 1, got m={m} and p={p}.")
    rng = np.random.default_rng(seed)
    g = rng.integers(0, GROUPS, size=m)
    noise = rng.standard_normal((m, p))

    direction = rng.standard_normal(p)
    direction /= np.linalg.norm(direction)
    beta = rng.standard_normal(p)
    beta -= (beta @ direction) * direction
    norm = np.linalg.norm(beta)
    beta = beta / norm if p > 1 and norm > 0 else np.zeros(p)

    logits = noise @ beta + effect * (g - 1)
    probabilities = 1.0 / (1.0 + np.exp(-logits))
    labels = (rng.random(m) < probabilities).astype(np.int64)
    features = noise + np.outer(g, direction)
    logger.debug("Synthesized %d samples, class-1 rate %.3f.", m, labels.mean())
    dataset = Dataset(
        features=features,
        labels=labels,
        classes=("0", "1"),
        columns={"g": g.astype(np.int64)},
        standardize=np.ones(p, dtype=bool),
        provenance=utils.sha256_of(f"synth_monotone:{m}:{p}:{effect!r}:{seed}"),
        feature_names=tuple(f"x{i}" for i in range(p)),
        extras={"probabilities": probabilities},
    )
    return dataset.standardized()
