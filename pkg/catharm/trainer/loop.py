import dataclasses
import logging

import numpy as np

from catharm import signals
from catharm._internal import utils
from catharm.exceptions import NonFiniteError, NonFiniteLoss
from catharm.functors import BatchGraph, build_bundle
from catharm.functors.morphism import MAX_POWER
from catharm.numcore import make_optimizer
from catharm.objective import STRUCTURE, LossBreakdown, LossWeights, loss_terms, total_loss
from catharm.pairing import MAX_PAIRS, enumerate_pairs

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Optimization settings of a run."""

    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    weights: LossWeights = dataclasses.field(default_factory=LossWeights)
    folds: int = 5
    max_pairs: int = MAX_PAIRS
    max_power: int = MAX_POWER
    retraction: bool = False
    """QR-retract orthogonal morphisms after every epoch"""

    bandwidth: float = None
    """fixed MMD kernel width, `None` for the median heuristic"""

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"At least one epoch is needed, got {self.epochs}.")
        if self.batch_size < 1:
            raise ValueError(f"Batch size must be positive, got {self.batch_size}.")
        if not self.learning_rate > 0:
            raise ValueError(f"Learning rate must be positive, got {self.learning_rate}.")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"Unknown optimizer {self.optimizer!r}.")
        if self.folds < 1:
            raise ValueError(f"Number of folds must be positive, got {self.folds}.")
        if self.max_pairs < 1 or self.max_power < 1:
            raise ValueError("Pair and power limits must be positive.")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"MMD bandwidth must be positive, got {self.bandwidth}.")

    def optimizer_for_run(self):
        return make_optimizer(
            self.optimizer, self.learning_rate, self.beta1, self.beta2, self.eps
        )


@dataclasses.dataclass
class TrainResult:
    bundle: object
    log: list = dataclasses.field(default_factory=list)
    """mean :class:`~catharm.objective.LossBreakdown` of every epoch"""

    fold: int = 0


def _sample_batches(m, batch_size, rng):
    order = rng.permutation(m)
    return [(order[start : start + batch_size], {}) for start in range(0, m, batch_size)]


def _pair_batches(dataset, external, batch_size, rng):
    """Batches of shuffled external pairs, with the samples they join."""
    entries = [(name, row) for name, pairs in sorted(external.items()) for row in pairs.entries]
    order = rng.permutation(len(entries))
    per_batch = max(1, batch_size // 2)
    batches = []
    for start in range(0, len(order), per_batch):
        chunk = [entries[k] for k in order[start : start + per_batch]]
        members = np.array([index for _, row in chunk for index in row[:2]], dtype=np.int64)
        _, first = np.unique(members, return_index=True)
        indices = members[np.sort(first)]
        pairs = {}
        for name, pairset in external.items():
            rows = [row for owner, row in chunk if owner == name]
            pairs[name] = type(pairset)(name, rows)
        batches.append((indices, pairs))
    return batches


def _mean_breakdown(breakdowns, terms):
    mean = LossBreakdown(terms=tuple(terms))
    count = len(breakdowns)
    for breakdown in breakdowns:
        mean.total += breakdown.total / count
        mean.reconstruction += breakdown.reconstruction / count
        mean.prediction += breakdown.prediction / count
        mean.orthogonality += breakdown.orthogonality / count
        for name, value in breakdown.structure.items():
            mean.structure[name] = mean.structure.get(name, 0.0) + value / count
        for name, value in breakdown.orthogonality_terms.items():
            previous = mean.orthogonality_terms.get(name, 0.0)
            mean.orthogonality_terms[name] = previous + value / count
    return mean


def morphism_flags(specs):
    return {spec.name: spec.orthogonal for spec in specs if spec.equivariant}


def train(dataset, specs, config, latent, fold=0, bundle=None):
    """Fit a bundle to `dataset`.

    Every epoch shuffles the samples with a generator derived from the seed,
    the fold and the epoch. Covariates carried by external pairs of the
    dataset are trained on those pairs, batches being formed from shuffled
    pairs; other covariates pair the samples of each batch.

    :param dataset: Training samples with their covariate codes.
    :type dataset: :class:`~catharm.dataio.Dataset`
    :param specs: Covariates.
    :type specs: :class:`list` of :class:`~catharm.pairing.CovariateSpec`
    :param config: Optimization settings.
    :type config: :class:`TrainConfig`
    :param latent: Layout of the networks.
    :type latent: :class:`~catharm.functors.LatentSpec`
    :param fold: Fold index, part of the seed of every stream.
    :param bundle: Starting bundle, a fresh seeded one if `None`.
    :rtype: :class:`TrainResult`
    :raises NonFiniteLoss: If the objective is not finite.
    """
    specs = tuple(specs)
    if bundle is None:
        bundle = build_bundle(
            latent,
            dataset.p,
            len(dataset.classes),
            morphism_flags(specs),
            seed=int(utils.spawn_rng(config.seed, fold).integers(2**32)),
        )
    bundle.max_power = config.max_power
    optimizer = config.optimizer_for_run()
    terms = loss_terms(config.weights, specs)
    external = {
        spec.name: dataset.pairsets[spec.name] for spec in specs if spec.name in dataset.pairsets
    }
    structured = [term.covariate for term in terms if term.kind == STRUCTURE and term.weight > 0]
    logger.info(
        "Training fold %d on %d samples for %d epochs, terms: %s.",
        fold,
        dataset.m,
        config.epochs,
        ", ".join(str(term) for term in terms),
    )

    result = TrainResult(bundle, fold=fold)
    for epoch in range(config.epochs):
        rng = utils.spawn_rng(config.seed, fold, epoch)
        if external:
            batches = _pair_batches(dataset, external, config.batch_size, rng)
        else:
            batches = _sample_batches(dataset.m, config.batch_size, rng)
        breakdowns = []
        paired = {name: 0 for name in structured}
        for indices, pairsets in batches:
            pairsets = dict(pairsets)
            for spec in specs:
                if spec.name not in pairsets and spec.loss != "mmd":
                    pairsets[spec.name] = enumerate_pairs(
                        dataset,
                        spec,
                        indices=indices,
                        max_pairs=config.max_pairs,
                        seed=int(rng.integers(2**32)),
                    )
            for name in paired:
                paired[name] += len(pairsets[name])
            batch = BatchGraph(
                bundle,
                dataset.features[indices],
                indices,
                dataset.labels[indices],
                {name: codes[indices] for name, codes in dataset.codes.items()},
            )
            try:
                breakdown, _ = total_loss(
                    batch, pairsets, config.weights, specs, config.bandwidth
                )
                gradients = batch.backward()
                bundle = bundle.with_parameters(optimizer.step(bundle.parameters, gradients))
            except NonFiniteError as exc:
                raise NonFiniteLoss(exc.term or exc.op, epoch, exc.value) from exc
            breakdowns.append(breakdown)

        if config.retraction:
            bundle = bundle.retract_morphisms()
        mean = _mean_breakdown(breakdowns, terms)
        for term in terms:
            if term.weight > 0 and not np.isfinite(mean.value(term)):
                raise NonFiniteLoss(term.name, epoch, mean.value(term))
        for name, count in paired.items():
            if not count:
                logger.warning(
                    "No pair for the equivariant covariate %s at epoch %d.", name, epoch
                )
                signals.pairs_empty.emit(covariate=name, epoch=epoch)
        result.log.append(mean)
        signals.epoch_end.emit(fold=fold, epoch=epoch, breakdown=mean)

    result.bundle = bundle
    return result
