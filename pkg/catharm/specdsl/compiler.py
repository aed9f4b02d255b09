"""Reads the loss terms and the pairing of every covariate off a plan."""

import dataclasses
import logging

from catharm.dataio.loaders import SUCCESSOR_COLUMN, transform_specs
from catharm.objective import MMD, loss_terms

logger = logging.getLogger(__name__)

EXTERNAL, BATCH, GROUPS = "external", "batch", "groups"


@dataclasses.dataclass(frozen=True)
class PairingDirective:
    """How the training loop obtains the pairs of one covariate.

    ``external`` pairs come with the dataset (successor or transform pairs),
    ``batch`` pairs are enumerated within every batch and ``groups`` means
    the covariate is compared bin against bin without pairs.
    """

    covariate: str
    source: str
    policy: str
    include_d0: bool
    max_pairs: int


@dataclasses.dataclass(frozen=True)
class CompiledPlan:
    terms: tuple
    pairings: tuple

    def pairing(self, covariate):
        return next(pairing for pairing in self.pairings if pairing.covariate == covariate)


def _external_columns(directive):
    if directive.pairs == "none":
        return set()
    if directive.pairs == "successor":
        return {SUCCESSOR_COLUMN}
    return {name for name, _, _ in transform_specs(directive)}


def compile_plan(plan):
    """Loss terms and pairing directives of a valid plan, in declaration order.

    :param plan: A validated plan.
    :type plan: :class:`~catharm.specdsl.ExperimentPlan`
    :rtype: :class:`CompiledPlan`
    """
    terms = tuple(loss_terms(plan.weights, plan.covariates))
    external = _external_columns(plan.dataset)
    pairings = []
    for spec in plan.covariates:
        if spec.column in external:
            source = EXTERNAL
        elif spec.loss == MMD:
            source = GROUPS
        else:
            source = BATCH
        pairings.append(
            PairingDirective(
                spec.name, source, spec.policy, spec.include_d0, plan.train.max_pairs
            )
        )
    logger.debug("Compiled %d terms: %s.", len(terms), ", ".join(map(str, terms)))
    return CompiledPlan(terms, tuple(pairings))
