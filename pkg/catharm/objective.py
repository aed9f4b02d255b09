"""Loss terms and their weighted composition.

Every term is a scalar node of a :class:`~catharm.functors.BatchGraph`;
norms are squared and sums are batch means.
"""

import dataclasses
import itertools
import logging

import numpy as np

from catharm.exceptions import DimensionMismatch, NonFiniteError
from catharm.functors.bundle import MORPHISM_PREFIX
from catharm.pairing import DEFAULT_LAMBDA

logger = logging.getLogger(__name__)

RECONSTRUCTION = "reconstruction"
PREDICTION = "prediction"
STRUCTURE = "structure"
INVARIANCE = "invariance"
MMD = "mmd"
ORTHOGONALITY = "orthogonality"


@dataclasses.dataclass(frozen=True)
class LossWeights:
    """Multipliers of the loss terms."""

    lambda_r: float = 1.0
    lambda_p: float = 1.0
    lambda_s: float = 1.0
    lambda_per_covariate: dict = dataclasses.field(default_factory=dict)
    mu_orth: float = 0.1

    def __post_init__(self):
        values = [self.lambda_r, self.lambda_p, self.lambda_s, self.mu_orth]
        values += list(self.lambda_per_covariate.values())
        if any(value < 0 for value in values):
            raise ValueError(f"Loss weights must be nonnegative, got {self}.")
        if not any(value > 0 for value in values):
            raise ValueError("At least one loss weight must be positive.")

    def covariate(self, name):
        return self.lambda_s * self.lambda_per_covariate.get(name, DEFAULT_LAMBDA)


@dataclasses.dataclass(frozen=True)
class LossTerm:
    """One term of the objective, as read off the model diagram."""

    kind: str
    weight: float
    covariate: str = None
    policy: str = None

    @property
    def name(self):
        return f"{self.kind}[{self.covariate}]" if self.covariate else self.kind

    def __str__(self):
        return f"{self.name} x {self.weight:g}"


@dataclasses.dataclass
class LossBreakdown:
    """Value of every term of one evaluation of the objective."""

    total: float = 0.0
    reconstruction: float = 0.0
    prediction: float = 0.0
    structure: dict = dataclasses.field(default_factory=dict)
    """covariate term (structure, invariance or mmd) by covariate"""

    orthogonality: float = 0.0
    orthogonality_terms: dict = dataclasses.field(default_factory=dict)
    """orthogonality residual by covariate"""

    terms: tuple = ()

    def recompose(self):
        """Weighted sum of the parts, to compare against :attr:`total`."""
        total = 0.0
        for term in self.terms:
            total += term.weight * self.value(term)
        return total

    def value(self, term):
        if term.kind == RECONSTRUCTION:
            return self.reconstruction
        if term.kind == PREDICTION:
            return self.prediction
        if term.kind == ORTHOGONALITY:
            return self.orthogonality_terms[term.covariate]
        return self.structure[term.covariate]

    def as_row(self, covariates=()):
        """Flat mapping of term values, for loss logs."""
        row = {
            "total": self.total,
            "reconstruction": self.reconstruction,
            "prediction": self.prediction,
            "orthogonality": self.orthogonality,
        }
        for covariate in covariates:
            row[covariate] = self.structure.get(covariate, 0.0)
        return row


def loss_terms(weights, specs):
    """Terms of the objective in declaration order.

    A reconstruction term iff ``lambda_r > 0``, a prediction term iff
    ``lambda_p > 0``, one structure, invariance or mmd term per covariate and
    one orthogonality term per orthogonal morphism.

    :param weights: Loss multipliers.
    :type weights: :class:`LossWeights`
    :param specs: Covariates in declaration order.
    :type specs: :class:`list` of :class:`~catharm.pairing.CovariateSpec`
    :rtype: :class:`list` of :class:`LossTerm`
    """
    terms = []
    if weights.lambda_r > 0:
        terms.append(LossTerm(RECONSTRUCTION, weights.lambda_r))
    if weights.lambda_p > 0:
        terms.append(LossTerm(PREDICTION, weights.lambda_p))
    for spec in specs:
        if spec.equivariant:
            kind = STRUCTURE
        else:
            kind = MMD if spec.loss == "mmd" else INVARIANCE
        terms.append(LossTerm(kind, weights.covariate(spec.name), spec.name, spec.policy))
    for spec in specs:
        if spec.equivariant and spec.orthogonal:
            terms.append(LossTerm(ORTHOGONALITY, weights.mu_orth, spec.name))
    return terms


def _mean_over(graph, sums, count):
    total = sums[0]
    for node in sums[1:]:
        total = graph.add(total, node)
    return graph.scale(total, 1.0 / count)


def reconstruction_loss(batch):
    """Mean squared l2 distance between samples and their reconstructions."""
    graph = batch.graph
    residual = graph.sub(batch.decoded(), batch.input)
    return graph.scale(graph.sum(graph.sqnorm_rows(residual)), 1.0 / len(batch))


def prediction_loss(batch, labels=None):
    """Mean cross-entropy of the labels under the classifier."""
    labels = batch.labels if labels is None else np.asarray(labels, dtype=np.intp)
    if labels is None or len(labels) != len(batch):
        raise DimensionMismatch("Prediction loss needs one label per batch row.")
    return batch.graph.softmax_cross_entropy(batch.logits(), labels)


def invariance_loss(batch, pairs):
    """Mean squared l2 distance between the latents of the paired samples."""
    graph = batch.graph
    if not len(pairs):
        return graph.constant(0.0)
    z = batch.latents
    diff = graph.sub(
        graph.take_rows(z, batch.rows(pairs.i)), graph.take_rows(z, batch.rows(pairs.j))
    )
    return _mean_over(graph, [graph.sum(graph.sqnorm_rows(diff))], len(pairs))


def structure_loss(batch, pairs):
    """Mean of ``||W^|d| F(s_low) - F(s_high)||^2`` over the pairs.

    ``s_low`` is the pair member with the smaller bin code, so only positive
    powers of the morphism appear. Pairs with ``d = 0`` contribute the
    invariance penalty.
    """
    graph = batch.graph
    if not len(pairs):
        return graph.constant(0.0)
    i, j, d = pairs.i, pairs.j, pairs.d
    low = np.where(d > 0, j, i)
    high = np.where(d > 0, i, j)
    z = batch.latents
    sums = []
    for k in np.unique(np.abs(d)):
        group = np.abs(d) == k
        source = graph.take_rows(z, batch.rows(low[group]))
        if k:
            source = graph.matmul(source, graph.transpose(batch.power(pairs.covariate, int(k))))
        diff = graph.sub(source, graph.take_rows(z, batch.rows(high[group])))
        sums.append(graph.sum(graph.sqnorm_rows(diff)))
    return _mean_over(graph, sums, len(pairs))


def mmd_loss(graph, a, b, bandwidth=None):
    """Biased squared RBF-MMD between the rows of nodes `a` and `b`.

    :param bandwidth: Kernel width, `None` for the median heuristic.
    """
    return graph.mmd_rbf(a, b, sigma=bandwidth)


def group_mmd_loss(batch, codes, bandwidth=None):
    """Mean squared MMD over every pair of code groups present in the batch."""
    graph = batch.graph
    codes = np.asarray(codes)
    groups = [np.flatnonzero(codes == code) for code in np.unique(codes)]
    if len(groups) < 2:
        return graph.constant(0.0)
    z = batch.latents
    nodes = [graph.take_rows(z, rows) for rows in groups]
    terms = [mmd_loss(graph, a, b, bandwidth) for a, b in itertools.combinations(nodes, 2)]
    return _mean_over(graph, terms, len(terms))


def orthogonality_loss(batch, covariate):
    """``||W^T W - I||_F^2`` of the morphism of `covariate`."""
    graph = batch.graph
    w = batch.parameter(MORPHISM_PREFIX + covariate)
    eye = graph.constant(np.eye(batch.bundle.n))
    return graph.frobenius_sq(graph.sub(graph.matmul(graph.transpose(w), w), eye))


def total_loss(batch, pairsets, weights, specs, bandwidth=None):
    """Weighted objective of one batch.

    Builds every term with a positive weight, evaluates the graph and
    returns the breakdown with the output node; :meth:`BatchGraph.backward`
    may follow directly.

    :param batch: Bundle bound to the batch (labels and codes attached).
    :type batch: :class:`~catharm.functors.BatchGraph`
    :param pairsets: Pairs per covariate, as dataset indices of batch rows.
    :type pairsets: :class:`dict` of :class:`str` to :class:`~catharm.pairing.PairSet`
    :param weights: Loss multipliers.
    :type weights: :class:`LossWeights`
    :param specs: Covariates.
    :param bandwidth: Fixed MMD bandwidth, `None` for the median heuristic.
    :return: The breakdown and the scalar total node.
    :rtype: :class:`tuple`
    :raises NonFiniteError: With :attr:`~NonFiniteError.term` naming the term that
        owns the first non-finite node, ``total`` for the weighted sum.
    """
    graph = batch.graph
    terms = [term for term in loss_terms(weights, specs) if term.weight > 0]
    nodes = []
    owners = []
    for term in terms:
        start = len(graph)
        if term.kind == RECONSTRUCTION:
            node = reconstruction_loss(batch)
        elif term.kind == PREDICTION:
            node = prediction_loss(batch)
        elif term.kind == STRUCTURE:
            node = structure_loss(batch, pairsets[term.covariate])
        elif term.kind == INVARIANCE:
            node = invariance_loss(batch, pairsets[term.covariate])
        elif term.kind == MMD:
            node = group_mmd_loss(batch, batch.codes[term.covariate], bandwidth)
        else:
            node = orthogonality_loss(batch, term.covariate)
        nodes.append(node)
        owners.append((start, len(graph), term.name))

    if nodes:
        weighted = [graph.scale(node, term.weight) for term, node in zip(terms, nodes)]
        total = weighted[0]
        for node in weighted[1:]:
            total = graph.add(total, node)
    else:
        total = graph.constant(0.0)
    graph.output(total)
    try:
        value = batch.forward().item()
    except NonFiniteError as exc:
        owner = (name for start, stop, name in owners if exc.node in range(start, stop))
        exc.term = next(owner, "total")
        raise

    breakdown = LossBreakdown(total=value, terms=tuple(terms))
    for term, node in zip(terms, nodes):
        term_value = node.value.item()
        if term.kind == RECONSTRUCTION:
            breakdown.reconstruction = term_value
        elif term.kind == PREDICTION:
            breakdown.prediction = term_value
        elif term.kind == ORTHOGONALITY:
            breakdown.orthogonality_terms[term.covariate] = term_value
            breakdown.orthogonality += term_value
        else:
            breakdown.structure[term.covariate] = term_value
    return breakdown, total
