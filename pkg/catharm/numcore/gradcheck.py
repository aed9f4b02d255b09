"""Finite-difference oracle for :meth:`Graph.backward`."""

import dataclasses
import logging

import numpy as np

from catharm.numcore.graph import Graph
from catharm.numcore.tensor import Tensor

logger = logging.getLogger(__name__)

MAX_ENTRIES = 10_000
STEP = 1e-5
FLOOR = 1e-4


@dataclasses.dataclass
class GradCheckReport:
    """Outcome of :func:`grad_check`."""

    tolerance: float
    errors: dict = dataclasses.field(default_factory=dict)
    """max relative error per parameter name"""

    checked: dict = dataclasses.field(default_factory=dict)
    """number of entries compared per parameter name"""

    @property
    def failures(self):
        return sorted(name for name, error in self.errors.items() if not error <= self.tolerance)

    @property
    def passed(self):
        return not self.failures

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)


def relative_error(analytic, numeric, floor=FLOOR):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(graph, inputs=None, seed=0, tolerance=1e-5, step=STEP, max_entries=MAX_ENTRIES):
    """Compare :meth:`Graph.backward` to central finite differences.

    Every parameter entry is perturbed by ``±step``; parameters larger than
    `max_entries` are checked on a seeded random subsample of their entries.

    :param graph: A graph with a scalar output.
    :type graph: :class:`Graph`
    :param inputs: Graph inputs, defaults to the ones of the last forward pass.
    :param seed: Seed of the entry subsampling.
    :type seed: :class:`int`
    :param tolerance: Maximum accepted relative error.
    :type tolerance: :class:`float`
    :return: Per-parameter maximum relative errors and pass/fail flags.
    :rtype: :class:`GradCheckReport`
    """
    if inputs is None:
        inputs = graph._last_inputs or {}
    report = GradCheckReport(tolerance=tolerance)
    parameters = graph.parameters
    if not parameters:
        return report

    graph.forward(inputs)
    analytic = graph.backward()
    rng = np.random.default_rng(seed)

    for name in sorted(parameters):
        original = parameters[name]
        flat = original.numpy().reshape(-1)
        entries = np.arange(flat.size)
        if flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        worst = 0.0
        gradient = analytic[name].data.reshape(-1)
        for index in entries:
            values = []
            for sign in (1.0, -1.0):
                perturbed = flat.copy()
                perturbed[index] += sign * step
                graph.set_parameter(name, Tensor(perturbed, original.shape))
                values.append(graph.forward(inputs).item())
            numeric = (values[0] - values[1]) / (2.0 * step)
            worst = max(worst, relative_error(float(gradient[index]), numeric))
        graph.set_parameter(name, original)

        report.errors[name] = worst
        report.checked[name] = int(entries.size)
        logger.debug("Gradient check of %s: max relative error %.3g.", name, worst)

    graph.forward(inputs)
    return report


def _away_from_zero(values, margin=0.1):
    return values + np.where(values >= 0, margin, -margin)


def op_suite(seed=0):
    """Small graphs exercising every built-in op kind.

    Each graph reduces the op output to a scalar through a fixed random
    weighting, so every output entry contributes to the checked gradient.

    :param seed: Seed of the random parameters.
    :type seed: :class:`int`
    :return: Graph per op kind, parameters only (no inputs).
    :rtype: :class:`dict`
    """
    rng = np.random.default_rng(seed)

    def normal(*shape):
        return rng.standard_normal(shape)

    def reduce(graph, node, shape):
        weights = graph.constant(normal(*shape))
        graph.output(graph.sum(graph.mul(node, weights)))
        return graph

    suite = {}

    def unary(kind, values):
        graph = Graph()
        a = graph.parameter("a", values)
        suite[kind] = reduce(graph, graph.apply(kind, a), np.shape(values))

    def binary(kind, left, right, out_shape):
        graph = Graph()
        a = graph.parameter("a", left)
        b = graph.parameter("b", right)
        suite[kind] = reduce(graph, graph.apply(kind, a, b), out_shape)

    binary("matmul", normal(3, 4), normal(4, 2), (3, 2))
    binary("add", normal(3, 4), normal(4), (3, 4))
    binary("sub", normal(3, 4), normal(3, 4), (3, 4))
    binary("mul", normal(3, 4), normal(1, 4), (3, 4))
    unary("tanh", normal(3, 4))
    unary("relu", _away_from_zero(normal(3, 4)))
    unary("sigmoid", 3.0 * normal(3, 4))
    unary("exp", normal(3, 4))

    graph = Graph()
    a = graph.parameter("a", normal(3, 4))
    suite["transpose"] = reduce(graph, graph.transpose(a), (4, 3))

    graph = Graph()
    a = graph.parameter("a", normal(3, 4))
    suite["sqnorm_rows"] = reduce(graph, graph.sqnorm_rows(a), (3,))

    graph = Graph()
    a = graph.parameter("a", normal(3, 4))
    suite["scale"] = reduce(graph, graph.scale(a, 1.7), (3, 4))

    graph = Graph()
    a, b = graph.parameter("a", normal(3, 2)), graph.parameter("b", normal(3, 3))
    suite["concat"] = reduce(graph, graph.concat([a, b], axis=1), (3, 5))

    for kind in ("sum", "mean", "frobenius_sq"):
        graph = Graph()
        graph.output(graph.apply(kind, graph.parameter("a", normal(3, 4))))
        suite[kind] = graph

    graph = Graph()
    a = graph.parameter("a", normal(3, 4))
    suite["take_rows"] = reduce(graph, graph.take_rows(a, [0, 2, 2, 1]), (4, 4))

    graph = Graph()
    a = graph.parameter("a", 3.0 * np.eye(3) + 0.3 * normal(3, 3))
    suite["inverse"] = reduce(graph, graph.inverse(a), (3, 3))

    graph = Graph()
    logits = graph.parameter("a", 2.0 * normal(5, 3))
    graph.output(graph.softmax_cross_entropy(logits, rng.integers(0, 3, size=5)))
    suite["softmax_cross_entropy"] = graph

    graph = Graph()
    a, b = graph.parameter("a", normal(4, 3)), graph.parameter("b", normal(5, 3) + 0.5)
    graph.output(graph.mmd_rbf(a, b, sigma=1.5))
    suite["mmd_rbf"] = graph

    return suite
