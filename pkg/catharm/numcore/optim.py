"""First-order optimizers over named parameters."""

import logging
from abc import ABC, abstractmethod

import numpy as np

from catharm.numcore.tensor import Tensor

logger = logging.getLogger(__name__)

SGD, ADAM = "sgd", "adam"


class Optimizer(ABC):
    """Update rule mapping parameters and their gradients to new parameters.

    Parameters without a gradient are treated as having a zero gradient.
    """

    def __init__(self, learning_rate):
        if not learning_rate > 0:
            raise ValueError(f"Learning rate must be positive, got {learning_rate}.")
        self.learning_rate = learning_rate

    @abstractmethod
    def _update(self, name, value, grad):
        raise NotImplementedError

    def step(self, parameters, gradients):
        """New values of every parameter.

        :param parameters: Current values by name.
        :type parameters: :class:`dict` of :class:`str` to :class:`Tensor`
        :param gradients: Gradients by name, missing ones count as zero.
        :type gradients: :class:`dict` of :class:`str` to :class:`Tensor`
        :rtype: :class:`dict` of :class:`str` to :class:`Tensor`
        """
        updated = {}
        for name in sorted(parameters):
            value = parameters[name].data
            grad = gradients.get(name)
            grad = np.zeros_like(value) if grad is None else Tensor.of(grad).data
            updated[name] = Tensor(self._update(name, value, grad))
        return updated


class Sgd(Optimizer):
    def _update(self, name, value, grad):
        return value - self.learning_rate * grad


class Adam(Optimizer):
    """Adam with bias-corrected moment estimates."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._moments = {}
        self._t = 0

    def step(self, parameters, gradients):
        self._t += 1
        return super().step(parameters, gradients)

    def _update(self, name, value, grad):
        m, v = self._moments.get(name, (np.zeros_like(value), np.zeros_like(value)))
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self._moments[name] = (m, v)
        m_hat = m / (1.0 - self.beta1**self._t)
        v_hat = v / (1.0 - self.beta2**self._t)
        return value - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
    if kind == SGD:
        return Sgd(learning_rate)
    if kind == ADAM:
        return Adam(learning_rate, beta1, beta2, eps)
    raise ValueError(f"Unknown optimizer {kind!r}, expected {SGD!r} or {ADAM!r}.")
