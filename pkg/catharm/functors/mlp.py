import dataclasses
import logging
import math

import numpy as np

from catharm.exceptions import DimensionMismatch
from catharm.numcore import Tensor

logger = logging.getLogger(__name__)

ACTIVATIONS = ("linear", "relu", "sigmoid", "tanh")

# fan-in gain of the Kaiming-uniform initialization per activation
GAINS = {"linear": 1.0, "sigmoid": 1.0, "relu": math.sqrt(2.0), "tanh": 5.0 / 3.0}


@dataclasses.dataclass(frozen=True)
class LatentSpec:
    """Shape of the latent category and of the networks around it.

    `hidden`, `decoder` and `classifier` list hidden layer widths; a `None`
    decoder means the model has no decoder.
    """

    n: int
    hidden: tuple = ()
    activation: str = "relu"
    decoder: tuple = None
    output: str = "linear"
    """output activation of the decoder"""

    classifier: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(width) for width in self.hidden))
        object.__setattr__(self, "classifier", tuple(int(width) for width in self.classifier))
        if self.decoder is not None:
            object.__setattr__(self, "decoder", tuple(int(width) for width in self.decoder))
        widths = self.hidden + self.classifier + (self.decoder or ())
        if self.n < 1 or any(width < 1 for width in widths):
            raise DimensionMismatch(
                "Latent dimension and widths must be positive, "
                f"got n={self.n}, hidden={self.hidden}."
            )
        for name in (self.activation, self.output):
            if name not in ACTIVATIONS:
                raise ValueError(f"Unknown activation {name!r}.")


@dataclasses.dataclass(frozen=True)
class MLP:
    """Fully connected network ``x @ W + b`` layer after layer.

    Hidden layers use `activation`, the last one `output`. Parameters are
    named ``<prefix>.W<i>`` and ``<prefix>.b<i>``.
    """

    prefix: str
    dims: tuple
    activation: str = "relu"
    output: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(dim) for dim in self.dims))
        if len(self.dims) < 2 or any(dim < 1 for dim in self.dims):
            raise DimensionMismatch(f"Invalid {self.prefix} dims {self.dims}.")
        for name in (self.activation, self.output):
            if name not in ACTIVATIONS:
                raise ValueError(f"Unknown activation {name!r}.")

    @property
    def in_dim(self):
        return self.dims[0]

    @property
    def out_dim(self):
        return self.dims[-1]

    @property
    def depth(self):
        return len(self.dims) - 1

    def parameter_shapes(self):
        shapes = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.dims, self.dims[1:])):
            shapes[f"{self.prefix}.W{i}"] = (fan_in, fan_out)
            shapes[f"{self.prefix}.b{i}"] = (fan_out,)
        return shapes

    def init(self, rng):
        """Kaiming-uniform weights and zero biases.

        :param rng: Source of randomness.
        :type rng: :class:`numpy.random.Generator`
        :return: Initial parameters by name.
        :rtype: :class:`dict` of :class:`Tensor`
        """
        parameters = {}
        for i, (fan_in, fan_out) in enumerate(zip(self.dims, self.dims[1:])):
            gain = GAINS[self.output if i == self.depth - 1 else self.activation]
            bound = gain * math.sqrt(3.0 / fan_in)
            parameters[f"{self.prefix}.W{i}"] = Tensor(
                rng.uniform(-bound, bound, size=(fan_in, fan_out))
            )
            parameters[f"{self.prefix}.b{i}"] = Tensor(np.zeros(fan_out))
        return parameters

    def build(self, graph, x, parameters):
        """Append the network applied to node `x` to `graph`.

        :param graph: Graph to extend.
        :type graph: :class:`catharm.numcore.Graph`
        :param x: Node holding one sample per row.
        :param parameters: Values of every parameter of the network.
        :type parameters: :class:`dict`
        :return: Output node.
        """
        for i in range(self.depth):
            weight = graph.parameter(f"{self.prefix}.W{i}", parameters[f"{self.prefix}.W{i}"])
            bias = graph.parameter(f"{self.prefix}.b{i}", parameters[f"{self.prefix}.b{i}"])
            x = graph.add(graph.matmul(x, weight), bias)
            x = graph.activation(self.output if i == self.depth - 1 else self.activation, x)
        return x

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)
