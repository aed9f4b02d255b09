import logging

import numpy as np

from catharm._internal import utils
from catharm.exceptions import CatharmError, GraphStateError, NonFiniteError, ShapeMismatch
from catharm.numcore.ops import ops
from catharm.numcore.tensor import Tensor

logger = logging.getLogger(__name__)

INPUT, PARAMETER, CONSTANT = "input", "parameter", "constant"


class Node:
    """Handle on one record of a :class:`Graph`."""

    __slots__ = ("graph", "id", "kind", "inputs", "attrs", "name")

    def __init__(self, graph, id, kind, inputs=(), attrs=None, name=None):  # noqa: A002
        self.graph = graph
        self.id = id
        self.kind = kind
        self.inputs = tuple(inputs)
        self.attrs = attrs or {}
        self.name = name

    @property
    def value(self):
        """Value computed by the last :meth:`Graph.forward`."""
        return self.graph.value(self)

    def __repr__(self):
        return utils.make_repr(self, "id", "kind", "name")


class Graph:
    """Define-then-run computation graph with reverse-mode differentiation.

    Nodes are appended in topological order: inputs (with an optional free
    leading dimension declared as `None`), named parameters, constants and op
    applications. :meth:`forward` evaluates every node and caches the
    intermediate values, :meth:`backward` propagates the gradient of the
    scalar output to every parameter.

    A graph instance is meant to be used by a single thread.
    """

    def __init__(self):
        self._nodes = []
        self._inputs = {}
        self._parameters = {}
        self._parameter_values = {}
        self._constants = {}
        self._output = None
        self._values = None
        self._last_inputs = None

    # -- declaration

    def _append(self, kind, inputs=(), attrs=None, name=None):
        for node in inputs:
            if not isinstance(node, Node) or node.graph is not self:
                raise GraphStateError(f"Operand {node!r} does not belong to this graph.")
        node = Node(self, len(self._nodes), kind, (n.id for n in inputs), attrs, name)
        self._nodes.append(node)
        self._values = None
        return node

    def input(self, name, shape):  # noqa: A003
        """Declare a named input.

        :param name: Input name used by :meth:`forward`.
        :type name: :class:`str`
        :param shape: Expected shape, `None` entries match any size.
        :type shape: :class:`tuple`
        """
        if name in self._inputs:
            raise GraphStateError(f"Input {name!r} already declared.")
        node = self._append(INPUT, name=name, attrs={"shape": tuple(shape)})
        self._inputs[name] = node
        return node

    def parameter(self, name, tensor):
        """Declare a named parameter, or return the already declared one."""
        if name in self._parameters:
            return self._parameters[name]
        node = self._append(PARAMETER, name=name)
        self._parameters[name] = node
        self._parameter_values[name] = Tensor.of(tensor)
        return node

    def constant(self, value):
        node = self._append(CONSTANT)
        array = np.array(value, dtype=np.float64)
        array.flags.writeable = False
        self._constants[node.id] = array
        return node

    def apply(self, kind, *operands, **attrs):
        """Append the application of the registered op `kind`."""
        if kind not in ops:
            raise GraphStateError(f"Unknown op kind {kind!r}.")
        return self._append(kind, operands, attrs)

    def output(self, node):
        """Select the node :meth:`forward` returns (default: last node)."""
        if node.graph is not self:
            raise GraphStateError(f"Output {node!r} does not belong to this graph.")
        self._output = node

    # -- op shortcuts

    def matmul(self, a, b):
        return self.apply("matmul", a, b)

    def add(self, a, b):
        return self.apply("add", a, b)

    def sub(self, a, b):
        return self.apply("sub", a, b)

    def mul(self, a, b):
        return self.apply("mul", a, b)

    def scale(self, a, factor):
        return self.apply("scale", a, factor=float(factor))

    def tanh(self, a):
        return self.apply("tanh", a)

    def relu(self, a):
        return self.apply("relu", a)

    def sigmoid(self, a):
        return self.apply("sigmoid", a)

    def exp(self, a):
        return self.apply("exp", a)

    def transpose(self, a):
        return self.apply("transpose", a)

    def concat(self, nodes, axis=0):
        return self.apply("concat", *nodes, axis=axis)

    def sum(self, a):  # noqa: A003
        return self.apply("sum", a)

    def mean(self, a):
        return self.apply("mean", a)

    def sqnorm_rows(self, a):
        return self.apply("sqnorm_rows", a)

    def frobenius_sq(self, a):
        return self.apply("frobenius_sq", a)

    def take_rows(self, a, index):
        return self.apply("take_rows", a, index=np.asarray(index, dtype=np.intp))

    def inverse(self, a):
        return self.apply("inverse", a)

    def softmax_cross_entropy(self, logits, labels):
        labels = np.asarray(labels, dtype=np.intp)
        return self.apply("softmax_cross_entropy", logits, labels=labels)

    def mmd_rbf(self, a, b, sigma=None):
        return self.apply("mmd_rbf", a, b, sigma=sigma)

    def activation(self, name, a):
        """Apply the activation called `name` (``linear`` is the identity)."""
        if name in (None, "linear", "identity"):
            return a
        if name not in ("tanh", "relu", "sigmoid"):
            raise GraphStateError(f"Unknown activation {name!r}.")
        return self.apply(name, a)

    # -- parameters

    @property
    def parameters(self):
        return dict(self._parameter_values)

    def set_parameter(self, name, tensor):
        if name not in self._parameters:
            raise KeyError(f"Unknown parameter {name!r}.")
        tensor = Tensor.of(tensor)
        if tensor.shape != self._parameter_values[name].shape:
            expected = self._parameter_values[name].shape
            raise ShapeMismatch(f"Parameter {name!r} has shape {expected}, got {tensor.shape}.")
        self._parameter_values[name] = tensor
        self._values = None

    # -- evaluation

    def _check_inputs(self, inputs):
        if set(inputs) != set(self._inputs):
            raise ShapeMismatch(
                f"Graph inputs are {sorted(self._inputs)}, received {sorted(inputs)}."
            )
        arrays = {}
        for name, node in self._inputs.items():
            value = inputs[name]
            array = value.data if isinstance(value, Tensor) else Tensor(value).data
            expected = node.attrs["shape"]
            if len(expected) != array.ndim or any(
                dim is not None and dim != size for dim, size in zip(expected, array.shape)
            ):
                raise ShapeMismatch(f"Input {name!r} expects {expected}, got {array.shape}.")
            arrays[name] = array
        return arrays

    def forward(self, inputs=None):
        """Evaluate the graph.

        :param inputs: Value of every declared input.
        :type inputs: :class:`collections.abc.Mapping` of :class:`str` to :class:`Tensor`
        :return: Value of the output node.
        :rtype: :class:`Tensor`
        :raises ShapeMismatch: If inputs or operands have incompatible shapes.
        :raises NonFiniteError: If an intermediate value is NaN or infinite.
        """
        if not self._nodes:
            raise GraphStateError("Empty graph.")
        inputs = dict(inputs or {})
        arrays = self._check_inputs(inputs)

        values = []
        for node in self._nodes:
            if node.kind == INPUT:
                value = arrays[node.name]
            elif node.kind == PARAMETER:
                value = self._parameter_values[node.name].data
            elif node.kind == CONSTANT:
                value = self._constants[node.id]
            else:
                operands = [values[i] for i in node.inputs]
                try:
                    value = ops[node.kind].forward(*operands, **node.attrs)
                except CatharmError:
                    raise
                except np.linalg.LinAlgError as exc:
                    raise NonFiniteError(node.kind, f"{node.kind}: {exc}") from exc
                except (ValueError, IndexError) as exc:
                    raise ShapeMismatch(f"{node.kind}: {exc}") from exc
                value = np.asarray(value, dtype=np.float64)
                finite = np.isfinite(value)
                if not finite.all():
                    bad = float(value[~finite].flat[0])
                    raise NonFiniteError(node.kind, node=node.id, value=bad)
            values.append(value)

        self._values = values
        self._last_inputs = inputs
        return Tensor(values[self._output_node().id])

    def _output_node(self):
        return self._output if self._output is not None else self._nodes[-1]

    def value(self, node):
        if self._values is None:
            raise GraphStateError("Run forward() before reading values.")
        return Tensor(self._values[node.id])

    def backward(self):
        """Gradient of the scalar output with respect to every parameter.

        :return: A gradient tensor per parameter name, shaped as the parameter.
        :rtype: :class:`dict`
        :raises GraphStateError: If forward did not run or the output is not a scalar.
        """
        if self._values is None:
            raise GraphStateError("Run forward() before backward().")
        output = self._output_node()
        if self._values[output.id].size != 1:
            raise GraphStateError(
                f"Output must be a scalar, got shape {self._values[output.id].shape}."
            )

        grads = [None] * len(self._nodes)
        grads[output.id] = np.ones_like(self._values[output.id])
        for node in reversed(self._nodes[: output.id + 1]):
            grad = grads[node.id]
            if grad is None or node.kind in (INPUT, PARAMETER, CONSTANT):
                continue
            operands = [self._values[i] for i in node.inputs]
            input_grads = ops[node.kind].backward(
                grad, operands, self._values[node.id], **node.attrs
            )
            for i, input_grad in zip(node.inputs, input_grads):
                if input_grad is None:
                    continue
                grads[i] = input_grad if grads[i] is None else grads[i] + input_grad

        result = {}
        for name, node in self._parameters.items():
            grad = grads[node.id]
            shape = self._parameter_values[name].shape
            array = np.zeros(shape) if grad is None else np.reshape(grad, shape)
            result[name] = Tensor(array)
        return result

    def __len__(self):
        return len(self._nodes)

    def __repr__(self):
        return utils.make_repr(self, nodes=len(self._nodes), parameters=sorted(self._parameters))


def forward(graph, inputs=None):
    """Evaluate `graph`, see :meth:`Graph.forward`."""
    return graph.forward(inputs)


def backward(graph):
    """Differentiate `graph`, see :meth:`Graph.backward`."""
    return graph.backward()
