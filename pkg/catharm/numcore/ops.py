"""Op kinds known to :class:`catharm.numcore.Graph`.

Each op is a class holding two static rules: ``forward`` maps input arrays to
the output array, ``backward`` maps the output gradient to one gradient per
input (`None` for inputs that are not differentiable). Subclassing
:class:`Op` with a ``kind`` registers the op in :data:`ops`.
"""

import numpy as np
from scipy.spatial.distance import cdist, pdist

from catharm.exceptions import LabelOutOfRange

# the public index of every op kind
ops = {}


class Op:
    kind = None
    """unique op name used by :meth:`Graph.apply`"""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.kind is not None:
            ops[cls.kind] = cls

    @staticmethod
    def forward(*values, **attrs):
        raise NotImplementedError

    @staticmethod
    def backward(grad, values, out, **attrs):
        raise NotImplementedError


def unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class MatMul(Op):
    kind = "matmul"

    @staticmethod
    def forward(a, b):
        return np.matmul(a, b)

    @staticmethod
    def backward(grad, values, out):
        a, b = values
        a2 = a if a.ndim == 2 else a.reshape(1, -1)
        b2 = b if b.ndim == 2 else b.reshape(-1, 1)
        g2 = np.reshape(grad, (a2.shape[0], b2.shape[1]))
        return (g2 @ b2.T).reshape(a.shape), (a2.T @ g2).reshape(b.shape)


class Add(Op):
    kind = "add"

    @staticmethod
    def forward(a, b):
        return a + b

    @staticmethod
    def backward(grad, values, out):
        a, b = values
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)


class Sub(Op):
    kind = "sub"

    @staticmethod
    def forward(a, b):
        return a - b

    @staticmethod
    def backward(grad, values, out):
        a, b = values
        return unbroadcast(grad, a.shape), unbroadcast(-grad, b.shape)


class Mul(Op):
    kind = "mul"

    @staticmethod
    def forward(a, b):
        return a * b

    @staticmethod
    def backward(grad, values, out):
        a, b = values
        return unbroadcast(grad * b, a.shape), unbroadcast(grad * a, b.shape)


class Scale(Op):
    kind = "scale"

    @staticmethod
    def forward(a, factor):
        return a * factor

    @staticmethod
    def backward(grad, values, out, factor):
        return (grad * factor,)


class Tanh(Op):
    kind = "tanh"

    @staticmethod
    def forward(a):
        return np.tanh(a)

    @staticmethod
    def backward(grad, values, out):
        return (grad * (1.0 - out * out),)


class Relu(Op):
    kind = "relu"

    @staticmethod
    def forward(a):
        return np.maximum(a, 0.0)

    @staticmethod
    def backward(grad, values, out):
        return (grad * (values[0] > 0.0),)


class Sigmoid(Op):
    kind = "sigmoid"

    @staticmethod
    def forward(a):
        # split on sign so exp never overflows
        out = np.empty_like(a)
        positive = a >= 0
        out[positive] = 1.0 / (1.0 + np.exp(-a[positive]))
        exp_a = np.exp(a[~positive])
        out[~positive] = exp_a / (1.0 + exp_a)
        return out

    @staticmethod
    def backward(grad, values, out):
        return (grad * out * (1.0 - out),)


class Exp(Op):
    kind = "exp"

    @staticmethod
    def forward(a):
        return np.exp(a)

    @staticmethod
    def backward(grad, values, out):
        return (grad * out,)


class Transpose(Op):
    kind = "transpose"

    @staticmethod
    def forward(a):
        return a.T

    @staticmethod
    def backward(grad, values, out):
        return (grad.T,)


class Concat(Op):
    kind = "concat"

    @staticmethod
    def forward(*values, axis=0):
        return np.concatenate(values, axis=axis)

    @staticmethod
    def backward(grad, values, out, axis=0):
        bounds = np.cumsum([value.shape[axis] for value in values])[:-1]
        return tuple(np.split(grad, bounds, axis=axis))


class Sum(Op):
    kind = "sum"

    @staticmethod
    def forward(a):
        return np.asarray(a.sum())

    @staticmethod
    def backward(grad, values, out):
        return (np.full(values[0].shape, float(grad)),)


class Mean(Op):
    kind = "mean"

    @staticmethod
    def forward(a):
        return np.asarray(a.mean())

    @staticmethod
    def backward(grad, values, out):
        return (np.full(values[0].shape, float(grad) / values[0].size),)


class SqNormRows(Op):
    """Squared l2 norm of every row (of the vector itself when 1-D)."""

    kind = "sqnorm_rows"

    @staticmethod
    def forward(a):
        return np.einsum("...i,...i->...", a, a)

    @staticmethod
    def backward(grad, values, out):
        return (2.0 * values[0] * np.expand_dims(grad, -1),)


class FrobeniusSq(Op):
    kind = "frobenius_sq"

    @staticmethod
    def forward(a):
        return np.asarray(np.sum(a * a))

    @staticmethod
    def backward(grad, values, out):
        return (2.0 * float(grad) * values[0],)


class TakeRows(Op):
    kind = "take_rows"

    @staticmethod
    def forward(a, index):
        return a[index]

    @staticmethod
    def backward(grad, values, out, index):
        result = np.zeros_like(values[0])
        np.add.at(result, index, grad)
        return (result,)


class Inverse(Op):
    kind = "inverse"

    @staticmethod
    def forward(a):
        return np.linalg.inv(a)

    @staticmethod
    def backward(grad, values, out):
        return (-out.T @ grad @ out.T,)


def log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class SoftmaxCrossEntropy(Op):
    """Mean cross-entropy of integer labels under softmax(logits), fused."""

    kind = "softmax_cross_entropy"

    @staticmethod
    def forward(logits, labels):
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= logits.shape[-1]:
            raise LabelOutOfRange(f"Labels must lie in [0, {logits.shape[-1]}).")
        rows = np.arange(logits.shape[0])
        return np.asarray(-log_softmax(logits)[rows, labels].mean())

    @staticmethod
    def backward(grad, values, out, labels):
        logits = values[0]
        probs = np.exp(log_softmax(logits))
        probs[np.arange(logits.shape[0]), labels] -= 1.0
        return (float(grad) * probs / logits.shape[0],)


def median_bandwidth(a, b):
    """Median pairwise Euclidean distance of the pooled samples (1.0 if degenerate)."""
    distances = pdist(np.vstack([a, b]))
    distances = distances[distances > 0]
    return float(np.median(distances)) if distances.size else 1.0


def _canonical(a, b):
    """Order a pair of sample sets so that mmd(a, b) and mmd(b, a) share one evaluation."""
    return (a.shape, a.tobytes()) > (b.shape, b.tobytes())


def _kernels(a, b, sigma):
    gamma = 1.0 / (2.0 * sigma * sigma)
    return (
        np.exp(-gamma * cdist(a, a, "sqeuclidean")),
        np.exp(-gamma * cdist(b, b, "sqeuclidean")),
        np.exp(-gamma * cdist(a, b, "sqeuclidean")),
        gamma,
    )


def mmd_squared(a, b, sigma=None):
    """Biased (V-statistic) squared MMD between two sample sets with an RBF kernel.

    :param a: First samples, one per row.
    :type a: :class:`numpy.ndarray`
    :param b: Second samples, one per row.
    :type b: :class:`numpy.ndarray`
    :param sigma: Kernel bandwidth, `None` for the median heuristic.
    :type sigma: :class:`float` or `None`
    :return: The squared discrepancy and the bandwidth used.
    :rtype: :class:`tuple`
    """
    if _canonical(a, b):
        a, b = b, a
    sigma = median_bandwidth(a, b) if sigma is None else float(sigma)
    k_aa, k_bb, k_ab, _ = _kernels(a, b, sigma)
    return float(k_aa.mean() + k_bb.mean() - 2.0 * k_ab.mean()), sigma


class MmdRbf(Op):
    kind = "mmd_rbf"

    @staticmethod
    def forward(a, b, sigma=None):
        return np.asarray(mmd_squared(a, b, sigma)[0])

    @staticmethod
    def backward(grad, values, out, sigma=None):
        a, b = values
        swapped = _canonical(a, b)
        if swapped:
            a, b = b, a
        sigma = median_bandwidth(a, b) if sigma is None else float(sigma)
        k_aa, k_bb, k_ab, gamma = _kernels(a, b, sigma)
        m, n = len(a), len(b)
        g_aa = -gamma * k_aa / (m * m)
        g_bb = -gamma * k_bb / (n * n)
        g_ab = 2.0 * gamma * k_ab / (m * n)
        grad_a = 4.0 * (a * g_aa.sum(1)[:, None] - g_aa @ a)
        grad_a += 2.0 * (a * g_ab.sum(1)[:, None] - g_ab @ b)
        grad_b = 4.0 * (b * g_bb.sum(1)[:, None] - g_bb @ b)
        grad_b += 2.0 * (b * g_ab.sum(0)[:, None] - g_ab.T @ a)
        grads = (float(grad) * grad_a, float(grad) * grad_b)
        return grads[::-1] if swapped else grads
