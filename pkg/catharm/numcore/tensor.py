import numpy as np

from catharm._internal import utils
from catharm.exceptions import NonFiniteError, ShapeMismatch


class Tensor:
    """Immutable dense array of 64-bit reals.

    The underlying :class:`numpy.ndarray` is copied on construction and
    flagged read-only, so a :class:`Tensor` can be shared between threads.
    """

    __slots__ = ("_data",)

    def __init__(self, data, shape=None):
        """Build a tensor from any array-like.

        :param data: Values, anything :func:`numpy.array` understands.
        :param shape: Optional shape to reshape the values to (row-major).
        :type shape: :class:`tuple` of :class:`int` or `None`
        :raises ShapeMismatch: If a dimension is not positive or the shape does not fit.
        :raises NonFiniteError: If a value is NaN or infinite.
        """
        array = np.array(data, dtype=np.float64)
        if shape is not None:
            try:
                array = array.reshape(tuple(shape))
            except ValueError as exc:
                raise ShapeMismatch(f"Cannot view {array.size} values as {shape}.") from exc
        if any(dim < 1 for dim in array.shape):
            raise ShapeMismatch(f"Tensor dimensions must be positive, got {array.shape}.")
        if not np.isfinite(array).all():
            raise NonFiniteError("tensor")
        array.flags.writeable = False
        self._data = array

    @classmethod
    def of(cls, value):
        return value if isinstance(value, cls) else cls(value)

    @property
    def shape(self):
        return self._data.shape

    @property
    def ndim(self):
        return self._data.ndim

    @property
    def size(self):
        return self._data.size

    @property
    def data(self):
        """Read-only view of the values."""
        return self._data

    def numpy(self):
        """Writable copy of the values."""
        return self._data.copy()

    def item(self):
        return float(self._data.reshape(-1)[0]) if self.size == 1 else self._data.item()

    def tolist(self):
        return self._data.tolist()

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return utils.make_repr(self, "shape")
