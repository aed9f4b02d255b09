"""Latent morphisms: square matrices acting on latent vectors.

A morphism ``W`` of covariate ``c`` encodes "one bin up" on ``c``; its
integer power ``W^d`` encodes a difference of ``d`` bins. Orthogonal
morphisms additionally have real powers, the principal powers of the same
base.
"""

import dataclasses
import logging

import numpy as np
import scipy.linalg

from catharm.exceptions import (
    DimensionMismatch,
    FractionalPowerOnNonOrthogonal,
    MorphismError,
    NonInvertibleMorphism,
    PowerLimitExceeded,
)
from catharm.numcore import Tensor

logger = logging.getLogger(__name__)

MAX_POWER = 64
MAX_CONDITION = 1e8
INIT_EPSILON = 0.01


@dataclasses.dataclass(frozen=True)
class Morphism:
    covariate: str
    matrix: Tensor
    orthogonal: bool = True
    max_power: int = MAX_POWER
    tolerance: float = 1e-2
    """declared bound on ``||W^T W - I||_F`` once trained"""

    def __post_init__(self):
        matrix = Tensor.of(self.matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatch(
                f"Morphism {self.covariate!r} must be square, got {matrix.shape}."
            )
        object.__setattr__(self, "matrix", matrix)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def converged(self):
        """Whether an orthogonal morphism lies within its residual tolerance."""
        return orthogonality_residual(self) ** 0.5 <= self.tolerance


def init_matrix(n, rng, epsilon=INIT_EPSILON):
    """Identity plus a small seeded Gaussian perturbation."""
    return np.eye(n) + epsilon * rng.standard_normal((n, n))


def retract(matrix):
    """Orthogonal factor of the QR decomposition, with a positive R diagonal."""
    q, r = np.linalg.qr(np.asarray(matrix))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def orthogonality_residual(m):
    """Squared Frobenius norm of ``W^T W - I``."""
    w = m.matrix.data
    residual = w.T @ w - np.eye(m.n)
    return float(np.sum(residual * residual))


def _integer_power(m, d):
    if abs(d) > m.max_power:
        raise PowerLimitExceeded(
            f"Power {d} of morphism {m.covariate!r} exceeds the limit {m.max_power}."
        )
    w = m.matrix.data
    if d >= 0:
        return np.linalg.matrix_power(w, d)
    if m.orthogonal:
        return np.linalg.matrix_power(w.T, -d)
    condition = np.linalg.cond(w)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise NonInvertibleMorphism(
            f"Morphism {m.covariate!r} has condition number {condition:.3g}, cannot invert it."
        )
    logger.warning(
        "Negative power %d of the non-orthogonal morphism %r uses an explicit inverse.",
        d,
        m.covariate,
    )
    return np.linalg.matrix_power(np.linalg.inv(w), -d)


def morphism_power(m, a):
    """Matrix ``W^a`` of the morphism for any real exponent `a`.

    Integer exponents use repeated multiplication (``W^T`` standing for the
    inverse of an orthogonal morphism). Other exponents take the principal
    power of the same base, ``W`` for positive `a` and ``W^T`` for negative
    `a`, so ``W^a`` is continuous in `a` and meets the integer powers even
    when training left ``W`` only approximately orthogonal.

    :param m: The morphism.
    :type m: :class:`Morphism`
    :param a: Exponent.
    :type a: :class:`float`
    :return: The real ``n x n`` matrix ``W^a``.
    :rtype: :class:`numpy.ndarray`
    :raises FractionalPowerOnNonOrthogonal: If `a` is not an integer and `m` is not orthogonal.
    :raises MorphismError: If the principal power is not real (lone ``-1`` eigenvalue).
    """
    a = float(a)
    if a.is_integer():
        return _integer_power(m, int(a))
    if not m.orthogonal:
        raise FractionalPowerOnNonOrthogonal(
            f"Power {a} needs an orthogonal morphism, {m.covariate!r} is not."
        )
    if abs(a) > m.max_power:
        raise PowerLimitExceeded(
            f"Power {a} of morphism {m.covariate!r} exceeds the limit {m.max_power}."
        )
    base = m.matrix.data if a > 0 else m.matrix.data.T
    power = np.asarray(scipy.linalg.fractional_matrix_power(base, abs(a)))
    if not np.all(np.isfinite(power)) or np.max(np.abs(power.imag), initial=0.0) > 1e-8:
        raise MorphismError(f"Power {a} of morphism {m.covariate!r} is not a real matrix.")
    return power.real


def apply_morphism(m, d, z):
    """Apply ``W^d`` to the latent vector(s) `z`.

    :param m: The morphism.
    :type m: :class:`Morphism`
    :param d: Exponent, an integer or any real for orthogonal morphisms.
    :param z: One latent vector, or one latent vector per row.
    :type z: :class:`Tensor`
    :return: ``W^d z``, shaped as `z`.
    :rtype: :class:`Tensor`
    """
    z = Tensor.of(z)
    if z.shape[-1] != m.n:
        raise DimensionMismatch(
            f"Morphism {m.covariate!r} acts on dimension {m.n}, got {z.shape}."
        )
    if d == 0:
        return z
    return Tensor(z.data @ morphism_power(m, d).T)
