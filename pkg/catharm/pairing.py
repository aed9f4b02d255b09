"""Covariate binning and pair enumeration.

A pair ``(i, j, d)`` joins two samples of a dataset, ``d`` being the
difference ``c_i - c_j`` of their bin codes on one covariate.
"""

import collections
import dataclasses
import logging

import numpy as np

from catharm._internal import utils
from catharm._internal.dumpers import CsvFile
from catharm.exceptions import BinningError

logger = logging.getLogger(__name__)

CATEGORICAL, ORDINAL = "categorical", "ordinal"
INVARIANCE, EQUIVARIANCE = "invariance", "equivariance"
POLICY_ALL, POLICY_MATCHED = "all", "matched"
LABEL_COLUMN = "label"
MAX_PAIRS = 4096
DEFAULT_LAMBDA = 0.01


@dataclasses.dataclass(frozen=True)
class CovariateSpec:
    """One covariate: where it comes from, how it is binned and constrained."""

    name: str
    kind: str = CATEGORICAL
    column: str = None
    """source column, ``label`` for the class label, defaults to `name`"""

    width: float = None
    anchor: float = 0.0
    edges: tuple = None
    levels: tuple = None
    range: tuple = None  # noqa: A003
    constraint: str = INVARIANCE
    morphism: str = "none"
    """``none``, ``linear`` or ``orthogonal``"""

    morphism_dim: int = None
    weight: float = DEFAULT_LAMBDA
    loss: str = "l2"
    """``l2`` or ``mmd``, for invariance only"""

    policy: str = None
    include_d0: bool = False

    def __post_init__(self):
        if self.column is None:
            object.__setattr__(self, "column", self.name)
        if self.policy is None:
            default = POLICY_MATCHED if self.constraint == EQUIVARIANCE else POLICY_ALL
            object.__setattr__(self, "policy", default)
        for field in ("edges", "levels", "range"):
            value = getattr(self, field)
            if value is not None:
                object.__setattr__(self, field, tuple(value))

        if self.kind not in (CATEGORICAL, ORDINAL):
            raise ValueError(f"Covariate {self.name!r}: unknown kind {self.kind!r}.")
        if self.constraint not in (INVARIANCE, EQUIVARIANCE):
            raise ValueError(f"Covariate {self.name!r}: unknown constraint {self.constraint!r}.")
        if self.kind == CATEGORICAL and self.constraint != INVARIANCE:
            raise ValueError(f"Categorical covariate {self.name!r} only supports invariance.")
        if self.constraint == EQUIVARIANCE and self.morphism not in ("linear", "orthogonal"):
            raise ValueError(f"Equivariant covariate {self.name!r} needs a morphism.")
        if self.constraint == INVARIANCE and self.morphism != "none":
            raise ValueError(f"Invariant covariate {self.name!r} has no morphism.")
        if self.policy not in (POLICY_ALL, POLICY_MATCHED):
            raise ValueError(f"Covariate {self.name!r}: unknown pair policy {self.policy!r}.")
        mmd_misused = self.loss == "mmd" and self.constraint != INVARIANCE
        if self.loss not in ("l2", "mmd") or mmd_misused:
            raise ValueError(f"Covariate {self.name!r}: loss {self.loss!r} is not available.")
        if self.weight < 0:
            raise ValueError(f"Covariate {self.name!r}: weight must be nonnegative.")
        rules = [rule for rule in ("width", "edges", "levels") if getattr(self, rule) is not None]
        if len(rules) > 1:
            raise BinningError(f"Covariate {self.name!r} declares several bin rules {rules}.")
        if rules and rules[0] in ("width", "edges") and self.kind == CATEGORICAL:
            raise BinningError(f"Categorical covariate {self.name!r} cannot use {rules[0]}.")
        if self.width is not None and not self.width > 0:
            raise BinningError(f"Covariate {self.name!r}: bin width must be positive.")
        if self.edges is not None and (
            len(self.edges) < 2 or any(b <= a for a, b in zip(self.edges, self.edges[1:]))
        ):
            raise BinningError(f"Covariate {self.name!r}: edges must be increasing.")

    @property
    def equivariant(self):
        return self.constraint == EQUIVARIANCE

    @property
    def orthogonal(self):
        return self.morphism == "orthogonal"

    def to_dict(self):
        data = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclasses.dataclass(frozen=True)
class Binning:
    codes: np.ndarray
    labels: dict
    """human readable description of every code"""


def _numeric(values, spec):
    try:
        array = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise BinningError(f"Covariate {spec.name!r} has non numeric values.") from exc
    if not np.isfinite(array).all():
        raise BinningError(f"Covariate {spec.name!r} has non finite values.")
    if spec.range is not None:
        low, high = spec.range
        outside = (array < low) | (array > high)
        if outside.any():
            raise BinningError(
                f"Covariate {spec.name!r}: value {array[outside][0]} outside [{low}, {high}]."
            )
    return array


def bin_covariate(values, spec):
    """Integer bin code of every value.

    Ordinal covariates use, in order of precedence, a bin `width` from
    `anchor` (absolute bin index), explicit `edges`, declared `levels` or the
    sorted distinct values. Categorical covariates use declared `levels` or
    the first-appearance order.

    :param values: One raw value per sample.
    :param spec: The covariate.
    :type spec: :class:`CovariateSpec`
    :return: Codes and bin descriptions.
    :rtype: :class:`Binning`
    :raises BinningError: If a value lies outside the declared range, edges or levels.
    """
    values = list(values)
    if spec.kind == ORDINAL and spec.width is not None:
        array = _numeric(values, spec)
        codes = np.floor((array - spec.anchor) / spec.width).astype(np.int64)
        labels = {
            int(c): f"[{spec.anchor + c * spec.width:g}, {spec.anchor + (c + 1) * spec.width:g})"
            for c in np.unique(codes)
        }
        return Binning(codes, labels)

    if spec.kind == ORDINAL and spec.edges is not None:
        array = _numeric(values, spec)
        edges = np.asarray(spec.edges, dtype=np.float64)
        outside = (array < edges[0]) | (array > edges[-1])
        if outside.any():
            raise BinningError(
                f"Covariate {spec.name!r}: value {array[outside][0]} outside edges {spec.edges}."
            )
        codes = np.minimum(np.searchsorted(edges, array, side="right") - 1, len(edges) - 2)
        labels = {i: f"[{a:g}, {b:g})" for i, (a, b) in enumerate(zip(edges, edges[1:]))}
        return Binning(codes.astype(np.int64), labels)

    if spec.kind == ORDINAL:
        array = _numeric(values, spec)
        levels = np.unique(array) if spec.levels is None else np.asarray(spec.levels, dtype=float)
        lookup = {float(level): code for code, level in enumerate(levels)}
        return _lookup(array.tolist(), lookup, spec, key=float)

    if spec.levels is not None:
        lookup = {str(level): code for code, level in enumerate(spec.levels)}
    else:
        lookup = {}
        for value in values:
            lookup.setdefault(str(value), len(lookup))
    return _lookup(values, lookup, spec, key=str)


def _lookup(values, lookup, spec, key):
    try:
        codes = np.array([lookup[key(value)] for value in values], dtype=np.int64)
    except KeyError as exc:
        raise BinningError(
            f"Covariate {spec.name!r}: undeclared level {exc.args[0]!r}."
        ) from None
    names = {code: f"{level:g}" if key is float else level for level, code in lookup.items()}
    return Binning(codes, names)


class PairSet:
    """Immutable pairs of dataset indices for one covariate, with signed differences."""

    def __init__(self, covariate, entries=()):
        entries = np.array(entries, dtype=np.int64).reshape(-1, 3)
        if (entries[:, 0] == entries[:, 1]).any():
            raise ValueError(f"Self pair in the pairs of {covariate!r}.")
        entries.flags.writeable = False
        self.covariate = covariate
        self.entries = entries

    @property
    def i(self):
        return self.entries[:, 0]

    @property
    def j(self):
        return self.entries[:, 1]

    @property
    def d(self):
        return self.entries[:, 2]

    def __len__(self):
        return self.entries.shape[0]

    def __iter__(self):
        return (tuple(int(v) for v in row) for row in self.entries)

    def __eq__(self, other):
        if not isinstance(other, PairSet):
            return NotImplemented
        return self.covariate == other.covariate and np.array_equal(self.entries, other.entries)

    __hash__ = None

    def restrict(self, indices):
        """Pairs whose two members belong to `indices`."""
        keep = np.isin(self.i, indices) & np.isin(self.j, indices)
        return type(self)(self.covariate, self.entries[keep])

    def subsample(self, max_pairs, seed=0):
        """At most `max_pairs` pairs, seeded uniform choice keeping the order."""
        if len(self) <= max_pairs:
            return self
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(self), size=max_pairs, replace=False))
        return type(self)(self.covariate, self.entries[keep])

    def __repr__(self):
        return utils.make_repr(self, "covariate", pairs=len(self))


def enumerate_pairs(
    dataset, spec, policy=None, indices=None, include_d0=None, max_pairs=MAX_PAIRS, seed=0
):
    """Pairs of samples of `indices` for covariate `spec`.

    Under policy ``all`` every ordered pair of distinct samples in different
    bins is emitted. Under policy ``matched`` only pairs ``i < j`` (in batch
    order) agreeing on the label and on every other covariate are emitted.
    Same-bin pairs (``d = 0``) are kept iff `include_d0`.

    :param dataset: Holds ``labels`` and the per-covariate ``codes``.
    :param spec: The paired covariate.
    :type spec: :class:`CovariateSpec`
    :param policy: ``all`` or ``matched``, defaults to the covariate policy.
    :param indices: Batch of dataset indices, defaults to every sample.
    :param include_d0: Whether to keep same-bin pairs, defaults to the covariate flag.
    :param max_pairs: Maximal number of pairs, larger sets are subsampled.
    :param seed: Seed of the subsampling.
    :return: The pairs, as dataset indices.
    :rtype: :class:`PairSet`
    """
    policy = spec.policy if policy is None else policy
    include_d0 = spec.include_d0 if include_d0 is None else include_d0
    codes_by_name = dataset.codes
    all_codes = codes_by_name[spec.name]
    if indices is None:
        indices = np.arange(len(all_codes))
    indices = np.asarray(indices, dtype=np.int64)
    _, first = np.unique(indices, return_index=True)
    indices = indices[np.sort(first)]

    codes = all_codes[indices]
    d = codes[:, None] - codes[None, :]
    mask = ~np.eye(len(indices), dtype=bool)
    if not include_d0:
        mask &= d != 0
    if policy == POLICY_MATCHED:
        mask &= np.triu(np.ones_like(mask), k=1)
        if spec.column != LABEL_COLUMN:
            labels = np.asarray(dataset.labels)[indices]
            mask &= labels[:, None] == labels[None, :]
        for name, other in codes_by_name.items():
            if name != spec.name:
                other = other[indices]
                mask &= other[:, None] == other[None, :]
    elif policy != POLICY_ALL:
        raise ValueError(f"Unknown pair policy {policy!r}.")

    a, b = np.nonzero(mask)
    pairs = PairSet(spec.name, np.stack([indices[a], indices[b], d[a, b]], axis=1))
    return pairs.subsample(max_pairs, seed)


def pair_stats(pairset):
    """Number of pairs per difference ``d``, by increasing ``d``."""
    counts = collections.Counter(int(d) for d in pairset.d)
    return dict(sorted(counts.items()))


def write_pairs_csv(pairsets, path):
    """Dump pairs as ``covariate,i,j,d`` rows.

    :param pairsets: Pairs of every covariate.
    :type pairsets: iterable of :class:`PairSet`
    :param path: Output file.
    """
    rows = [(pairs.covariate, i, j, d) for pairs in pairsets for i, j, d in pairs]
    CsvFile(path, ("covariate", "i", "j", "d")).dump_in(rows)
    logger.info("Wrote %d pairs to %s.", len(rows), path)
    return len(rows)


def transitions(codes):
    """Adjacent transitions ``(c, c + 1)`` between observed codes."""
    observed = set(int(c) for c in np.unique(codes))
    return [(c, c + 1) for c in sorted(observed) if c + 1 in observed]