import dataclasses
import logging

import numpy as np

from catharm._internal import utils
from catharm.exceptions import DimensionMismatch, MissingColumn
from catharm.pairing import LABEL_COLUMN, PairSet, bin_covariate

logger = logging.getLogger(__name__)


class Standardizer:
    """Per-column affine map to zero mean and unit (population) deviation.

    Only the columns selected by `mask` are transformed; constant columns
    are only centered.
    """

    def __init__(self, mean, scale, mask=None):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.mask = np.ones(self.mean.shape, dtype=bool) if mask is None else np.asarray(mask)

    @classmethod
    def fit(cls, features, mask=None):
        features = np.asarray(features, dtype=np.float64)
        mask = np.ones(features.shape[1], dtype=bool) if mask is None else np.asarray(mask)
        mean = np.where(mask, features.mean(axis=0), 0.0)
        std = features.std(axis=0)
        scale = np.where(mask & (std > 0), std, 1.0)
        return cls(mean, scale, mask)

    def transform(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.mean.shape[0]:
            raise DimensionMismatch(
                f"Standardizer fitted on {self.mean.shape[0]} columns, got {features.shape[-1]}."
            )
        return (features - self.mean) / self.scale

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "mask": self.mask.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["mean"], data["scale"], data["mask"])

    def __eq__(self, other):
        return isinstance(other, Standardizer) and utils.attrs_eq(
            self, other, "mean", "scale", "mask"
        )

    __hash__ = None

    def __repr__(self):
        return utils.make_repr(self, columns=int(self.mask.sum()))


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """Samples with labels, covariates and their bin codes.

    `raw` keeps the features before standardization so that every split can
    refit its own :class:`Standardizer`; `columns` keeps the raw value of
    every covariate source column.
    """

    features: np.ndarray
    labels: np.ndarray
    classes: tuple = ()
    raw: np.ndarray = None
    columns: dict = dataclasses.field(default_factory=dict)
    specs: tuple = ()
    codes: dict = dataclasses.field(default_factory=dict)
    standardize: np.ndarray = None
    """mask of the feature columns to standardize, `None` for images"""

    standardizer: Standardizer = None
    provenance: str = ""
    pairsets: dict = dataclasses.field(default_factory=dict)
    image_shape: tuple = None
    feature_names: tuple = ()
    extras: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise DimensionMismatch(
                f"Expected m x p features and m labels, got {features.shape} and {labels.shape}."
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "raw", features if self.raw is None else np.asarray(self.raw))
        if not self.classes:
            classes = tuple(str(c) for c in range(labels.max(initial=-1) + 1))
            object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "specs", tuple(self.specs))
        for name, column in self.columns.items():
            if len(column) != self.m:
                raise DimensionMismatch(
                    f"Column {name!r} has {len(column)} values for {self.m} samples."
                )

    @property
    def m(self):
        return self.features.shape[0]

    @property
    def p(self):
        return self.features.shape[1]

    @property
    def images(self):
        return self.image_shape is not None

    def __len__(self):
        return self.m

    def column(self, name):
        """Raw values of a covariate source column (``label`` for the labels)."""
        if name in self.columns:
            return self.columns[name]
        if name == LABEL_COLUMN:
            return self.labels
        raise MissingColumn(f"No column {name!r} in the dataset.")

    def covariate(self, name):
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise KeyError(f"Unknown covariate {name!r}.")

    def with_covariates(self, specs):
        """Bin every covariate and attach the codes.

        Covariates carried by external pairs without a source column keep
        the codes already present.
        """
        codes = {}
        for spec in specs:
            known = spec.column in self.columns or spec.column == LABEL_COLUMN
            if not known and spec.name in self.codes:
                codes[spec.name] = self.codes[spec.name]
                continue
            codes[spec.name] = bin_covariate(self.column(spec.column), spec).codes
            logger.debug(
                "Covariate %s has bins %s.", spec.name, np.unique(codes[spec.name]).tolist()
            )
        return dataclasses.replace(self, specs=tuple(specs), codes=codes)

    def with_pairs(self, pairsets, codes=None):
        merged = dict(self.codes)
        merged.update(codes or {})
        return dataclasses.replace(self, pairsets=dict(pairsets), codes=merged)

    def subset(self, indices):
        """Samples `indices` in order; external pairs are restricted and reindexed."""
        indices = np.asarray(indices, dtype=np.int64)
        position = np.full(self.m, -1, dtype=np.int64)
        position[indices] = np.arange(len(indices))
        pairsets = {}
        for name, pairs in self.pairsets.items():
            kept = pairs.restrict(indices).entries
            pairsets[name] = PairSet(
                name, np.stack([position[kept[:, 0]], position[kept[:, 1]], kept[:, 2]], axis=1)
            )
        extras = {}
        for key, value in self.extras.items():
            per_sample = isinstance(value, np.ndarray) and len(value) == self.m
            extras[key] = value[indices] if per_sample else value
        return dataclasses.replace(
            self,
            features=self.features[indices],
            labels=self.labels[indices],
            raw=self.raw[indices],
            columns={name: np.asarray(column)[indices] for name, column in self.columns.items()},
            codes={name: codes[indices] for name, codes in self.codes.items()},
            pairsets=pairsets,
            extras=extras,
        )

    def standardized(self, standardizer=None):
        """Features standardized by `standardizer`, fitted on this dataset if `None`."""
        if self.standardize is None:
            return self
        if standardizer is None:
            standardizer = Standardizer.fit(self.raw, self.standardize)
        return dataclasses.replace(
            self, features=standardizer.transform(self.raw), standardizer=standardizer
        )

    def __repr__(self):
        return utils.make_repr(
            self, "m", "p", classes=len(self.classes), covariates=[s.name for s in self.specs]
        )


def split(dataset, train_indices, test_indices):
    """Train and test parts, the test part reusing the train standardization."""
    train = dataset.subset(train_indices).standardized()
    test = dataset.subset(test_indices).standardized(train.standardizer)
    return train, test

