from .dataset import Dataset, Standardizer, split
from .folds import fold_indices, holdout_split, kfold_split
from .loaders import DatasetDirective, attach_pairs, load_dataset, resolve_schema
from .mnist import load_mnist_idx, parse_idx, write_idx
from .synth import synth_monotone
from .tabular import Schema, SchemaColumn, load_schema, load_tabular_csv, parse_schema
from .transforms import (
    augment_with_transforms,
    make_successor_pairs,
    make_transform_pairs,
    transform_image,
)
