import math
import struct

import numpy as np
from pytest import fixture, mark, raises

from catharm.dataio import (
    Dataset,
    DatasetDirective,
    Standardizer,
    attach_pairs,
    augment_with_transforms,
    fold_indices,
    holdout_split,
    kfold_split,
    load_dataset,
    load_mnist_idx,
    load_tabular_csv,
    make_successor_pairs,
    make_transform_pairs,
    parse_idx,
    parse_schema,
    resolve_schema,
    split,
    synth_monotone,
    transform_image,
    write_idx,
)
from catharm.dataio.mnist import IMAGES_MAGIC, LABELS_MAGIC
from catharm.exceptions import (
    DataError,
    DimensionMismatch,
    EmptyClass,
    IdxBadMagic,
    IdxDimensionMismatch,
    IdxTruncated,
    MissingColumn,
)
from catharm.pairing import CovariateSpec, PairSet

from .utils import toy_dataset, write_mnist

SCHEMA = """
# toy table
age, numeric, covariate
color, categorical, both
score, numeric, feature
note, categorical, ignore
income, categorical, label
"""

CSV = """age,color,score,note,income
30,red,1.5,x,>50K
41,blue,2.5,y,<=50K
?,red,3.0,z,>50K
52, green ,4.0,,<=50K.
27,blue,oops,x,>50K
"""


@fixture
def mnist_files(tmp_path):
    return write_mnist(tmp_path, count=20)


@fixture
def images():
    rng = np.random.default_rng(0)
    return Dataset(
        features=rng.random((5, 28 * 28)),
        labels=np.arange(5),
        columns={"digit": np.arange(5)},
        image_shape=(28, 28),
    )


def test_mnist_round_trip(mnist_files):
    dataset = load_mnist_idx(*mnist_files)
    assert dataset.m == 20 and dataset.p == 784
    assert dataset.image_shape == (28, 28)
    assert 0.0 <= dataset.features.min() and dataset.features.max() <= 1.0
    assert dataset.labels.tolist() == [i % 10 for i in range(20)]
    assert dataset.column("digit").tolist() == dataset.labels.tolist()
    assert load_mnist_idx(*mnist_files, limit=7).m == 7


def test_mnist_gzip(tmp_path):
    images, labels = tmp_path / "images.gz", tmp_path / "labels.gz"
    write_idx(images, np.full((3, 28, 28), 255), IMAGES_MAGIC)
    write_idx(labels, [1, 2, 3], LABELS_MAGIC)
    assert images.read_bytes()[:2] == b"\x1f\x8b"
    dataset = load_mnist_idx(images, labels)
    assert (dataset.features == 1.0).all() and dataset.labels.tolist() == [1, 2, 3]


@mark.parametrize(
    "data, error",
    (
        (b"\x00\x00", IdxTruncated),
        (struct.pack(">I", LABELS_MAGIC), IdxBadMagic),
        (struct.pack(">II", IMAGES_MAGIC, 1), IdxTruncated),
        (struct.pack(">IIII", IMAGES_MAGIC, 1, 2, 2) + b"\x00\x00\x00", IdxTruncated),
    ),
)
def test_parse_idx_errors(data, error):
    with raises(error):
        parse_idx(data, IMAGES_MAGIC, 3)


@mark.parametrize("seed", range(100))
def test_parse_idx_on_corrupted_bytes(seed):
    rng = np.random.default_rng(seed)
    valid = struct.pack(">IIII", IMAGES_MAGIC, 2, 3, 3) + bytes(range(18))
    data = bytearray(valid[: rng.integers(1, len(valid) + 1)])
    for index in rng.integers(len(data), size=rng.integers(0, 4)):
        data[index] ^= int(rng.integers(1, 256))
    data = bytes(data)
    if len(data) >= 4 and data[:4] != valid[:4]:
        with raises(IdxBadMagic):
            parse_idx(data, IMAGES_MAGIC, 3)
        return
    try:
        dims, payload = parse_idx(data, IMAGES_MAGIC, 3)
    except IdxTruncated:
        return
    assert payload.size == math.prod(dims) <= len(data) - 16


def test_parse_idx():
    data = struct.pack(">II", LABELS_MAGIC, 3) + b"\x01\x02\x03"
    dims, payload = parse_idx(data, LABELS_MAGIC, 1)
    assert dims == (3,) and payload.tolist() == [1, 2, 3]


def test_mnist_dimension_errors(tmp_path):
    images, labels = tmp_path / "images", tmp_path / "labels"
    write_idx(images, np.zeros((2, 27, 28)), IMAGES_MAGIC)
    write_idx(labels, [0, 1], LABELS_MAGIC)
    with raises(IdxDimensionMismatch):
        load_mnist_idx(images, labels)
    write_idx(images, np.zeros((3, 28, 28)), IMAGES_MAGIC)
    with raises(IdxDimensionMismatch):
        load_mnist_idx(images, labels)


def test_synth_is_seeded():
    first, second = synth_monotone(50, 3, seed=4), synth_monotone(50, 3, seed=4)
    assert np.array_equal(first.features, second.features)
    assert first.provenance == second.provenance
    assert not np.array_equal(first.features, synth_monotone(50, 3, seed=5).features)
    assert set(first.column("g").tolist()) <= {0, 1, 2}
    np.testing.assert_allclose(first.features.mean(axis=0), 0.0, atol=1e-12)


def test_synth_label_grows_with_the_covariate():
    dataset = synth_monotone(6000, 4, effect=2.0, seed=0)
    rates = [dataset.labels[dataset.column("g") == g].mean() for g in range(3)]
    assert rates[0] < rates[1] < rates[2]


def test_synth_needs_samples():
    with raises(DataError):
        synth_monotone(0, 3)


def test_kfold_split_is_stratified():
    labels = np.array([0] * 13 + [1] * 7)
    folds = kfold_split(labels, 3, seed=2)
    assert sorted(np.concatenate(folds).tolist()) == list(range(20))
    sizes = [len(fold) for fold in folds]
    assert max(sizes) - min(sizes) <= 1
    ones = [int(labels[fold].sum()) for fold in folds]
    assert max(ones) - min(ones) <= 1
    assert all(np.array_equal(a, b) for a, b in zip(folds, kfold_split(labels, 3, seed=2)))


@mark.parametrize("k", (1, 21))
def test_kfold_split_errors(k):
    with raises(DataError):
        kfold_split(np.zeros(20), k)


def test_holdout_and_fold_indices():
    labels = np.arange(50) % 2
    train, test = holdout_split(labels, seed=1)
    assert len(test) == 10 and len(train) == 40
    for train, test in fold_indices(labels, 5):
        assert len(np.intersect1d(train, test)) == 0 and len(train) + len(test) == 50
    with raises(DataError):
        holdout_split(labels, fraction=1.0)


def test_standardizer():
    features = np.array([[1.0, 5.0, 0.0], [3.0, 5.0, 1.0]])
    standardizer = Standardizer.fit(features, mask=[True, True, False])
    np.testing.assert_allclose(standardizer.transform(features), [[-1, 0, 0], [1, 0, 1]])
    assert Standardizer.from_dict(standardizer.to_dict()) == standardizer
    with raises(DimensionMismatch):
        standardizer.transform(np.zeros((1, 2)))


def test_split_reuses_train_statistics():
    dataset = Dataset(
        features=np.arange(8.0).reshape(4, 2), labels=[0, 1, 0, 1], standardize=np.ones(2, bool)
    )
    train, test = split(dataset, [0, 1], [2, 3])
    np.testing.assert_allclose(train.features, [[-1, -1], [1, 1]])
    np.testing.assert_allclose(test.features, [[3, 3], [5, 5]])


def test_dataset_checks_shapes():
    with raises(DimensionMismatch):
        Dataset(features=np.zeros((3, 2)), labels=[0, 1])
    with raises(DimensionMismatch):
        Dataset(features=np.zeros((2, 2)), labels=[0, 1], columns={"a": [1]})
    with raises(MissingColumn):
        toy_dataset().column("height")


def test_subset_reindexes_pairs():
    dataset = toy_dataset(m=6).with_pairs({"age": PairSet("age", [(0, 3, 1), (1, 4, -2)])})
    part = dataset.subset([3, 0, 5])
    assert list(part.pairsets["age"]) == [(1, 0, 1)]
    assert part.column("age").tolist() == [41, 20, 25]


def test_parse_schema():
    schema = parse_schema(SCHEMA)
    assert schema.label.name == "income"
    assert [column.name for column in schema.used] == ["age", "color", "score", "income"]
    assert schema.columns[1].feature and schema.columns[1].covariate


@mark.parametrize(
    "text",
    (
        "a,numeric\nb,categorical,label",
        "a,integer,feature\nb,categorical,label",
        "a,numeric,target\nb,categorical,label",
        "a,numeric,feature",
        "a,numeric,label\nb,numeric,label",
    ),
)
def test_parse_schema_errors(text):
    with raises(DataError):
        parse_schema(text)


def test_load_tabular_csv(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text(CSV)
    dataset = load_tabular_csv(path, parse_schema(SCHEMA))
    assert dataset.m == 3 and dataset.extras["dropped"] == 2
    assert dataset.classes == ("<=50K", ">50K")
    assert dataset.labels.tolist() == [1, 0, 0]
    assert dataset.feature_names == ("color=blue", "color=green", "color=red", "score")
    assert dataset.standardize.tolist() == [False, False, False, True]
    np.testing.assert_allclose(dataset.features[:, :3], [[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    assert abs(dataset.features[:, 3].mean()) < 1e-12
    assert dataset.column("age").tolist() == [30.0, 41.0, 52.0]
    assert set(dataset.columns) == {"age", "color"}


def test_tabular_test_file_shares_the_encoding(tmp_path):
    schema = parse_schema(SCHEMA)
    (tmp_path / "train.csv").write_text(CSV)
    (tmp_path / "test.csv").write_text("age,color,score,note,income\n33,red,2.0,x,>50K\n")
    train = load_tabular_csv(tmp_path / "train.csv", schema)
    test = load_tabular_csv(tmp_path / "test.csv", schema, reference=train)
    assert test.feature_names == train.feature_names and test.classes == train.classes
    assert test.features[0, :3].tolist() == [0.0, 0.0, 1.0]


def test_tabular_missing_column(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("age,color,note,income\n30,red,x,>50K\n")
    with raises(MissingColumn):
        load_tabular_csv(path, parse_schema(SCHEMA))


@mark.parametrize("name, covariates", (("german", {"age", "foreign_worker"}), ("adult", None)))
def test_bundled_schemas(name, covariates):
    schema = resolve_schema(name)
    assert schema.label
    names = {column.name for column in schema.columns if column.covariate}
    assert covariates is None or names == covariates


def test_transform_identity_and_half_turn():
    image = np.random.default_rng(1).random((28, 28))
    assert np.array_equal(transform_image(image, "rotate", 0), image)
    assert np.array_equal(transform_image(image, "scale", 0), image)
    half_turn = transform_image(image, "rotate", 36)
    np.testing.assert_allclose(half_turn[1:-1, 1:-1], image[::-1, ::-1][1:-1, 1:-1], atol=1e-6)


def test_scale_shrinks_towards_the_center():
    scaled = transform_image(np.ones((28, 28)), "scale", 2)
    assert scaled.shape == (28, 28)
    assert scaled[14, 14] > 0.99 and scaled[0, 0] < 0.5
    with raises(DataError):
        transform_image(np.ones((28, 28)), "scale", -1)
    with raises(DataError):
        transform_image(np.ones((28, 28)), "shear", 1)


def test_augment_with_transforms(images):
    augmented = augment_with_transforms(images, [("rotate", "rotate", 2), ("scale", "scale", 1)])
    assert augmented.m == 20
    assert augmented.labels.tolist() == list(range(5)) * 4
    assert augmented.codes["rotate"].tolist() == [0] * 5 + [1] * 5 + [2] * 5 + [0] * 5
    assert augmented.codes["scale"].tolist() == [0] * 15 + [1] * 5
    rotate = augmented.pairsets["rotate"]
    codes = augmented.codes["rotate"]
    assert len(rotate) == 10 and (rotate.d == codes[rotate.i] - codes[rotate.j]).all()
    assert list(augmented.pairsets["scale"]) == [(k, 15 + k, -1) for k in range(5)]


def test_transform_pairs_need_images():
    with raises(DataError):
        make_transform_pairs(toy_dataset(), "rotate", 2)


def test_successor_pairs():
    dataset = toy_dataset(m=20)
    digits = Dataset(features=dataset.features, labels=np.arange(20) % 10)
    pairs = make_successor_pairs(digits, seed=3)
    assert len(pairs) == 18 and set(pairs.d.tolist()) == {-1}
    assert (digits.labels[pairs.j] == digits.labels[pairs.i] + 1).all()
    assert pairs == make_successor_pairs(digits, seed=3)
    gap = Dataset(features=np.zeros((3, 2)), labels=[0, 2, 2])
    with raises(EmptyClass):
        make_successor_pairs(gap)


@mark.parametrize(
    "kwargs",
    (
        {"kind": "parquet"},
        {"kind": "synth", "pairs": "successor"},
        {"kind": "mnist", "pairs": "x"},
    ),
)
def test_directive_validation(kwargs):
    with raises(ValueError):
        DatasetDirective(**kwargs)


def test_load_synth():
    train, test = load_dataset(DatasetDirective("synth", m=40, p=3), seed=2)
    assert test is None and train.m == 40 and train.p == 3
    again, _ = load_dataset(DatasetDirective("synth", m=40, p=3, seed=2), seed=9)
    assert np.array_equal(train.features, again.features)


def test_load_mnist_with_successor_pairs(tmp_path, mnist_files):
    directive = DatasetDirective(
        "mnist",
        images=mnist_files[0].name,
        labels=mnist_files[1].name,
        pairs="successor",
    )
    train, test = load_dataset(directive, data_dir=tmp_path)
    assert test is None and len(train.pairsets["digit"]) == 18
    spec = CovariateSpec(
        "step", kind="ordinal", column="digit", constraint="equivariance", morphism="orthogonal"
    )
    attached = attach_pairs(train.with_covariates([spec]), [spec])
    assert attached.pairsets["step"].covariate == "step"
    assert np.array_equal(attached.pairsets["step"].entries, train.pairsets["digit"].entries)


def test_load_errors(tmp_path):
    with raises(DataError):
        load_dataset(DatasetDirective("tabular", schema="german"))
    with raises(DataError):
        load_dataset(DatasetDirective("tabular", path="missing.csv", schema="german"), tmp_path)
    with raises(DataError):
        load_dataset(DatasetDirective("mnist", images="a"))
