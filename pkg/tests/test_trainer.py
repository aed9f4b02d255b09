import dataclasses
import math
import struct

import numpy as np
from pytest import fixture, mark, raises

from catharm import signals
from catharm.dataio import Dataset, synth_monotone
from catharm.exceptions import (
    BadMagic,
    CheckpointError,
    NonFiniteLoss,
    Truncated,
    VersionMismatch,
)
from catharm.functors import LatentSpec, encode
from catharm.metrics import MLP_PROBE, metric_accuracy, metric_adv
from catharm.objective import LossWeights, loss_terms
from catharm.pairing import CovariateSpec, PairSet
from catharm.trainer import (
    TrainConfig,
    decode_checkpoint,
    encode_checkpoint,
    fold_splits,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    train,
    train_cv,
)
from catharm.trainer.checkpoint import MAGIC

from .utils import tiny_bundle

G = CovariateSpec("g", kind="ordinal", constraint="equivariance", morphism="orthogonal")
LATENT = LatentSpec(3, hidden=(6,))
CONFIG = TrainConfig(
    epochs=2,
    batch_size=16,
    learning_rate=0.01,
    seed=3,
    folds=2,
    weights=LossWeights(lambda_r=0.0, lambda_per_covariate={"g": 0.5}),
)


@fixture
def dataset():
    return synth_monotone(48, 4, effect=2.0, seed=1).with_covariates([G])


@fixture
def bundle():
    return tiny_bundle(morphisms={"age": True, "site": False})


def test_checkpoint_round_trip(bundle, tmp_path):
    path = tmp_path / "model.cthm"
    save_checkpoint(bundle, path, {"config_hash": "abc", "seed": 4})
    loaded, metadata = read_checkpoint(path)
    assert loaded == bundle
    assert metadata["config_hash"] == "abc" and metadata["seed"] == 4
    assert load_checkpoint(path) == bundle


def test_checkpoint_is_deterministic(bundle):
    assert encode_checkpoint(bundle, {"seed": 1}) == encode_checkpoint(bundle, {"seed": 1})
    data = encode_checkpoint(bundle)
    assert data.startswith(MAGIC)
    assert struct.unpack("<II", data[4:12]) == (1, len(bundle.parameters))


def test_bad_magic(bundle):
    data = encode_checkpoint(bundle)
    with raises(BadMagic):
        decode_checkpoint(b"XXXX" + data[4:])
    with raises(BadMagic):
        decode_checkpoint(b"")


def test_version_mismatch(bundle):
    data = encode_checkpoint(bundle)
    with raises(VersionMismatch):
        decode_checkpoint(data[:4] + struct.pack("<I", 2) + data[8:])


@mark.parametrize("cut", (6, 20, 100, -1))
def test_truncated(bundle, cut):
    with raises(Truncated):
        decode_checkpoint(encode_checkpoint(bundle)[:cut])


def test_empty_dimension(bundle):
    data = encode_checkpoint(bundle)
    name = min(bundle.parameters).encode("utf-8")
    offset = len(MAGIC) + 8 + 2 + len(name) + 1
    with raises(CheckpointError, match="empty dimension"):
        decode_checkpoint(data[:offset] + struct.pack("<I", 0) + data[offset + 4 :])


def test_trailing_bytes(bundle):
    with raises(CheckpointError):
        decode_checkpoint(encode_checkpoint(bundle) + b"\0")


@mark.parametrize(
    "kwargs",
    (
        {"epochs": 0},
        {"batch_size": 0},
        {"learning_rate": 0.0},
        {"optimizer": "rmsprop"},
        {"folds": 0},
        {"max_pairs": 0},
        {"bandwidth": -1.0},
    ),
)
def test_train_config_validation(kwargs):
    with raises(ValueError):
        TrainConfig(**kwargs)


def test_train_is_deterministic(dataset):
    first = train(dataset, [G], CONFIG, LATENT)
    second = train(dataset, [G], CONFIG, LATENT)
    assert first.bundle == second.bundle
    assert [b.total for b in first.log] == [b.total for b in second.log]
    other = train(dataset, [G], dataclasses.replace(CONFIG, seed=4), LATENT)
    assert other.bundle != first.bundle


def test_train_logs_every_epoch(dataset):
    seen = []

    def on_epoch(fold, epoch, breakdown, **kwargs):
        seen.append((fold, epoch))

    signals.epoch_end.connect(on_epoch)
    try:
        result = train(dataset, [G], CONFIG, LATENT, fold=1)
    finally:
        signals.epoch_end.disconnect(on_epoch)
    assert seen == [(1, 0), (1, 1)]
    assert len(result.log) == 2
    for breakdown in result.log:
        assert math.isfinite(breakdown.total)
        assert math.isclose(breakdown.recompose(), breakdown.total, rel_tol=1e-9)
        assert set(breakdown.structure) == {"g"}


def test_train_lowers_the_loss(dataset):
    config = dataclasses.replace(CONFIG, epochs=15, learning_rate=0.02)
    log = train(dataset, [G], config, LATENT).log
    assert log[-1].total < log[0].total


def test_retraction_keeps_morphisms_orthogonal(dataset):
    config = dataclasses.replace(CONFIG, retraction=True)
    w = train(dataset, [G], config, LATENT).bundle.parameters["morphism.g"].data
    np.testing.assert_allclose(w.T @ w, np.eye(3), atol=1e-10)


def test_train_on_external_pairs(dataset):
    codes = dataset.codes["g"]
    entries = [
        (i, j, codes[i] - codes[j])
        for i in range(dataset.m)
        for j in range(dataset.m)
        if codes[i] - codes[j] == 1
    ][:20]
    paired = dataset.with_pairs({"g": PairSet("g", entries)})
    config = dataclasses.replace(CONFIG, batch_size=8)
    result = train(paired, [G], config, LATENT)
    assert len(result.log) == 2
    assert result.log[0].structure["g"] > 0


def test_empty_pairs_are_signalled(dataset):
    flat = dataset.with_covariates([G])
    flat = dataclasses.replace(flat, codes={"g": np.zeros(flat.m, dtype=np.int64)})
    seen = []

    def on_empty(covariate, epoch, **kwargs):
        seen.append((covariate, epoch))

    signals.pairs_empty.connect(on_empty)
    try:
        train(flat, [G], CONFIG, LATENT)
    finally:
        signals.pairs_empty.disconnect(on_empty)
    assert seen == [("g", 0), ("g", 1)]


def test_fold_splits(dataset):
    splits = fold_splits(dataset, CONFIG)
    assert len(splits) == 2
    for train_indices, test_indices in splits:
        assert not set(train_indices) & set(test_indices)
        assert len(train_indices) + len(test_indices) == dataset.m
    single = dataclasses.replace(CONFIG, folds=1)
    assert fold_splits(dataset, single, test=dataset) is None
    ((train_indices, test_indices),) = fold_splits(dataset, single)
    assert len(test_indices) == 10


def test_train_cv_threads_agree(dataset):
    serial = train_cv(dataset, [G], CONFIG, LATENT)
    parallel = train_cv(dataset, [G], CONFIG, LATENT, threads=2)
    assert len(serial.reports) == 2
    assert [r.bundle for r in serial.results] == [r.bundle for r in parallel.results]
    assert [r.to_dict() for r in serial.reports] == [r.to_dict() for r in parallel.reports]
    assert 0.0 <= serial.mean.acc <= 100.0
    assert set(serial.mean.d) <= {"g:0->1", "g:1->2"}


def test_train_cv_on_a_test_part(dataset):
    test = synth_monotone(20, 4, effect=2.0, seed=2).with_covariates([G])
    cv = train_cv(dataset, [G], dataclasses.replace(CONFIG, folds=1), LATENT, test=test)
    assert cv.splits is None
    assert len(cv.results) == 1 and cv.results[0].fold == 0


def test_separable_classes_are_learned():
    rng = np.random.default_rng(4)
    labels = np.arange(40) % 2
    features = np.column_stack([4.0 * labels - 2.0, np.zeros(40)])
    features += 0.3 * rng.standard_normal((40, 2))
    config = TrainConfig(
        epochs=200,
        batch_size=16,
        learning_rate=0.01,
        weights=LossWeights(lambda_r=0.0, lambda_p=1.0),
    )
    dataset = Dataset(features=features, labels=labels)
    bundle = train(dataset, [], config, LatentSpec(2)).bundle
    assert metric_accuracy(bundle, dataset) == 100.0


def test_mmd_invariance_hides_the_nuisance():
    rng = np.random.default_rng(5)
    labels = np.arange(120) % 2
    site = (np.arange(120) // 2) % 2
    features = np.column_stack(
        [2.0 * labels - 1.0, 2.0 * site - 1.0, 0.1 * rng.standard_normal((120, 2))]
    )
    features[:, :2] += 0.3 * rng.standard_normal((120, 2))
    spec = CovariateSpec("site", loss="mmd")
    dataset = Dataset(
        features=features, labels=labels, columns={"site": np.where(site, "b", "a")}
    ).with_covariates([spec])
    config = TrainConfig(
        epochs=100,
        batch_size=32,
        learning_rate=0.01,
        weights=LossWeights(lambda_r=0.0, lambda_per_covariate={"site": 10.0}),
    )
    adv = {}
    for name, specs in (("naive", []), ("invariant", [spec])):
        bundle = train(dataset, specs, config, LatentSpec(2)).bundle
        latents = encode(bundle, dataset.features).data
        adv[name], _ = metric_adv(latents, dataset.codes["site"], probe=MLP_PROBE)
    assert adv["invariant"] < adv["naive"]


def test_non_finite_loss_names_the_term(dataset):
    dataset.features[:] = 1e200
    with raises(NonFiniteLoss) as excinfo:
        train(dataset, [G], CONFIG, LATENT)
    names = {term.name for term in loss_terms(CONFIG.weights, [G])} | {"total"}
    assert excinfo.value.term in names
    assert excinfo.value.epoch == 0
    assert not math.isfinite(excinfo.value.value)
    assert excinfo.value.term in str(excinfo.value)
