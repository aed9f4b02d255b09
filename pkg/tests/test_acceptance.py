"""Long runs on the public datasets.

Run with ``CATHARM_DATA=<dir> pytest -m acceptance``, the directory holding
``german.csv``, ``adult.csv`` and the MNIST IDX files.
"""

import importlib.resources
import os
import pathlib

import numpy as np
from pytest import mark

from catharm import commands, latentnav
from catharm.specdsl import load_plan
from catharm.trainer import read_checkpoint

DATA = os.environ.get("CATHARM_DATA")

pytestmark = [
    mark.acceptance,
    mark.skipif(DATA is None, reason="CATHARM_DATA is not set"),
]


def bundled_plan(name):
    with importlib.resources.as_file(
        importlib.resources.files("catharm").joinpath("specs", f"{name}.cat")
    ) as path:
        return load_plan(path)


def mean_of(name, tmp_path, **kwargs):
    plan = bundled_plan(name)
    document = commands.run_train(plan, tmp_path / name, data_dir=pathlib.Path(DATA), **kwargs)
    return document["mean"]


def test_german_invariance(tmp_path):
    ours = mean_of("german_inv", tmp_path)
    naive = mean_of("german_naive", tmp_path)
    assert ours["acc"] >= 71.0
    assert ours["mmd_x100"] <= 2.0
    assert ours["mmd_x100"] * 3.0 <= naive["mmd_x100"]
    assert ours["adv"] <= naive["adv"] - 5.0


def test_adult_invariance(tmp_path):
    ours = mean_of("adult_inv", tmp_path)
    naive = mean_of("adult_naive", tmp_path)
    assert ours["acc"] >= 81.0
    assert ours["mmd_x100"] <= 3.0
    assert ours["adv"] <= naive["adv"] - 5.0


def test_german_age_equivariance(tmp_path):
    ours = mean_of("german_age", tmp_path)
    naive = mean_of("german_naive", tmp_path)
    assert abs(ours["acc"] - naive["acc"]) <= 3.0
    assert ours["mmd_x100"] <= 3.0


def test_german_ablation_trend(tmp_path):
    plan = bundled_plan("german_inv")
    cells = commands.run_ablate(
        plan, tmp_path, (0.001, 0.01, 0.1), (plan.latent.n,), data_dir=pathlib.Path(DATA)
    )
    mmds = [cell["mmd_x100"] for cell in cells]
    assert all(b <= a for a, b in zip(mmds, mmds[1:]))


def test_successor_generates_every_digit(tmp_path):
    plan = bundled_plan("mnist_successor")
    data_dir = pathlib.Path(DATA)
    commands.run_train(plan, tmp_path, data_dir=data_dir)
    bundle, metadata = read_checkpoint(tmp_path / commands.MODEL_FILE)
    pool, test = commands.checkpoint_fold(plan, metadata, data_dir)
    rng = np.random.default_rng(0)
    hits = cases = 0
    for index in rng.choice(test.m, size=100, replace=False):
        label = int(test.labels[index])
        for d in range(-4, 5):
            if not 0 <= label + d <= 9:
                continue
            traversal = latentnav.TraversalPlan((("digit", d),))
            image = latentnav.generate_hypothetical(bundle, test.features[index], traversal)
            found = latentnav.nearest_class(image.data, pool.features, pool.labels)
            hits += found == label + d
            cases += 1
    assert hits >= 0.8 * cases


def test_hypothetical_shift_is_monotone(tmp_path):
    plan = bundled_plan("synth_monotone")
    commands.run_train(plan, tmp_path)
    ckpt = tmp_path / commands.MODEL_FILE
    for delta, sign in ((1.0, 1.0), (-1.0, -1.0)):
        document = commands.run_hypothetical(ckpt, plan, "g", delta, tmp_path / "shift.json")
        for shift in document["bins"].values():
            assert sign * shift["shift"][1] > 0.0


def test_transforms_extrapolate_and_compose(tmp_path):
    plan = bundled_plan("mnist_transforms")
    data_dir = pathlib.Path(DATA)
    document = commands.run_train(plan, tmp_path, data_dir=data_dir)
    assert {"rotate:+10", "rotate:+20", "rotate:+10,scale:+10"} <= set(document["mean"]["mse"])
    bundle, metadata = read_checkpoint(tmp_path / commands.MODEL_FILE)
    _, test = commands.checkpoint_fold(plan, metadata, data_dir)

    def error(text):
        return latentnav.transform_mse(bundle, test, latentnav.parse_plan(text), limit=200)

    assert error("rotate:+20")[0] <= 2.0 * error("rotate:+10")[0]
    for i, j in ((3, 7), (5, 5), (10, 10)):
        composed, baseline = error(f"scale:+{j},rotate:+{i}")
        single = max(error(f"rotate:+{i}")[0], error(f"scale:+{j}")[0])
        assert composed <= 3.0 * single
        assert composed < baseline
