"""Operations behind the command line, one function per command.

They read and write files and return what they wrote; option parsing,
settings resolution and exit codes belong to :mod:`catharm.__main__`.
"""

import dataclasses
import logging
import pathlib

from catharm import __version__, latentnav
from catharm._internal.dumpers import CsvFile, JsonFile, PgmFile, Toml
from catharm.dataio import attach_pairs, load_dataset, split
from catharm.exceptions import DimensionMismatch, HashMismatch
from catharm.metrics import evaluate, report_document, write_report
from catharm.numcore import grad_check, op_suite
from catharm.pairing import enumerate_pairs, write_pairs_csv
from catharm.specdsl import plan_hash
from catharm.trainer import fold_splits, read_checkpoint, save_checkpoint, train_cv

logger = logging.getLogger(__name__)

MODEL_FILE = "model.cthm"
REPORT_FILE = "report.json"
LOSSES_FILE = "losses.csv"
RUN_FILE = "run.toml"
ABLATION_STEM = "ablation"


def with_seed(plan, seed):
    """Copy of `plan` trained with `seed`."""
    return dataclasses.replace(plan, train=dataclasses.replace(plan.train, seed=seed))


def prepare_data(plan, data_dir=None):
    """Train and test samples of a plan, binned and paired for its covariates.

    :return: ``(train, test)``, `test` being `None` without a separate test part.
    :rtype: :class:`tuple`
    """
    train, test = load_dataset(plan.dataset, data_dir, plan.train.seed)
    train = attach_pairs(train.with_covariates(plan.covariates), plan.covariates)
    if test is not None:
        test = attach_pairs(test.with_covariates(plan.covariates), plan.covariates)
    return train, test


def _loss_rows(results, covariates):
    header = ["fold", "epoch", "total", "reconstruction", "prediction", "orthogonality"]
    header += list(covariates)
    rows = []
    for result in results:
        for epoch, breakdown in enumerate(result.log):
            row = breakdown.as_row(covariates)
            rows.append([result.fold, epoch] + [repr(float(row[key])) for key in header[2:]])
    return header, rows


def _metadata(plan, seed, extra=None):
    metadata = {"config_hash": plan_hash(plan), "seed": seed, "version": __version__}
    metadata.update(extra or {})
    return metadata


def _toml_ready(mapping):
    ready = {}
    for key, value in mapping.items():
        if value is None:
            continue
        ready[key] = str(value) if isinstance(value, pathlib.PurePath) else value
    return ready


def run_train(plan, out, seed=0, threads=1, data_dir=None, spec_path=None):
    """Cross-validate `plan` and write the checkpoint, report, loss log and run snapshot.

    The checkpoint holds the bundle of the first fold.

    :param plan: The experiment.
    :type plan: :class:`~catharm.specdsl.ExperimentPlan`
    :param out: Output directory.
    :type out: :class:`pathlib.Path`
    :param seed: Root seed of the run.
    :param threads: Worker threads for the folds.
    :param data_dir: Directory relative dataset paths are resolved against.
    :param spec_path: Spec file, recorded in the run snapshot.
    :return: The report document.
    :rtype: :class:`dict`
    """
    out = pathlib.Path(out)
    config_hash = plan_hash(plan)
    run_plan = with_seed(plan, seed)
    train, test = prepare_data(run_plan, data_dir)
    cv = train_cv(
        train,
        run_plan.covariates,
        run_plan.train,
        run_plan.latent,
        run_plan.metrics,
        threads=threads,
        test=test,
    )

    metadata = _metadata(
        plan,
        seed,
        {
            "fold": 0,
            "classes": list(train.classes),
            "image_shape": None if train.image_shape is None else list(train.image_shape),
        },
    )
    save_checkpoint(cv.results[0].bundle, out / MODEL_FILE, metadata)
    document = write_report(out / REPORT_FILE, cv.reports, config_hash, seed)
    covariates = [spec.name for spec in plan.covariates]
    header, rows = _loss_rows(cv.results, covariates)
    CsvFile(out / LOSSES_FILE, header).dump_in(rows)
    Toml(out / RUN_FILE).dump_in(
        _toml_ready(
            {
                "config_hash": config_hash,
                "seed": seed,
                "threads": threads,
                "folds": len(cv.reports),
                "spec": spec_path,
                "data_dir": data_dir,
                "version": __version__,
            }
        )
    )
    logger.info("Trained %d folds into %s.", len(cv.reports), out)
    return document


def _check_compatible(bundle, metadata, plan, force):
    expected = plan_hash(plan)
    if metadata.get("config_hash") != expected:
        message = (
            f"Checkpoint was trained from spec {metadata.get('config_hash')}, "
            f"this spec hashes to {expected}."
        )
        if not force:
            raise HashMismatch(message + " Use --force to proceed.")
        logger.warning("%s Proceeding anyway.", message)
    if bundle.n != plan.latent.n:
        raise DimensionMismatch(
            f"Checkpoint latent dimension {bundle.n} differs from the spec one {plan.latent.n}."
        )


def checkpoint_fold(plan, metadata, data_dir=None):
    """Train and test samples of the fold the checkpoint was trained on."""
    run_plan = with_seed(plan, metadata.get("seed", plan.train.seed))
    train, test = prepare_data(run_plan, data_dir)
    splits = fold_splits(train, run_plan.train, test)
    if splits is None:
        return train, test
    return split(train, *splits[metadata.get("fold", 0)])


def run_eval(ckpt, plan, report, force=False, data_dir=None, mse_steps=()):
    """Recompute the metrics of a checkpoint on its held-out part.

    :param mse_steps: Transform steps scored instead of the spec ones, if any.
    :raises HashMismatch: If the checkpoint comes from another spec and not `force`.
    :raises DimensionMismatch: If the latent dimensions differ.
    :return: The report document.
    :rtype: :class:`dict`
    """
    bundle, metadata = read_checkpoint(ckpt)
    _check_compatible(bundle, metadata, plan, force)
    _, test = checkpoint_fold(plan, metadata, data_dir)
    options = plan.metrics
    if mse_steps:
        options = dataclasses.replace(options, mse_steps=tuple(mse_steps))
    result = evaluate(bundle, test, plan.covariates, options)
    document = report_document([result], metadata.get("config_hash"), metadata.get("seed"))
    JsonFile(report).dump_in(document)
    logger.info("Evaluated %s on %d held-out samples.", ckpt, test.m)
    return document


def _sample_source(plan, metadata, data_dir):
    train, test = checkpoint_fold(plan, metadata, data_dir)
    return train, test if test is not None else train


def run_traverse(ckpt, plan, index, plans, out, force=False, data_dir=None):
    """Write the traversal grid of sample `index` and the nearest class of every tile.

    One grid row per plan, one column per cumulative unit step. The CSV
    next to the image holds ``plan,step,nearest_class`` rows.

    :param plans: Traversal plans.
    :type plans: :class:`list` of :class:`~catharm.latentnav.TraversalPlan`
    :param out: PGM file.
    :return: Nearest class of every tile, row by row.
    :rtype: :class:`list`
    """
    bundle, metadata = read_checkpoint(ckpt)
    _check_compatible(bundle, metadata, plan, force)
    for traversal in plans:
        latentnav.check_plan(bundle, traversal)
    pool, samples = _sample_source(plan, metadata, data_dir)
    if samples.image_shape is None:
        raise DimensionMismatch("Traversal grids need an image dataset.")
    if not 0 <= index < samples.m:
        raise IndexError(f"Sample index {index} out of range [0, {samples.m}).")

    grid = latentnav.traverse_grid(bundle, samples.features[index], plans)
    PgmFile(out).dump_in(latentnav.image_grid(grid, samples.image_shape))
    nearest = []
    rows = []
    for traversal, tiles in zip(plans, grid):
        classes = [
            latentnav.nearest_class(tile.data, pool.features, pool.labels) for tile in tiles
        ]
        nearest.append(classes)
        rows.extend((str(traversal), step, label) for step, label in enumerate(classes))
    csv_path = pathlib.Path(out).with_suffix(".csv")
    CsvFile(csv_path, ("plan", "step", "nearest_class")).dump_in(rows)
    logger.info("Traversed sample %d along %d plans.", index, len(plans))
    return nearest


def run_hypothetical(ckpt, plan, covariate, delta, report, force=False, data_dir=None):
    """Write the mean class probabilities of every bin before and after a shift of `delta` bins.

    :return: The written document.
    :rtype: :class:`dict`
    """
    bundle, metadata = read_checkpoint(ckpt)
    _check_compatible(bundle, metadata, plan, force)
    _, samples = _sample_source(plan, metadata, data_dir)
    shifts = latentnav.hypothetical_shift(bundle, samples, covariate, delta)
    document = {
        "config_hash": metadata.get("config_hash"),
        "covariate": covariate,
        "delta": delta,
        "bins": {str(code): shift for code, shift in shifts.items()},
    }
    JsonFile(report).dump_in(document)
    return document


def run_pairs(plan, dump, seed=0, data_dir=None):
    """Dump the pairs of every paired covariate over the whole training data.

    :return: Number of pairs per covariate.
    :rtype: :class:`dict`
    """
    train, _ = prepare_data(with_seed(plan, seed), data_dir)
    pairsets = []
    for spec in plan.covariates:
        if spec.name in train.pairsets:
            pairsets.append(train.pairsets[spec.name])
        elif spec.loss != "mmd":
            pairsets.append(
                enumerate_pairs(train, spec, max_pairs=plan.train.max_pairs, seed=seed)
            )
    write_pairs_csv(pairsets, dump)
    return {pairs.covariate: len(pairs) for pairs in pairsets}


def run_gradcheck(seed=0, tolerance=1e-5):
    """Gradient check of every built-in op.

    :return: Report per op kind.
    :rtype: :class:`dict`
    """
    reports = {}
    for name, graph in op_suite(seed).items():
        reports[name] = grad_check(graph, seed=seed, tolerance=tolerance)
        logger.info("Op %s: max relative error %.3g.", name, reports[name].max_error)
    return reports


def ablation_plan(plan, weight, dim):
    """Copy of `plan` with every covariate weighted `weight` and a latent space of `dim`."""
    covariates = tuple(
        dataclasses.replace(
            spec,
            weight=weight,
            morphism_dim=None if spec.morphism_dim is None else dim,
        )
        for spec in plan.covariates
    )
    weights = dataclasses.replace(
        plan.weights, lambda_per_covariate={spec.name: weight for spec in covariates}
    )
    return dataclasses.replace(
        plan,
        latent=dataclasses.replace(plan.latent, n=dim),
        covariates=covariates,
        train=dataclasses.replace(plan.train, weights=weights),
    )


def run_ablate(plan, out, weights, dims, seed=0, threads=1, data_dir=None):
    """Cross-validate `plan` over a grid of covariate weights and latent dimensions.

    Writes ``ablation.json`` and ``ablation.csv`` with the mean accuracy and
    MMD of every cell.

    :return: One row per cell.
    :rtype: :class:`list` of :class:`dict`
    """
    out = pathlib.Path(out)
    run_plan = with_seed(plan, seed)
    train, test = prepare_data(run_plan, data_dir)
    cells = []
    for dim in dims:
        for weight in weights:
            cell_plan = ablation_plan(run_plan, weight, dim)
            cv = train_cv(
                train,
                cell_plan.covariates,
                cell_plan.train,
                cell_plan.latent,
                cell_plan.metrics,
                threads=threads,
                test=test,
            )
            cells.append(
                {
                    "lambda": weight,
                    "dim": dim,
                    "acc": cv.mean.acc,
                    "acc_std": cv.std.acc,
                    "mmd_x100": cv.mean.mmd_x100,
                    "mmd_x100_std": cv.std.mmd_x100,
                }
            )
            logger.info("Ablation cell lambda=%g dim=%d: %s.", weight, dim, cells[-1])
    JsonFile(out / f"{ABLATION_STEM}.json").dump_in(
        {"config_hash": plan_hash(plan), "seed": seed, "cells": cells}
    )
    keys = ("lambda", "dim", "acc", "acc_std", "mmd_x100", "mmd_x100_std")
    CsvFile(out / f"{ABLATION_STEM}.csv", keys).dump_in(
        [["" if cell[key] is None else cell[key] for key in keys] for cell in cells]
    )
    return cells

