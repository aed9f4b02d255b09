import concurrent.futures
import dataclasses
import logging

from catharm import signals
from catharm.dataio import fold_indices, holdout_split, split
from catharm.metrics import aggregate, evaluate, report_document
from catharm.trainer.loop import train

logger = logging.getLogger(__name__)


@dataclasses.dataclass
class CrossValidation:
    """Trained bundle, report and test indices of every fold, with their aggregate."""

    results: list
    reports: list
    splits: list
    mean: object = None
    std: object = None

    def document(self, config_hash, seed):
        return report_document(self.reports, config_hash, seed)


def fold_splits(dataset, config, test=None):
    """``(train, test)`` indices of every fold, `None` when `test` is the held-out part.

    Cross-validation with ``folds >= 2``; otherwise the separate test part,
    or a stratified holdout of the samples without one.
    """
    if config.folds >= 2:
        return fold_indices(dataset, config.folds, config.seed)
    if test is None:
        return [holdout_split(dataset, seed=config.seed)]
    return None


def run_fold(dataset, specs, config, latent, options, fold, indices, test=None):
    """Train and evaluate one fold."""
    if indices is None:
        train_part, test_part = dataset, test
    else:
        train_part, test_part = split(dataset, *indices)
    result = train(train_part, specs, config, latent, fold)
    report = evaluate(result.bundle, test_part, specs, options)
    logger.info("Fold %d: %s", fold, report.to_dict())
    signals.fold_end.emit(fold=fold, report=report)
    return result, report


def train_cv(dataset, specs, config, latent, options=None, threads=1, test=None):
    """Train and evaluate every fold.

    Folds are independent and run on up to `threads` worker threads; their
    results are collected in fold order.

    :param dataset: Samples with their covariate codes.
    :type dataset: :class:`~catharm.dataio.Dataset`
    :param specs: Covariates.
    :param config: Optimization settings, `folds` among them.
    :type config: :class:`~catharm.trainer.TrainConfig`
    :param latent: Layout of the networks.
    :param options: Metric selection.
    :type options: :class:`~catharm.metrics.MetricsOptions`
    :param threads: Number of worker threads.
    :param test: Separate test samples, used when ``folds == 1``.
    :rtype: :class:`CrossValidation`
    """
    splits = fold_splits(dataset, config, test)
    jobs = [(fold, indices) for fold, indices in enumerate(splits or [None])]
    logger.info("Running %d folds on %d threads.", len(jobs), threads)

    def job(item):
        fold, indices = item
        return run_fold(dataset, specs, config, latent, options, fold, indices, test)

    if threads > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as executor:
            outcomes = list(executor.map(job, jobs))
    else:
        outcomes = [job(item) for item in jobs]
    results = [result for result, _ in outcomes]
    reports = [report for _, report in outcomes]
    mean, std = aggregate(reports)
    return CrossValidation(results, reports, splits, mean, std)
