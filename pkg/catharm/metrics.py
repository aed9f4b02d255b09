"""Evaluation of trained bundles.

Prediction accuracy, invariance of the latent space to a nuisance covariate
(discrepancy between groups and accuracy of an adversarial probe) and, for
equivariant covariates, the minimum latent distance reached by morphisms
together with the similarity of the other covariates of the samples found.
Image transforms add the error of generated images against the reference
transform, alone and composed.
"""

import dataclasses
import itertools
import logging

import numpy as np
from scipy.spatial.distance import cdist

from catharm._internal.dumpers import JsonFile
from catharm.dataio.transforms import TRANSFORMS
from catharm.exceptions import DataError, DegenerateInput
from catharm.functors import MLP, apply_morphism, encode, predict
from catharm.latentnav import TraversalPlan, transform_mse
from catharm.numcore import Adam, Graph, Tensor, mmd_squared
from catharm.pairing import transitions

logger = logging.getLogger(__name__)

ACC, MMD, ADV, D, CS, MSE = "acc", "mmd", "adv", "d", "cs", "mse"
ALL_METRICS = (ACC, MMD, ADV, D, CS, MSE)
LOGISTIC, MLP_PROBE = "logistic", "mlp"
PROBE_SPLIT = 0.7
PROBE_HIDDEN = 32
PROBE_STEPS = 300
PROBE_LEARNING_RATE = 0.05
MSE_STEPS = (10, 20)
MSE_LIMIT = 500
REPORT_KEYS = ("acc", "mmd_x100", "adv", "chance", "d", "cs", "mse", "mse_base")
KEYED = ("d", "cs", "mse", "mse_base")


@dataclasses.dataclass(frozen=True)
class MetricsOptions:
    """Which metrics to compute and how."""

    select: tuple = ALL_METRICS
    nuisance: str = None
    """covariate of the invariance metrics, defaults to the first invariant one"""

    probe: str = LOGISTIC
    probe_seed: int = 0
    bandwidth: float = None
    mse_steps: tuple = MSE_STEPS
    """transform steps at which generated images are scored"""

    mse_limit: int = MSE_LIMIT
    """base images scored per plan"""

    def __post_init__(self):
        object.__setattr__(self, "select", tuple(self.select))
        object.__setattr__(self, "mse_steps", tuple(self.mse_steps))
        unknown = set(self.select) - set(ALL_METRICS)
        if unknown:
            raise ValueError(f"Unknown metrics {sorted(unknown)}, expected {ALL_METRICS}.")
        if self.probe not in (LOGISTIC, MLP_PROBE):
            raise ValueError(f"Unknown probe {self.probe!r}.")
        if not self.mse_steps or any(
            isinstance(k, bool) or not isinstance(k, int) or k == 0 for k in self.mse_steps
        ):
            raise ValueError(f"Transform steps must be nonzero integers, got {self.mse_steps}.")
        if self.mse_limit < 1:
            raise ValueError(f"At least one image must be scored, got {self.mse_limit}.")


@dataclasses.dataclass
class MetricsReport:
    """Metrics of one fold; percentages in ``[0, 100]``, `None` when not computed."""

    acc: float = None
    mmd_x100: float = None
    adv: float = None
    chance: float = None
    d: dict = dataclasses.field(default_factory=dict)
    """mean minimum distance by ``covariate:from->to``"""

    cs: dict = dataclasses.field(default_factory=dict)
    """mean cosine similarity by ``covariate:from->to``"""

    mse: dict = dataclasses.field(default_factory=dict)
    """generated image error by traversal plan, ``rotate:+10,scale:+10``"""

    mse_base: dict = dataclasses.field(default_factory=dict)
    """error of the untransformed images for the same plans"""

    def to_dict(self):
        return {key: getattr(self, key) for key in REPORT_KEYS}

    @classmethod
    def from_dict(cls, data):
        return cls(**{key: data[key] for key in REPORT_KEYS if data.get(key) is not None})


def transition_key(covariate, c1, c2):
    return f"{covariate}:{c1}->{c2}"


# -- single metrics


def metric_accuracy(bundle, dataset):
    """Percentage of samples whose predicted label is their label."""
    if not dataset.m:
        raise DegenerateInput("Accuracy of an empty dataset.")
    predicted = predict(bundle, Tensor(dataset.features))
    return 100.0 * float(np.mean(predicted == dataset.labels))


def latent_groups(latents, codes):
    """Rows of `latents` grouped by code, by increasing code."""
    latents = np.asarray(latents)
    codes = np.asarray(codes)
    return [latents[codes == code] for code in np.unique(codes)]


def metric_mmd(groups, bandwidth=None):
    """Unsquared biased RBF-MMD between groups of latent vectors.

    With more than two groups, the mean over every unordered pair of groups.

    :param groups: Samples of every group, one per row.
    :type groups: :class:`list` of :class:`numpy.ndarray`
    :param bandwidth: Kernel width, `None` for the median heuristic of each pair.
    :raises DegenerateInput: With less than two groups or an empty one.
    """
    groups = [np.atleast_2d(np.asarray(group, dtype=np.float64)) for group in groups]
    if len(groups) < 2:
        raise DegenerateInput(f"MMD needs at least two groups, got {len(groups)}.")
    if any(group.shape[0] < 1 for group in groups):
        raise DegenerateInput("MMD of an empty group.")
    values = [
        np.sqrt(max(mmd_squared(a, b, bandwidth)[0], 0.0))
        for a, b in itertools.combinations(groups, 2)
    ]
    return float(np.mean(values))


def _standardize(latents, reference):
    mean = reference.mean(axis=0)
    std = reference.std(axis=0)
    return (latents - mean) / np.where(std > 0, std, 1.0)


def _probe_network(kind, n, classes):
    dims = (n, PROBE_HIDDEN, classes) if kind == MLP_PROBE else (n, classes)
    return MLP("probe", dims, activation="relu")


def _fit_probe(net, x, y, seed):
    rng = np.random.default_rng(seed)
    parameters = net.init(rng)
    graph = Graph()
    node = graph.input("z", (None, net.in_dim))
    graph.output(graph.softmax_cross_entropy(net.build(graph, node, parameters), y))
    optimizer = Adam(PROBE_LEARNING_RATE)
    for _ in range(PROBE_STEPS):
        graph.forward({"z": x})
        parameters = optimizer.step(graph.parameters, graph.backward())
        for name, value in parameters.items():
            graph.set_parameter(name, value)
    return parameters


def _probe_predict(net, parameters, x):
    graph = Graph()
    node = graph.input("z", (None, net.in_dim))
    graph.output(net.build(graph, node, parameters))
    return np.argmax(graph.forward({"z": x}).data, axis=1)


def metric_adv(latents, codes, probe=LOGISTIC, seed=0):
    """Accuracy of a probe predicting the nuisance codes from the latents.

    A fresh probe is trained on a seeded 70% of the samples and scored on
    the other 30%. The chance level is the held-out frequency of the most
    frequent training code, which a probe without information achieves.

    :param latents: One latent vector per row.
    :param codes: Nuisance bin code of every row.
    :param probe: ``logistic`` or ``mlp`` (one hidden layer of 32).
    :param seed: Seed of the split and of the probe.
    :return: ``(adv, chance)`` in percent.
    :rtype: :class:`tuple`
    :raises DegenerateInput: With a single nuisance code or too few samples.
    """
    latents = np.asarray(latents, dtype=np.float64)
    levels, y = np.unique(np.asarray(codes), return_inverse=True)
    if len(levels) < 2:
        raise DegenerateInput("The nuisance covariate has a single value.")
    m = len(y)
    cut = int(round(PROBE_SPLIT * m))
    if cut < 1 or cut >= m:
        raise DegenerateInput(f"Cannot split {m} samples for the probe.")
    order = np.random.default_rng(seed).permutation(m)
    fit, held = order[:cut], order[cut:]

    x_fit = _standardize(latents[fit], latents[fit])
    x_held = _standardize(latents[held], latents[fit])
    net = _probe_network(probe, latents.shape[1], len(levels))
    parameters = _fit_probe(net, x_fit, y[fit], seed)
    predicted = _probe_predict(net, parameters, x_held)

    majority = np.argmax(np.bincount(y[fit], minlength=len(levels)))
    adv = 100.0 * float(np.mean(predicted == y[held]))
    chance = 100.0 * float(np.mean(y[held] == majority))
    logger.debug("Probe accuracy %.2f%%, chance %.2f%%.", adv, chance)
    return adv, chance


def _nearest(bundle, covariate, c1, c2, pool, latents=None):
    codes = pool.codes[covariate]
    sources = np.flatnonzero(codes == c1)
    targets = np.flatnonzero(codes == c2)
    if not targets.size:
        raise DegenerateInput(f"No sample of {covariate!r} in bin {c2}.")
    if not sources.size:
        raise DegenerateInput(f"No sample of {covariate!r} in bin {c1}.")
    if latents is None:
        latents = encode(bundle, Tensor(pool.features)).data
    moved = apply_morphism(bundle.morphism(covariate), c2 - c1, Tensor(latents[sources])).data
    distances = cdist(moved, latents[targets])
    # argmin returns the first minimum, the smallest pool index
    best = np.argmin(distances, axis=1)
    return sources, targets[best], distances[np.arange(len(sources)), best]


def metric_min_distance(bundle, covariate, c1, c2, pool, latents=None):
    """Mean over bin-`c1` samples of the distance from ``W^(c2 - c1) F(s)`` to the closest
    bin-`c2` latent, divided by the latent dimension.

    :param pool: Samples with their covariate codes.
    :type pool: :class:`~catharm.dataio.Dataset`
    :param latents: Latents of the pool, computed when `None`.
    :raises DegenerateInput: If a bin has no sample.
    """
    _, _, distances = _nearest(bundle, covariate, c1, c2, pool, latents)
    return float(np.mean(distances)) / bundle.n


def other_covariates(pool, covariate):
    """Standardized table of every covariate of `pool` except `covariate`.

    Numeric source columns keep their values, other columns their codes.
    """
    columns = []
    for spec in pool.specs:
        if spec.name == covariate:
            continue
        try:
            values = np.asarray(pool.column(spec.column), dtype=np.float64)
        except (TypeError, ValueError):
            values = pool.codes[spec.name].astype(np.float64)
        std = values.std()
        columns.append((values - values.mean()) / (std if std > 0 else 1.0))
    if not columns:
        raise DegenerateInput(f"No covariate besides {covariate!r} to compare.")
    return np.stack(columns, axis=1)


def metric_cosine_similarity(bundle, covariate, c1, c2, pool, others=None, latents=None):
    """Mean cosine similarity between the other covariates of each bin-`c1` sample and of the
    sample found by :func:`metric_min_distance`.

    Sources whose vector or match vector is zero are skipped.

    :param others: One row of other covariate values per pool sample, see
        :func:`other_covariates` for the default.
    :return: The mean similarity and the number of skipped sources.
    :rtype: :class:`tuple`
    :raises DegenerateInput: If every source is skipped.
    """
    sources, matches, _ = _nearest(bundle, covariate, c1, c2, pool, latents)
    others = other_covariates(pool, covariate) if others is None else np.asarray(others, float)
    a, b = others[sources], others[matches]
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    usable = norms > 0
    skipped = int(np.sum(~usable))
    if not usable.any():
        raise DegenerateInput(f"Every source of {covariate!r} {c1}->{c2} has a zero vector.")
    if skipped:
        logger.info("Skipped %d zero vectors for %s.", skipped, transition_key(covariate, c1, c2))
    cosines = np.sum(a[usable] * b[usable], axis=1) / norms[usable]
    return float(np.mean(np.clip(cosines, -1.0, 1.0))), skipped


def transform_plans(covariates, steps):
    """Single-transform plans at every step count, then all transforms composed.

    :param covariates: Covariates carrying a transform, in application order.
    :param steps: Step counts.
    :rtype: :class:`list` of :class:`~catharm.latentnav.TraversalPlan`
    """
    plans = []
    for k in steps:
        plans.extend(TraversalPlan(((name, k),)) for name in covariates)
        if len(covariates) > 1:
            plans.append(TraversalPlan(tuple((name, k) for name in covariates)))
    return plans


def metric_transform_mse(bundle, test, covariates, steps=MSE_STEPS, limit=MSE_LIMIT):
    """Generated image errors of every plan of :func:`transform_plans`.

    Plans the reference transforms cannot follow (zooming in) are skipped.

    :return: Errors and baseline errors by plan text.
    :rtype: :class:`tuple` of :class:`dict`
    """
    errors, baselines = {}, {}
    for plan in transform_plans(covariates, steps):
        try:
            errors[str(plan)], baselines[str(plan)] = transform_mse(
                bundle, test, plan, limit=limit
            )
        except DataError as exc:
            logger.info("No transform error for %s: %s", plan, exc)
    return errors, baselines


# -- fold reports


def nuisance_covariate(specs, options):
    if options.nuisance is not None:
        if options.nuisance not in [spec.name for spec in specs]:
            raise DegenerateInput(f"Unknown nuisance covariate {options.nuisance!r}.")
        return options.nuisance
    for spec in specs:
        if not spec.equivariant:
            return spec.name
    return specs[0].name if specs else None


def evaluate(bundle, test, specs, options=None):
    """Metrics of `bundle` on the `test` samples.

    :param bundle: Trained bundle.
    :type bundle: :class:`~catharm.functors.ModelBundle`
    :param test: Held-out samples with their covariate codes.
    :type test: :class:`~catharm.dataio.Dataset`
    :param specs: Covariates.
    :param options: Metric selection, all metrics by default.
    :type options: :class:`MetricsOptions`
    :rtype: :class:`MetricsReport`
    """
    options = options or MetricsOptions()
    specs = tuple(specs)
    report = MetricsReport()
    latents = encode(bundle, Tensor(test.features)).data if test.m else np.zeros((0, bundle.n))
    if ACC in options.select:
        report.acc = metric_accuracy(bundle, test)

    nuisance = nuisance_covariate(specs, options)
    if nuisance is not None and {MMD, ADV} & set(options.select):
        codes = test.codes[nuisance]
        try:
            if MMD in options.select:
                report.mmd_x100 = 100.0 * metric_mmd(
                    latent_groups(latents, codes), options.bandwidth
                )
            if ADV in options.select:
                report.adv, report.chance = metric_adv(
                    latents, codes, options.probe, options.probe_seed
                )
        except DegenerateInput as exc:
            logger.warning("Invariance metrics of %s skipped: %s", nuisance, exc)

    if {D, CS} & set(options.select):
        for spec in specs:
            if not spec.equivariant or spec.name not in bundle.morphism_flags:
                continue
            for c1, c2 in transitions(test.codes[spec.name]):
                key = transition_key(spec.name, c1, c2)
                if D in options.select:
                    report.d[key] = metric_min_distance(bundle, spec.name, c1, c2, test, latents)
                if CS in options.select:
                    try:
                        report.cs[key], _ = metric_cosine_similarity(
                            bundle, spec.name, c1, c2, test, latents=latents
                        )
                    except DegenerateInput as exc:
                        logger.debug("No cosine similarity for %s: %s", key, exc)

    covariates = [
        spec.name
        for spec in specs
        if spec.name in TRANSFORMS and spec.name in bundle.morphism_flags
    ]
    if MSE in options.select and covariates and bundle.decoder is not None:
        if not test.images:
            logger.warning("Transform errors skipped: the test part holds no images.")
        else:
            try:
                report.mse, report.mse_base = metric_transform_mse(
                    bundle, test, covariates, options.mse_steps, options.mse_limit
                )
            except DegenerateInput as exc:
                logger.warning("Transform errors skipped: %s", exc)
    return report


def _scalar_rows(reports):
    rows = []
    for report in reports:
        row = {key: getattr(report, key) for key in REPORT_KEYS[:4]}
        for field in KEYED:
            row.update({f"{field}:{key}": value for key, value in getattr(report, field).items()})
        rows.append(row)
    return rows


def aggregate(reports):
    """Mean and population standard deviation of every metric over the folds.

    Keys missing from a fold (a transition absent from its test part) are
    averaged over the folds holding them.

    :return: Two reports, the mean and the deviation.
    :rtype: :class:`tuple` of :class:`MetricsReport`
    """
    rows = _scalar_rows(reports)
    keys = sorted({key for row in rows for key in row})
    mean, std = MetricsReport(), MetricsReport()
    for key in keys:
        values = [row[key] for row in rows if row.get(key) is not None]
        if not values:
            continue
        mu, sigma = float(np.mean(values)), float(np.std(values))
        if key.startswith(tuple(f"{field}:" for field in KEYED)):
            field, name = key.split(":", 1)
            getattr(mean, field)[name] = mu
            getattr(std, field)[name] = sigma
        else:
            setattr(mean, key, mu)
            setattr(std, key, sigma)
    return mean, std


def report_document(reports, config_hash, seed):
    """JSON-ready report of every fold with their aggregate."""
    mean, std = aggregate(reports)
    return {
        "config_hash": config_hash,
        "seed": seed,
        "folds": [report.to_dict() for report in reports],
        "mean": mean.to_dict(),
        "std": std.to_dict(),
    }


def write_report(path, reports, config_hash, seed):
    document = report_document(reports, config_hash, seed)
    JsonFile(path).dump_in(document)
    return document


def _cell(value):
    return "-" if value is None else f"{value:.2f}"


def format_table(document):
    """Two-decimal text table of a report document, one row per fold then mean and deviation."""
    columns = ["acc", "mmd_x100", "adv", "chance"]
    header = ["fold"] + columns
    rows = []
    for index, fold in enumerate(document["folds"]):
        rows.append([str(index)] + [_cell(fold[key]) for key in columns])
    mean, std = document["mean"], document["std"]
    rows.append(["mean"] + [_cell(mean[key]) for key in columns])
    rows.append(["std"] + [_cell(std[key]) for key in columns])
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in [header] + rows]
    for field in KEYED:
        for key in sorted(mean[field]):
            lines.append(f"{field} {key}: {_cell(mean[field][key])} ({_cell(std[field][key])})")
    return "\n".join(lines)
