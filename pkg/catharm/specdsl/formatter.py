"""Canonical text of experiment plans.

Blocks come in a fixed order and keys alphabetically within blocks; every
setting is written out, defaults included. Comments of the source are not
kept.
"""

import dataclasses

from catharm.dataio.loaders import DatasetDirective
from catharm.specdsl.lexer import ESCAPES

INDENT = "    "
_QUOTED = {"path", "test_path", "schema", "images", "labels", "test_images", "test_labels"}
_QUOTED_COVARIATE = {"name", "column"}
_UNESCAPES = {char: "\\" + code for code, char in ESCAPES.items()}


def _string(text):
    return '"' + "".join(_UNESCAPES.get(char, char) for char in text) + '"'


def _literal(value, quoted=False):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if quoted:
        return _string(value)
    return str(value)


def _call(name, args):
    return f"{name}({', '.join(args)})"


def _block(name, entries):
    lines = [f"{name} {{"]
    for key in sorted(entries):
        lines.append(f"{INDENT}{key} = {entries[key]};")
    lines.append("}")
    return "\n".join(lines)


def _dataset(directive):
    entries = {}
    for field in dataclasses.fields(DatasetDirective):
        value = getattr(directive, field.name)
        if value is not None:
            entries[field.name] = _literal(value, field.name in _QUOTED)
    return entries


def _widths(*widths):
    return _call("mlp", [str(width) for width in widths])


def _latent(latent):
    entries = {
        "activation": latent.activation,
        "classifier": _widths(latent.n, *latent.classifier, "auto"),
        "decoder": "none",
        "dim": str(latent.n),
        "encoder": _widths("auto", *latent.hidden, latent.n),
        "output": latent.output,
    }
    if latent.decoder is not None:
        entries["decoder"] = _widths(latent.n, *latent.decoder, "auto")
    return entries


def _covariate(spec):
    entries = {
        "anchor": _literal(float(spec.anchor)),
        "column": _string(spec.column),
        "constraint": spec.constraint,
        "include_d0": _literal(spec.include_d0),
        "kind": spec.kind,
        "lambda": _literal(float(spec.weight)),
        "loss": spec.loss,
        "morphism": "none",
        "name": _string(spec.name),
        "policy": spec.policy,
    }
    if spec.morphism != "none":
        entries["morphism"] = _call(spec.morphism, [str(spec.morphism_dim)])
    if spec.width is not None:
        entries["bins"] = _literal(float(spec.width))
    elif spec.edges is not None:
        entries["bins"] = _call("edges", [_literal(float(edge)) for edge in spec.edges])
    elif spec.levels is not None:
        entries["bins"] = _call("levels", [_literal(level, True) for level in spec.levels])
    if spec.range is not None:
        entries["range"] = _call("range", [_literal(float(bound)) for bound in spec.range])
    return entries


def _loss(train):
    weights = train.weights
    return {
        "bandwidth": "median" if train.bandwidth is None else _literal(float(train.bandwidth)),
        "orthogonality": _literal(float(weights.mu_orth)),
        "prediction": _literal(float(weights.lambda_p)),
        "reconstruction": _literal(float(weights.lambda_r)),
        "structure": _literal(float(weights.lambda_s)),
    }


def _train(config):
    entries = {}
    for field in dataclasses.fields(config):
        if field.name in ("weights", "bandwidth"):
            continue
        value = getattr(config, field.name)
        if field.type is float or field.type == "float":
            value = float(value)
        entries[field.name] = _literal(value)
    return entries


def _metrics(options):
    entries = {
        "probe": options.probe,
        "probe_seed": str(options.probe_seed),
        "select": _call("set", list(options.select)),
        "mse_steps": _call("set", [str(k) for k in options.mse_steps]),
        "mse_limit": str(options.mse_limit),
    }
    if options.nuisance is not None:
        entries["nuisance"] = _string(options.nuisance)
    return entries


def format_plan(plan):
    """Canonical spec text of `plan`, parsing back to an equal plan.

    :param plan: A valid plan.
    :type plan: :class:`~catharm.specdsl.ExperimentPlan`
    :rtype: :class:`str`
    """
    blocks = [_block("dataset", _dataset(plan.dataset)), _block("latent", _latent(plan.latent))]
    blocks.extend(_block("covariate", _covariate(spec)) for spec in plan.covariates)
    blocks.append(_block("loss", _loss(plan.train)))
    blocks.append(_block("train", _train(plan.train)))
    blocks.append(_block("metrics", _metrics(plan.metrics)))
    return "\n\n".join(blocks) + "\n"
