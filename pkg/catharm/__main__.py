import functools
import logging
import os
import pathlib
import sys
import warnings

import click
import click.core

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from catharm import __version__, commands, settings, signals
from catharm.exceptions import CatharmError, NonFiniteError, NonFiniteLoss, SpecError
from catharm.latentnav import parse_plan
from catharm.metrics import format_table
from catharm.specdsl import load_plan

logger = logging.getLogger(__name__)
DEFAULT_LOGGING_LEVEL = logging.WARNING
DEFAULT_FORMAT = "[%(levelname)s] %(message)s"
DEBUG_FORMAT = "%(asctime)s [%(levelname)s] <%(funcName)s> %(message)s"
APP_DIR = pathlib.Path(click.get_app_dir("catharm"))

SPEC_EXIT, DATA_EXIT, NUMERIC_EXIT = 1, 2, 3
DEFAULT_LAMBDAS = (0.001, 0.01, 0.1)


class CatharmFailure(click.ClickException):
    """A library error reported on stderr with the exit code of its kind."""

    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def handle_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SpecError as exc:
            raise CatharmFailure(str(exc), SPEC_EXIT) from exc
        except (NonFiniteLoss, NonFiniteError) as exc:
            raise CatharmFailure(str(exc), NUMERIC_EXIT) from exc
        except CatharmError as exc:
            raise CatharmFailure(str(exc), DATA_EXIT) from exc

    return wrapper


def _log_epoch(fold, epoch, breakdown, **_kwargs):
    logger.debug("Fold %d, epoch %d: loss %.6g.", fold, epoch, breakdown.total)


def _log_fold(fold, report, **_kwargs):
    logger.info("Fold %d done: %s", fold, report.to_dict())


def _log_file(path, **_kwargs):
    logger.info("Wrote %s.", path)


def connect_signals():
    signals.epoch_end.connect(_log_epoch)
    signals.fold_end.connect(_log_fold)
    signals.file_written.connect(_log_file)


def resolve_settings(ctx, plan=None, **cli_options):
    """Feed :data:`catharm.settings.environ` from every source and return it."""
    try:
        settings.feed_environ(
            ctx.obj["config"],
            cli_options,
            os.environ,
            None if plan is None else plan.settings(),
        )
    except ValueError as exc:
        raise click.UsageError(exc.args[0]) from exc
    return settings.environ


spec_option = click.option(
    "--spec",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    help="Experiment spec (.cat file).",
)
ckpt_option = click.option(
    "--ckpt",
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=pathlib.Path),
    help="Checkpoint written by train.",
)
data_dir_option = click.option(
    "--data-dir",
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    help="Directory relative dataset paths are resolved against.",
)
seed_option = click.option("--seed", type=int, help="Root seed, overrides the spec one.")
threads_option = click.option("--threads", type=int, help="Worker threads for the folds.")
force_option = click.option(
    "--force", is_flag=True, help="Proceed when checkpoint and spec do not match."
)


@click.group(
    help="catharm learns covariate-invariant and covariate-equivariant latent spaces."
)
@click.option("-v", "--verbose", count=True)
@click.option("-s", "--silent", count=True)
@click.option(
    "-c",
    "--config",
    default=APP_DIR / "config.toml",
    type=click.Path(exists=False, dir_okay=False, path_type=pathlib.Path),
    help="Path of the configuration file.",
    show_default=True,
)
@click.version_option(version=__version__, prog_name="catharm")
@click.pass_context
def main(ctx, verbose, silent, config):
    log_level = DEFAULT_LOGGING_LEVEL - verbose * 10 + silent * 10
    setup_logging(max(logging.NOTSET, min(log_level, logging.CRITICAL)))
    connect_signals()

    config_options = {}
    if config.exists():
        try:
            with config.open("rb") as config_file:
                config_options = tomllib.load(config_file)
        except tomllib.TOMLDecodeError as exc:
            raise click.BadParameter(f"{config}: {exc}", param_hint="--config") from exc
    elif ctx.get_parameter_source("config") != click.core.ParameterSource.DEFAULT:
        raise click.BadParameter(f"{config.resolve()} does not exist.", param_hint="--config")
    ctx.obj = {"config": config_options}


@main.command(help="Train every fold of a spec and write model, report and loss log.")
@spec_option
@click.option(
    "--out",
    required=True,
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    help="Output directory.",
)
@seed_option
@threads_option
@data_dir_option
@click.pass_context
@handle_errors
def train(ctx, spec, out, seed, threads, data_dir):
    plan = load_plan(spec)
    environ = resolve_settings(ctx, plan, seed=seed, threads=threads, data_dir=data_dir)
    document = commands.run_train(
        plan,
        out,
        seed=environ["SEED"],
        threads=environ["THREADS"],
        data_dir=environ["DATA_DIR"],
        spec_path=spec,
    )
    click.echo(format_table(document))


@main.command("eval", help="Recompute the metrics of a checkpoint on its held-out part.")
@ckpt_option
@spec_option
@click.option(
    "--report",
    required=True,
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Report file (JSON).",
)
@click.option(
    "--mse-step",
    "mse_steps",
    multiple=True,
    type=int,
    help="Transform steps at which to score generated images, overrides the spec ones.",
)
@force_option
@data_dir_option
@click.pass_context
@handle_errors
def evaluate(ctx, ckpt, spec, report, mse_steps, force, data_dir):
    if 0 in mse_steps:
        raise click.BadParameter("steps must be nonzero", param_hint="--mse-step")
    plan = load_plan(spec)
    environ = resolve_settings(ctx, plan, force=force or None, data_dir=data_dir)
    document = commands.run_eval(
        ckpt,
        plan,
        report,
        force=environ["FORCE"],
        data_dir=environ["DATA_DIR"],
        mse_steps=mse_steps,
    )
    click.echo(format_table(document))


@main.command(help="Generate the images met along latent traversals of one sample.")
@ckpt_option
@spec_option
@click.option("--index", required=True, type=int, help="Sample of the held-out part.")
@click.option(
    "--plan",
    "plans",
    required=True,
    multiple=True,
    metavar="COV:EXP[,COV:EXP]*",
    help="Traversal, one grid row per occurrence.",
)
@click.option(
    "--out",
    required=True,
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Image grid (PGM), a CSV of nearest classes is written next to it.",
)
@force_option
@data_dir_option
@click.pass_context
@handle_errors
def traverse(ctx, ckpt, spec, index, plans, out, force, data_dir):
    plan = load_plan(spec)
    try:
        traversals = [parse_plan(text, index) for text in plans]
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--plan") from exc
    environ = resolve_settings(ctx, plan, force=force or None, data_dir=data_dir)
    try:
        nearest = commands.run_traverse(
            ckpt, plan, index, traversals, out, environ["FORCE"], environ["DATA_DIR"]
        )
    except IndexError as exc:
        raise click.BadParameter(str(exc), param_hint="--index") from exc
    for traversal, classes in zip(traversals, nearest):
        click.echo(f"{traversal}: {' '.join(map(str, classes))}")


@main.command(help="Shift a covariate in latent space and report the class probabilities.")
@ckpt_option
@spec_option
@click.option("--covariate", required=True, help="Equivariant covariate to shift.")
@click.option("--delta", required=True, type=float, help="Number of bins to move by.")
@click.option(
    "--report",
    required=True,
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="Report file (JSON).",
)
@force_option
@data_dir_option
@click.pass_context
@handle_errors
def hypothetical(ctx, ckpt, spec, covariate, delta, report, force, data_dir):
    plan = load_plan(spec)
    environ = resolve_settings(ctx, plan, force=force or None, data_dir=data_dir)
    document = commands.run_hypothetical(
        ckpt, plan, covariate, delta, report, environ["FORCE"], environ["DATA_DIR"]
    )
    for code, shift in document["bins"].items():
        values = " ".join(f"{value:+.4f}" for value in shift["shift"])
        click.echo(f"{covariate}={code}: {values}")


@main.command(help="Dump the training pairs of every covariate as CSV.")
@spec_option
@click.option(
    "--dump",
    required=True,
    type=click.Path(dir_okay=False, path_type=pathlib.Path),
    help="CSV file of covariate,i,j,d rows.",
)
@seed_option
@data_dir_option
@click.pass_context
@handle_errors
def pairs(ctx, spec, dump, seed, data_dir):
    plan = load_plan(spec)
    environ = resolve_settings(ctx, plan, seed=seed, data_dir=data_dir)
    counts = commands.run_pairs(plan, dump, environ["SEED"], environ["DATA_DIR"])
    for covariate, count in counts.items():
        click.echo(f"{covariate}: {count}")


@main.command(help="Check the gradient of every op against finite differences.")
@seed_option
@click.option("--tolerance", default=1e-5, show_default=True, help="Maximal relative error.")
@click.pass_context
@handle_errors
def gradcheck(ctx, seed, tolerance):
    environ = resolve_settings(ctx, seed=seed)
    reports = commands.run_gradcheck(environ["SEED"], tolerance)
    failed = []
    for name, report in reports.items():
        click.echo(f"{name}: {report.max_error:.3g} {'ok' if report.passed else 'FAILED'}")
        if not report.passed:
            failed.append(name)
    if failed:
        raise CatharmFailure(f"Gradient check failed for {', '.join(failed)}.", NUMERIC_EXIT)


@main.command(help="Sweep covariate weights and latent sizes, reporting accuracy and MMD.")
@spec_option
@click.option(
    "--out",
    required=True,
    type=click.Path(file_okay=False, path_type=pathlib.Path),
    help="Output directory.",
)
@click.option(
    "--lambdas",
    "weights",
    multiple=True,
    type=float,
    default=DEFAULT_LAMBDAS,
    show_default=True,
    help="Covariate weights, repeatable.",
)
@click.option("--dims", multiple=True, type=int, help="Latent sizes, defaults to the spec one.")
@seed_option
@threads_option
@data_dir_option
@click.pass_context
@handle_errors
def ablate(ctx, spec, out, weights, dims, seed, threads, data_dir):
    plan = load_plan(spec)
    environ = resolve_settings(ctx, plan, seed=seed, threads=threads, data_dir=data_dir)
    cells = commands.run_ablate(
        plan,
        out,
        weights,
        dims or (plan.latent.n,),
        seed=environ["SEED"],
        threads=environ["THREADS"],
        data_dir=environ["DATA_DIR"],
    )
    for cell in cells:
        click.echo(
            f"lambda={cell['lambda']:g} dim={cell['dim']}: "
            f"acc {_cell(cell['acc'])} mmd_x100 {_cell(cell['mmd_x100'])}"
        )


def _cell(value):
    return "-" if value is None else f"{value:.2f}"


class ColoredFormatter(logging.Formatter):
    """Classic formatter with colored [LEVEL]."""

    colors = {10: (34, 49), 20: (32, 49), 30: (33, 49), 40: (31, 49), 50: (37, 41)}

    def format(self, record):  # noqa: A003
        fg, bg = type(self).colors.get(record.levelno, (32, 49))
        record.levelname = f"\033[1;{fg}m\033[1;{bg}m{record.levelname}\033[0m"
        return super().format(record)


def supports_color(stream):
    """Determine if the given stream support colors."""
    return hasattr(stream, "isatty") and stream.isatty()


def setup_logging(verbosity):
    """Set up the package logger.

    Replace the current package logger handlers by a new
    :class:`logging.StreamHandler` with the correct level and formatter.

    When the requested :param verbosity: is more verbose than
    :data:`logging.DEBUG` then the python warnings are logged too.

    :param verbosity int: the verbosity level to use on the package logger
    """
    root_logger = logging.getLogger("" if __name__ == "__main__" else __package__)
    stderr = logging.StreamHandler()
    f_cls = ColoredFormatter if supports_color(stderr.stream) else logging.Formatter
    f_format = DEFAULT_FORMAT if verbosity > logging.DEBUG else DEBUG_FORMAT
    stderr.formatter = f_cls(f_format)
    root_logger.handlers.clear()
    root_logger.handlers.append(stderr)
    root_logger.level = max(verbosity, logging.DEBUG)
    logger.level = root_logger.level - 10
    if verbosity < logging.DEBUG:
        logging.captureWarnings(capture=True)
        warnings.filterwarnings("default")


if __name__ == "__main__":
    # Remove '' and current working directory from the first entry of
    # sys.path, if present to avoid using current directory in catharm
    # commands, when invoked as python -m catharm <command>
    if sys.path[0] in ("", os.getcwd()):  # noqa: PTH109
        sys.path.pop(0)
    sys.exit(main())
