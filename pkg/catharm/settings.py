"""Run settings and their resolution order.

A setting is resolved from the first source holding it:

 1. CLI flag
 2. os.environ (starting with CATHARM_)
 3. configuration file (``config.toml``)
 4. experiment spec
 5. hardcoded default
"""

import collections
import dataclasses
import logging
import pathlib
from functools import partialmethod
from typing import Any

from catharm._internal.utils import strtobool

logger = logging.getLogger(__name__)

OS_ENVIRON_PREFIX = "CATHARM_"

# the public index where every setting metadata is saved
variables = {}


@dataclasses.dataclass
class Variable:
    """Metadata dataclass for run settings."""

    name: str
    """the unique setting name as found in :data:`environ`"""

    type: callable = str  # noqa: A003
    """the function used to parse the value from a string"""

    default: Any = None
    """the value used when no source provides one"""

    help: str = ""  # noqa: A003
    """the free text shown by the command line ``--help``"""

    def __init__(self, name, type=str, default=None, help=""):  # noqa: A002
        self.name = name
        self.type = type
        self.default = default
        self.help = help
        variables[self.name] = self


def _positive_int(value):
    value = int(value)
    if value < 1:
        raise ValueError(f"Expected a positive integer, got {value}.")
    return value


def _seed(value):
    value = int(value)
    if value < 0:
        raise ValueError(f"Seeds are nonnegative integers, got {value}.")
    return value


# please keep the variables alphabetically sorted

Variable(
    "DATA_DIR",
    type=pathlib.Path,
    default=None,
    help="Directory relative dataset paths of a spec are resolved against.",
)
Variable(
    "FORCE",
    type=lambda value: bool(strtobool(value)),
    default=False,
    help="Proceed when checkpoint and spec hashes differ.",
)
Variable("SEED", type=_seed, default=0, help="Root seed of the run.")
Variable(
    "THREADS",
    type=_positive_int,
    default=1,
    help="Worker threads for fold-parallel training and evaluation.",
)


class _Environment(collections.UserDict):  # singleton
    """Setting-Value mapping fed from the many sources of a run."""

    def clear(self):
        """Reset the environment."""
        self.data = {}

        self._source_cli = {}  #: click flags
        self._source_osenviron = {}  #: os.environ w/ CATHARM_
        self._source_config = {}  #: catharm/config.toml
        self._source_spec = {}  #: .cat experiment spec
        self._source_default = {var.name: var.default for var in variables.values()}

        self._sources = collections.ChainMap(
            self._source_cli,
            self._source_osenviron,
            self._source_config,
            self._source_spec,
            self._source_default,
        )

    def __init__(self):
        self.clear()

    def __getitem__(self, key):
        if key not in variables:
            raise KeyError(f"Unknown setting: {key!r}")
        if key not in self.data:
            self.data[key] = self._sources[key]
            logger.debug("Resolved setting %s=%r.", key, self.data[key])
        return self.data[key]

    def __setitem__(self, key, value):
        """Bypass sources and force the value of a setting."""
        if key not in variables:
            raise KeyError(f"Unknown setting: {key!r}")
        self.data[key] = value

    def _feed(self, source_name, options):
        source = getattr(self, source_name)
        for key, value in options.items():
            if value is None:
                continue
            if (var := variables.get(key)) is None:
                raise ValueError(f"{key!r} is an unknown setting")
            try:
                source[key] = var.type(value)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"Invalid value {value!r} for setting {key}: {exc}") from exc
            self.data.pop(key, None)

    feed_cli = partialmethod(_feed, "_source_cli")
    feed_config = partialmethod(_feed, "_source_config")
    feed_spec = partialmethod(_feed, "_source_spec")

    def feed_osenviron(self, osenviron):
        options = {}
        for key, value in osenviron.items():
            name = key[len(OS_ENVIRON_PREFIX) :]
            if key.startswith(OS_ENVIRON_PREFIX) and name in variables:
                options[name] = value
        self._feed("_source_osenviron", options)


environ = _Environment()  # singleton


def feed_environ(config_options=None, cli_options=None, osenviron=None, spec_options=None):
    """Refill :data:`environ` from every source at once.

    :param config_options: Content of the configuration file.
    :type config_options: :class:`dict`
    :param cli_options: Settings given on the command line (`None` values are skipped).
    :type cli_options: :class:`dict`
    :param osenviron: Process environment.
    :type osenviron: :class:`collections.abc.Mapping`
    :param spec_options: Settings declared by the experiment spec.
    :type spec_options: :class:`dict`
    :raises ValueError: On unknown keys in the configuration file or unparsable values.
    """
    environ.clear()
    environ.feed_cli({key.upper(): value for key, value in (cli_options or {}).items()})
    environ.feed_osenviron(osenviron or {})
    environ.feed_config({key.upper(): value for key, value in (config_options or {}).items()})
    environ.feed_spec({key.upper(): value for key, value in (spec_options or {}).items()})
