import pathlib

from pytest import fixture, mark, raises

from catharm import settings
from catharm.settings import environ, feed_environ


@fixture
def reset_environ():
    feed_environ()
    yield
    feed_environ()


def test_defaults(reset_environ):
    assert environ["SEED"] == 0
    assert environ["THREADS"] == 1
    assert environ["FORCE"] is False
    assert environ["DATA_DIR"] is None


@mark.parametrize(
    "sources, seed",
    (
        ({}, 0),
        ({"spec_options": {"seed": 1}}, 1),
        ({"spec_options": {"seed": 1}, "config_options": {"seed": 2}}, 2),
        (
            {
                "spec_options": {"seed": 1},
                "config_options": {"seed": 2},
                "osenviron": {"CATHARM_SEED": "3"},
            },
            3,
        ),
        (
            {
                "spec_options": {"seed": 1},
                "config_options": {"seed": 2},
                "osenviron": {"CATHARM_SEED": "3"},
                "cli_options": {"seed": 4},
            },
            4,
        ),
    ),
)
def test_precedence(sources, seed, reset_environ):
    feed_environ(**sources)
    assert environ["SEED"] == seed


def test_none_flags_are_skipped(reset_environ):
    feed_environ(cli_options={"seed": None, "threads": 2}, config_options={"seed": 5})
    assert environ["SEED"] == 5 and environ["THREADS"] == 2


def test_values_are_parsed(reset_environ):
    feed_environ(
        osenviron={"CATHARM_FORCE": "yes", "CATHARM_DATA_DIR": "data", "HOME": "/root"},
        config_options={"threads": "3"},
    )
    assert environ["FORCE"] is True
    assert environ["DATA_DIR"] == pathlib.Path("data")
    assert environ["THREADS"] == 3


def test_unrelated_environment_is_ignored(reset_environ):
    feed_environ(osenviron={"CATHARM_COLOR": "1", "SEED": "9"})
    assert environ["SEED"] == 0


@mark.parametrize(
    "sources",
    (
        {"config_options": {"colour": "red"}},
        {"config_options": {"threads": 0}},
        {"cli_options": {"seed": -1}},
        {"osenviron": {"CATHARM_FORCE": "maybe"}},
    ),
)
def test_invalid_values(sources, reset_environ):
    with raises(ValueError):
        feed_environ(**sources)


def test_unknown_setting(reset_environ):
    with raises(KeyError):
        environ["COLOUR"]
    with raises(KeyError):
        environ["COLOUR"] = 1


def test_forced_value(reset_environ):
    environ["SEED"] = 7
    assert environ["SEED"] == 7
    feed_environ()
    assert environ["SEED"] == 0


def test_variables_are_registered():
    assert sorted(settings.variables) == ["DATA_DIR", "FORCE", "SEED", "THREADS"]
    assert all(variable.help for variable in settings.variables.values())
