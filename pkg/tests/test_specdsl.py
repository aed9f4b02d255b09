import dataclasses
import importlib.resources
import random

from pytest import mark, raises

from catharm import commands
from catharm.exceptions import SpecError
from catharm.specdsl import (
    ExperimentPlan,
    ParseError,
    compile_plan,
    format_plan,
    load_plan,
    parse,
    parse_blocks,
    plan_hash,
    tokenize,
)
from catharm.specdsl.compiler import BATCH, EXTERNAL, GROUPS
from catharm.specdsl.plan import DEFAULT_FOLDS
from catharm.trainer import train

from .utils import MINIMAL_SPEC, SYNTH_SPEC

BUNDLED = sorted(
    entry.name
    for entry in importlib.resources.files("catharm").joinpath("specs").iterdir()
    if entry.name.endswith(".cat")
)

MISMATCH_SPEC = """dataset { kind = synth; }
latent { dim = 3; }
covariate {
    name = "g";
    kind = ordinal;
    constraint = equivariance;
    morphism = orthogonal(4);
}
train { epochs = 1; }
"""


def bundled(name):
    return importlib.resources.files("catharm").joinpath("specs", name).read_text()


def messages(result):
    assert isinstance(result, list), result
    return [str(error) for error in result]


def test_minimal_spec_defaults():
    plan = parse(MINIMAL_SPEC)
    assert isinstance(plan, ExperimentPlan)
    assert plan.dataset.kind == "synth" and plan.dataset.m == 60 and plan.dataset.p == 4
    assert plan.latent.n == 3 and plan.latent.decoder is None
    assert plan.covariates == ()
    assert plan.train.epochs == 2 and plan.train.folds == DEFAULT_FOLDS
    assert plan.weights.lambda_r == 0.0 and plan.weights.lambda_p == 1.0
    assert plan.settings() == {"seed": 0}


def test_full_spec():
    plan = parse(SYNTH_SPEC)
    assert plan.latent.hidden == (6,)
    g = plan.covariate("g")
    assert g.equivariant and g.orthogonal and g.morphism_dim == 3 and g.weight == 0.5
    assert plan.weights.covariate("g") == 0.5
    assert plan.train.folds == 2 and plan.train.batch_size == 16 and plan.train.seed == 3
    assert plan.metrics.select == ("acc", "d")
    with raises(KeyError):
        plan.covariate("h")


def test_morphism_dimension_mismatch_names_both_lines():
    (error,) = parse(MISMATCH_SPEC)
    assert (error.line, error.column) == (7, 5)
    assert "line 7" in error.message and "line 2" in error.message


def test_encoder_width_mismatch():
    encoder = "latent { dim = 3; encoder = mlp(auto, 4); }"
    spec = MINIMAL_SPEC.replace("latent { dim = 3; }", encoder)
    (error,) = parse(spec)
    assert "encoder" in error.message and "latent dim 3" in error.message


def test_duplicate_covariate():
    spec = MINIMAL_SPEC + 'covariate { name = "g"; }\ncovariate { name = "g"; }\n'
    (error,) = parse(spec)
    assert "duplicate covariate 'g'" in error.message
    assert "lines 5 and 6" in error.message


def test_missing_blocks():
    assert messages(parse("")) == [
        "1:1: missing block 'dataset'",
        "1:1: missing block 'latent'",
        "1:1: missing block 'train'",
    ]


@mark.parametrize(
    "replacement, fragment",
    (
        ("train { epochs = 2; colour = 3; }", "unknown key 'colour'"),
        ("train { epochs = 2; epochs = 3; }", "duplicate key 'epochs'"),
        ("train { epochs = 2.5; }", "expected an integer"),
        ("train { epochs = ; }", "expected a value"),
        ("train { epochs = 2 }", "expected ';'"),
        ("train { epochs = 0; }", "At least one epoch"),
        ("train { epochs = 2; } runs { }", "unknown block 'runs'"),
        ("train { epochs = 2; } train { epochs = 3; }", "duplicate block 'train'"),
        ("train { epochs = 2; optimizer = rmsprop; }", "expected one of adam, sgd"),
        ('train { epochs = 2; } metrics { nuisance = "g"; }', "nuisance 'g' is not a covariate"),
        ("train { epochs = 2; } loss { reconstruction = 1.0; }", "needs a decoder"),
        ('train { epochs = 2; } covariate { name = "h"; }', "unknown column 'h'"),
        ("train { epochs = 2 $; }", "unexpected character"),
        ('train { epochs = 2; } metrics { nuisance = "g; }', "unterminated string"),
        ("train { epochs = 2; } metrics { mse_steps = set(0); }", "nonzero integers"),
        ("train { epochs = 2; } metrics { mse_steps = 10; }", "expected set(...)"),
    ),
)
def test_errors(replacement, fragment):
    result = parse(MINIMAL_SPEC.replace("train { epochs = 2; }", replacement))
    assert any(fragment in message for message in messages(result)), result


def test_transform_metric_settings():
    block = "metrics { select = set(mse); mse_steps = set(-5, 10); mse_limit = 50; }"
    plan = parse(MINIMAL_SPEC + block)
    assert plan.metrics.select == ("mse",)
    assert plan.metrics.mse_steps == (-5, 10) and plan.metrics.mse_limit == 50
    assert parse(format_plan(plan)) == plan
    assert "    mse_steps = set(-5, 10);" in format_plan(plan)


def test_every_error_is_reported():
    spec = "dataset { kind = synth; m = x; }\nlatent { dim = 0; }\ntrain { folds = -1; }\n"
    result = parse(spec)
    assert [error.line for error in result] == [1, 2, 3]


def test_invalid_utf8():
    (error,) = parse(b"dataset { kind = \xff; }")
    assert error.message == "spec is not valid UTF-8" and error.column == 18


def test_bytes_are_accepted():
    assert parse(MINIMAL_SPEC.encode()) == parse(MINIMAL_SPEC)


def test_load_plan(tmp_path):
    path = tmp_path / "run.cat"
    path.write_text(SYNTH_SPEC)
    assert load_plan(path) == parse(SYNTH_SPEC)
    path.write_text("train { epochs = 1; }")
    with raises(SpecError) as info:
        load_plan(path)
    assert info.value.errors[0].startswith(f"{path}:1:1: missing block")


@mark.parametrize("name", BUNDLED)
def test_bundled_specs_round_trip(name):
    plan = parse(bundled(name))
    assert isinstance(plan, ExperimentPlan), plan
    text = format_plan(plan)
    assert parse(text) == plan
    assert format_plan(parse(text)) == text
    assert plan_hash(parse(text)) == plan_hash(plan)


def test_format_is_canonical():
    text = format_plan(parse(SYNTH_SPEC))
    assert text.startswith("dataset {\n    effect = 2.0;\n    kind = synth;\n")
    assert "#" not in text and text.endswith("}\n")
    assert '    name = "g";' in text and "    morphism = orthogonal(3);" in text
    blocks = [line for line in text.splitlines() if line.endswith("{")]
    assert blocks == ["dataset {", "latent {", "covariate {", "loss {", "train {", "metrics {"]


def test_hash_changes_with_the_plan():
    plan = parse(SYNTH_SPEC)
    reseeded = dataclasses.replace(plan, train=dataclasses.replace(plan.train, seed=4))
    assert plan_hash(reseeded) != plan_hash(plan)
    assert len(plan_hash(plan)) == 64


def test_compile_plan():
    compiled = compile_plan(parse(SYNTH_SPEC))
    assert [(term.kind, term.covariate) for term in compiled.terms] == [
        ("prediction", None),
        ("structure", "g"),
        ("orthogonality", "g"),
    ]
    pairing = compiled.pairing("g")
    assert (pairing.source, pairing.policy, pairing.include_d0) == (BATCH, "matched", False)


def test_compiled_terms_are_the_trained_terms():
    plan = parse(SYNTH_SPEC)
    samples, _ = commands.prepare_data(plan)
    result = train(samples, plan.covariates, plan.train, plan.latent)
    compiled = [term.name for term in compile_plan(plan).terms]
    assert compiled == ["prediction", "structure[g]", "orthogonality[g]"]
    assert [term.name for term in result.log[0].terms] == compiled


@mark.parametrize(
    "name, covariate, source",
    (
        ("mnist_successor.cat", "digit", EXTERNAL),
        ("mnist_transforms.cat", "rotate", EXTERNAL),
        ("german_mmd.cat", "foreigner", GROUPS),
        ("german_inv.cat", "foreigner", BATCH),
    ),
)
def test_pairing_sources(name, covariate, source):
    assert compile_plan(parse(bundled(name))).pairing(covariate).source == source


def test_compile_counts_terms():
    covariates = "".join(
        f'covariate {{ name = "c{k}"; column = "label"; kind = ordinal; '
        f"constraint = equivariance; morphism = orthogonal(3); }}\n"
        for k in range(5)
    )
    plan = parse(MINIMAL_SPEC + covariates)
    assert len(compile_plan(plan).terms) == 1 + 5 + 5


def test_tokenize():
    tokens, errors = tokenize('a = "x\\ty"; # note\nb = -1.5e2')
    assert errors == []
    assert [(t.kind, t.value) for t in tokens] == [
        ("ident", "a"),
        ("punct", "="),
        ("string", "x\ty"),
        ("punct", ";"),
        ("ident", "b"),
        ("punct", "="),
        ("number", -150.0),
        ("eof", None),
    ]
    assert (tokens[4].line, tokens[4].column) == (2, 1)


def test_parse_blocks_recovers():
    blocks, errors = parse_blocks("a { x = ; y = 1; }\nb { z = f(1, g(2)); }")
    assert [block.name for block in blocks] == ["a", "b"]
    assert [entry.key for entry in blocks[0].entries] == ["y"]
    assert len(errors) == 1 and isinstance(errors[0], ParseError)


@mark.parametrize("seed", range(40))
def test_mutated_specs_never_crash(seed):
    rng = random.Random(seed)
    text = list(SYNTH_SPEC)
    alphabet = 'abz019_.-+e{}()=;,"#\\ \n\t\x00\xe9'
    for _ in range(rng.randint(1, 12)):
        position = rng.randrange(len(text))
        action = rng.choice(("insert", "delete", "replace"))
        if action == "insert":
            text.insert(position, rng.choice(alphabet))
        elif action == "delete" and len(text) > 1:
            del text[position]
        else:
            text[position] = rng.choice(alphabet)
    result = parse("".join(text))
    if isinstance(result, list):
        assert result and all(isinstance(error, ParseError) for error in result)
        assert result == sorted(result, key=lambda e: (e.line, e.column, e.message))
    else:
        assert isinstance(result, ExperimentPlan)
    encoded = "".join(text).encode("utf-8", "surrogatepass")
    assert isinstance(parse(encoded), (list, ExperimentPlan))
