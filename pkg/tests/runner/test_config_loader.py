import numpy as np
import pytest

from contactflow.analysis.grids import make_grid
from contactflow.core.errors import ConfigError
from contactflow.runner.config_loader import load_config, parse_config
from contactflow.runner.expressions import ExpressionContext, referenced_names, resolve_system
from contactflow.schemas.experiment import HamiltonianSpec

CONFIG = """
[run]
seed = 3

[chart]
kind = "torus3"

[hamiltonians.A]
builtin = "constant"
params = { c = 0.25 }

[hamiltonians.B]
builtin = "zonal"
params = { g0 = 0.1, cos = [0.05] }

[[experiments]]
name = "shifted"
suite = "metrics"
expression = "inv(A) * B"

[[experiments]]
name = "certificate"
suite = "nonsmooth"
params = { ks = [1, 2] }
"""


@pytest.fixture
def context(torus):
    hamiltonians = {
        "A": HamiltonianSpec(builtin="constant", params={"c": 0.25}),
        "B": HamiltonianSpec(builtin="constant", params={"c": -0.25}),
    }
    return ExpressionContext(torus, hamiltonians, make_grid(torus, 4))


# ==========================================
# Loading
# ==========================================


def test_parse_config():
    config = parse_config(CONFIG)
    assert config.run.seed == 3
    assert config.chart.kind == "torus3"
    assert set(config.hamiltonians) == {"A", "B"}
    assert [e.suite for e in config.experiments] == ["metrics", "nonsmooth"]
    assert config.output.formats == ["csv", "json"]
    assert config.grid.sample_points == 1000


def test_malformed_toml_reports_the_position():
    with pytest.raises(ConfigError) as excinfo:
        parse_config("[run]\nseed = = 1\n")
    assert excinfo.value.line == 2
    assert excinfo.value.column is not None


@pytest.mark.parametrize(
    "text",
    [
        '[[experiments]]\nname = "x"\nsuite = "verify"\n',
        '[[experiments]]\nname = "x"\nsuite = "nowhere"\n',
        '[[experiments]]\nname = "x"\nsuite = "nonsmooth"\n[[experiments]]\nname = "x"\nsuite = "nonsmooth"\n',
        '[chart]\nkind = "torus3"\nn = 2\n',
        '[run]\nworkers = 0\n',
    ],
)
def test_schema_violations(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_unknown_hamiltonian_names_are_rejected():
    text = '[[experiments]]\nname = "x"\nsuite = "verify"\nexpression = "A * C"\n'
    with pytest.raises(ConfigError, match="C"):
        parse_config(text)


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "experiments.toml"
    path.write_text(CONFIG, encoding="utf-8")
    assert len(load_config(path).experiments) == 2
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


# ==========================================
# Expressions
# ==========================================


@pytest.mark.parametrize(
    "expression, names",
    [
        ("A", {"A"}),
        ("conj(inv(A) * B, scale(1.5))", {"A", "B"}),
        ("reparam(A, constspeed)", {"A"}),
        ("diff(A, flatten(B, 0.1))", {"A", "B"}),
        ("push(A, timemap(B, 0.5))", {"A", "B"}),
    ],
)
def test_referenced_names(expression, names):
    assert referenced_names(expression) == names


def test_resolve_composes_named_systems(context, torus_points, torus):
    system = resolve_system("B * A", context)
    gap = torus.point_distance(system.time_one(torus_points), torus_points)
    np.testing.assert_allclose(gap, 0.0, atol=1e-12)
    assert context.system("A") is context.system("A")


def test_resolve_applies_reparameterizations(context, torus_points):
    fast = resolve_system("rescale(A, 0.0, 0.5)", context)
    assert fast.interval == (0.0, 0.5)
    looped = resolve_system("reparam(A, round_trip)", context)
    np.testing.assert_allclose(looped.time_one(torus_points), torus_points, atol=1e-12)


@pytest.mark.parametrize("expression", ["A +", "C", "spin(A)", "inv(A, B)", "conj(A, twist(1))", "round_trip"])
def test_bad_expressions(context, expression):
    with pytest.raises(ConfigError):
        resolve_system(expression, context)


def test_expression_errors_carry_the_column(context):
    with pytest.raises(ConfigError) as excinfo:
        resolve_system("inv(spin(A))", context)
    assert excinfo.value.column == 5
