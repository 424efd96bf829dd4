import pytest

from src.cli.loader import find_key_line, load_config
from src.errors import ConfigError, ExpressionSyntaxError

CONFIG = """\
# comment
[system]
type = "hamiltonian"
H = "p1^2/2"

[solution]
alpha = ["1"]

[check]
tolerance = 1e-6
grid = { q1 = [0.0, 1.0, 3] }
"""


def test_load_bundled_config(configs_dir):
    source = load_config(str(configs_dir / "oscillator.toml"))
    assert source.config.system.type == "hamiltonian"
    assert source.config.check.grid["l"] == (1.0, 2.0, 5)
    assert source.raw.startswith(b"#")


def test_defaults(write_config):
    config = load_config(write_config(CONFIG)).config
    assert config.system.n == 1
    assert config.check.integrator == "midpoint"
    assert config.check.seed == 0
    assert config.solution.params == []


def test_find_key_line():
    assert find_key_line(CONFIG, "system.H") == 4
    assert find_key_line(CONFIG, "check.tolerance") == 10
    assert find_key_line(CONFIG, "solution.alpha.0") == 7
    assert find_key_line(CONFIG, "check.missing") is None


def test_schema_violation_points_at_line(write_config):
    text = CONFIG.replace("tolerance = 1e-6", "tolerance = -1.0")
    with pytest.raises(ConfigError) as excinfo:
        load_config(write_config(text))
    assert excinfo.value.line == 10
    assert excinfo.value.message.startswith("check.tolerance")


def test_unknown_system_type(write_config):
    with pytest.raises(ConfigError) as excinfo:
        load_config(write_config(CONFIG.replace('"hamiltonian"', '"quantum"')))
    assert excinfo.value.line == 3


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        load_config(str(tmp_path / "nope.toml"))
    assert excinfo.value.line is None


def test_expression_errors_become_config_errors(write_config):
    source = load_config(write_config(CONFIG))
    with pytest.raises(ConfigError) as excinfo:
        with source.expressions("system.H"):
            raise ExpressionSyntaxError(4, ["operand"])
    assert excinfo.value.line == 4
    assert isinstance(excinfo.value.__cause__, ExpressionSyntaxError)
