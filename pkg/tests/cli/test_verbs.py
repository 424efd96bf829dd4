import numpy as np
import pytest

from src.cli.loader import load_config
from src.cli.verbs import RunOptions, VerbContext, VerbResult
from src.errors import ConfigError
from src.models.reports import DefectSummary
from src.services.field_theory import field_aliases
from src.utils.helpers import summarize

CONFIG = """\
[system]
type = "hamiltonian"
H = "p1^2/2"

[solution]
alpha = ["c*q1"]
params = ["c", "d"]
values = { c = 2.0 }

[check]
tolerance = 1e-6
seed = 5
grid = { q1 = [0.0, 1.0, 3], t = [0.0, 2.0, 2] }
"""


@pytest.fixture
def context(write_config):
    def build(**options):
        return VerbContext(load_config(write_config(CONFIG)), RunOptions(**options))

    return build


def test_options_override_config(context):
    ctx = context()
    assert (ctx.tolerance, ctx.seed, ctx.samples) == (1e-6, 5, None)
    ctx = context(tolerance=1e-3, seed=9, samples=4)
    assert (ctx.tolerance, ctx.seed, ctx.samples) == (1e-3, 9, 4)


def test_compile_substitutes_values(context):
    field = context().compile("solution.alpha.0", "c*q1", ["q1"])
    assert field.vars == ("q1",)
    assert field.eval([1.5]) == 3.0


def test_compile_keeps_params(context):
    field = context().compile("solution.alpha.0", "c*q1 + d", ["q1"], keep_params=True)
    assert field.vars == ("q1", "c", "d")


def test_compile_needs_values_for_used_params(context):
    with pytest.raises(ConfigError) as excinfo:
        context().compile("solution.alpha.0", "d*q1", ["q1"])
    assert "'d'" in excinfo.value.message
    assert excinfo.value.line == 8


def test_points_grid_and_aliases(context):
    ctx = context()
    assert ctx.points(["q1"]).tolist() == [[0.0], [0.5], [1.0]]
    nodes = ctx.points(["x1"], field_aliases(2, 1))
    assert nodes.tolist() == [[0.0], [2.0]]


def test_points_random_samples_are_seeded(context):
    first = context(samples=6).points(["q1"])
    assert first.shape == (6, 1)
    assert np.array_equal(first, context(samples=6).points(["q1"]))
    assert np.all((first >= 0.0) & (first <= 1.0))


def test_points_missing_axis(context):
    with pytest.raises(ConfigError):
        context().points(["p1"])


def test_verb_result_collects_summaries():
    report = summarize("dH", [[0.0]], [0.5], 1e-3)
    result = VerbResult()
    result.add_summary(
        DefectSummary(op="demo", defects={"dH": report}, details={"k": 1}, notes=["hi"]),
        prefix="demo.",
    )
    assert result.checks[0].name == "demo.dH"
    assert result.checks[0].status == "fail"
    assert result.details == {"demo": {"k": 1}, "demo.notes": ["hi"]}
