import numpy as np
import pytest

from src.errors import ConfigError, DomainViolation, ExpressionSyntaxError, NewtonDivergence
from src.utils.helpers import (
    build_grid,
    config_digest,
    format_error_report,
    map_samples,
    random_samples,
    split_columns,
    summarize,
)


def test_grid_first_axis_slowest():
    grid = build_grid({"q1": (0.0, 1.0, 2), "l": (5.0, 7.0, 3)})
    assert grid.tolist() == [
        [0.0, 5.0],
        [0.0, 6.0],
        [0.0, 7.0],
        [1.0, 5.0],
        [1.0, 6.0],
        [1.0, 7.0],
    ]


def test_random_samples_reproducible():
    axes = {"q1": (-1.0, 1.0, 0), "p1": (2.0, 3.0, 0)}
    first = random_samples(axes, 5, seed=11)
    assert np.array_equal(first, random_samples(axes, 5, seed=11))
    assert not np.array_equal(first, random_samples(axes, 5, seed=12))
    assert np.all(first[:, 1] >= 2.0)


def test_summarize_pass_and_fail():
    passing = summarize("r", [[0.0], [1.0]], [1e-12, 2e-12], 1e-8)
    assert passing.status == "pass"
    assert passing.argmax_sample == [1.0]
    failing = summarize("r", [[0.0], [1.0]], [0.5, None], 1e-8)
    assert failing.status == "fail"
    assert failing.n_skipped == 1


def test_summarize_inconclusive_when_too_many_skipped():
    report = summarize("r", [[float(i)] for i in range(5)], [0.0, None, None, 0.0, 0.0], 1e-8)
    assert report.status == "inconclusive"
    assert report.notes == ["2 of 5 samples skipped"]
    assert summarize("r", [[0.0]], [None], 1e-8).max_norm is None


def test_summarize_treats_non_finite_as_skipped():
    report = summarize("r", [[0.0], [1.0]], [float("nan"), 0.0], 1e-8, keep_samples=True)
    assert report.per_sample == [None, 0.0]


def test_map_samples_returns_caught_errors():
    def fn(x):
        if x[0] < 0:
            raise DomainViolation(0, float(x[0]))
        return float(x[0])

    results = map_samples(fn, [np.array([1.0]), np.array([-1.0])])
    assert results[0] == 1.0
    assert isinstance(results[1], DomainViolation)


def test_map_samples_lets_other_errors_through():
    def fn(x):
        raise NewtonDivergence(0, 1.0)

    with pytest.raises(NewtonDivergence):
        map_samples(fn, [np.zeros(1)])


def test_map_samples_in_threads(mocker):
    mocker.patch("src.utils.helpers.settings.N_JOBS", 2)
    samples = [np.array([float(i)]) for i in range(6)]
    assert map_samples(lambda x: 2 * x[0], samples) == [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]


def test_split_columns():
    columns = split_columns([(1.0, 2.0), DomainViolation(0, -1.0)], 2)
    assert columns == [[1.0, None], [2.0, None]]


def test_config_digest_depends_on_overrides():
    base = config_digest(b"[system]", {})
    assert base == config_digest(b"[system]", {})
    assert base != config_digest(b"[system]", {"tolerance": 1e-3})
    assert config_digest(b"x", {"a": 1, "b": 2}) == config_digest(b"x", {"b": 2, "a": 1})


def test_format_error_report_for_config_error():
    try:
        try:
            raise ExpressionSyntaxError(7, ["')'"])
        except ExpressionSyntaxError as cause:
            raise ConfigError("run.toml", 3, "system.H: bad") from cause
    except ConfigError as exc:
        info = format_error_report(exc)
    assert info.type == "ExpressionSyntaxError"
    assert (info.path, info.line, info.position) == ("run.toml", 3, 7)
    assert info.message == "system.H: bad"


def test_format_error_report_for_solver_error():
    info = format_error_report(NewtonDivergence("step 3", 1e-2))
    assert info.type == "NewtonDivergence"
    assert info.position is None
