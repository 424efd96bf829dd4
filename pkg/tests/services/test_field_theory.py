import math

import numpy as np
import pytest

from src.errors import SingularLegendre, UnsupportedDimension
from src.services.exprcore import ScalarField
from src.services.field_theory import (
    PARAMETER_COUNT_NOTE,
    FieldChart,
    FieldHJCandidate,
    FieldTheory,
    ddw_evolve,
    field_aliases,
    field_hamiltonian_value,
    field_legendre,
    field_legendre_inverse,
    ham_field_hj_residual,
    lag_field_hj_residual,
    legendre_consistency,
    mechanical_reduction,
)
from src.services.hamiltonian_hj import HamiltonianSystem

WAVE_GRID = [[t, x, y] for t in (0.0, 0.5) for x in (-1.0, 1.0) for y in (-0.5, 0.0, 2.0)]


@pytest.fixture
def wave():
    return FieldTheory.from_text(2, 1, L="(yt^2 - yx^2)/2", H="(pt^2 - px^2)/2")


@pytest.fixture
def plane_wave(wave):
    return FieldHJCandidate.from_expressions(wave, ["a*y", "a*y"], ["a", "-a"], {"a": 1.0})


def test_unsupported_dimension():
    with pytest.raises(UnsupportedDimension):
        FieldChart(3, 1)


def test_aliases():
    aliases = field_aliases(2, 1)
    assert aliases["t"] == "x1"
    assert aliases["yx"] == "y1_2"
    assert aliases["pt"] == "p1_1"
    assert "x" not in field_aliases(1, 1)


def test_chart_names(wave):
    assert wave.lagrangian_vars == ("x1", "x2", "y1", "y1_1", "y1_2")
    assert wave.hamiltonian_vars == ("x1", "x2", "y1", "p1_1", "p1_2")


def test_theory_needs_l_or_h():
    with pytest.raises(ValueError):
        FieldTheory(2, 1)


def test_field_legendre(wave):
    assert field_legendre(wave, [0.0, 0.0, 0.0, 2.0, 3.0]).tolist() == [2.0, -3.0]
    v = field_legendre_inverse(wave, [0.0, 0.0, 0.0, 2.0, -3.0])
    assert np.allclose(v, [2.0, 3.0])


def test_degenerate_field_lagrangian():
    theory = FieldTheory.from_text(2, 1, L="yt^2/2 + y*yx")
    with pytest.raises(SingularLegendre):
        field_legendre(theory, [0.0, 0.0, 1.0, 1.0, 1.0])


def test_hamiltonian_from_lagrangian():
    theory = FieldTheory.from_text(2, 1, L="(yt^2 - yx^2)/2")
    assert field_hamiltonian_value(theory, [0.0, 0.0, 0.0, 2.0, 1.0]) == pytest.approx(1.5)


def test_candidate_component_counts(wave):
    with pytest.raises(ValueError):
        FieldHJCandidate.from_expressions(wave, ["y"])


def test_plane_wave_lagrangian_residual(wave, plane_wave):
    assert lag_field_hj_residual(wave, plane_wave, WAVE_GRID).passed


def test_lagrangian_residual_needs_psi(wave):
    cand = FieldHJCandidate.from_expressions(wave, ["y", "y"])
    with pytest.raises(ValueError):
        lag_field_hj_residual(wave, cand, WAVE_GRID)


def test_plane_wave_hamiltonian_residual(wave, plane_wave):
    report = ham_field_hj_residual(wave, plane_wave, WAVE_GRID)
    assert report.status == "pass"
    assert set(report.defects) == {"hj", "fiber_gradient"}
    assert set(report.details["section"]) == {"p1_1", "p1_2"}
    assert report.notes == [PARAMETER_COUNT_NOTE]


def test_pointwise_hamiltonian_residual(plane_wave):
    theory = FieldTheory.from_text(2, 1, L="(yt^2 - yx^2)/2")
    cand = FieldHJCandidate(theory, plane_wave.W)
    report = ham_field_hj_residual(theory, cand, WAVE_GRID)
    assert report.status == "pass"
    assert "fiber_gradient" not in report.defects


def test_non_solution_fails(wave):
    cand = FieldHJCandidate.from_expressions(wave, ["y^2/2", "0"])
    report = ham_field_hj_residual(wave, cand, WAVE_GRID)
    assert report.status == "fail"
    assert report["hj"].max_norm == pytest.approx(2.0)


def test_legendre_consistency(wave, plane_wave):
    report = legendre_consistency(wave, plane_wave, WAVE_GRID)
    assert report.status == "pass"
    assert report.defect("gap") == pytest.approx(0.0, abs=1e-12)


def test_mechanical_reduction(free_particle):
    S = ScalarField.compile("2*q1", ["q1"])
    theory, cand = mechanical_reduction(free_particle, S, 2.0)
    assert theory.m == 1
    report = ham_field_hj_residual(theory, cand, [[0.0, 0.3], [1.0, -2.0]])
    assert report.status == "pass"
    assert report.notes == []


def test_mechanical_reduction_wrong_energy():
    sys = HamiltonianSystem.from_text("p1^2/2", 1)
    S = ScalarField.compile("2*q1", ["q1"])
    theory, cand = mechanical_reduction(sys, S, 1.0)
    assert ham_field_hj_residual(theory, cand, [[0.0, 0.3]])["hj"].max_norm == pytest.approx(1.0)


def _standing_wave(wave, size=64, T=0.5, dt=1e-2):
    x = 2 * math.pi * np.arange(size) / size
    return x, ddw_evolve(wave, np.sin(x), np.zeros(size), T, dt)


def test_ddw_evolution_tracks_standing_wave(wave):
    x, evolution = _standing_wave(wave)
    assert evolution.times[-1] == pytest.approx(0.5)
    exact = np.sin(x) * math.cos(0.5)
    assert np.max(np.abs(evolution.y[-1, 0] - exact)) < 5e-3
    assert evolution.energy_drift < 1e-6
    assert evolution.max_constraint_drift < 1e-10
    assert evolution.warnings == []


def test_ddw_step_warning(wave):
    _, evolution = _standing_wave(wave, size=256, T=0.05, dt=0.05)
    assert evolution.warnings


def test_ddw_needs_two_dimensional_hamiltonian():
    theory = FieldTheory.from_text(1, 1, H="p1_1^2/2")
    with pytest.raises(UnsupportedDimension):
        ddw_evolve(theory, np.zeros(8), np.zeros(8), 1.0, 0.1)


@pytest.mark.parametrize("with_px", [False, True])
def test_ddw_degenerate_momentum_block(with_px):
    theory = FieldTheory.from_text(2, 1, H="pt^2/2 + y^2/2")
    x = 2 * math.pi * np.arange(16) / 16
    px0 = np.cos(x) if with_px else None
    with pytest.raises(SingularLegendre):
        ddw_evolve(theory, np.sin(x), np.zeros(16), 0.1, 0.01, px0=px0)


def test_ddw_spatial_convergence_is_second_order(wave):
    errors = []
    for size in (32, 64, 128):
        x, evolution = _standing_wave(wave, size=size)
        errors.append(np.max(np.abs(evolution.y[-1, 0] - np.sin(x) * math.cos(0.5))))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(np.abs(orders - 2.0) <= 0.6)
