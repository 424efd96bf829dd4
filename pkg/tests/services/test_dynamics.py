import math

import numpy as np
import pytest

from src.errors import DomainViolation, NewtonDivergence, SingularFamily
from src.services.dynamics import (
    ChartMap,
    FlowResult,
    ParamFamily,
    VectorFieldSection,
    complete_slicing_check,
    family_drift,
    flow_midpoint,
    flow_rk4,
    presymplectic_slicing_residual,
    slicing_residual,
)
from src.services.exprcore import ScalarField
from src.services.hamiltonian_hj import (
    HamiltonianSystem,
    associated_vector_field,
    hamiltonian_vector_field,
)


def _rotation():
    return VectorFieldSection.from_expressions(["p1", "0 - q1"], ["q1", "p1"])


def _oscillator_family(texts=("sqrt(2*l - q1^2)",)):
    names = ["q1", "l"]
    return ParamFamily(["q1"], ["l"], [ScalarField.compile(t, names) for t in texts], section=True)


def test_rk4_half_turn():
    flow = flow_rk4(_rotation(), [1.0, 0.0], math.pi, 1e-3)
    assert flow.times[-1] == math.pi
    assert np.allclose(flow.final, [-1.0, 0.0], atol=1e-9)
    assert flow.max_step_error < 1e-12


def test_step_is_shrunk_to_land_on_t_end():
    flow = flow_rk4(_rotation(), [1.0, 0.0], 1.0, 0.3, estimate_error=False)
    assert len(flow.times) == 5
    assert np.allclose(np.diff(flow.times), 0.25)
    assert math.isnan(flow.max_step_error)


def test_non_positive_step_rejected():
    with pytest.raises(ValueError):
        flow_rk4(_rotation(), [1.0, 0.0], 1.0, 0.0)


def test_midpoint_needs_canonical_field():
    with pytest.raises(ValueError):
        flow_midpoint(_rotation(), [1.0, 0.0], 1.0, 0.1)


def test_midpoint_conserves_quadratic_energy(oscillator):
    Z = hamiltonian_vector_field(oscillator)
    flow = flow_midpoint(Z, [1.0, 0.5], 10.0, 0.1)
    energies = [oscillator.energy(z) for z in flow.states]
    assert max(energies) - min(energies) < 1e-10


def test_domain_violation_carries_partial_flow():
    Z = VectorFieldSection.from_expressions(["1", "ln(1 - q1)"], ["q1", "q2"])
    with pytest.raises(DomainViolation) as excinfo:
        flow_rk4(Z, [0.0, 0.0], 2.0, 0.25)
    assert excinfo.value.time == 0.75
    assert excinfo.value.partial.times.tolist() == [0.0, 0.25, 0.5, 0.75]


def test_flow_result_rejects_unordered_times():
    with pytest.raises(ValueError):
        FlowResult(np.array([0.0, 0.0]), np.zeros((2, 1)), np.zeros(1))


def test_chart_map_needs_a_definition():
    with pytest.raises(ValueError):
        ChartMap(["q1"], 1)


def test_chart_map_jacobian():
    f = ChartMap.from_expressions(["q1*q2", "q1 + 2*q2"], ["q1", "q2"])
    assert f([2.0, 3.0]).tolist() == [6.0, 8.0]
    assert f.jacobian([2.0, 3.0]).tolist() == [[3.0, 2.0], [1.0, 2.0]]


def test_energy_level_is_a_slicing(oscillator, oscillator_level, line_samples):
    X = associated_vector_field(oscillator, oscillator_level)
    Z = hamiltonian_vector_field(oscillator)
    alpha = oscillator_level.embedding()
    assert slicing_residual(alpha, X, Z, line_samples).passed
    report = presymplectic_slicing_residual(alpha, X, oscillator.H, line_samples)
    assert report.passed


def test_wrong_field_is_not_a_slicing(oscillator, oscillator_level, line_samples):
    X = VectorFieldSection.from_expressions(["1"], ["q1"])
    Z = hamiltonian_vector_field(oscillator)
    report = slicing_residual(oscillator_level.embedding(), X, Z, line_samples)
    assert report.status == "fail"


def test_slicing_dimension_mismatch(oscillator, oscillator_level):
    Z = hamiltonian_vector_field(oscillator)
    with pytest.raises(ValueError):
        slicing_residual(oscillator_level.embedding(), Z, Z, [[0.0, 0.0]])


def test_complete_slicing(oscillator):
    grid = [[q, lam] for q in np.linspace(-0.9, 0.9, 7) for lam in (1.0, 2.0)]
    Z = hamiltonian_vector_field(oscillator)
    report = complete_slicing_check(_oscillator_family(), Z, grid)
    assert report.status == "pass"
    assert report.min_abs_det > 0.4
    assert report.notes


def test_complete_slicing_singular_family(oscillator):
    fam = _oscillator_family(["q1"])
    with pytest.raises(SingularFamily) as excinfo:
        complete_slicing_check(fam, hamiltonian_vector_field(oscillator), [[0.5, 1.0]])
    assert excinfo.value.node == [0.5, 1.0]


def test_family_invert_recovers_parameter():
    fam = _oscillator_family()
    lam = fam.invert(np.array([0.0]), np.array([2.0]), np.array([1.0]))
    assert lam[0] == pytest.approx(2.0, abs=1e-10)
    assert fam.slice([2.0])([0.0]).tolist() == [0.0, 2.0]


def test_family_drift_keeps_going_after_divergent_node():
    def flow(z0):
        if z0[0] > 0:
            raise NewtonDivergence(3, 1.0)
        return flow_rk4(_rotation(), z0, 0.5, 1e-2)

    result = family_drift(_oscillator_family(), [[-0.5, 1.0], [0.5, 1.0]], flow)
    assert result.drifts[0] < 1e-8
    assert result.drifts[1] is None
    assert "node 1: implicit step 3 diverged" in result.notes


def _pendulum():
    return VectorFieldSection.from_expressions(["p1", "0 - sin(q1)"], ["q1", "p1"])


def test_flow_composes_over_consecutive_intervals():
    whole = flow_rk4(_pendulum(), [0.3, 1.1], 2.0, 0.05)
    first = flow_rk4(_pendulum(), [0.3, 1.1], 1.0, 0.05)
    second = flow_rk4(_pendulum(), first.final, 2.0, 0.05, t0=1.0)
    estimate = np.nansum(first.step_errors) + np.nansum(second.step_errors)
    assert estimate > 0
    assert np.max(np.abs(whole.final - second.final)) <= 10 * estimate


def test_zero_field_keeps_the_start_fixed():
    start = [0.7, -1.3]
    Z = VectorFieldSection.from_expressions(["0", "0"], ["q1", "p1"])
    flow = flow_rk4(Z, start, 3.0, 0.1)
    assert all(state.tolist() == start for state in flow.states)

    still = hamiltonian_vector_field(HamiltonianSystem.from_text("0", 1))
    flow = flow_midpoint(still, start, 3.0, 0.1)
    assert all(state.tolist() == start for state in flow.states)


def test_unit_field_is_integrated_exactly():
    Z = VectorFieldSection.from_expressions(["1"], ["q1"])
    flow = flow_rk4(Z, [0.0], 1.0, 0.25)
    assert flow.final[0] == 1.0


def test_midpoint_oscillator_energy_over_long_horizon(oscillator):
    Z = hamiltonian_vector_field(oscillator)
    flow = flow_midpoint(Z, [1.0, 0.0], 100.0, 0.05, estimate_error=False)
    assert len(flow.times) == 2001
    assert abs(oscillator.energy(flow.final) - oscillator.energy(flow.states[0])) <= 1e-6


def test_midpoint_free_particle_is_exact(free_particle):
    Z = hamiltonian_vector_field(free_particle)
    flow = flow_midpoint(Z, [0.0, 1.0], 3.0, 0.1)
    assert flow.final[0] == pytest.approx(3.0, abs=1e-10)
    assert flow.final[1] == pytest.approx(1.0, abs=1e-12)


def _lifted_and_direct(alpha, X, Z, q0, T, dt):
    base = flow_rk4(X, [q0], T, dt, estimate_error=False)
    direct = flow_rk4(Z, alpha([q0]), T, dt, estimate_error=False)
    lifted = np.array([alpha(q) for q in base.states])
    return float(np.max(np.abs(lifted - direct.states)))


def test_slicing_lifts_base_curves_to_integral_curves(oscillator, oscillator_level):
    X = associated_vector_field(oscillator, oscillator_level)
    Z = hamiltonian_vector_field(oscillator)
    alpha = oscillator_level.embedding()
    rng = np.random.default_rng(11)
    for q0 in rng.uniform(-0.9, -0.2, size=10):
        assert _lifted_and_direct(alpha, X, Z, q0, 0.5, 1e-3) <= 1e-6


def test_straight_line_slicing_over_long_horizon(free_particle):
    alpha = ChartMap.from_expressions(["q1", "0.7"], ["q1"])
    X = VectorFieldSection.from_expressions(["0.7"], ["q1"])
    Z = hamiltonian_vector_field(free_particle)
    assert slicing_residual(alpha, X, Z, [[q] for q in np.linspace(-2, 2, 100)]).max_norm == 0.0
    rng = np.random.default_rng(12)
    for q0 in rng.uniform(-2, 2, size=10):
        assert _lifted_and_direct(alpha, X, Z, q0, 5.0, 1e-2) <= 1e-6


def test_diagonal_map_is_not_a_slicing_of_the_free_particle(free_particle):
    alpha = ChartMap.from_expressions(["q1", "q1"], ["q1"])
    X = VectorFieldSection.from_expressions(["1"], ["q1"])
    Z = hamiltonian_vector_field(free_particle)
    report = slicing_residual(alpha, X, Z, [[q] for q in np.linspace(2.0, 3.0, 11)])
    assert report.status == "fail"
    assert report.max_norm > 0.5
    # r(q) = (1 - q, 1)
    assert report.max_norm == pytest.approx(2.0)
    assert report.argmax_sample == [3.0]
