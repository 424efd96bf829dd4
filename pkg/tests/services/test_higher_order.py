import numpy as np
import pytest

from src.errors import SingularLegendre, UnsupportedOrder
from src.services.dynamics import ParamFamily
from src.services.exprcore import ScalarField
from src.services.higher_order import (
    PARAMETER_COUNT_NOTE,
    HigherLagrangian,
    JetChart,
    JetSection,
    d_T,
    higher_complete_check,
    higher_el_flow,
    higher_energy,
    higher_hj_residuals,
    ostrogradsky_momenta,
    total_derivative,
)

STATE = [0.1, 0.2, 0.3, 0.4]
BASE_SAMPLES = [[0.5, 0.5], [1.0, -1.0], [-0.3, 2.0]]


@pytest.fixture
def acceleration():
    return HigherLagrangian.from_text("q2_1^2/2", 1, 2)


def test_jet_chart_names():
    assert JetChart(2, 1).names == ["q0_1", "q0_2", "q1_1", "q1_2"]
    assert JetChart(2, 1).dim == 4


def test_total_derivative_of_product():
    f = ScalarField.compile("q0_1*q1_1", JetChart(1, 1).names)
    g = d_T(f, 1)
    assert g.vars == ("q0_1", "q1_1", "q2_1")
    assert g.eval([2.0, 3.0, 5.0]) == 19.0
    assert total_derivative(f, 1, 2).vars == tuple(JetChart(1, 3).names)


def test_total_derivative_needs_jet_chart():
    with pytest.raises(ValueError):
        d_T(ScalarField.compile("x", ["x"]), 1)


def test_unsupported_order():
    with pytest.raises(UnsupportedOrder):
        HigherLagrangian.from_text("q4_1^2", 1, 4)


def test_ostrogradsky_momenta(acceleration):
    momenta = ostrogradsky_momenta(acceleration)
    assert momenta[0][0].eval(STATE) == pytest.approx(-0.4)
    assert momenta[1][0].eval(STATE) == pytest.approx(0.3)


def test_energy(acceleration):
    assert higher_energy(acceleration).eval(STATE) == pytest.approx(-0.08 + 0.045)


def test_euler_lagrange_flow_is_cubic(acceleration):
    flow = higher_el_flow(acceleration, [0.0, 0.0, 0.0, 1.0], T=1.0, dt=1e-2)
    assert flow.final[0] == pytest.approx(1 / 6, abs=1e-12)
    assert flow.final[3] == pytest.approx(1.0)


def test_flow_needs_full_jet(acceleration):
    with pytest.raises(ValueError):
        higher_el_flow(acceleration, [0.0, 0.0], T=1.0, dt=1e-2)


def test_degenerate_higher_lagrangian():
    L = HigherLagrangian.from_text("q1_1^2/2", 1, 2)
    with pytest.raises(SingularLegendre):
        L.highest_derivative(STATE)


def test_constant_acceleration_section(acceleration):
    s = JetSection.from_expressions(["1", "0"], 1, 2)
    S = ScalarField.compile("q1_1", JetChart(1, 1).names)
    report = higher_hj_residuals(acceleration, s, BASE_SAMPLES, S=S)
    assert report.status == "pass"
    assert report.pde_defect == 0.0


def test_non_invariant_section(acceleration):
    s = JetSection.from_expressions(["q0_1", "0"], 1, 2)
    report = higher_hj_residuals(acceleration, s, BASE_SAMPLES)
    assert report.status == "fail"
    assert report.tangency_defect == pytest.approx(2.0)
    assert report.pde_defect is None


def test_section_component_count():
    with pytest.raises(ValueError):
        JetSection.from_expressions(["1"], 1, 2)


def test_complete_family(acceleration):
    names = JetChart(1, 1).names + ["a", "b"]
    fam = ParamFamily(
        JetChart(1, 1).names,
        ["a", "b"],
        [ScalarField.compile(t, names) for t in ("sqrt(2*b*q1_1 + a)", "b")],
        section=True,
    )
    grid = [
        [q0, q1, a, b]
        for q0 in (0.0, 1.0)
        for q1 in (0.5, 1.0)
        for a in (1.0, 2.0)
        for b in (0.5, 1.0)
    ]
    report = higher_complete_check(acceleration, fam, grid)
    assert report.status == "pass"
    assert report.min_abs_det == pytest.approx(0.25)
    assert report.notes == [PARAMETER_COUNT_NOTE]


def test_complete_family_needs_kn_parameters(acceleration):
    names = JetChart(1, 1).names + ["a"]
    fam = ParamFamily(
        JetChart(1, 1).names,
        ["a"],
        [ScalarField.compile(t, names) for t in ("a", "0")],
        section=True,
    )
    with pytest.raises(ValueError):
        higher_complete_check(acceleration, fam, [[0.0, 0.0, 1.0]])


def _jet_polynomial(rng):
    terms = []
    for _ in range(rng.integers(1, 4)):
        powers = rng.integers(0, 3, size=2)
        factors = [f"{name}^{k}" for name, k in zip(("q0_1", "q1_1"), powers) if k]
        coefficient = f"{rng.uniform(0.5, 2.0):.3f}"
        terms.append("*".join([coefficient] + factors))
    return " + ".join(terms)


def test_total_derivative_obeys_leibniz_rule():
    rng = np.random.default_rng(21)
    names = JetChart(1, 1).names
    for _ in range(50):
        f_text, g_text = _jet_polynomial(rng), _jet_polynomial(rng)
        f = ScalarField.compile(f_text, names)
        g = ScalarField.compile(g_text, names)
        product = d_T(ScalarField.compile(f"({f_text})*({g_text})", names), 1)
        x = rng.uniform(-1.0, 1.0, size=3)
        expected = d_T(f, 1).eval(x) * g.eval(x[:2]) + f.eval(x[:2]) * d_T(g, 1).eval(x)
        assert product.eval(x) == pytest.approx(expected, rel=1e-10, abs=1e-10)


def test_acceleration_momenta_and_energy_at_random_points(acceleration):
    momenta = ostrogradsky_momenta(acceleration)
    energy = higher_energy(acceleration)
    for q0, q1, q2, q3 in np.random.default_rng(22).uniform(-2.0, 2.0, size=(100, 4)):
        state = [q0, q1, q2, q3]
        assert momenta[0][0].eval(state) == pytest.approx(-q3, abs=1e-12)
        assert momenta[1][0].eval(state) == pytest.approx(q2, abs=1e-12)
        assert energy.eval(state) == pytest.approx(-q1 * q3 + q2**2 / 2, abs=1e-12)


@pytest.fixture
def two_frequency():
    """Fourth-order oscillator with frequencies 1 and 2."""
    return HigherLagrangian.from_text("q2_1^2/2 - 5*q1_1^2/2 + 2*q0_1^2", 1, 2)


def test_two_frequency_oscillator_returns_after_full_period(two_frequency):
    flow = higher_el_flow(two_frequency, [1.0, 0.0, 0.0, 0.0], T=2 * np.pi, dt=1e-2)
    t = flow.times
    # q(t) = (4 cos t - cos 2t)/3 fits q(0) = 1 with zero velocity, acceleration and jerk
    exact = (4 * np.cos(t) - np.cos(2 * t)) / 3
    assert np.max(np.abs(flow.states[:, 0] - exact)) <= 1e-5
    assert np.allclose(flow.final, [1.0, 0.0, 0.0, 0.0], atol=1e-5)


def test_two_frequency_energy_is_conserved(two_frequency):
    energy = higher_energy(two_frequency)
    start = [1.0, 0.2, -0.5, 0.1]
    flow = higher_el_flow(two_frequency, start, T=5.0, dt=1e-3, estimate_error=False)
    values = [energy.eval(state) for state in flow.states]
    assert max(values) - min(values) <= 1e-7
