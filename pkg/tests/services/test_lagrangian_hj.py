import numpy as np
import pytest

from src.errors import SingularLegendre
from src.services.dynamics import ParamFamily, VectorFieldSection
from src.services.exprcore import ScalarField
from src.services.hamiltonian_hj import (
    GeneratingScalar,
    OneFormSection,
    hamiltonian_vector_field,
)
from src.services.lagrangian_hj import (
    LagrangianSystem,
    equivalence_map,
    euler_lagrange_field,
    lag_hj_residuals,
    lagrangian_complete_check,
    lagrangian_reconstruct,
    legendre,
    legendre_hamiltonian,
    legendre_inverse,
)


@pytest.fixture
def quartic():
    return LagrangianSystem.from_text("v1^4/4", 1)


def _field(text):
    return VectorFieldSection.from_expressions([text], ["q1"])


def test_lagrangian_rejects_wrong_variables():
    with pytest.raises(ValueError):
        LagrangianSystem(1, ScalarField.compile("q1", ["q1"]))


def test_energy_function(oscillator_lagrangian):
    assert oscillator_lagrangian.energy.eval([1.0, 2.0]) == pytest.approx(2.5)


def test_legendre_of_quartic(quartic):
    assert legendre(quartic, [0.0, 2.0]).tolist() == [0.0, 8.0]
    z = legendre_inverse(quartic, [0.0, 8.0])
    assert z[1] == pytest.approx(2.0, abs=1e-10)


def test_degenerate_lagrangian_is_singular():
    sys = LagrangianSystem.from_text("v1^2/2 + q1*v2", 2)
    assert not sys.is_regular([0.0, 0.0, 1.0, 1.0])
    with pytest.raises(SingularLegendre):
        sys.regular_derivatives([0.0, 0.0, 1.0, 1.0])


def test_euler_lagrange_field(oscillator_lagrangian):
    gamma = euler_lagrange_field(oscillator_lagrangian)
    assert gamma([1.0, 0.0]).tolist() == [0.0, -1.0]


def test_legendre_hamiltonian(oscillator_lagrangian):
    sys = legendre_hamiltonian(oscillator_lagrangian)
    assert sys.energy([1.0, 2.0]) == pytest.approx(2.5)
    assert np.allclose(sys.H.grad([1.0, 2.0]), [1.0, 2.0])
    assert np.allclose(sys.H.hessian([1.0, 2.0]), np.eye(2))


def test_level_field_solves_lagrangian_problem(oscillator_lagrangian, line_samples):
    report = lag_hj_residuals(oscillator_lagrangian, _field("sqrt(2 - q1^2)"), line_samples)
    assert report.status == "pass"
    assert report.pullback_omega_defect == 0.0
    assert report.eq4_defect is None


def test_constant_field_is_not_a_solution(oscillator_lagrangian, line_samples):
    report = lag_hj_residuals(oscillator_lagrangian, _field("1"), line_samples)
    assert report.status == "fail"
    assert report.dE_defect == pytest.approx(0.9)


def test_generating_function_equation(quartic, line_samples):
    S = GeneratingScalar.from_text("8*q1", 1)
    report = lag_hj_residuals(quartic, _field("2"), line_samples, S=S)
    assert report.status == "pass"
    assert report.eq4_defect == 0.0


def test_equivalence_map_both_ways(quartic):
    alpha = equivalence_map(quartic, X=_field("2"))
    assert alpha([0.3])[0] == pytest.approx(8.0)
    X = equivalence_map(quartic, alpha=OneFormSection.from_expressions(["8"]))
    assert X([0.3])[0] == pytest.approx(2.0, abs=1e-10)


def test_equivalence_map_needs_one_side(quartic):
    with pytest.raises(ValueError):
        equivalence_map(quartic)


def test_lagrangian_reconstruct(oscillator_lagrangian):
    result = lagrangian_reconstruct(
        oscillator_lagrangian, _field("sqrt(2 - q1^2)"), [0.3], T=0.8, tolerance=1e-7
    )
    assert result.report.passed
    assert result.truncated_at is None


def test_lagrangian_complete_solution(oscillator_lagrangian):
    fam = ParamFamily(
        ["q1"], ["l"], [ScalarField.compile("sqrt(2*l - q1^2)", ["q1", "l"])], section=True
    )
    grid = [[q, lam] for q in np.linspace(-0.9, 0.9, 5) for lam in (1.0, 2.0)]
    report = lagrangian_complete_check(oscillator_lagrangian, fam, grid, T=0.5, tolerance=1e-6)
    assert report.status == "pass"
    assert report.min_abs_det > 0


@pytest.fixture
def coupled():
    return LagrangianSystem.from_text("v1^2/2 + v1^4/12 + q1*v1 - q1^4/4", 1)


def test_legendre_map_conjugates_the_flows(coupled):
    gamma = euler_lagrange_field(coupled)
    Z = hamiltonian_vector_field(legendre_hamiltonian(coupled))
    n = coupled.n
    for z in np.random.default_rng(31).uniform(-1.0, 1.0, size=(100, 2)):
        _, hess = coupled.regular_derivatives(z)
        tangent = np.block([[np.eye(n), np.zeros((n, n))], [hess[n:, :n], hess[n:, n:]]])
        assert np.max(np.abs(tangent @ gamma(z) - Z(legendre(coupled, z)))) <= 1e-8


def test_legendre_round_trip_at_random_points(coupled):
    for z in np.random.default_rng(32).uniform(-1.0, 1.0, size=(100, 2)):
        point = legendre(coupled, z)
        assert np.max(np.abs(legendre(coupled, legendre_inverse(coupled, point)) - point)) <= 1e-10
        assert np.max(np.abs(legendre_inverse(coupled, point) - z)) <= 1e-10
