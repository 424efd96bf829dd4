import numpy as np
import pytest

from src.errors import DomainViolation, NewtonDivergence
from src.services.numerics import canonical_matrix, condition_number, fd_jacobian, newton_solve


def test_newton_solves_cube_root():
    result = newton_solve(lambda v: v**3 - 8.0, lambda v: np.diag(3 * v**2), [1.0])
    assert result.x[0] == pytest.approx(2.0, abs=1e-10)
    assert result.residual <= 1e-12 * 2.0


def test_newton_returns_seed_that_already_solves():
    result = newton_solve(lambda v: v - 3.0, lambda v: np.eye(1), [3.0])
    assert result.iterations == 0


def test_newton_singular_jacobian_diverges():
    with pytest.raises(NewtonDivergence) as excinfo:
        newton_solve(lambda v: v**2 + 1.0, lambda v: np.zeros((1, 1)), [0.0], index="sample-3")
    assert excinfo.value.index == "sample-3"


def test_newton_iteration_cap(mocker):
    mocker.patch("src.services.numerics.settings.NEWTON_MAX_ITER", 2)
    with pytest.raises(NewtonDivergence):
        newton_solve(lambda v: v**2 + 1.0, lambda v: np.diag(2 * v), [3.0])


def test_newton_halves_steps_that_leave_the_domain():
    def residual(v):
        if v[0] <= 0:
            raise DomainViolation(0, float(v[0]))
        return np.log(v) - np.log(0.5)

    # the first full step from 4 lands at a negative value
    result = newton_solve(residual, lambda v: np.diag(1.0 / v), [4.0])
    assert result.x[0] == pytest.approx(0.5, abs=1e-10)


def test_newton_seed_outside_domain_raises():
    def residual(v):
        raise DomainViolation(0, -1.0)

    with pytest.raises(DomainViolation):
        newton_solve(residual, lambda v: np.eye(1), [-1.0])


def test_condition_number():
    assert condition_number(np.diag([1.0, 1e-3])) == pytest.approx(1e3)
    assert condition_number(np.array([[np.nan]])) == float("inf")


def test_fd_jacobian_of_linear_map():
    A = np.array([[1.0, 2.0], [-3.0, 0.5]])
    J = fd_jacobian(lambda x: A @ x, [0.2, -0.7])
    assert np.allclose(J, A, atol=1e-9)


def test_canonical_matrix():
    omega = canonical_matrix(2)
    assert omega.shape == (4, 4)
    assert np.array_equal(omega.T, -omega)
    assert omega[0, 2] == 1.0
    assert omega[2, 0] == -1.0


def test_newton_backtracks_instead_of_jumping_past_a_pole():
    root = 0.0655
    target = 1.0 / np.tan(root)

    def residual(v):
        return np.cos(v) / np.sin(v) - target

    def jacobian(v):
        return np.diag(-1.0 / np.sin(v) ** 2)

    # the seed sits just left of the pole at pi, the root just right of it
    result = newton_solve(residual, jacobian, [np.pi - 0.0345])
    assert np.tan(result.x[0]) == pytest.approx(np.tan(root), rel=1e-9)


def test_newton_shortens_steps_that_raise_the_residual():
    def residual(v):
        return np.cos(v) / np.sin(v) + 1.0 / np.tan(0.0345)

    def jacobian(v):
        return np.diag(-1.0 / np.sin(v) ** 2)

    # a full step from here crosses the pole at pi
    result = newton_solve(residual, jacobian, [np.pi - 0.1345])
    assert result.x[0] == pytest.approx(np.pi - 0.0345, abs=1e-10)
