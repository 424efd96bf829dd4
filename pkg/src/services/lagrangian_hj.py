"""Lagrangian systems on TQ, the Legendre transform and the Lagrangian
Hamilton-Jacobi problems."""

from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import SingularLegendre
from src.logger import get_logger
from src.models.reports import FamilyReport, LagrangianHJReport
from src.services.dynamics import (
    ChartMap,
    ParamFamily,
    VectorFieldSection,
    family_drift,
    flow_rk4,
)
from src.services.exprcore import ScalarField
from src.services.exprcore.nodes import Var
from src.services.exprcore.symbolic import ZERO, add, mul, sub
from src.services.hamiltonian_hj import (
    GeneratingScalar,
    HamiltonianSystem,
    OneFormSection,
    ReconstructionResult,
    check_family_nodes,
    configuration_names,
    lift_and_compare,
    momentum_names,
)
from src.services.numerics import condition_number, newton_solve
from src.utils.helpers import as_points, map_samples, max_abs, split_columns, summarize

logger = get_logger(__name__)

Vector = np.ndarray


def velocity_names(n: int) -> List[str]:
    return [f"v{i}" for i in range(1, n + 1)]


class LagrangianSystem:
    """(TQ, ω_L, E_L) on the chart (q1..qn, v1..vn).

    θ_L = (∂L/∂v^i) dq^i and E_L = v^i ∂L/∂v^i − L are built symbolically;
    ω_L = −dθ_L only ever appears through pullbacks.
    """

    def __init__(self, n: int, L: ScalarField):
        self.n = n
        self.L = L
        if L.vars != self.vars:
            raise ValueError(f"L must be a function of {self.vars}, got {L.vars}")
        self.momenta = tuple(L.partial(v) for v in self.v_names)
        energy = ZERO
        for name, theta in zip(self.v_names, self.momenta):
            energy = add(energy, mul(Var(name), theta.expression))
        self.energy = ScalarField(sub(energy, L.expression), self.vars)

    @classmethod
    def from_text(cls, text: str, n: int) -> "LagrangianSystem":
        return cls(n, ScalarField.compile(text, configuration_names(n) + velocity_names(n)))

    @property
    def q_names(self) -> Tuple[str, ...]:
        return tuple(configuration_names(self.n))

    @property
    def v_names(self) -> Tuple[str, ...]:
        return tuple(velocity_names(self.n))

    @property
    def vars(self) -> Tuple[str, ...]:
        return self.q_names + self.v_names

    def mass_matrix(self, z: Any) -> np.ndarray:
        """∂²L/∂v∂v at (q, v)."""
        return self.L.hessian(z)[self.n :, self.n :]

    def regular_derivatives(self, z: Any) -> Tuple[np.ndarray, np.ndarray]:
        """Gradient and Hessian of L, after checking the fiber Hessian.

        Raises:
            SingularLegendre: If cond(∂²L/∂v∂v) exceeds ``settings.CONDITION_LIMIT``.
        """
        _, grad, hess = self.L.derivatives(z)
        cond = condition_number(hess[self.n :, self.n :])
        if cond > settings.CONDITION_LIMIT:
            raise SingularLegendre(cond, list(np.asarray(z, dtype=float)))
        return grad, hess

    def is_regular(self, z: Any) -> bool:
        return condition_number(self.mass_matrix(z)) <= settings.CONDITION_LIMIT


def legendre(sys: LagrangianSystem, point: Sequence[float]) -> Vector:
    """FL(q, v) = (q, ∂L/∂v)."""
    z = np.asarray(point, dtype=float)
    return np.concatenate([z[: sys.n], sys.L.grad(z)[sys.n :]])


def legendre_inverse(
    sys: LagrangianSystem, point: Sequence[float], seed: Optional[Sequence[float]] = None
) -> Vector:
    """
    Invert the fiber derivative at (q, p) by Newton's method.

    Args:
        sys (LagrangianSystem): The system.
        point: (q, p).
        seed: Initial velocity, defaults to p.

    Returns:
        Vector: (q, v) with ∂L/∂v(q, v) = p.

    Raises:
        SingularLegendre: If the fiber Hessian is ill-conditioned at the solution.
        NewtonDivergence: If Newton does not converge.
    """
    z = np.asarray(point, dtype=float)
    n = sys.n
    q, p = z[:n], z[n:]
    v0 = p if seed is None else np.asarray(seed, dtype=float)

    def residual(v: Vector) -> Vector:
        return sys.L.grad(np.concatenate([q, v]))[n:] - p

    def jacobian(v: Vector) -> np.ndarray:
        return sys.mass_matrix(np.concatenate([q, v]))

    v = newton_solve(residual, jacobian, v0, index=list(z)).x
    solution = np.concatenate([q, v])
    sys.regular_derivatives(solution)
    return solution


def euler_lagrange_field(sys: LagrangianSystem) -> VectorFieldSection:
    """Γ_L: q̇ = v, v̇ = M⁻¹(∂L/∂q − (∂²L/∂v∂q)·v) with M = ∂²L/∂v∂v.

    Evaluation raises SingularLegendre where M is ill-conditioned.
    """
    n = sys.n

    def evaluator(z: Vector) -> Vector:
        grad, hess = sys.regular_derivatives(z)
        force = grad[:n] - hess[n:, :n] @ z[n:]
        return np.concatenate([z[n:], np.linalg.solve(hess[n:, n:], force)])

    return VectorFieldSection(sys.vars, evaluator=evaluator)


class LegendreHamiltonian:
    """H = E_L∘FL⁻¹ evaluated pointwise.

    Derivatives follow from the Legendre identities H_p = v, H_q = −L_q,
    H_pp = M⁻¹, H_pq = −M⁻¹L_vq and H_qq = −L_qq + L_qv M⁻¹ L_vq.
    """

    def __init__(self, sys: LagrangianSystem):
        self.lagrangian = sys
        self.n = sys.n
        self.vars = tuple(configuration_names(sys.n) + momentum_names(sys.n))

    def _solve(self, point: Any) -> Tuple[Vector, np.ndarray, np.ndarray]:
        z = legendre_inverse(self.lagrangian, point)
        grad, hess = self.lagrangian.regular_derivatives(z)
        return z, grad, hess

    def eval(self, point: Any) -> float:
        p = np.asarray(point, dtype=float)[self.n :]
        z = legendre_inverse(self.lagrangian, point)
        return float(p @ z[self.n :] - self.lagrangian.L.eval(z))

    __call__ = eval

    def grad(self, point: Any) -> Vector:
        z, grad, _ = self._solve(point)
        return np.concatenate([-grad[: self.n], z[self.n :]])

    def derivatives(self, point: Any) -> Tuple[float, Vector, np.ndarray]:
        n = self.n
        p = np.asarray(point, dtype=float)[n:]
        z, grad, hess = self._solve(point)
        M_inv = np.linalg.inv(hess[n:, n:])
        L_vq = hess[n:, :n]
        H_pq = -M_inv @ L_vq
        H_qq = -hess[:n, :n] + L_vq.T @ M_inv @ L_vq
        hessian = np.block([[H_qq, H_pq.T], [H_pq, M_inv]])
        value = float(p @ z[n:] - self.lagrangian.L.eval(z))
        return value, np.concatenate([-grad[:n], z[n:]]), 0.5 * (hessian + hessian.T)

    def hessian(self, point: Any) -> np.ndarray:
        return self.derivatives(point)[2]


def legendre_hamiltonian(sys: LagrangianSystem) -> HamiltonianSystem:
    return HamiltonianSystem(sys.n, LegendreHamiltonian(sys))


def _check_field(sys: LagrangianSystem, X: ChartMap) -> None:
    if X.in_dim != sys.n or X.out_dim != sys.n:
        raise ValueError(f"X must be a vector field on a {sys.n}-dimensional chart")


def _pullbacks(
    sys: LagrangianSystem, z: Vector, B: np.ndarray
) -> Tuple[np.ndarray, Vector, Vector]:
    """At z = (q, X(q)) with B = ∂X/∂q: the matrix of X*ω_L, ∇(X*E_L) and
    the pulled-back momenta X*θ_L."""
    n = sys.n
    _, grad, hess = sys.L.derivatives(z)
    theta_jac = hess[n:, :n] + hess[n:, n:] @ B
    energy_grad = sys.energy.grad(z)
    return theta_jac - theta_jac.T, energy_grad[:n] + B.T @ energy_grad[n:], grad[n:]


def lag_hj_residuals(
    sys: LagrangianSystem,
    X: VectorFieldSection,
    samples: Sequence[Sequence[float]],
    S: Optional[GeneratingScalar] = None,
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> LagrangianHJReport:
    """
    Defects of the Lagrangian HJ problems for a vector field X on Q.

    All quantities are pullbacks along q ↦ (q, X(q)).

    Args:
        sys (LagrangianSystem): The system.
        X (VectorFieldSection): Candidate field on Q.
        samples: Points of Q.
        S (GeneratingScalar): Optional generating function for the
            coordinate HJ equation ∂S/∂q^i = ∂L/∂v^i(q, X(q)).
        tolerance (float): Pass/fail threshold.
        keep_samples (bool): Keep per-sample values.

    Returns:
        LagrangianHJReport: ``pullback_omega`` (max |X*ω_L|), ``dE``
        (max ‖∇(X*E_L)‖), ``generalized`` (max ‖i(X)(X*ω_L) − d(X*E_L)‖) and,
        with S, ``eq4``.
    """
    _check_field(sys, X)
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    count = 3 if S is None else 4

    def defects(q: Vector) -> Tuple[float, ...]:
        x = X(q)
        omega, dE, theta = _pullbacks(sys, np.concatenate([q, x]), X.jacobian(q))
        values = (max_abs(omega), max_abs(dE), max_abs(omega.T @ x - dE))
        if S is not None:
            values += (max_abs(S.S.grad(q) - theta),)
        return values

    columns = split_columns(map_samples(defects, as_points(samples)), count)
    names = ["pullback_omega", "dE", "generalized", "eq4"][:count]
    return LagrangianHJReport(
        op="lag_hj_residuals",
        defects={
            name: summarize(name, samples, column, tolerance, keep_samples)
            for name, column in zip(names, columns)
        },
    )


def equivalence_map(
    sys: LagrangianSystem,
    X: Optional[VectorFieldSection] = None,
    alpha: Optional[OneFormSection] = None,
) -> Any:
    """
    Carry a solution across the Legendre transform.

    Exactly one of ``X`` or ``alpha`` is given. X ↦ α = FL∘X is symbolic when
    X is; α ↦ X = FL⁻¹∘α inverts the fiber derivative pointwise.

    Returns:
        OneFormSection | VectorFieldSection: The partner object.

    Raises:
        SingularLegendre: Where the fiber Hessian is ill-conditioned.
        NewtonDivergence: If a fiberwise inversion fails.
    """
    if (X is None) == (alpha is None):
        raise ValueError("pass exactly one of X or alpha")
    n = sys.n
    if X is not None:
        _check_field(sys, X)
        if X.components is not None:
            substitution = dict(zip(sys.v_names, X.components))
            return OneFormSection(
                n, [theta.substitute(substitution, sys.q_names) for theta in sys.momenta]
            )

        def alpha_at(q: Vector) -> Vector:
            return sys.L.grad(np.concatenate([q, X(q)]))[n:]

        def alpha_jacobian(q: Vector) -> np.ndarray:
            hess = sys.L.hessian(np.concatenate([q, X(q)]))
            return hess[n:, :n] + hess[n:, n:] @ X.jacobian(q)

        return OneFormSection(n, evaluator=alpha_at, jacobian_fn=alpha_jacobian)

    _check_field(sys, alpha)

    def x_at(q: Vector) -> Vector:
        return legendre_inverse(sys, np.concatenate([q, alpha(q)]))[n:]

    def x_jacobian(q: Vector) -> np.ndarray:
        z = legendre_inverse(sys, np.concatenate([q, alpha(q)]))
        _, hess = sys.regular_derivatives(z)
        return np.linalg.solve(hess[n:, n:], alpha.jacobian(q) - hess[n:, :n])

    return VectorFieldSection(sys.q_names, evaluator=x_at, jacobian_fn=x_jacobian)


def lagrangian_reconstruct(
    sys: LagrangianSystem,
    X: VectorFieldSection,
    q0: Sequence[float],
    T: float,
    dt: float = 1e-3,
    tolerance: Optional[float] = None,
) -> ReconstructionResult:
    """Lift the integral curve of X through q0 by q ↦ (q, X(q)) and compare
    it with the flow of Γ_L from (q0, X(q0))."""
    _check_field(sys, X)
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    n = sys.n
    lift = ChartMap(
        sys.q_names,
        2 * n,
        evaluator=lambda q: np.concatenate([q, X(q)]),
        jacobian_fn=lambda q: np.vstack([np.eye(n), X.jacobian(q)]),
    )
    return lift_and_compare(
        X, lift, euler_lagrange_field(sys), q0, T, dt, tolerance, "lagrangian_reconstruct"
    )


def lagrangian_complete_check(
    sys: LagrangianSystem,
    fam: ParamFamily,
    grid: Sequence[Sequence[float]],
    T: float,
    dt: float = 1e-2,
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> FamilyReport:
    """
    Verify a Lagrangian complete solution Ψ(q, λ) = (q, X_λ(q)).

    Args:
        sys (LagrangianSystem): The system.
        fam (ParamFamily): Section family whose components are X_λ.
        grid: Nodes (q, λ).
        T (float): Horizon of the Γ_L flows (RK4).
        dt (float): Step.
        tolerance (float): Threshold for every defect.
        keep_samples (bool): Keep per-node values.

    Returns:
        FamilyReport: ``pullback_omega`` and ``dE`` per node,
        ``constants_drift`` of λ recovered from (q, v) along Γ_L, and
        ``min_abs_det`` of ∂X/∂λ.

    Raises:
        SingularFamily: If det ∂X/∂λ nearly vanishes at some node.
    """
    if not fam.section or fam.base_dim != sys.n or fam.n_params != sys.n:
        raise ValueError("a complete solution needs n parameters for n degrees of freedom")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    nodes = as_points(grid)
    field = euler_lagrange_field(sys)

    def defects(node: Vector, A: np.ndarray, _: np.ndarray) -> Tuple[float, float]:
        omega, dE, _theta = _pullbacks(sys, fam.full_map(node), A)
        return max_abs(omega), max_abs(dE)

    results, details = check_family_nodes(fam, nodes, defects)
    omega, dE = split_columns(results, 2)
    drift = family_drift(
        fam, nodes, lambda z0: flow_rk4(field, z0, T, dt, estimate_error=False)
    )
    details["n_outside_chart"] = drift.n_outside_chart
    return FamilyReport(
        op="lagrangian_complete_check",
        defects={
            "pullback_omega": summarize("pullback_omega", nodes, omega, tolerance, keep_samples),
            "dE": summarize("dE", nodes, dE, tolerance, keep_samples),
            "constants_drift": summarize(
                "constants_drift", nodes, drift.drifts, tolerance, keep_samples
            ),
        },
        details=details,
        notes=drift.notes,
    )
