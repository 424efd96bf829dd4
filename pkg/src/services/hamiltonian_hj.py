"""Hamiltonian systems on T*Q and the Hamiltonian Hamilton-Jacobi problems."""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import DomainViolation, SingularFamily
from src.logger import get_logger
from src.models.reports import FamilyReport, ResidualReport, StandardHJReport
from src.services.dynamics import (
    ChartMap,
    FlowResult,
    ParamFamily,
    VectorFieldSection,
    family_drift,
    flow_midpoint,
    flow_rk4,
)
from src.services.exprcore import ScalarField
from src.services.exprcore.symbolic import neg
from src.services.numerics import canonical_matrix
from src.utils.helpers import (
    as_points,
    drop_errors,
    map_samples,
    max_abs,
    split_columns,
    summarize,
)

logger = get_logger(__name__)

Vector = np.ndarray
_DRIFT_SAMPLES = 50


def configuration_names(n: int) -> List[str]:
    return [f"q{i}" for i in range(1, n + 1)]


def momentum_names(n: int) -> List[str]:
    return [f"p{i}" for i in range(1, n + 1)]


class HamiltonianSystem:
    """(T*Q, ω, H) on the chart (q1..qn, p1..pn) with ω = dq^i ∧ dp_i.

    ``H`` is a ScalarField or any object offering ``vars``, ``eval``, ``grad``
    and ``derivatives`` over the same 2n coordinates.
    """

    def __init__(self, n: int, H: Any):
        self.n = n
        self.H = H
        if tuple(H.vars) != self.vars:
            raise ValueError(f"H must be a function of {self.vars}, got {tuple(H.vars)}")

    @classmethod
    def from_text(cls, text: str, n: int) -> "HamiltonianSystem":
        names = configuration_names(n) + momentum_names(n)
        return cls(n, ScalarField.compile(text, names))

    @property
    def q_names(self) -> Tuple[str, ...]:
        return tuple(configuration_names(self.n))

    @property
    def p_names(self) -> Tuple[str, ...]:
        return tuple(momentum_names(self.n))

    @property
    def vars(self) -> Tuple[str, ...]:
        return self.q_names + self.p_names

    @property
    def symbolic(self) -> bool:
        return isinstance(self.H, ScalarField)

    def energy(self, z: Any) -> float:
        return float(self.H.eval(z))


class OneFormSection(ChartMap):
    """α = α_i(q) dq^i, a section of T*Q → Q.

    When built from a generating scalar S, values and Jacobian come from the
    gradient and the (exactly symmetric) Hessian of S.
    """

    def __init__(
        self,
        n: int,
        components: Optional[Sequence[ScalarField]] = None,
        generator: Optional[ScalarField] = None,
        evaluator: Any = None,
        jacobian_fn: Any = None,
    ):
        self.generator = generator
        if generator is not None:
            components = [generator.partial(name) for name in configuration_names(n)]
            evaluator = generator.grad
            jacobian_fn = generator.hessian
        super().__init__(configuration_names(n), n, components, evaluator, jacobian_fn)
        self.n = n

    @classmethod
    def from_expressions(cls, texts: Sequence[str], n: Optional[int] = None) -> "OneFormSection":
        n = len(texts) if n is None else n
        names = configuration_names(n)
        return cls(n, [ScalarField.compile(text, names) for text in texts])

    def embedding(self) -> ChartMap:
        """q ↦ (q, α(q)) into T*Q."""
        n = self.n
        return ChartMap(
            self.in_names,
            2 * n,
            evaluator=lambda q: np.concatenate([q, self.evaluate(q)]),
            jacobian_fn=lambda q: np.vstack([np.eye(n), self.jacobian(q)]),
        )


class GeneratingScalar:
    """A local generating function S(q) with α = dS."""

    def __init__(self, S: ScalarField):
        self.S = S
        self.n = len(S.vars)
        if tuple(S.vars) != tuple(configuration_names(self.n)):
            raise ValueError("S must be a function of q1..qn")

    @classmethod
    def from_text(cls, text: str, n: int) -> "GeneratingScalar":
        return cls(ScalarField.compile(text, configuration_names(n)))

    def differential(self) -> OneFormSection:
        return OneFormSection(self.n, generator=self.S)


def hamiltonian_vector_field(sys: HamiltonianSystem) -> VectorFieldSection:
    """
    Hamiltonian vector field Z_H = (∂H/∂p, −∂H/∂q), tagged canonical.

    Args:
        sys (HamiltonianSystem): The system.

    Returns:
        VectorFieldSection: Symbolic components when H is a ScalarField,
        otherwise a field evaluated through the gradient/Hessian of H.
    """
    if sys.symbolic:
        H: ScalarField = sys.H
        components = [H.partial(p) for p in sys.p_names] + [
            ScalarField(neg(H.partial(q).expression), sys.vars) for q in sys.q_names
        ]
        return VectorFieldSection(sys.vars, components, canonical=True, hamiltonian=H)

    omega = canonical_matrix(sys.n)
    return VectorFieldSection(
        sys.vars,
        evaluator=lambda z: omega @ sys.H.grad(z),
        jacobian_fn=lambda z: omega @ sys.H.derivatives(z)[2],
        canonical=True,
        hamiltonian=sys.H,
    )


def _check_section(sys: HamiltonianSystem, alpha: ChartMap) -> None:
    if alpha.in_dim != sys.n or alpha.out_dim != sys.n:
        raise ValueError(f"alpha must be a 1-form on a {sys.n}-dimensional chart")


def associated_vector_field(sys: HamiltonianSystem, alpha: OneFormSection) -> VectorFieldSection:
    """X = Tπ∘Z_H∘α, i.e. X(q) = ∂H/∂p (q, α(q))."""
    _check_section(sys, alpha)
    n = sys.n
    if sys.symbolic and alpha.components is not None:
        substitution = dict(zip(sys.p_names, alpha.components))
        components = [
            sys.H.partial(p).substitute(substitution, sys.q_names) for p in sys.p_names
        ]
        return VectorFieldSection(sys.q_names, components)

    def evaluator(q: Vector) -> Vector:
        return sys.H.grad(np.concatenate([q, alpha(q)]))[n:]

    def jacobian_fn(q: Vector) -> np.ndarray:
        hess = sys.H.derivatives(np.concatenate([q, alpha(q)]))[2]
        return hess[n:, :n] + hess[n:, n:] @ alpha.jacobian(q)

    return VectorFieldSection(sys.q_names, evaluator=evaluator, jacobian_fn=jacobian_fn)


def _pullback_gradient(sys: HamiltonianSystem, alpha: ChartMap, q: Vector) -> Vector:
    """∇(H∘α)(q) = ∂H/∂q + (∂α/∂q)ᵀ ∂H/∂p."""
    grad = sys.H.grad(np.concatenate([q, alpha(q)]))
    return grad[: sys.n] + alpha.jacobian(q).T @ grad[sys.n :]


def generalized_hj_residual(
    sys: HamiltonianSystem,
    alpha: OneFormSection,
    samples: Sequence[Sequence[float]],
    X: Optional[VectorFieldSection] = None,
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> ResidualReport:
    """Residual of i(X)dα = −d(α*H): r_j = Σ_i X^i (dα)_ij + ∂_j(H∘α),
    with (dα)_ij = ∂α_j/∂q^i − ∂α_i/∂q^j. X defaults to the associated field."""
    _check_section(sys, alpha)
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    X = associated_vector_field(sys, alpha) if X is None else X

    def norm(q: Vector) -> float:
        A = alpha.jacobian(q)
        curl = A.T - A
        r = curl.T @ X(q) + _pullback_gradient(sys, alpha, q)
        return max_abs(r)

    values = map_samples(norm, as_points(samples))
    return summarize(
        "generalized_hj_residual",
        samples,
        drop_errors(values),
        tolerance,
        keep_samples,
    )


def standard_hj_residual(
    sys: HamiltonianSystem,
    alpha: OneFormSection,
    samples: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> StandardHJReport:
    """
    Defects of the standard Hamiltonian HJ problem on a sample region.

    Args:
        sys (HamiltonianSystem): The system.
        alpha (OneFormSection): Candidate 1-form.
        samples: Points of Q.
        tolerance (float): Pass/fail threshold for both defects.
        keep_samples (bool): Keep per-sample values.

    Returns:
        StandardHJReport: ``closedness`` (max |∂α_i/∂q^j − ∂α_j/∂q^i|) and
        ``dH`` (max ‖∇(H∘α)‖∞). α solves the problem on the region iff both pass.
    """
    _check_section(sys, alpha)
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance

    def defects(q: Vector) -> Tuple[float, float]:
        A = alpha.jacobian(q)
        return max_abs(A - A.T), max_abs(_pullback_gradient(sys, alpha, q))

    closed, dH = split_columns(map_samples(defects, as_points(samples)), 2)
    return StandardHJReport(
        op="standard_hj_residual",
        defects={
            "closedness": summarize("closedness", samples, closed, tolerance, keep_samples),
            "dH": summarize("dH", samples, dH, tolerance, keep_samples),
        },
    )


def lagrangian_submanifold_defect(
    alpha: OneFormSection,
    samples: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
) -> ResidualReport:
    """Max-norm of the pullback of ω under q ↦ (q, α(q))."""
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    embedding = alpha.embedding()
    omega = canonical_matrix(alpha.n)

    def norm(q: Vector) -> float:
        J = embedding.jacobian(q)
        return max_abs(J.T @ omega @ J)

    values = map_samples(norm, as_points(samples))
    return summarize(
        "lagrangian_submanifold",
        samples,
        drop_errors(values),
        tolerance,
    )


def _flow(sys: HamiltonianSystem, z0: Vector, T: float, dt: float, integrator: str) -> FlowResult:
    Z = hamiltonian_vector_field(sys)
    if integrator == "midpoint":
        return flow_midpoint(Z, z0, T, dt, estimate_error=False)
    if integrator == "rk4":
        return flow_rk4(Z, z0, T, dt, estimate_error=False)
    raise ValueError(f"unknown integrator {integrator!r}")


def _flow_until_failure(
    sys: HamiltonianSystem, z0: Vector, T: float, dt: float, integrator: str
) -> Tuple[FlowResult, Optional[float]]:
    try:
        return _flow(sys, z0, T, dt, integrator), None
    except DomainViolation as exc:
        return exc.partial, exc.time


def invariance_defect(
    sys: HamiltonianSystem,
    alpha: OneFormSection,
    starts: Sequence[Sequence[float]],
    T: float,
    dt: float = 1e-3,
    integrator: str = "rk4",
    tolerance: Optional[float] = None,
) -> ResidualReport:
    """Flow Z_H from (q0, α(q0)) and measure max ‖p(t) − α(q(t))‖ per start.

    A trajectory that leaves the domain of H or of α is measured up to that
    time and noted.
    """
    _check_section(sys, alpha)
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    n = sys.n
    notes: List[str] = []
    values: List[Optional[float]] = []
    for i, q0 in enumerate(as_points(starts)):
        try:
            z0 = np.concatenate([q0, alpha(q0)])
        except DomainViolation:
            notes.append(f"start {i}: not in the domain of alpha")
            values.append(None)
            continue
        flow, failed_at = _flow_until_failure(sys, z0, T, dt, integrator)
        if failed_at is not None:
            notes.append(f"start {i}: integration stopped at t={failed_at:.6g}")
        defect = 0.0
        for t, z in zip(flow.times, flow.states):
            try:
                defect = max(defect, max_abs(z[n:] - alpha(z[:n])))
            except DomainViolation:
                notes.append(f"start {i}: alpha undefined from t={t:.6g}")
                break
        values.append(defect)
    return summarize("invariance_defect", starts, values, tolerance, notes=notes)


@dataclass(frozen=True)
class ReconstructionResult:
    base_curve: FlowResult
    lifted_curve: np.ndarray
    direct_curve: FlowResult
    max_gap: float
    truncated_at: Optional[float]
    report: ResidualReport


def lift_and_compare(
    X: VectorFieldSection,
    lift: ChartMap,
    direct_field: VectorFieldSection,
    q0: Sequence[float],
    T: float,
    dt: float,
    tolerance: float,
    op: str = "reconstruct",
) -> ReconstructionResult:
    """Integrate ``X`` on the base, lift the curve and compare it with the
    RK4 flow of ``direct_field`` from the lifted start.

    A domain violation on any curve ends the comparison at that time.
    """
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    truncated: List[float] = []
    try:
        base = flow_rk4(X, q0, T, dt)
    except DomainViolation as exc:
        base = exc.partial
        truncated.append(exc.time)

    lifted_rows = [lift(q0)]
    for t, q in zip(base.times[1:], base.states[1:]):
        try:
            lifted_rows.append(lift(q))
        except DomainViolation:
            truncated.append(float(t))
            break
    lifted = np.array(lifted_rows)

    try:
        direct = flow_rk4(direct_field, lifted[0], T, dt, estimate_error=False)
    except DomainViolation as exc:
        direct = exc.partial
        truncated.append(exc.time)

    common = min(len(lifted), len(direct.states))
    max_gap = float(np.max(np.abs(lifted[:common] - direct.states[:common])))
    truncated_at = min(truncated) if truncated else None
    notes = [] if truncated_at is None else [f"comparison stops at t={truncated_at:.6g}"]
    if truncated_at is not None:
        logger.warning(f"{op}: {notes[0]}")
    report = summarize(op, [list(q0)], [max_gap], tolerance, notes=notes)
    return ReconstructionResult(base, lifted, direct, max_gap, truncated_at, report)


def reconstruct(
    sys: HamiltonianSystem,
    alpha: OneFormSection,
    q0: Sequence[float],
    T: float,
    dt: float = 1e-3,
    tolerance: Optional[float] = None,
) -> ReconstructionResult:
    """
    Rebuild integral curves of Z_H from the associated field on Q.

    Integrates X = associated_vector_field on Q, lifts the curve by α and
    compares it with the flow of Z_H started at (q0, α(q0)).

    Args:
        sys (HamiltonianSystem): The system.
        alpha (OneFormSection): Solution candidate.
        q0: Base starting point.
        T (float): Final time.
        dt (float): RK4 step.
        tolerance (float): Threshold on the gap.

    Returns:
        ReconstructionResult: Curves, ``max_gap`` and, when a domain guard
        fails mid-trajectory, the time at which the comparison stops.
    """
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    return lift_and_compare(
        associated_vector_field(sys, alpha),
        alpha.embedding(),
        hamiltonian_vector_field(sys),
        q0,
        T,
        dt,
        tolerance,
    )


def constants_of_motion(fam: ParamFamily, z: Sequence[float], seed: Sequence[float]) -> Vector:
    """F(q, p) = λ with α_λ(q) = p, the constants of motion of a complete solution."""
    z = np.asarray(z, dtype=float)
    n = fam.base_dim
    return fam.invert(z[:n], z[n:], np.asarray(seed, dtype=float), [float(v) for v in z])


def check_family_nodes(
    fam: ParamFamily, nodes: Sequence[Vector], evaluate: Any
) -> Tuple[List[Any], Dict[str, Any]]:
    """Run ``evaluate(node, A, B)`` per node with A = ∂ᾱ/∂q and B = ∂ᾱ/∂λ
    on the fiber block, and locate the smallest |det B|.

    Raises:
        SingularFamily: If that determinant is below ``settings.SINGULAR_DET``.
    """
    n = fam.base_dim

    def run(node: Vector) -> Tuple[Any, float]:
        J = fam.full_map.jacobian(node)[n:]
        A, B = J[:, :n], J[:, n:]
        return evaluate(node, A, B), abs(float(np.linalg.det(B)))

    results = map_samples(run, nodes)
    details: Dict[str, Any] = {"n_params": fam.n_params}
    valid = [(i, r[1]) for i, r in enumerate(results) if not isinstance(r, Exception)]
    if valid:
        worst_index, worst_det = min(valid, key=lambda item: item[1])
        details["min_abs_det"] = worst_det
        details["argmin_det_node"] = [float(v) for v in nodes[worst_index]]
        if worst_det < settings.SINGULAR_DET:
            logger.error(f"family singular at {details['argmin_det_node']}")
            raise SingularFamily(nodes[worst_index], worst_det)
    return [r if isinstance(r, Exception) else r[0] for r in results], details


def complete_solution_check(
    sys: HamiltonianSystem,
    fam: ParamFamily,
    grid: Sequence[Sequence[float]],
    T: float,
    dt: float = 1e-2,
    integrator: str = "midpoint",
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> FamilyReport:
    """
    Verify a complete solution Φ(q, λ) = (q, α_λ(q)).

    Args:
        sys (HamiltonianSystem): The system.
        fam (ParamFamily): Section family with n parameters.
        grid: Nodes (q, λ).
        T (float): Flow horizon for the constants-of-motion drift.
        dt (float): Integrator step.
        integrator (str): "midpoint" or "rk4".
        tolerance (float): Threshold for every defect.
        keep_samples (bool): Keep per-node values.

    Returns:
        FamilyReport: ``closedness`` and ``dH`` per node, ``constants_drift``
        (max ‖F(z(t)) − λ‖ along flows, measured where the flow stays inside
        the chart of the family), and ``min_abs_det`` of ∂α/∂λ.

    Raises:
        SingularFamily: If det ∂α/∂λ nearly vanishes at some node.
    """
    if not fam.section or fam.base_dim != sys.n or fam.n_params != sys.n:
        raise ValueError("a complete solution needs n parameters for n degrees of freedom")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    n = sys.n
    nodes = as_points(grid)

    def defects(node: Vector, A: np.ndarray, _: np.ndarray) -> Tuple[float, float]:
        grad = sys.H.grad(fam.full_map(node))
        return max_abs(A - A.T), max_abs(grad[:n] + A.T @ grad[n:])

    results, details = check_family_nodes(fam, nodes, defects)
    closed, dH = split_columns(results, 2)
    drift = family_drift(
        fam, nodes, lambda z0: _flow(sys, z0, T, dt, integrator), _DRIFT_SAMPLES
    )
    details["n_outside_chart"] = drift.n_outside_chart
    return FamilyReport(
        op="complete_solution_check",
        defects={
            "closedness": summarize("closedness", nodes, closed, tolerance, keep_samples),
            "dH": summarize("dH", nodes, dH, tolerance, keep_samples),
            "constants_drift": summarize(
                "constants_drift", nodes, drift.drifts, tolerance, keep_samples
            ),
        },
        details=details,
        notes=drift.notes,
    )
