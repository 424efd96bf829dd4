"""Canonical transformations from type-1 generating functions S(q, q̃)."""

from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np

from src.config import settings
from src.errors import DegenerateGenerator, DomainViolation, NewtonDivergence
from src.logger import get_logger
from src.models.reports import EquilibriumReport, ResidualReport
from src.services.dynamics import ParamFamily, flow_rk4
from src.services.exprcore import ScalarField
from src.services.hamiltonian_hj import (
    HamiltonianSystem,
    configuration_names,
    hamiltonian_vector_field,
    momentum_names,
)
from src.services.numerics import (
    canonical_matrix,
    condition_number,
    fd_jacobian,
    newton_solve,
)
from src.utils.helpers import as_points, drop_errors, map_samples, max_abs, summarize

logger = get_logger(__name__)

Vector = np.ndarray
Block = Literal["momentum", "configuration", "both"]
TRANSFORM_ERRORS = (DomainViolation, NewtonDivergence, DegenerateGenerator)


def transformed_names(n: int) -> List[str]:
    return [f"qt{i}" for i in range(1, n + 1)]


class GeneratingFunction2Point:
    """S(q1..qn, qt1..qtn) generating Φ by p = ∂S/∂q, p̃ = −∂S/∂q̃.

    ``constant_block`` names the block of (q̃, p̃) the generator is expected
    to hold constant along Hamiltonian flows. ``guess`` optionally gives the
    Newton seed for q̃ as fields over (q, p).
    """

    def __init__(
        self,
        n: int,
        S2: ScalarField,
        constant_block: Block = "momentum",
        guess: Optional[Sequence[ScalarField]] = None,
        param_names: Optional[Sequence[str]] = None,
    ):
        if constant_block not in ("momentum", "configuration", "both"):
            raise ValueError(f"unknown block {constant_block!r}")
        self.n = n
        self.S2 = S2
        self.constant_block = constant_block
        self.guess = None if guess is None else tuple(guess)
        self.param_names = tuple(param_names or transformed_names(n))
        if S2.vars != self.vars:
            raise ValueError(f"S2 must be a function of {self.vars}, got {S2.vars}")
        phase = tuple(configuration_names(n) + momentum_names(n))
        for field in self.guess or ():
            if field.vars != phase:
                raise ValueError(f"guess must be a function of {phase}")

    @classmethod
    def from_text(
        cls,
        text: str,
        n: int,
        constant_block: Block = "momentum",
        guess: Optional[Sequence[str]] = None,
    ) -> "GeneratingFunction2Point":
        phase = configuration_names(n) + momentum_names(n)
        return cls(
            n,
            ScalarField.compile(text, configuration_names(n) + transformed_names(n)),
            constant_block,
            None if guess is None else [ScalarField.compile(g, phase) for g in guess],
        )

    @property
    def vars(self) -> tuple:
        return tuple(configuration_names(self.n) + transformed_names(self.n))

    def mixed_hessian(self, q: Vector, qt: Vector) -> np.ndarray:
        """∂²S/∂q^i∂q̃^j."""
        return self.S2.hessian(np.concatenate([q, qt]))[: self.n, self.n :]

    def seed(self, point: Vector) -> Vector:
        if self.guess is None:
            return np.array(point[: self.n], dtype=float)
        return np.array([field.eval(point) for field in self.guess])


def induced_transform(
    g: GeneratingFunction2Point, point: Sequence[float], guess: Optional[Sequence[float]] = None
) -> Vector:
    """
    Apply the canonical map generated by ``g`` to (q, p).

    Args:
        g (GeneratingFunction2Point): The generator.
        point: (q, p).
        guess: Newton seed for q̃; defaults to ``g.seed(point)``.

    Returns:
        Vector: (q̃, p̃) with ∂S/∂q(q, q̃) = p and p̃ = −∂S/∂q̃(q, q̃).

    Raises:
        NewtonDivergence: If q̃ cannot be solved for.
        DomainViolation: If the seed is outside the domain of S.
        DegenerateGenerator: If the mixed Hessian is ill-conditioned at the solution.
    """
    z = np.asarray(point, dtype=float)
    n = g.n
    q, p = z[:n], z[n:]
    seed = g.seed(z) if guess is None else np.asarray(guess, dtype=float)

    def residual(qt: Vector) -> Vector:
        return g.S2.grad(np.concatenate([q, qt]))[:n] - p

    def jacobian(qt: Vector) -> np.ndarray:
        return g.mixed_hessian(q, qt)

    qt = newton_solve(residual, jacobian, seed, index=list(z)).x
    cond = condition_number(g.mixed_hessian(q, qt))
    if cond > settings.CONDITION_LIMIT:
        raise DegenerateGenerator(cond, list(z))
    pt = -g.S2.grad(np.concatenate([q, qt]))[n:]
    return np.concatenate([qt, pt])


class CanonicalMap:
    """A map (q, p) ↦ (q̃, p̃) on T*Q, usually induced by a generator."""

    def __init__(self, n: int, forward: Callable[[Vector], Vector]):
        self.n = n
        self._forward = forward

    @classmethod
    def from_generator(cls, g: GeneratingFunction2Point) -> "CanonicalMap":
        return cls(g.n, lambda z: induced_transform(g, z))

    @classmethod
    def from_callable(cls, n: int, fn: Callable[[Vector], Any]) -> "CanonicalMap":
        return cls(n, lambda z: np.asarray(fn(z), dtype=float))

    def __call__(self, point: Sequence[float]) -> Vector:
        return self._forward(np.asarray(point, dtype=float))


def symplectomorphism_defect(
    phi: CanonicalMap,
    samples: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    step: Optional[float] = None,
) -> ResidualReport:
    """max ‖JᵀΩJ − Ω‖ with J the central finite-difference Jacobian of ``phi``.

    Samples where the map cannot be evaluated are skipped.
    """
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    omega = canonical_matrix(phi.n)

    def defect(z: Vector) -> float:
        J = fd_jacobian(phi, z, step)
        return max_abs(J.T @ omega @ J - omega)

    values = map_samples(defect, as_points(samples), catch=TRANSFORM_ERRORS)
    return summarize("symplectomorphism_defect", samples, drop_errors(values), tolerance)


def equilibrium_defect(
    g: GeneratingFunction2Point,
    sys: HamiltonianSystem,
    starts: Sequence[Sequence[float]],
    T: float,
    dt: float = 1e-2,
    asserted_block: Optional[Block] = None,
    tolerance: Optional[float] = None,
    samples_per_flow: int = 50,
) -> EquilibriumReport:
    """
    Check that the transform generated by ``g`` brings Z_H to equilibrium.

    Each start (q, p) is flowed by RK4 for time T; along the trajectory the
    transformed coordinates are recomputed, each Newton solve seeded with
    the previous q̃, and compared with their value at t = 0.

    Args:
        g (GeneratingFunction2Point): The generator.
        sys (HamiltonianSystem): The system to equilibrate.
        starts: Initial points (q, p).
        T (float): Horizon.
        dt (float): RK4 step.
        asserted_block (str): Block required to stay constant; defaults to
            ``g.constant_block``.
        tolerance (float): Threshold on the asserted drifts.
        samples_per_flow (int): States inspected per trajectory.

    Returns:
        EquilibriumReport: Asserted drifts as defects; both drifts in details.
    """
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    block = g.constant_block if asserted_block is None else asserted_block
    n = g.n
    Z = hamiltonian_vector_field(sys)
    momentum: List[Optional[float]] = []
    configuration: List[Optional[float]] = []
    notes: List[str] = []
    outside = 0
    for i, z0 in enumerate(as_points(starts)):
        try:
            reference = induced_transform(g, z0)
        except TRANSFORM_ERRORS as exc:
            notes.append(f"start {i}: transform undefined ({type(exc).__name__})")
            momentum.append(None)
            configuration.append(None)
            continue
        try:
            trajectory = flow_rk4(Z, z0, T, dt, estimate_error=False)
        except DomainViolation as exc:
            trajectory = exc.partial
            notes.append(f"start {i}: flow stopped at t={exc.time:.6g}")
        stride = max(1, (len(trajectory.states) - 1) // samples_per_flow)
        seed = reference[:n]
        drift_p = drift_q = 0.0
        samples = trajectory.states[::stride][1:]
        lost = 0
        for z in samples:
            try:
                image = induced_transform(g, z, guess=seed)
            except TRANSFORM_ERRORS:
                lost += 1
                continue
            drift_q = max(drift_q, max_abs(image[:n] - reference[:n]))
            drift_p = max(drift_p, max_abs(image[n:] - reference[n:]))
            seed = image[:n]
        outside += lost
        if lost > settings.SKIP_FRACTION_LIMIT * len(samples):
            notes.append(f"start {i}: transform lost at {lost} of {len(samples)} flow samples")
            momentum.append(None)
            configuration.append(None)
            continue
        momentum.append(drift_p)
        configuration.append(drift_q)

    if outside:
        notes.append(f"{outside} flow samples where the transform could not be solved")
    defects: Dict[str, ResidualReport] = {}
    if block in ("momentum", "both"):
        defects["momentum"] = summarize("momentum_drift", starts, momentum, tolerance)
    else:
        notes.append("momentum block not asserted")
    if block in ("configuration", "both"):
        defects["configuration"] = summarize(
            "configuration_drift", starts, configuration, tolerance
        )
    else:
        notes.append("configuration block not asserted")
    return EquilibriumReport(
        op="equilibrium_defect",
        defects=defects,
        details={
            "asserted_block": block,
            "momentum_drift": max((v for v in momentum if v is not None), default=None),
            "configuration_drift": max(
                (v for v in configuration if v is not None), default=None
            ),
            "n_outside_chart": outside,
        },
        notes=notes,
    )


def _check_nondegenerate(
    g: GeneratingFunction2Point, check_points: Optional[Sequence[Sequence[float]]]
) -> None:
    """Raise DegenerateGenerator at the worst-conditioned (q, q̃) point."""
    if check_points is None:
        return
    worst, worst_point = 0.0, None
    for point in as_points(check_points):
        try:
            cond = condition_number(g.mixed_hessian(point[: g.n], point[g.n :]))
        except DomainViolation:
            continue
        if cond > worst:
            worst, worst_point = cond, point
    if worst > settings.CONDITION_LIMIT:
        logger.error(f"degenerate generator at {list(worst_point)}")
        raise DegenerateGenerator(worst, list(worst_point))


def complete_to_canonical(
    fam: ParamFamily,
    check_points: Optional[Sequence[Sequence[float]]] = None,
) -> GeneratingFunction2Point:
    """
    Read a complete solution S(q, λ) as a generator S(q, q̃) with λ ≡ q̃.

    Args:
        fam (ParamFamily): Family built from a generating scalar.
        check_points: Optional (q, λ) nodes where the mixed Hessian must be
            nondegenerate.

    Returns:
        GeneratingFunction2Point: Asserts the configuration block, since q̃
        equals the conserved parameters.

    Raises:
        DegenerateGenerator: If the mixed Hessian is ill-conditioned at a node.
    """
    if fam.generator is None:
        raise ValueError("the family carries no generating scalar")
    n = fam.base_dim
    if fam.n_params != n:
        raise ValueError("a type-1 generator needs as many parameters as coordinates")
    mapping = dict(zip(fam.param_names, transformed_names(n)))
    S2 = fam.generator.rename(mapping, configuration_names(n) + transformed_names(n))
    g = GeneratingFunction2Point(n, S2, "configuration", param_names=fam.param_names)
    _check_nondegenerate(g, check_points)
    return g


def canonical_to_complete(
    g: GeneratingFunction2Point,
    check_points: Optional[Sequence[Sequence[float]]] = None,
) -> ParamFamily:
    """Freeze q̃ = λ: the family α_λ = d_q S(·, λ)."""
    _check_nondegenerate(g, check_points)
    names = configuration_names(g.n)
    mapping = dict(zip(transformed_names(g.n), g.param_names))
    S = g.S2.rename(mapping, names + list(g.param_names))
    return ParamFamily.from_generator(S, names, g.param_names)
