"""Dynamical systems on Euclidean charts: flows and the slicing framework."""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import DomainViolation, NewtonDivergence, SingularFamily
from src.logger import get_logger
from src.models.reports import FamilyReport, ResidualReport
from src.services.exprcore import Dual, ScalarField
from src.services.numerics import canonical_matrix, newton_solve
from src.utils.helpers import map_samples, summarize

logger = get_logger(__name__)

Vector = np.ndarray
SURJECTIVITY_NOTE = (
    "surjectivity of the family map is not checked; only local-diffeomorphism "
    "evidence (nonsingular Jacobian on the grid) is reported"
)


class ChartMap:
    """A map between Euclidean charts.

    Either symbolic (one ScalarField per output coordinate, all over
    ``in_names``) or numerical (``evaluator`` plus ``jacobian_fn``).
    """

    def __init__(
        self,
        in_names: Sequence[str],
        out_dim: int,
        components: Optional[Sequence[ScalarField]] = None,
        evaluator: Optional[Callable[[Vector], Vector]] = None,
        jacobian_fn: Optional[Callable[[Vector], np.ndarray]] = None,
    ):
        self.in_names = tuple(in_names)
        self.out_dim = out_dim
        self.components = None if components is None else tuple(components)
        if self.components is None and evaluator is None:
            raise ValueError("a chart map needs components or an evaluator")
        if self.components is not None:
            if len(self.components) != out_dim:
                raise ValueError(f"expected {out_dim} components, got {len(self.components)}")
            for component in self.components:
                if component.vars != self.in_names:
                    raise ValueError(
                        f"component over {component.vars}, expected {self.in_names}"
                    )
        self._evaluator = evaluator
        self._jacobian_fn = jacobian_fn

    @classmethod
    def from_expressions(cls, texts: Sequence[str], in_names: Sequence[str]) -> "ChartMap":
        return cls(
            in_names, len(texts), [ScalarField.compile(t, in_names) for t in texts]
        )

    @property
    def in_dim(self) -> int:
        return len(self.in_names)

    def evaluate(self, x: Any) -> Vector:
        if self._evaluator is not None:
            return np.asarray(self._evaluator(np.asarray(x, dtype=float)), dtype=float)
        return np.array([c.eval(x) for c in self.components])

    __call__ = evaluate

    def jacobian(self, x: Any) -> np.ndarray:
        if self._jacobian_fn is not None:
            return np.asarray(self._jacobian_fn(np.asarray(x, dtype=float)), dtype=float)
        if self.components is None:
            raise ValueError("this map has no Jacobian")
        return np.array([c.grad(x) for c in self.components]).reshape(
            self.out_dim, self.in_dim
        )

    def duals(self, x: Any) -> List[Dual]:
        """Output coordinates as dual numbers seeded on the input chart."""
        values = self.evaluate(x)
        jac = self.jacobian(x)
        return [Dual(float(values[j]), jac[j].copy()) for j in range(self.out_dim)]


class VectorFieldSection(ChartMap):
    """A vector field on a chart. ``canonical`` marks Hamiltonian fields
    built from a Hamiltonian (required by :func:`flow_midpoint`)."""

    def __init__(
        self,
        names: Sequence[str],
        components: Optional[Sequence[ScalarField]] = None,
        evaluator: Optional[Callable[[Vector], Vector]] = None,
        jacobian_fn: Optional[Callable[[Vector], np.ndarray]] = None,
        canonical: bool = False,
        hamiltonian: Any = None,
    ):
        super().__init__(names, len(names), components, evaluator, jacobian_fn)
        self.canonical = canonical
        self.hamiltonian = hamiltonian

    @classmethod
    def from_expressions(cls, texts: Sequence[str], names: Sequence[str]) -> "VectorFieldSection":
        if len(texts) != len(names):
            raise ValueError("a vector field needs one component per coordinate")
        return cls(names, [ScalarField.compile(t, names) for t in texts])

    @property
    def dim(self) -> int:
        return self.in_dim

    @property
    def names(self) -> Tuple[str, ...]:
        return self.in_names


@dataclass(frozen=True)
class FlowResult:
    times: np.ndarray
    states: np.ndarray
    step_errors: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> Vector:
        return self.states[-1]

    @property
    def max_step_error(self) -> float:
        finite = self.step_errors[np.isfinite(self.step_errors)]
        return float(finite.max()) if finite.size else float("nan")


class ParamFamily:
    """Sections indexed by parameters: (q, λ) ↦ α_λ(q).

    ``components`` are ScalarFields over ``base_names + param_names``. For a
    *section family* they give only the fiber coordinates and the base
    coordinates pass through, so the full map is (q, λ) ↦ (q, α_λ(q)).
    ``generator`` optionally holds a scalar S(q, λ) with α_λ = d_q S.
    ``vector_components`` optionally hold the vector fields X_λ(q).
    """

    def __init__(
        self,
        base_names: Sequence[str],
        param_names: Sequence[str],
        components: Sequence[ScalarField],
        section: bool = False,
        box: Optional[Mapping[str, Tuple[float, float, int]]] = None,
        generator: Optional[ScalarField] = None,
        vector_components: Optional[Sequence[ScalarField]] = None,
    ):
        self.base_names = tuple(base_names)
        self.param_names = tuple(param_names)
        self.section = section
        self.box = dict(box or {})
        self.generator = generator
        self.components = tuple(components)
        self.vector_components = (
            None if vector_components is None else tuple(vector_components)
        )
        for field in (*self.components, *(self.vector_components or ())):
            if field.vars != self.vars:
                raise ValueError(f"family component over {field.vars}, expected {self.vars}")
        self.full_map = ChartMap(
            self.vars,
            self.out_dim,
            [*self._base_projections(), *self.components],
        )

    @classmethod
    def from_generator(
        cls,
        generator: ScalarField,
        base_names: Sequence[str],
        param_names: Sequence[str],
        box: Optional[Mapping[str, Tuple[float, float, int]]] = None,
    ) -> "ParamFamily":
        components = [generator.partial(name) for name in base_names]
        return cls(base_names, param_names, components, True, box, generator)

    def _base_projections(self) -> List[ScalarField]:
        if not self.section:
            return []
        return [ScalarField.compile(name, self.vars) for name in self.base_names]

    @property
    def vars(self) -> Tuple[str, ...]:
        return self.base_names + self.param_names

    @property
    def base_dim(self) -> int:
        return len(self.base_names)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def out_dim(self) -> int:
        return len(self.components) + (self.base_dim if self.section else 0)

    def _values(self, lam: Sequence[float]) -> Dict[str, float]:
        if len(lam) != self.n_params:
            raise ValueError(f"expected {self.n_params} parameter values")
        return {name: float(v) for name, v in zip(self.param_names, lam)}

    def fiber_slice(self, lam: Sequence[float]) -> List[ScalarField]:
        values = self._values(lam)
        return [c.substitute(values, self.base_names) for c in self.components]

    def slice(self, lam: Sequence[float]) -> ChartMap:
        """The section for a fixed λ, as a map on the base chart."""
        values = self._values(lam)
        fields = [f.substitute(values, self.base_names) for f in self.full_map.components]
        return ChartMap(self.base_names, self.out_dim, fields)

    def generator_slice(self, lam: Sequence[float]) -> Optional[ScalarField]:
        if self.generator is None:
            return None
        return self.generator.substitute(self._values(lam), self.base_names)

    def vector_slice(self, lam: Sequence[float]) -> Optional[VectorFieldSection]:
        if self.vector_components is None:
            return None
        values = self._values(lam)
        return VectorFieldSection(
            self.base_names,
            [c.substitute(values, self.base_names) for c in self.vector_components],
        )

    def split(self, node: Sequence[float]) -> Tuple[Vector, Vector]:
        node = np.asarray(node, dtype=float)
        return node[: self.base_dim], node[self.base_dim :]

    def invert(self, q: Vector, fiber: Vector, seed: Vector, index: Any = None) -> Vector:
        """Solve α_λ(q) = fiber for λ by Newton from ``seed``.

        Raises:
            NewtonDivergence: When ``(q, fiber)`` is outside the family's chart.
        """
        n = self.base_dim

        def residual(lam: Vector) -> Vector:
            node = np.concatenate([q, lam])
            return np.array([c.eval(node) for c in self.components]) - fiber

        def jacobian(lam: Vector) -> np.ndarray:
            node = np.concatenate([q, lam])
            return np.array([c.grad(node)[n:] for c in self.components])

        return newton_solve(residual, jacobian, seed, index=index).x


# integrators -----------------------------------------------------------------


def _time_grid(t0: float, t_end: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < t0:
        raise ValueError("t_end must not precede t0")
    n = int(math.ceil((t_end - t0) / dt - 1e-9)) if t_end > t0 else 0
    if n == 0:
        return np.array([t0], dtype=float)
    times = t0 + (t_end - t0) / n * np.arange(n + 1)
    times[-1] = t_end
    return times


def _integrate(
    step: Callable[[Vector, float, int], Vector],
    order: int,
    x0: Any,
    t0: float,
    t_end: float,
    dt: float,
    estimate_error: bool,
) -> FlowResult:
    times = _time_grid(t0, t_end, dt)
    states = np.empty((len(times), np.size(x0)))
    states[0] = np.asarray(x0, dtype=float)
    errors = np.full(len(times) - 1, np.nan)
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        x = states[i]
        try:
            states[i + 1] = step(x, h, i)
            if estimate_error:
                half = step(step(x, h / 2, i), h / 2, i)
                errors[i] = np.max(np.abs(half - states[i + 1])) / (2**order - 1)
        except DomainViolation as exc:
            exc.time = float(times[i])
            exc.partial = FlowResult(times[: i + 1], states[: i + 1].copy(), errors[:i])
            logger.debug(f"flow left the domain at t={times[i]:.6g}")
            raise
    return FlowResult(times, states, errors)


def flow_rk4(
    Z: VectorFieldSection,
    x0: Any,
    t_end: float,
    dt: float,
    t0: float = 0.0,
    estimate_error: bool = True,
) -> FlowResult:
    """
    Classical fixed-step fourth-order Runge-Kutta integration of ``Z``.

    The step size is ``(t_end - t0) / ceil((t_end - t0) / dt)`` so the last
    sample lands on ``t_end``. Per-step errors are estimated by comparing the
    full step with two half steps; the full step is the one kept.

    Args:
        Z (VectorFieldSection): Field to integrate.
        x0: Initial state.
        t_end (float): Final time.
        dt (float): Requested step, must be positive.
        t0 (float): Initial time.
        estimate_error (bool): When False, step_errors are NaN.

    Returns:
        FlowResult: Sampled trajectory.

    Raises:
        DomainViolation: With ``time`` and ``partial`` filled in.
    """

    def step(x: Vector, h: float, _: int) -> Vector:
        k1 = Z(x)
        k2 = Z(x + 0.5 * h * k1)
        k3 = Z(x + 0.5 * h * k2)
        k4 = Z(x + h * k3)
        return x + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    return _integrate(step, 4, x0, t0, t_end, dt, estimate_error)


def flow_midpoint(
    Z: VectorFieldSection,
    x0: Any,
    t_end: float,
    dt: float,
    t0: float = 0.0,
    estimate_error: bool = True,
) -> FlowResult:
    """Implicit midpoint rule for canonical fields, one Newton solve per step.

    Raises:
        ValueError: If ``Z`` is not a canonical (Hamiltonian) field.
        NewtonDivergence: With the step index and the last residual.
    """
    if not Z.canonical:
        raise ValueError("flow_midpoint needs a canonical field from hamiltonian_vector_field")
    identity = np.eye(Z.dim)

    def step(x: Vector, h: float, index: int) -> Vector:
        def residual(y: Vector) -> Vector:
            return y - x - h * Z(0.5 * (x + y))

        def jacobian(y: Vector) -> np.ndarray:
            return identity - 0.5 * h * Z.jacobian(0.5 * (x + y))

        return newton_solve(residual, jacobian, x + h * Z(x), index=index).x

    return _integrate(step, 2, x0, t0, t_end, dt, estimate_error)


# slicing ---------------------------------------------------------------------


def _check_dims(alpha: ChartMap, X: VectorFieldSection, Z: VectorFieldSection) -> None:
    if alpha.in_dim != X.dim or alpha.out_dim != Z.dim:
        raise ValueError(
            f"inconsistent dimensions: alpha {alpha.in_dim}->{alpha.out_dim}, "
            f"X on {X.dim}, Z on {Z.dim}"
        )


def slicing_residual(
    alpha: ChartMap,
    X: VectorFieldSection,
    Z: VectorFieldSection,
    samples: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> ResidualReport:
    """Residual r(x) = Jα(x)·X(x) − Z(α(x)) of the slicing equation."""
    _check_dims(alpha, X, Z)
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance

    def norm(x: Vector) -> float:
        r = alpha.jacobian(x) @ X(x) - Z(alpha(x))
        return float(np.max(np.abs(r)))

    values = map_samples(norm, [np.asarray(s, dtype=float) for s in samples])
    return summarize(
        "slicing_residual",
        samples,
        [None if isinstance(v, Exception) else v for v in values],
        tolerance,
        keep_samples,
    )


def presymplectic_slicing_residual(
    alpha: ChartMap,
    X: VectorFieldSection,
    hamiltonian: Any,
    samples: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> ResidualReport:
    """Hamiltonian form of the slicing equation, r = i(X)(α*ω) − d(α*H).

    ``alpha`` maps into T*Q with (q, p) ordering; ``hamiltonian`` is anything
    with a ``grad`` method over (q, p).
    """
    if alpha.in_dim != X.dim or alpha.out_dim % 2:
        raise ValueError("alpha must map the domain of X into a (q, p) chart")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    omega = canonical_matrix(alpha.out_dim // 2)

    def norm(x: Vector) -> float:
        J = alpha.jacobian(x)
        pulled = J.T @ omega @ J
        r = pulled.T @ X(x) - J.T @ hamiltonian.grad(alpha(x))
        return float(np.max(np.abs(r)))

    values = map_samples(norm, [np.asarray(s, dtype=float) for s in samples])
    return summarize(
        "presymplectic_slicing_residual",
        samples,
        [None if isinstance(v, Exception) else v for v in values],
        tolerance,
        keep_samples,
    )


def complete_slicing_check(
    fam: ParamFamily,
    Z: VectorFieldSection,
    grid: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> FamilyReport:
    """
    Check that a parameter family is a complete slicing of ``Z``.

    Args:
        fam (ParamFamily): The family ᾱ(q, λ).
        Z (VectorFieldSection): Field on P.
        grid: Nodes (q, λ) over base and parameter coordinates.
        tolerance (float): Residual tolerance.
        keep_samples (bool): Keep per-node residuals.

    Returns:
        FamilyReport: ``slicing`` residual over all nodes and, in details,
        the smallest |det| of the Jacobian of (q, λ) ↦ ᾱ(q, λ).

    Raises:
        SingularFamily: At the node of smallest |det| if it is below
            ``settings.SINGULAR_DET``.
    """
    if fam.base_dim + fam.n_params != Z.dim or fam.out_dim != Z.dim:
        raise ValueError("base and parameter dimensions must add up to dim P")
    if fam.vector_components is None and not fam.section:
        raise ValueError("a non-section family needs its vector fields X_λ")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    nodes = [np.asarray(node, dtype=float) for node in grid]
    n = fam.base_dim

    def evaluate(node: Vector) -> Tuple[float, float]:
        J = fam.full_map.jacobian(node)
        det = abs(float(np.linalg.det(J)))
        image = fam.full_map(node)
        if fam.vector_components is not None:
            X = np.array([c.eval(node) for c in fam.vector_components])
        else:
            X = Z(image)[:n]
        r = J[:, :n] @ X - Z(image)
        return det, float(np.max(np.abs(r)))

    results = map_samples(evaluate, nodes)
    dets = [(i, r[0]) for i, r in enumerate(results) if not isinstance(r, Exception)]
    if dets:
        worst_index, worst_det = min(dets, key=lambda item: item[1])
        if worst_det < settings.SINGULAR_DET:
            logger.error(f"complete slicing singular at node {list(nodes[worst_index])}")
            raise SingularFamily(nodes[worst_index], worst_det)

    report = summarize(
        "complete_slicing_check",
        nodes,
        [None if isinstance(r, Exception) else r[1] for r in results],
        tolerance,
        keep_samples,
    )
    details: Dict[str, Any] = {"n_params": fam.n_params}
    if dets:
        details["min_abs_det"] = worst_det
        details["argmin_det_node"] = [float(v) for v in nodes[worst_index]]
    return FamilyReport(
        op="complete_slicing_check",
        defects={"slicing": report},
        details=details,
        notes=[SURJECTIVITY_NOTE],
    )


@dataclass(frozen=True)
class DriftResult:
    drifts: List[Optional[float]]
    n_outside_chart: int
    notes: List[str]


def family_drift(
    fam: ParamFamily,
    nodes: Sequence[Vector],
    flow: Callable[[Vector], FlowResult],
    samples_per_flow: int = 50,
) -> DriftResult:
    """
    Drift of the family parameters along flows started on the family.

    From each node (q, λ) the state ᾱ(q, λ) is flowed with ``flow``; at up to
    ``samples_per_flow`` states the parameters are recovered with
    :meth:`ParamFamily.invert` and compared with λ.

    Args:
        fam (ParamFamily): A section family with as many parameters as fiber
            coordinates.
        nodes: Starting nodes (q, λ).
        flow: Maps an initial state to its trajectory; may raise
            DomainViolation with a partial trajectory attached.
        samples_per_flow (int): Number of states inspected per trajectory.

    Returns:
        DriftResult: Max drift per node (None when the node itself is outside
        the domain) and the number of states where inversion failed.
    """
    n = fam.base_dim
    drifts: List[Optional[float]] = []
    notes: List[str] = []
    outside = 0
    for i, node in enumerate(nodes):
        _, lam0 = fam.split(node)
        try:
            z0 = fam.full_map(node)
        except DomainViolation:
            drifts.append(None)
            continue
        try:
            trajectory = flow(z0)
        except DomainViolation as exc:
            trajectory = exc.partial
            notes.append(f"node {i}: flow stopped at t={exc.time:.6g}")
        except NewtonDivergence as exc:
            logger.warning(f"node {i}: implicit step {exc.index} diverged")
            notes.append(f"node {i}: implicit step {exc.index} diverged")
            drifts.append(None)
            continue
        stride = max(1, (len(trajectory.states) - 1) // samples_per_flow)
        seed, drift = lam0, 0.0
        for z in trajectory.states[::stride]:
            try:
                lam = fam.invert(z[:n], z[n:], seed, (i, [float(v) for v in z]))
            except (NewtonDivergence, DomainViolation):
                outside += 1
                continue
            drift = max(drift, float(np.max(np.abs(lam - lam0))))
            seed = lam
        drifts.append(drift)
    if outside:
        notes.append(f"{outside} flow samples outside the chart of the family")
    return DriftResult(drifts, outside, notes)
