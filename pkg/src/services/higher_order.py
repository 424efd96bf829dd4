"""Higher-order Lagrangian systems on T^kQ: total derivatives, Ostrogradsky
momenta and energy, the Euler-Lagrange flow and the order-k HJ residuals."""

from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import SingularLegendre, UnsupportedOrder
from src.logger import get_logger
from src.models.reports import FamilyReport, HigherHJReport, ResidualReport
from src.services.dynamics import FlowResult, ParamFamily, VectorFieldSection, flow_rk4
from src.services.exprcore import ScalarField
from src.services.exprcore.nodes import Expression, Var
from src.services.exprcore.symbolic import ZERO, add, differentiate, mul, sub
from src.services.hamiltonian_hj import check_family_nodes
from src.services.numerics import condition_number
from src.utils.helpers import as_points, map_samples, max_abs, split_columns, summarize

logger = get_logger(__name__)

Vector = np.ndarray
SUPPORTED_ORDERS = (1, 2, 3)
PARAMETER_COUNT_NOTE = (
    "parameters counted from the fiber dimension k*n of the jet projection"
)


class JetChart:
    """Coordinates q{i}_{A} (derivative order i, component A) up to ``order``,
    listed order by order."""

    def __init__(self, n: int, order: int):
        if order < 0:
            raise ValueError("jet order must be non-negative")
        self.n = n
        self.order = order

    def block(self, i: int) -> List[str]:
        return [f"q{i}_{a}" for a in range(1, self.n + 1)]

    @property
    def names(self) -> List[str]:
        return [name for i in range(self.order + 1) for name in self.block(i)]

    @property
    def dim(self) -> int:
        return (self.order + 1) * self.n


def chart_order(field: ScalarField, n: int) -> int:
    order, rest = divmod(len(field.vars), n)
    if rest or field.vars != tuple(JetChart(n, order - 1).names):
        raise ValueError(f"{field!r} is not defined on a jet chart of dimension {n}")
    return order - 1


def lift(field: ScalarField, n: int, order: int) -> ScalarField:
    """Re-express ``field`` on the jet chart of the given (higher) order."""
    return field.with_vars(JetChart(n, order).names)


def d_T(field: ScalarField, n: int) -> ScalarField:
    """Total derivative Σ_i Σ_A q_{i+1}^A ∂f/∂q_i^A, one jet order up."""
    order = chart_order(field, n)
    upper = JetChart(n, order + 1)
    total: Expression = ZERO
    for i in range(order + 1):
        for name, next_name in zip(upper.block(i), upper.block(i + 1)):
            partial = differentiate(field.expression, name)
            total = add(total, mul(Var(next_name), partial))
    return ScalarField(total, upper.names)


def total_derivative(field: ScalarField, n: int, times: int = 1) -> ScalarField:
    for _ in range(times):
        field = d_T(field, n)
    return field


class HigherLagrangian:
    """L on the order-k jet chart, k in {1, 2, 3}.

    Momenta, energy and Euler-Lagrange expressions are built symbolically on
    first use and shared afterwards.
    """

    def __init__(self, n: int, k: int, L: ScalarField):
        if k not in SUPPORTED_ORDERS:
            raise UnsupportedOrder(k)
        self.n = n
        self.k = k
        if L.vars != tuple(JetChart(n, k).names):
            raise ValueError(f"L must be a function of {JetChart(n, k).names}")
        self.L = L

    @classmethod
    def from_text(cls, text: str, n: int, k: int) -> "HigherLagrangian":
        if k not in SUPPORTED_ORDERS:
            raise UnsupportedOrder(k)
        return cls(n, k, ScalarField.compile(text, JetChart(n, k).names))

    @property
    def base_chart(self) -> JetChart:
        """Order k−1: the base of the jet sections."""
        return JetChart(self.n, self.k - 1)

    @property
    def phase_chart(self) -> JetChart:
        """Order 2k−1: the phase space of the Euler-Lagrange flow."""
        return JetChart(self.n, 2 * self.k - 1)

    @cached_property
    def momenta(self) -> List[List[ScalarField]]:
        """p[i][A] = Σ_{l=0}^{k−i−1} (−1)^l d_T^l(∂L/∂q_{i+1+l}^A) on the order-(2k−1) chart."""
        k, n = self.k, self.n
        chart = JetChart(n, k)
        top = 2 * k - 1
        momenta: List[List[ScalarField]] = []
        for i in range(k):
            row = []
            for a in range(n):
                total: Expression = ZERO
                for l in range(k - i):
                    partial = self.L.partial(chart.block(i + 1 + l)[a])
                    term = lift(total_derivative(partial, n, l), n, top).expression
                    total = add(total, term) if l % 2 == 0 else sub(total, term)
                row.append(ScalarField(total, JetChart(n, top).names))
            momenta.append(row)
        return momenta

    @property
    def flat_momenta(self) -> List[ScalarField]:
        return [p for row in self.momenta for p in row]

    @cached_property
    def energy(self) -> ScalarField:
        """E_L = Σ_{r=1}^{k} q_r^A p_A^{r−1} − L on the order-(2k−1) chart."""
        chart = self.phase_chart
        total: Expression = ZERO
        for r in range(1, self.k + 1):
            for name, p in zip(chart.block(r), self.momenta[r - 1]):
                total = add(total, mul(Var(name), p.expression))
        total = sub(total, lift(self.L, self.n, 2 * self.k - 1).expression)
        return ScalarField(total, chart.names)

    @cached_property
    def euler_lagrange(self) -> List[ScalarField]:
        """EL_A = Σ_{i=0}^{k} (−1)^i d_T^i(∂L/∂q_i^A) on the order-2k chart."""
        n, k = self.n, self.k
        chart = JetChart(n, k)
        top = 2 * k
        fields = []
        for a in range(n):
            total: Expression = ZERO
            for i in range(k + 1):
                partial = self.L.partial(chart.block(i)[a])
                term = lift(total_derivative(partial, n, i), n, top).expression
                total = add(total, term) if i % 2 == 0 else sub(total, term)
            fields.append(ScalarField(total, JetChart(n, top).names))
        return fields

    @cached_property
    def _leading(self) -> List[List[ScalarField]]:
        highest = JetChart(self.n, 2 * self.k).block(2 * self.k)
        return [[field.partial(name) for name in highest] for field in self.euler_lagrange]

    def highest_derivative(self, state: Sequence[float]) -> Vector:
        """Solve EL = 0 for q_{2k} at a state on the order-(2k−1) chart.

        Raises:
            SingularLegendre: If the leading coefficient matrix is ill-conditioned.
        """
        extended = np.concatenate([np.asarray(state, dtype=float), np.zeros(self.n)])
        offset = np.array([field.eval(extended) for field in self.euler_lagrange])
        matrix = np.array([[f.eval(extended) for f in row] for row in self._leading])
        cond = condition_number(matrix)
        if cond > settings.CONDITION_LIMIT:
            raise SingularLegendre(cond, list(extended[:-self.n]))
        return np.linalg.solve(matrix, -offset)


def ostrogradsky_momenta(L: HigherLagrangian) -> List[List[ScalarField]]:
    return L.momenta


def higher_energy(L: HigherLagrangian) -> ScalarField:
    return L.energy


def higher_el_field(L: HigherLagrangian) -> VectorFieldSection:
    """(q_0..q_{2k−1})' = (q_1..q_{2k−1}, q_{2k}) with q_{2k} from the EL equations."""
    n = L.n

    def evaluator(state: Vector) -> Vector:
        return np.concatenate([state[n:], L.highest_derivative(state)])

    return VectorFieldSection(L.phase_chart.names, evaluator=evaluator)


def higher_el_flow(
    L: HigherLagrangian,
    x0: Sequence[float],
    T: float,
    dt: float,
    estimate_error: bool = True,
) -> FlowResult:
    """
    Integrate the order-2k Euler-Lagrange equations with RK4.

    Args:
        L (HigherLagrangian): Regular Lagrangian.
        x0: Initial jet (q_0..q_{2k−1}), order-major.
        T (float): Final time.
        dt (float): Step.
        estimate_error (bool): Estimate per-step errors.

    Returns:
        FlowResult: Trajectory on the order-(2k−1) chart.

    Raises:
        SingularLegendre: Where ∂²L/∂q_k∂q_k is ill-conditioned.
    """
    if len(x0) != L.phase_chart.dim:
        raise ValueError(f"expected {L.phase_chart.dim} initial values")
    return flow_rk4(higher_el_field(L), x0, T, dt, estimate_error=estimate_error)


class JetSection:
    """s: (q_0..q_{k−1}) ↦ (q_k..q_{2k−1}), components order-major."""

    def __init__(self, n: int, k: int, components: Sequence[ScalarField]):
        self.n = n
        self.k = k
        self.base_names = tuple(JetChart(n, k - 1).names)
        self.components = tuple(components)
        if len(self.components) != k * n:
            raise ValueError(f"a jet section needs {k * n} components")
        for field in self.components:
            if field.vars != self.base_names:
                raise ValueError(f"section component over {field.vars}, expected {self.base_names}")

    @classmethod
    def from_expressions(cls, texts: Sequence[str], n: int, k: int) -> "JetSection":
        names = JetChart(n, k - 1).names
        return cls(n, k, [ScalarField.compile(text, names) for text in texts])

    def __call__(self, x: Sequence[float]) -> Vector:
        return np.array([field.eval(x) for field in self.components])

    def jacobian(self, x: Sequence[float]) -> np.ndarray:
        return np.array([field.grad(x) for field in self.components])


def _section_defects(
    L: HigherLagrangian, x: Vector, fiber: Vector, Ds: np.ndarray
) -> Tuple[float, float, float, Vector]:
    """Tangency, closedness of s*θ_L, energy defect, and momenta on Im s."""
    kn = L.k * L.n
    y = np.concatenate([x, fiber])
    velocity = np.concatenate([y[L.n :], L.highest_derivative(y)])
    tangency = max_abs(velocity[kn:] - Ds @ velocity[:kn])

    momenta = L.flat_momenta
    G = np.array([p.grad(y) for p in momenta])
    J_beta = G[:, :kn] + G[:, kn:] @ Ds
    energy_grad = L.energy.grad(y)
    energy = max_abs(energy_grad[:kn] + Ds.T @ energy_grad[kn:])
    values = np.array([p.eval(y) for p in momenta])
    return tangency, max_abs(J_beta - J_beta.T), energy, values


def higher_hj_residuals(
    L: HigherLagrangian,
    s: JetSection,
    samples: Sequence[Sequence[float]],
    S: Optional[ScalarField] = None,
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> HigherHJReport:
    """
    Defects of the order-k Lagrangian HJ problem for a jet section s.

    Args:
        L (HigherLagrangian): The Lagrangian.
        s (JetSection): Candidate section.
        samples: Points of the order-(k−1) chart.
        S (ScalarField): Optional generating function over the order-(k−1)
            chart for the system ∂S/∂q_i^A = p_A^i∘s.
        tolerance (float): Threshold.
        keep_samples (bool): Keep per-sample values.

    Returns:
        HigherHJReport: ``tangency`` (fiber part of X_L minus Ds applied to
        its base part), ``closedness`` of s*θ_L, ``energy`` (‖∇(E_L∘s)‖) and,
        with S, ``pde``.
    """
    if (s.n, s.k) != (L.n, L.k):
        raise ValueError("section and Lagrangian have different n or k")
    if S is not None and S.vars != s.base_names:
        raise ValueError(f"S must be a function of {s.base_names}")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance

    def defects(x: Vector) -> Tuple[float, ...]:
        tangency, closedness, energy, momenta = _section_defects(L, x, s(x), s.jacobian(x))
        values = (tangency, closedness, energy)
        if S is not None:
            values += (max_abs(S.grad(x) - momenta),)
        return values

    names = ["tangency", "closedness", "energy"] + ([] if S is None else ["pde"])
    columns = split_columns(map_samples(defects, as_points(samples)), len(names))
    return HigherHJReport(
        op="higher_hj_residuals",
        defects={
            name: summarize(name, samples, column, tolerance, keep_samples)
            for name, column in zip(names, columns)
        },
    )


def higher_complete_check(
    L: HigherLagrangian,
    fam: ParamFamily,
    grid: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> FamilyReport:
    """
    Check a kn-parameter family of jet sections s_λ.

    Args:
        L (HigherLagrangian): The Lagrangian.
        fam (ParamFamily): Section family over the order-(k−1) chart with
            k*n parameters.
        grid: Nodes (x, λ).
        tolerance (float): Threshold.
        keep_samples (bool): Keep per-node values.

    Returns:
        FamilyReport: ``tangency``, ``closedness`` and ``energy`` per node and
        ``min_abs_det`` of ∂s/∂λ.

    Raises:
        SingularFamily: If det ∂s/∂λ nearly vanishes at some node.
    """
    kn = L.k * L.n
    if not fam.section or fam.base_names != tuple(L.base_chart.names) or fam.n_params != kn:
        raise ValueError(
            f"expected a section family over {L.base_chart.names} with {kn} parameters"
        )
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    nodes = as_points(grid)

    def defects(node: Vector, A: np.ndarray, _: np.ndarray) -> Tuple[float, float, float]:
        x, _lam = fam.split(node)
        fiber = fam.full_map(node)[kn:]
        return _section_defects(L, x, fiber, A)[:3]

    results, details = check_family_nodes(fam, nodes, defects)
    columns = split_columns(results, 3)
    reports: Dict[str, ResidualReport] = {
        name: summarize(name, nodes, column, tolerance, keep_samples)
        for name, column in zip(["tangency", "closedness", "energy"], columns)
    }
    return FamilyReport(
        op="higher_complete_check",
        defects=reports,
        details=details,
        notes=[PARAMETER_COUNT_NOTE],
    )
