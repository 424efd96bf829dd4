"""First-order field theories on a bundle over an m-dimensional base:
field Legendre map, Lagrangian and De Donder-Weyl HJ residuals, and
method-of-lines evolution of the Hamilton-De Donder-Weyl equations."""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.config import settings
from src.errors import NumericalBlowUp, SingularLegendre, UnsupportedDimension
from src.logger import get_logger
from src.models.reports import DefectSummary, ResidualReport
from src.services.dynamics import VectorFieldSection, flow_rk4
from src.services.exprcore import ScalarField
from src.services.exprcore.nodes import Num, Var
from src.services.exprcore.symbolic import ZERO, add, mul, substitute
from src.services.hamiltonian_hj import HamiltonianSystem
from src.services.numerics import condition_number, newton_solve
from src.utils.helpers import as_points, drop_errors, map_samples, max_abs, split_columns, summarize

logger = get_logger(__name__)

Vector = np.ndarray
SUPPORTED_DIMENSIONS = (1, 2)
PARAMETER_COUNT_NOTE = (
    "complete solutions use m*n parameters; the leaf dimension is informational only"
)


def field_aliases(m: int, n: int) -> Dict[str, str]:
    """Short names accepted in expressions, mapped to canonical coordinates."""
    aliases: Dict[str, str] = {"t": "x1"}
    if m == 2:
        aliases["x"] = "x2"
    if n == 1:
        aliases["y"] = "y1"
        for i, suffix in enumerate(["t", "x"][:m], start=1):
            aliases[f"y{suffix}"] = f"y1_{i}"
            aliases[f"p{suffix}"] = f"p1_{i}"
    return aliases


class FieldChart:
    """Coordinate names for base dimension m and fiber dimension n."""

    def __init__(self, m: int, n: int):
        if m not in SUPPORTED_DIMENSIONS or n not in SUPPORTED_DIMENSIONS:
            raise UnsupportedDimension(m, n)
        self.m = m
        self.n = n

    @property
    def base_names(self) -> List[str]:
        return [f"x{i}" for i in range(1, self.m + 1)]

    @property
    def fiber_names(self) -> List[str]:
        return [f"y{a}" for a in range(1, self.n + 1)]

    @property
    def velocity_names(self) -> List[str]:
        return [f"y{a}_{i}" for a in range(1, self.n + 1) for i in range(1, self.m + 1)]

    @property
    def momentum_names(self) -> List[str]:
        return [f"p{a}_{i}" for a in range(1, self.n + 1) for i in range(1, self.m + 1)]

    @property
    def point_names(self) -> List[str]:
        return self.base_names + self.fiber_names

    @property
    def lagrangian_vars(self) -> Tuple[str, ...]:
        return tuple(self.point_names + self.velocity_names)

    @property
    def hamiltonian_vars(self) -> Tuple[str, ...]:
        return tuple(self.point_names + self.momentum_names)

    def compile(
        self, text: str, variables: Sequence[str], extra: Sequence[str] = ()
    ) -> ScalarField:
        """Compile over ``variables`` (plus ``extra``), accepting the short aliases."""
        aliases = {
            alias: name
            for alias, name in field_aliases(self.m, self.n).items()
            if name in variables
        }
        names = list(variables) + list(extra)
        field = ScalarField.compile(text, names + list(aliases))
        return field.rename(aliases, names)

    def slot(self, a: int, i: int) -> int:
        """Index of y{a+1}_{i+1} among velocities, and of p{a+1}_{i+1} among momenta."""
        return a * self.m + i


class FieldTheory(FieldChart):
    """A theory on coordinates (x^i, y^α) with velocities y{α}_{i} or
    momenta p{α}_{i}, given by a Lagrangian L, a Hamiltonian H or both."""

    def __init__(
        self,
        m: int,
        n: int,
        L: Optional[ScalarField] = None,
        H: Optional[ScalarField] = None,
    ):
        super().__init__(m, n)
        if L is None and H is None:
            raise ValueError("a field theory needs L or H")
        self.L = L
        self.H = H
        if L is not None and L.vars != self.lagrangian_vars:
            raise ValueError(f"L must be a function of {self.lagrangian_vars}")
        if H is not None and H.vars != self.hamiltonian_vars:
            raise ValueError(f"H must be a function of {self.hamiltonian_vars}")

    @classmethod
    def from_text(
        cls, m: int, n: int, L: Optional[str] = None, H: Optional[str] = None
    ) -> "FieldTheory":
        chart = FieldChart(m, n)
        return cls(
            m,
            n,
            None if L is None else chart.compile(L, chart.lagrangian_vars),
            None if H is None else chart.compile(H, chart.hamiltonian_vars),
        )


class FieldHJCandidate:
    """W^i(x, y), i = 1..m, and optionally the jet field ψ^α_i(x, y)."""

    def __init__(
        self,
        theory: FieldTheory,
        W: Sequence[ScalarField],
        psi: Optional[Sequence[ScalarField]] = None,
    ):
        self.theory = theory
        self.W = tuple(W)
        self.psi = None if psi is None else tuple(psi)
        if len(self.W) != theory.m:
            raise ValueError(f"expected {theory.m} components of W")
        if self.psi is not None and len(self.psi) != theory.m * theory.n:
            raise ValueError(f"expected {theory.m * theory.n} components of psi")
        names = tuple(theory.point_names)
        for field in (*self.W, *(self.psi or ())):
            if field.vars != names:
                raise ValueError(f"candidate component over {field.vars}, expected {names}")

    @classmethod
    def from_expressions(
        cls,
        theory: FieldTheory,
        W: Sequence[str],
        psi: Optional[Sequence[str]] = None,
        params: Optional[Mapping[str, float]] = None,
    ) -> "FieldHJCandidate":
        params = dict(params or {})
        names = theory.point_names

        def build(text: str) -> ScalarField:
            field = theory.compile(text, names, list(params))
            return field.substitute(params, names) if params else field

        return cls(theory, [build(w) for w in W], None if psi is None else [build(p) for p in psi])

    def divergence(self) -> ScalarField:
        """Σ_i ∂W^i/∂x^i."""
        total = ZERO
        for name, field in zip(self.theory.base_names, self.W):
            total = add(total, field.partial(name).expression)
        return ScalarField(total, self.theory.point_names)


def _check_regular(theory: FieldTheory, hessian: np.ndarray, point: Vector) -> None:
    k = len(theory.point_names)
    cond = condition_number(hessian[k:, k:])
    if cond > settings.CONDITION_LIMIT:
        raise SingularLegendre(cond, list(point))


def field_legendre(theory: FieldTheory, point: Sequence[float]) -> Vector:
    """
    Momenta p{α}_{i} = ∂L/∂y{α}_{i} at (x, y, v).

    Raises:
        SingularLegendre: If the velocity Hessian of L is ill-conditioned.
    """
    if theory.L is None:
        raise ValueError("the theory has no Lagrangian")
    z = np.asarray(point, dtype=float)
    _, grad, hess = theory.L.derivatives(z)
    _check_regular(theory, hess, z)
    return grad[len(theory.point_names) :]


def field_legendre_inverse(
    theory: FieldTheory, point: Sequence[float], seed: Optional[Sequence[float]] = None
) -> Vector:
    """Velocities v with ∂L/∂v(x, y, v) = p at (x, y, p), by Newton from ``seed``
    (default p)."""
    if theory.L is None:
        raise ValueError("the theory has no Lagrangian")
    z = np.asarray(point, dtype=float)
    k = len(theory.point_names)
    base, p = z[:k], z[k:]

    def residual(v: Vector) -> Vector:
        return theory.L.grad(np.concatenate([base, v]))[k:] - p

    def jacobian(v: Vector) -> np.ndarray:
        return theory.L.hessian(np.concatenate([base, v]))[k:, k:]

    v = newton_solve(residual, jacobian, p if seed is None else seed, index=list(z)).x
    solution = np.concatenate([base, v])
    _check_regular(theory, theory.L.hessian(solution), solution)
    return v


def field_hamiltonian_value(theory: FieldTheory, point: Sequence[float]) -> float:
    """H(x, y, p): the given Hamiltonian, or p·v − L with v = FL⁻¹(p)."""
    z = np.asarray(point, dtype=float)
    if theory.H is not None:
        return float(theory.H.eval(z))
    k = len(theory.point_names)
    v = field_legendre_inverse(theory, z)
    return float(z[k:] @ v - theory.L.eval(np.concatenate([z[:k], v])))


def induced_section(theory: FieldTheory, cand: FieldHJCandidate) -> List[ScalarField]:
    """s{α}_{i} = ∂W^i/∂y^α, ordered like the momenta."""
    return [
        cand.W[i].partial(theory.fiber_names[a])
        for a in range(theory.n)
        for i in range(theory.m)
    ]


def lag_field_hj_residual(
    theory: FieldTheory,
    cand: FieldHJCandidate,
    grid: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> ResidualReport:
    """max |Σ_i ∂W^i/∂x^i + ψ^α_i ∂W^i/∂y^α − L(x, y, ψ)| over grid nodes (x, y)."""
    if theory.L is None or cand.psi is None:
        raise ValueError("the Lagrangian residual needs L and the jet field psi")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    divergence = cand.divergence()
    section = induced_section(theory, cand)

    def residual(node: Vector) -> float:
        psi = np.array([f.eval(node) for f in cand.psi])
        s = np.array([f.eval(node) for f in section])
        return abs(divergence.eval(node) + psi @ s - theory.L.eval(np.concatenate([node, psi])))

    values = map_samples(residual, as_points(grid))
    return summarize("lag_field_hj_residual", grid, drop_errors(values), tolerance, keep_samples)


def hamiltonian_residual_field(theory: FieldTheory, cand: FieldHJCandidate) -> ScalarField:
    """r(x, y) = Σ_i ∂W^i/∂x^i + H(x, y, ∂W/∂y) as a field, for symbolic H."""
    if theory.H is None:
        raise ValueError("the theory has no symbolic Hamiltonian")
    section = induced_section(theory, cand)
    mapping = {name: field.expression for name, field in zip(theory.momentum_names, section)}
    total = add(cand.divergence().expression, substitute(theory.H.expression, mapping))
    return ScalarField(total, theory.point_names)


def ham_field_hj_residual(
    theory: FieldTheory,
    cand: FieldHJCandidate,
    grid: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
    keep_samples: bool = False,
) -> DefectSummary:
    """
    De Donder-Weyl HJ residual Σ_i ∂W^i/∂x^i + H(x, y, ∂W/∂y).

    Args:
        theory (FieldTheory): Theory with H, or with L only (H is then
            evaluated pointwise through the inverse Legendre map).
        cand (FieldHJCandidate): W; ψ is not used.
        grid: Nodes (x, y).
        tolerance (float): Threshold.
        keep_samples (bool): Keep per-node values.

    Returns:
        DefectSummary: ``hj`` residual and, for symbolic H,
        ``fiber_gradient`` = max ‖∇_y r‖. The induced section ∂W/∂y is
        listed in details.
    """
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    section = induced_section(theory, cand)
    nodes = as_points(grid)
    defects: Dict[str, ResidualReport] = {}
    k = theory.m

    if theory.H is not None:
        residual = hamiltonian_residual_field(theory, cand)

        def both(node: Vector) -> Tuple[float, float]:
            return abs(residual.eval(node)), max_abs(residual.grad(node)[k:])

        hj, fiber = split_columns(map_samples(both, nodes), 2)
        defects["hj"] = summarize("ham_field_hj_residual", grid, hj, tolerance, keep_samples)
        defects["fiber_gradient"] = summarize(
            "fiber_gradient", grid, fiber, tolerance, keep_samples
        )
    else:
        divergence = cand.divergence()

        def value(node: Vector) -> float:
            s = np.array([f.eval(node) for f in section])
            H_value = field_hamiltonian_value(theory, np.concatenate([node, s]))
            return abs(divergence.eval(node) + H_value)

        values = map_samples(value, nodes)
        defects["hj"] = summarize(
            "ham_field_hj_residual", grid, drop_errors(values), tolerance, keep_samples
        )

    return DefectSummary(
        op="ham_field_hj_residual",
        defects=defects,
        details={"section": {n: str(f) for n, f in zip(theory.momentum_names, section)}},
        notes=[PARAMETER_COUNT_NOTE] if theory.m > 1 else [],
    )


def legendre_consistency(
    theory: FieldTheory,
    cand: FieldHJCandidate,
    grid: Sequence[Sequence[float]],
    tolerance: Optional[float] = None,
) -> DefectSummary:
    """
    Compare the two HJ residuals under the Legendre correspondence.

    ψ is taken as FL⁻¹(x, y, ∂W/∂y) at each node; the Lagrangian residual of
    (W, ψ) must equal the Hamiltonian residual of W.

    Returns:
        DefectSummary: ``lagrangian``, ``hamiltonian`` and their ``gap``.
    """
    if theory.L is None:
        raise ValueError("the theory has no Lagrangian")
    tolerance = settings.DEFAULT_TOLERANCE if tolerance is None else tolerance
    section = induced_section(theory, cand)
    divergence = cand.divergence()

    def residuals(node: Vector) -> Tuple[float, float, float]:
        s = np.array([f.eval(node) for f in section])
        psi = field_legendre_inverse(theory, np.concatenate([node, s]))
        div = divergence.eval(node)
        lag = div + psi @ s - theory.L.eval(np.concatenate([node, psi]))
        ham = div + field_hamiltonian_value(theory, np.concatenate([node, s]))
        return abs(lag), abs(ham), abs(lag - ham)

    lag, ham, gap = split_columns(map_samples(residuals, as_points(grid)), 3)
    return DefectSummary(
        op="legendre_consistency",
        defects={
            "lagrangian": summarize("lagrangian", grid, lag, tolerance),
            "hamiltonian": summarize("hamiltonian", grid, ham, tolerance),
            "gap": summarize("gap", grid, gap, tolerance),
        },
    )


def mechanical_reduction(
    sys: HamiltonianSystem, S: ScalarField, energy: float
) -> Tuple[FieldTheory, FieldHJCandidate]:
    """
    Read a mechanical system as a field theory over the time line.

    Args:
        sys (HamiltonianSystem): System with a symbolic H(q, p).
        S (ScalarField): Characteristic function S(q).
        energy (float): Energy level E.

    Returns:
        tuple: The m = 1 theory with H(y, p) and the candidate W¹ = S(y) − E·t,
        whose fiber gradient defect equals the dH defect of α = dS.
    """
    if not sys.symbolic:
        raise ValueError("mechanical_reduction needs a symbolic Hamiltonian")
    n = sys.n
    chart = FieldChart(1, n)
    renames = dict(zip(sys.q_names, chart.fiber_names))
    renames.update(zip(sys.p_names, chart.momentum_names))
    H = sys.H.rename(renames, chart.hamiltonian_vars)
    theory = FieldTheory(1, n, H=H)
    W = ScalarField(
        add(
            S.rename(dict(zip(sys.q_names, theory.fiber_names)), theory.point_names).expression,
            mul(Num(-float(energy)), Var("x1")),
        ),
        theory.point_names,
    )
    return theory, FieldHJCandidate(theory, [W])


# De Donder-Weyl evolution -----------------------------------------------------


@dataclass(frozen=True)
class FieldEvolution:
    x: np.ndarray
    times: np.ndarray
    y: np.ndarray  # (snapshots, n, N)
    pt: np.ndarray
    px: np.ndarray
    energy: np.ndarray
    constraint_drift: np.ndarray
    warnings: List[str]

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @property
    def max_constraint_drift(self) -> float:
        return float(np.max(self.constraint_drift))


class _DDWSystem:
    """Method-of-lines right-hand side for m = 2 on a periodic grid.

    State rows: t, then y^α, p{α}_1 and p{α}_2 for α = 1..n, each of length N.
    """

    def __init__(self, theory: FieldTheory, x: np.ndarray, dx: float):
        self.theory = theory
        self.n = theory.n
        self.x = x
        self.dx = dx
        self.size = x.size
        n = self.n
        # positions inside H's variables (x1, x2, y.., p{a}_1.., p{a}_2..)
        self.y_idx = list(range(2, 2 + n))
        self.pt_idx = [2 + n + theory.slot(a, 0) for a in range(n)]
        self.px_idx = [2 + n + theory.slot(a, 1) for a in range(n)]

    def D(self, f: np.ndarray) -> np.ndarray:
        return (np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)) / (2.0 * self.dx)

    def solve_px_block(self, t: float, hess: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ∂²H/∂px² · u = rhs at every grid node.

        Raises:
            SingularLegendre: At the worst-conditioned node when the block is degenerate.
        """
        matrix = np.moveaxis(hess[np.ix_(self.px_idx, self.px_idx)], -1, 0)
        if not np.all(np.isfinite(matrix)):
            raise NumericalBlowUp(float(t))
        conditions = np.linalg.cond(matrix)
        worst = int(np.argmax(conditions))
        if conditions[worst] > settings.CONDITION_LIMIT:
            raise SingularLegendre(float(conditions[worst]), [float(t), float(self.x[worst])])
        return np.linalg.solve(matrix, rhs.T[..., None])[..., 0].T

    def unpack(self, state: Vector) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
        n, N = self.n, self.size
        fields = state[1:].reshape(3 * n, N)
        return state[0], fields[:n], fields[n : 2 * n], fields[2 * n :]

    def point(self, t: float, y: np.ndarray, pt: np.ndarray, px: np.ndarray) -> np.ndarray:
        rows = [np.full(self.size, t), self.x, *y]
        momenta: List[Optional[np.ndarray]] = [None] * (2 * self.n)
        for a in range(self.n):
            momenta[self.theory.slot(a, 0)] = pt[a]
            momenta[self.theory.slot(a, 1)] = px[a]
        return np.array(rows + momenta)

    def derivatives(self, t, y, pt, px):
        return self.theory.H.derivatives(self.point(t, y, pt, px))

    def rhs(self, state: Vector) -> Vector:
        t, y, pt, px = self.unpack(state)
        _, grad, hess = self.derivatives(t, y, pt, px)
        if not np.all(np.isfinite(grad)):
            raise NumericalBlowUp(float(t))
        y_t = grad[self.pt_idx]
        pt_t = -grad[self.y_idx] - self.D(px)

        def block(rows: List[int], cols: List[int]) -> np.ndarray:
            return hess[np.ix_(rows, cols)]  # (n, n, N)

        rhs = (
            self.D(y_t)
            - hess[self.px_idx, 0]
            - np.einsum("abk,bk->ak", block(self.px_idx, self.y_idx), y_t)
            - np.einsum("abk,bk->ak", block(self.px_idx, self.pt_idx), pt_t)
        )
        px_t = self.solve_px_block(t, hess, rhs)
        return np.concatenate([[1.0], y_t.ravel(), pt_t.ravel(), px_t.ravel()])

    def constraint(self, state: Vector) -> float:
        t, y, pt, px = self.unpack(state)
        grad = self.derivatives(t, y, pt, px)[1]
        return max_abs(self.D(y) - grad[self.px_idx])

    def energy(self, state: Vector) -> float:
        t, y, pt, px = self.unpack(state)
        value, grad, _ = self.derivatives(t, y, pt, px)
        density = value - np.einsum("ak,ak->k", px, grad[self.px_idx])
        return float(np.sum(density) * self.dx)

    def solve_px(self, t: float, y: np.ndarray, pt: np.ndarray) -> np.ndarray:
        """px with ∂H/∂px = D y at every node, by vectorized Newton from zero."""
        target = self.D(y)
        px = np.zeros_like(y)
        for _ in range(settings.NEWTON_MAX_ITER):
            _, grad, hess = self.derivatives(t, y, pt, px)
            residual = grad[self.px_idx] - target
            if max_abs(residual) <= settings.NEWTON_TOLERANCE * max(1.0, max_abs(px)):
                return px
            px = px - self.solve_px_block(t, hess, residual)
        raise NumericalBlowUp(t)


def _as_rows(values: Any, n: int, size: Optional[int] = None) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    if array.ndim == 1:
        array = array[None, :]
    if array.shape[0] != n or (size is not None and array.shape[1] != size):
        raise ValueError(f"expected initial data of shape ({n}, N)")
    return array


def ddw_evolve(
    theory: FieldTheory,
    y0: Any,
    pt0: Any,
    T: float,
    dt: float,
    px0: Any = None,
    length: float = 2.0 * math.pi,
    x_start: float = 0.0,
    t0: float = 0.0,
    snapshots: int = 64,
) -> FieldEvolution:
    """
    Evolve the Hamilton-De Donder-Weyl equations for m = 2 on a periodic grid.

    y and p{α}_1 follow ∂_t y = ∂H/∂p_t and ∂_t p_t + ∂_x p_x = −∂H/∂y;
    p{α}_2 follows the time derivative of the constraint ∂_x y = ∂H/∂p_x.
    Spatial derivatives are centered differences, time stepping is RK4.

    Args:
        theory (FieldTheory): Theory with H and m = 2.
        y0: Initial y, shape (n, N) or (N,) for n = 1.
        pt0: Initial p{α}_1.
        T (float): Horizon.
        dt (float): Time step.
        px0: Initial p{α}_2; solved from the constraint when omitted.
        length (float): Period of the spatial domain.
        x_start (float): Left end of the grid.
        t0 (float): Initial time.
        snapshots (int): Number of stored time samples (the last one included).

    Returns:
        FieldEvolution: Snapshots, energy ∫(H − p_x·∂H/∂p_x)dx and constraint
        drift per snapshot, plus warnings.

    Raises:
        NumericalBlowUp: When non-finite values appear.
    """
    if theory.H is None or theory.m != 2:
        raise UnsupportedDimension(theory.m, theory.n)
    n = theory.n
    y0 = _as_rows(y0, n)
    size = y0.shape[1]
    pt0 = _as_rows(pt0, n, size)
    dx = length / size
    x = x_start + dx * np.arange(size)
    ddw = _DDWSystem(theory, x, dx)
    warnings: List[str] = []
    if dt > dx:
        warnings.append(f"dt={dt:g} exceeds dx={dx:g}; the scheme may be unstable")

    px0 = ddw.solve_px(t0, y0, pt0) if px0 is None else _as_rows(px0, n, size)
    state0 = np.concatenate([[t0], y0.ravel(), pt0.ravel(), px0.ravel()])
    violation = ddw.constraint(state0)
    if violation > 1e-6:
        warnings.append(f"initial data violate the constraint by {violation:.3e}")
    for message in warnings:
        logger.warning(f"ddw_evolve: {message}")

    field = VectorFieldSection(
        ["t"] + [f"u{j}" for j in range(state0.size - 1)], evaluator=ddw.rhs
    )
    flow = flow_rk4(field, state0, t0 + T, dt, t0=t0, estimate_error=False)
    bad = np.flatnonzero(~np.all(np.isfinite(flow.states), axis=1))
    if bad.size:
        raise NumericalBlowUp(float(flow.times[bad[0]]))

    picks = np.unique(np.linspace(0, len(flow.times) - 1, max(2, snapshots)).round().astype(int))
    stored = [ddw.unpack(flow.states[i]) for i in picks]
    return FieldEvolution(
        x=x,
        times=flow.times[picks],
        y=np.array([s[1] for s in stored]),
        pt=np.array([s[2] for s in stored]),
        px=np.array([s[3] for s in stored]),
        energy=np.array([ddw.energy(flow.states[i]) for i in picks]),
        constraint_drift=np.array([ddw.constraint(flow.states[i]) for i in picks]),
        warnings=warnings,
    )
