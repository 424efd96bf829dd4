"""One function per CLI verb: build the objects a config describes, run the
checks and collect results for the report."""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.cli.loader import ConfigSource
from src.config import settings
from src.errors import ConfigError
from src.logger import get_logger
from src.models.reports import CheckResult, DefectSummary, ResidualReport
from src.models.run_config import RunConfig
from src.services import canonical, field_theory, hamiltonian_hj, higher_order, lagrangian_hj
from src.services.dynamics import ParamFamily, VectorFieldSection
from src.services.exprcore import ScalarField
from src.utils.helpers import (
    build_grid,
    drop_errors,
    map_samples,
    max_abs,
    random_samples,
    summarize,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class RunOptions:
    tolerance: Optional[float] = None
    seed: Optional[int] = None
    samples: Optional[int] = None


@dataclass
class VerbResult:
    checks: List[CheckResult] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)

    def add(self, name: str, report: ResidualReport) -> None:
        self.checks.append(
            CheckResult(
                name=name,
                max_defect=report.max_norm,
                tolerance=report.tolerance,
                status=report.status,
                notes=report.notes,
            )
        )

    def add_summary(self, summary: DefectSummary, prefix: str = "") -> None:
        for name, report in summary.defects.items():
            self.add(f"{prefix}{name}", report)
        if summary.details:
            self.details[summary.op] = summary.details
        if summary.notes:
            self.details[f"{summary.op}.notes"] = summary.notes


class VerbContext:
    """Config plus run overrides, with expression and sampling helpers."""

    def __init__(self, source: ConfigSource, options: RunOptions):
        self.source = source
        self.config: RunConfig = source.config
        check = self.config.check
        self.tolerance = (
            options.tolerance
            if options.tolerance is not None
            else check.tolerance if check.tolerance is not None else settings.DEFAULT_TOLERANCE
        )
        self.seed = options.seed if options.seed is not None else check.seed
        self.samples = options.samples if options.samples is not None else check.samples
        self.keep_samples = check.per_sample

    @property
    def params(self) -> List[str]:
        return list(self.config.solution.params)

    def compile(
        self,
        key: str,
        text: str,
        names: Sequence[str],
        keep_params: bool = False,
        compiler: Optional[Callable[..., ScalarField]] = None,
    ) -> ScalarField:
        """Compile ``text`` over ``names`` and the solution parameters.

        Parameter values from ``[solution].values`` are substituted unless
        ``keep_params`` is set, in which case the field stays over names + params.
        """
        extra = self.params
        with self.source.expressions(key):
            if compiler is not None:
                result = compiler(text, names, extra)
            else:
                result = ScalarField.compile(text, list(names) + extra)
        if keep_params:
            return result
        values = self.config.solution.values
        missing = [p for p in extra if p not in values and p in result.free_variables()]
        if missing:
            raise ConfigError(
                self.source.path,
                self.source.line_of("solution.values"),
                f"{key}: no value for parameter {missing[0]!r}",
            )
        return result.substitute({p: values[p] for p in extra if p in values}, names)

    def compile_all(
        self, key: str, texts: Sequence[str], names: Sequence[str], **kwargs: Any
    ) -> List[ScalarField]:
        return [self.compile(f"{key}.{i}", t, names, **kwargs) for i, t in enumerate(texts)]

    def points(
        self, names: Sequence[str], aliases: Optional[Mapping[str, str]] = None
    ) -> np.ndarray:
        """Grid (or seeded random samples) over ``names`` from ``[check].grid``."""
        grid = self.config.check.grid
        reverse = {canonical_name: alias for alias, canonical_name in (aliases or {}).items()}
        axes = {}
        for name in names:
            key = name if name in grid else reverse.get(name)
            if key is None or key not in grid:
                raise ConfigError(
                    self.source.path,
                    self.source.line_of("check.grid"),
                    f"check.grid has no axis for {name!r}",
                )
            axes[name] = grid[key]
        if self.samples is not None:
            return random_samples(axes, self.samples, self.seed)
        return build_grid(axes)

    def require(self, value: Any, dotted: str) -> Any:
        if value is None:
            raise ConfigError(self.source.path, self.source.line_of(dotted), f"missing {dotted}")
        return value


# builders ---------------------------------------------------------------------


def _hamiltonian(ctx: VerbContext) -> hamiltonian_hj.HamiltonianSystem:
    system = ctx.config.system
    with ctx.source.expressions("system.H"):
        return hamiltonian_hj.HamiltonianSystem.from_text(system.H, system.n)


def _lagrangian(ctx: VerbContext) -> lagrangian_hj.LagrangianSystem:
    system = ctx.config.system
    with ctx.source.expressions("system.L"):
        return lagrangian_hj.LagrangianSystem.from_text(system.L, system.n)


def _one_form(ctx: VerbContext, n: int) -> hamiltonian_hj.OneFormSection:
    solution = ctx.config.solution
    names = hamiltonian_hj.configuration_names(n)
    if solution.alpha is not None:
        components = ctx.compile_all("solution.alpha", solution.alpha, names)
        return hamiltonian_hj.OneFormSection(n, components)
    if solution.S is not None:
        S = ctx.compile("solution.S", solution.S, names)
        return hamiltonian_hj.GeneratingScalar(S).differential()
    raise ConfigError(ctx.source.path, None, "[solution] needs alpha or S")


def _vector_field(ctx: VerbContext, n: int) -> VectorFieldSection:
    X = ctx.require(ctx.config.solution.X, "solution.X")
    names = hamiltonian_hj.configuration_names(n)
    return VectorFieldSection(names, ctx.compile_all("solution.X", X, names))


def _family(ctx: VerbContext, base: Sequence[str], components_key: str) -> ParamFamily:
    solution = ctx.config.solution
    params = ctx.params
    if not params:
        raise ConfigError(
            ctx.source.path, ctx.source.line_of("solution.params"), "a family needs params"
        )
    texts = getattr(solution, components_key)
    if texts is None and components_key == "alpha" and solution.S is not None:
        S = ctx.compile("solution.S", solution.S, base, keep_params=True)
        return ParamFamily.from_generator(S, base, params)
    texts = ctx.require(texts, f"solution.{components_key}")
    fields = ctx.compile_all(f"solution.{components_key}", texts, base, keep_params=True)
    return ParamFamily(base, params, fields, section=True)


def _trajectory_table(times: np.ndarray, states: np.ndarray, names: Sequence[str]) -> pd.DataFrame:
    table = pd.DataFrame(np.asarray(states), columns=list(names))
    table.insert(0, "t", np.asarray(times))
    return table


# verbs ------------------------------------------------------------------------


def check_hj(ctx: VerbContext) -> VerbResult:
    sys = _hamiltonian(ctx)
    alpha = _one_form(ctx, sys.n)
    samples = ctx.points(sys.q_names)
    result = VerbResult()
    standard = hamiltonian_hj.standard_hj_residual(
        sys, alpha, samples, ctx.tolerance, ctx.keep_samples
    )
    result.add_summary(standard)
    result.add(
        "generalized",
        hamiltonian_hj.generalized_hj_residual(sys, alpha, samples, tolerance=ctx.tolerance),
    )
    result.add(
        "lagrangian_submanifold",
        hamiltonian_hj.lagrangian_submanifold_defect(alpha, samples, ctx.tolerance),
    )
    check = ctx.config.check
    if check.starts and check.T is not None:
        result.add(
            "invariance",
            hamiltonian_hj.invariance_defect(
                sys, alpha, check.starts, check.T, check.dt or 1e-3, check.integrator, ctx.tolerance
            ),
        )
    result.details["closedness_defect"] = standard.closedness_defect
    result.details["dH_defect"] = standard.dH_defect
    return result


def check_lag_hj(ctx: VerbContext) -> VerbResult:
    sys = _lagrangian(ctx)
    X = _vector_field(ctx, sys.n)
    S = None
    if ctx.config.solution.S is not None:
        S = hamiltonian_hj.GeneratingScalar(
            ctx.compile("solution.S", ctx.config.solution.S, sys.q_names)
        )
    samples = ctx.points(sys.q_names)
    result = VerbResult()
    report = lagrangian_hj.lag_hj_residuals(sys, X, samples, S, ctx.tolerance, ctx.keep_samples)
    result.add_summary(report)
    result.details.update(
        pullback_omega_defect=report.pullback_omega_defect,
        dE_defect=report.dE_defect,
        generalized_defect=report.generalized_defect,
    )

    alpha = lagrangian_hj.equivalence_map(sys, X=X)
    hamiltonian = lagrangian_hj.legendre_hamiltonian(sys)
    partner = hamiltonian_hj.standard_hj_residual(hamiltonian, alpha, samples, 10 * ctx.tolerance)
    result.add_summary(partner, prefix="legendre_partner.")
    return result


def reconstruct(ctx: VerbContext) -> VerbResult:
    check = ctx.config.check
    dt = check.dt or 1e-3
    if ctx.config.system.type == "hamiltonian":
        sys = _hamiltonian(ctx)
        alpha = _one_form(ctx, sys.n)
        outcome = hamiltonian_hj.reconstruct(sys, alpha, check.q0, check.T, dt, ctx.tolerance)
        fiber = list(sys.p_names)
    else:
        sys = _lagrangian(ctx)
        X = _vector_field(ctx, sys.n)
        outcome = lagrangian_hj.lagrangian_reconstruct(sys, X, check.q0, check.T, dt, ctx.tolerance)
        fiber = list(sys.v_names)
    result = VerbResult()
    result.add("max_gap", outcome.report)
    result.details["max_gap"] = outcome.max_gap
    result.details["truncated_at"] = outcome.truncated_at
    names = list(sys.q_names) + fiber
    common = min(len(outcome.lifted_curve), len(outcome.direct_curve.states))
    table = _trajectory_table(
        outcome.direct_curve.times[:common],
        np.hstack([outcome.lifted_curve[:common], outcome.direct_curve.states[:common]]),
        [f"lifted_{n}" for n in names] + [f"direct_{n}" for n in names],
    )
    result.tables["trajectory"] = table
    return result


def complete(ctx: VerbContext) -> VerbResult:
    check = ctx.config.check
    system = ctx.config.system
    result = VerbResult()
    if system.type == "hamiltonian":
        sys = _hamiltonian(ctx)
        fam = _family(ctx, sys.q_names, "alpha")
        nodes = ctx.points(fam.vars)
        report = hamiltonian_hj.complete_solution_check(
            sys,
            fam,
            nodes,
            check.T,
            check.dt or 1e-2,
            check.integrator,
            ctx.tolerance,
            ctx.keep_samples,
        )
    elif system.type == "lagrangian":
        sys = _lagrangian(ctx)
        fam = _family(ctx, sys.q_names, "X")
        nodes = ctx.points(fam.vars)
        report = lagrangian_hj.lagrangian_complete_check(
            sys, fam, nodes, check.T, check.dt or 1e-2, ctx.tolerance, ctx.keep_samples
        )
    else:
        L = _higher(ctx)
        fam = _family(ctx, L.base_chart.names, "s")
        nodes = ctx.points(fam.vars)
        report = higher_order.higher_complete_check(L, fam, nodes, ctx.tolerance, ctx.keep_samples)
    result.add_summary(report)
    result.details["min_abs_det"] = report.min_abs_det
    return result


def _generator(ctx: VerbContext) -> canonical.GeneratingFunction2Point:
    block = ctx.config.canonical
    with ctx.source.expressions("canonical.S2"):
        return canonical.GeneratingFunction2Point.from_text(
            block.S2, block.n, block.constant_block or "momentum", block.guess
        )


def canonical_verb(ctx: VerbContext) -> VerbResult:
    config = ctx.config
    block = config.canonical
    check = config.check
    result = VerbResult()
    n = block.n if block is not None else ctx.require(config.system, "system").n
    phase = hamiltonian_hj.configuration_names(n) + hamiltonian_hj.momentum_names(n)
    if block is not None and block.S2 is not None:
        g = _generator(ctx)
    else:
        family = _family(ctx, hamiltonian_hj.configuration_names(n), "alpha")
        nodes = ctx.points(family.vars)
        g = canonical.complete_to_canonical(family, nodes)
        if block is not None and block.guess is not None:
            guess = ctx.compile_all("canonical.guess", block.guess, phase)
            g = canonical.GeneratingFunction2Point(
                n, g.S2, g.constant_block, guess, param_names=g.param_names
            )
        back = canonical.canonical_to_complete(g)

        def round_trip(node: np.ndarray) -> float:
            _, lam = family.split(node)
            image = canonical.induced_transform(g, back.full_map(node), guess=lam)
            return max_abs(image[:n] - lam)

        gaps = drop_errors(map_samples(round_trip, nodes, catch=canonical.TRANSFORM_ERRORS))
        result.add("round_trip", summarize("round_trip", nodes, gaps, ctx.tolerance))

    H_text = block.H if block is not None and block.H is not None else None
    if H_text is None and config.system is not None:
        H_text = config.system.H
    starts = check.starts
    if block is not None and block.transform is not None:
        fields = ctx.compile_all("canonical.transform", block.transform, phase)
        phi = canonical.CanonicalMap.from_callable(n, lambda z: [f.eval(z) for f in fields])
    else:
        phi = canonical.CanonicalMap.from_generator(g)
    samples = starts if starts else ctx.points(phase)
    result.add("symplectic", canonical.symplectomorphism_defect(phi, samples, ctx.tolerance))

    if H_text is not None and starts and check.T is not None:
        with ctx.source.expressions("canonical.H" if block is not None and block.H else "system.H"):
            sys = hamiltonian_hj.HamiltonianSystem.from_text(H_text, n)
        asserted = block.constant_block if block is not None else None
        report = canonical.equilibrium_defect(
            g, sys, starts, check.T, check.dt or 1e-2, asserted, ctx.tolerance
        )
        result.add_summary(report, prefix="equilibrium.")
    return result


def _higher(ctx: VerbContext) -> higher_order.HigherLagrangian:
    system = ctx.config.system
    with ctx.source.expressions("system.L"):
        return higher_order.HigherLagrangian.from_text(system.L, system.n, system.k)


def higher(ctx: VerbContext) -> VerbResult:
    L = _higher(ctx)
    solution = ctx.config.solution
    check = ctx.config.check
    result = VerbResult()
    base = L.base_chart.names
    if solution.s is not None:
        section = higher_order.JetSection(L.n, L.k, ctx.compile_all("solution.s", solution.s, base))
        S = None if solution.S is None else ctx.compile("solution.S", solution.S, base)
        report = higher_order.higher_hj_residuals(
            L, section, ctx.points(base), S, ctx.tolerance, ctx.keep_samples
        )
        result.add_summary(report)
    if check.starts and check.T is not None:
        drifts = []
        for i, start in enumerate(check.starts):
            flow = higher_order.higher_el_flow(
                L, start, check.T, check.dt or 1e-3, estimate_error=False
            )
            energy = np.asarray(L.energy.eval(flow.states.T))
            drifts.append(max_abs(energy - energy[0]))
            if i == 0:
                result.tables["trajectory"] = _trajectory_table(
                    flow.times, flow.states, L.phase_chart.names
                )
        result.add(
            "energy_conservation",
            summarize("energy_conservation", check.starts, drifts, ctx.tolerance),
        )
    if not result.checks:
        raise ConfigError(
            ctx.source.path, None, "higher needs solution.s or check.starts with check.T"
        )
    return result


def _field_theory(ctx: VerbContext) -> field_theory.FieldTheory:
    system = ctx.config.system
    chart = field_theory.FieldChart(system.m, system.n)
    L = H = None
    if system.L is not None:
        with ctx.source.expressions("system.L"):
            L = chart.compile(system.L, chart.lagrangian_vars)
    if system.H is not None:
        with ctx.source.expressions("system.H"):
            H = chart.compile(system.H, chart.hamiltonian_vars)
    return field_theory.FieldTheory(system.m, system.n, L, H)


def field_check(ctx: VerbContext) -> VerbResult:
    theory = _field_theory(ctx)
    solution = ctx.config.solution
    names = theory.point_names
    W_texts = ctx.require(solution.W, "solution.W")
    W = ctx.compile_all("solution.W", W_texts, names, compiler=theory.compile)
    psi = None
    if solution.psi is not None:
        psi = ctx.compile_all("solution.psi", solution.psi, names, compiler=theory.compile)
    cand = field_theory.FieldHJCandidate(theory, W, psi)
    grid = ctx.points(names, field_theory.field_aliases(theory.m, theory.n))
    result = VerbResult()
    if theory.L is not None and psi is not None:
        result.add(
            "lagrangian",
            field_theory.lag_field_hj_residual(theory, cand, grid, ctx.tolerance, ctx.keep_samples),
        )
    result.add_summary(
        field_theory.ham_field_hj_residual(theory, cand, grid, ctx.tolerance, ctx.keep_samples),
        prefix="hamiltonian.",
    )
    if theory.L is not None:
        result.add_summary(
            field_theory.legendre_consistency(theory, cand, grid, ctx.tolerance),
            prefix="consistency.",
        )
    return result


def field_evolve(ctx: VerbContext) -> VerbResult:
    theory = _field_theory(ctx)
    block = ctx.config.evolve
    x = block.length / block.N * np.arange(block.N)

    def profile(
        key: str, texts: Sequence[str], names: Sequence[str], rows: np.ndarray
    ) -> np.ndarray:
        fields = ctx.compile_all(key, texts, names)
        return np.array([np.broadcast_to(f.eval(rows), (block.N,)) for f in fields])

    y0 = profile("evolve.y0", block.y0, ["x"], x[None, :])
    pt0 = profile("evolve.pt0", block.pt0, ["x"], x[None, :])
    px0 = None if block.px0 is None else profile("evolve.px0", block.px0, ["x"], x[None, :])
    evolution = field_theory.ddw_evolve(
        theory, y0, pt0, block.T, block.dt, px0=px0, length=block.length, snapshots=block.snapshots
    )
    result = VerbResult()
    final = [[float(evolution.times[-1])]]
    result.add(
        "energy_drift",
        summarize("energy_drift", final, [evolution.energy_drift], ctx.tolerance),
    )
    result.add(
        "constraint_drift",
        summarize("constraint_drift", final, [evolution.max_constraint_drift], ctx.tolerance),
    )
    if block.exact is not None:
        rows = np.vstack([np.full(block.N, evolution.times[-1]), x])
        exact = profile("evolve.exact", block.exact, ["t", "x"], rows)
        error = max_abs(evolution.y[-1] - exact)
        result.add("profile_error", summarize("profile_error", final, [error], ctx.tolerance))
    result.details["warnings"] = evolution.warnings
    result.details["energy"] = [float(e) for e in evolution.energy[[0, -1]]]

    frames = []
    for t, y in zip(evolution.times, evolution.y):
        frame = pd.DataFrame({"t": np.full(block.N, t), "x": x})
        for a, row in enumerate(y, start=1):
            frame[f"y{a}"] = row
        frames.append(frame)
    result.tables["snapshots"] = pd.concat(frames, ignore_index=True)
    return result


def legendre_verb(ctx: VerbContext) -> VerbResult:
    system = ctx.config.system
    result = VerbResult()
    if system.type == "lagrangian":
        sys = _lagrangian(ctx)
        points = ctx.points(sys.vars)
        gaps = []
        for z in points:
            image = lagrangian_hj.legendre(sys, z)
            gaps.append(max_abs(lagrangian_hj.legendre_inverse(sys, image) - z))
        result.add("round_trip", summarize("round_trip", points, gaps, ctx.tolerance))
        if system.H is not None:
            H = _hamiltonian(ctx).H
            diffs = [
                abs(H.eval(lagrangian_hj.legendre(sys, z)) - sys.energy.eval(z)) for z in points
            ]
            result.add("hamiltonian", summarize("hamiltonian", points, diffs, ctx.tolerance))
        return result

    theory = _field_theory(ctx)
    if theory.L is None:
        raise ConfigError(ctx.source.path, ctx.source.line_of("system.L"), "legendre needs L")
    k = len(theory.point_names)
    points = ctx.points(theory.lagrangian_vars, field_theory.field_aliases(theory.m, theory.n))
    gaps, diffs = [], []
    for z in points:
        p = field_theory.field_legendre(theory, z)
        v = field_theory.field_legendre_inverse(theory, np.concatenate([z[:k], p]))
        gaps.append(max_abs(v - z[k:]))
        if theory.H is not None:
            direct = float(p @ z[k:] - theory.L.eval(z))
            diffs.append(abs(theory.H.eval(np.concatenate([z[:k], p])) - direct))
    result.add("round_trip", summarize("round_trip", points, gaps, ctx.tolerance))
    if diffs:
        result.add("hamiltonian", summarize("hamiltonian", points, diffs, ctx.tolerance))
    return result


VERBS: Dict[str, Callable[[VerbContext], VerbResult]] = {
    "check-hj": check_hj,
    "check-lag-hj": check_lag_hj,
    "reconstruct": reconstruct,
    "complete": complete,
    "canonical": canonical_verb,
    "higher": higher,
    "field-check": field_check,
    "field-evolve": field_evolve,
    "legendre": legendre_verb,
}
