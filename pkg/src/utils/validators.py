from typing import Dict, List, Sequence

from src.cli.loader import ConfigSource
from src.errors import ConfigError
from src.models.run_config import RunConfig

VERB_SYSTEMS: Dict[str, Sequence[str]] = {
    "check-hj": ("hamiltonian",),
    "check-lag-hj": ("lagrangian",),
    "reconstruct": ("hamiltonian", "lagrangian"),
    "complete": ("hamiltonian", "lagrangian", "higher"),
    "canonical": ("hamiltonian",),
    "higher": ("higher",),
    "field-check": ("field",),
    "field-evolve": ("field",),
    "legendre": ("lagrangian", "field"),
}


def _fail(source: ConfigSource, dotted: str, message: str) -> None:
    raise ConfigError(source.path, source.line_of(dotted), message)


def _expect_length(
    source: ConfigSource, dotted: str, values: List[str] | None, count: int
) -> None:
    if values is not None and len(values) != count:
        _fail(source, dotted, f"{dotted} needs {count} expressions, got {len(values)}")


def validate_run_config(source: ConfigSource, verb: str) -> RunConfig:
    """
    Check that a parsed config carries what ``verb`` needs.

    Args:
        source (ConfigSource): Loaded configuration.
        verb (str): CLI verb.

    Returns:
        RunConfig: The validated model.

    Raises:
        ConfigError: Naming the offending key and its line.
    """
    config = source.config
    if verb not in VERB_SYSTEMS:
        raise ConfigError(source.path, None, f"unknown verb {verb!r}")
    system = config.system
    if system is None:
        if verb == "canonical" and config.canonical is not None:
            return config
        _fail(source, "system", f"{verb} needs a [system] table")
    if system.type not in VERB_SYSTEMS[verb]:
        _fail(source, "system.type", f"{verb} does not accept systems of type {system.type!r}")

    n, solution = system.n, config.solution
    if system.type == "hamiltonian" and system.H is None:
        _fail(source, "system.H", "a hamiltonian system needs H")
    if system.type in ("lagrangian", "higher") and system.L is None:
        _fail(source, "system.L", f"a {system.type} system needs L")
    if system.type == "higher" and system.k is None:
        _fail(source, "system.k", "a higher-order system needs k")
    if system.type == "field":
        if system.m is None:
            _fail(source, "system.m", "a field theory needs m")
        if system.L is None and system.H is None:
            _fail(source, "system.L", "a field theory needs L or H")

    _expect_length(source, "solution.alpha", solution.alpha, n)
    _expect_length(source, "solution.X", solution.X, n)
    if system.type == "higher":
        _expect_length(source, "solution.s", solution.s, system.k * n)
    if system.type == "field":
        _expect_length(source, "solution.W", solution.W, system.m)
        _expect_length(source, "solution.psi", solution.psi, system.m * n)

    fixed = set(solution.values)
    missing = [p for p in solution.params if p not in fixed]
    if verb not in ("complete", "canonical") and missing:
        _fail(source, "solution.values", f"no value for parameter {missing[0]!r}")
    if verb == "field-evolve" and config.evolve is None:
        _fail(source, "evolve", "field-evolve needs an [evolve] table")
    if verb == "field-evolve" and (system.m != 2 or system.H is None):
        _fail(source, "system.H", "field-evolve needs m = 2 and H")
    if verb == "reconstruct" and (config.check.q0 is None or config.check.T is None):
        _fail(source, "check.q0", "reconstruct needs check.q0 and check.T")
    if verb == "complete" and config.check.T is None and system.type != "higher":
        _fail(source, "check.T", "complete needs check.T")
    return config
