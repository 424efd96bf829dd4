from typing import Any, Optional, Sequence


class ToolkitError(Exception):
    pass


class ExpressionSyntaxError(ToolkitError):
    def __init__(self, position: int, expected: Sequence[str], text: str = ""):
        self.position = position
        self.expected = tuple(expected)
        self.text = text
        super().__init__(
            f"syntax error at offset {position}: expected {' or '.join(self.expected)}"
        )


class UnknownIdentifier(ToolkitError):
    def __init__(self, name: str, position: Optional[int] = None):
        self.name = name
        self.position = position
        where = f" at offset {position}" if position is not None else ""
        super().__init__(f"unknown identifier '{name}'{where}")


class DomainViolation(ToolkitError):
    """A guarded sub-expression left its domain.

    Flows fill in ``time`` (start of the failing step) and ``partial`` (the
    trajectory integrated so far) before re-raising.
    """

    def __init__(
        self,
        guard_index: int,
        guard_value: float,
        sample_index: Optional[int] = None,
    ):
        self.guard_index = guard_index
        self.guard_value = guard_value
        self.sample_index = sample_index
        self.time: Optional[float] = None
        self.partial: Any = None
        super().__init__(f"domain guard {guard_index} violated (value {guard_value!r})")


class NewtonDivergence(ToolkitError):
    def __init__(self, index: Any, residual: float):
        self.index = index
        self.residual = residual
        super().__init__(f"Newton did not converge at {index} (residual {residual:.3e})")


class SingularFamily(ToolkitError):
    def __init__(self, node: Sequence[float], det: float):
        self.node = [float(v) for v in node]
        self.det = det
        super().__init__(f"family is singular at {self.node} (|det| = {det:.3e})")


class SingularLegendre(ToolkitError):
    def __init__(self, condition: float, point: Optional[Sequence[float]] = None):
        self.condition = condition
        self.point = None if point is None else [float(v) for v in point]
        super().__init__(f"Legendre map is singular (condition {condition:.3e})")


class DegenerateGenerator(ToolkitError):
    def __init__(self, condition: float, point: Optional[Sequence[float]] = None):
        self.condition = condition
        self.point = None if point is None else [float(v) for v in point]
        super().__init__(
            f"mixed Hessian of the generator is degenerate (condition {condition:.3e})"
        )


class UnsupportedOrder(ToolkitError):
    def __init__(self, order: int):
        self.order = order
        super().__init__(f"order k={order} is not supported (k must be 1, 2 or 3)")


class UnsupportedDimension(ToolkitError):
    def __init__(self, m: int, n: int):
        self.m = m
        self.n = n
        super().__init__(f"field theory with m={m}, n={n} is not supported")


class NumericalBlowUp(ToolkitError):
    """Non-finite or overflowing values, during a flow (``time``) or a single evaluation."""

    def __init__(self, time: Optional[float] = None, detail: str = ""):
        self.time = time
        self.detail = detail
        where = f" at t={time:.6g}" if time is not None else ""
        suffix = f": {detail}" if detail else ""
        super().__init__(f"non-finite values{where}{suffix}")


class SingularMatrix(ToolkitError):
    def __init__(self, message: str):
        super().__init__(f"linear solve failed: {message}")


class ConfigError(ToolkitError):
    def __init__(self, path: str, line: Optional[int], message: str):
        self.path = path
        self.line = line
        self.message = message
        location = f"{path}:{line}" if line is not None else path
        super().__init__(f"{location}: {message}")
