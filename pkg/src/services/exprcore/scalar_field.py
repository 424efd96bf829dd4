"""Compiled scalar functions of named coordinates.

A :class:`ScalarField` compiles an expression tree once into nested closures.
The same closures run on floats, numpy batches, :class:`Dual` and
:class:`HyperDual` numbers, which is how gradients, Hessians and compositions
(chain rule through dual inputs) are obtained.
"""

from typing import Any, Callable, Dict, List, Mapping, Sequence, Set, Tuple

import numpy as np

from src.errors import DomainViolation, NumericalBlowUp, UnknownIdentifier
from src.services.exprcore import symbolic
from src.services.exprcore.dual import Dual, HyperDual, real_part
from src.services.exprcore.nodes import BinOp, Call, Expression, Neg, Num, Var, to_text
from src.services.exprcore.parser import parse

Env = Sequence[Any]
Compiled = Callable[[Env], Any]

POSITIVE = "positive"
NONZERO = "nonzero"

# name -> (f, f', f'')
INTRINSIC_DERIVATIVES: Dict[str, Tuple[Callable, Callable, Callable]] = {
    "sin": (np.sin, np.cos, lambda v: -np.sin(v)),
    "cos": (np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v)),
    "exp": (np.exp, np.exp, np.exp),
    "ln": (np.log, lambda v: 1.0 / v, lambda v: -1.0 / (v * v)),
    "sqrt": (np.sqrt, lambda v: 0.5 / np.sqrt(v), lambda v: -0.25 / (v * np.sqrt(v))),
    "tanh": (
        np.tanh,
        lambda v: 1.0 - np.tanh(v) ** 2,
        lambda v: -2.0 * np.tanh(v) * (1.0 - np.tanh(v) ** 2),
    ),
    "abs": (np.abs, np.sign, lambda v: 0.0 * v),
}


def _apply(func: str, x: Any) -> Any:
    f0, f1, f2 = INTRINSIC_DERIVATIVES[func]
    if isinstance(x, (Dual, HyperDual)):
        return x.apply(f0, f1, f2)
    return f0(x)


def _int_power(x: Any, n: int) -> Any:
    if isinstance(x, (Dual, HyperDual)):
        return x.apply(
            lambda v: v**n,
            lambda v: n * v ** (n - 1) if n != 0 else 0.0 * v,
            lambda v: n * (n - 1) * v ** (n - 2) if n not in (0, 1) else 0.0 * v,
        )
    return x**n


def _real_power(x: Any, c: float) -> Any:
    if isinstance(x, (Dual, HyperDual)):
        return x.apply(
            lambda v: v**c,
            lambda v: c * v ** (c - 1.0),
            lambda v: c * (c - 1.0) * v ** (c - 2.0),
        )
    return x**c


def _check(x: Any, guard: int, kind: str) -> Any:
    value = real_part(x)
    if isinstance(value, float):
        ok = value > 0 if kind == POSITIVE else value != 0
        if not ok:
            raise DomainViolation(guard, value)
        return x
    value = np.asarray(value)
    mask = value > 0 if kind == POSITIVE else value != 0
    if not np.all(mask):
        bad = int(np.flatnonzero(~mask)[0]) if value.ndim else None
        offending = value.flat[bad] if bad is not None else value
        raise DomainViolation(guard, float(offending), sample_index=bad)
    return x


class _Compiler:
    def __init__(self, variables: Sequence[str]):
        self.index = {name: i for i, name in enumerate(variables)}
        self.guards: List[Tuple[Expression, str]] = []

    def _guarded(self, node: Expression, kind: str) -> Compiled:
        fn = self.compile(node)
        guard = len(self.guards)
        self.guards.append((node, kind))
        return lambda env: _check(fn(env), guard, kind)

    def compile(self, node: Expression) -> Compiled:
        if isinstance(node, Num):
            value = node.value
            return lambda env: value
        if isinstance(node, Var):
            i = self.index[node.name]
            return lambda env: env[i]
        if isinstance(node, Neg):
            inner = self.compile(node.operand)
            return lambda env: -inner(env)
        if isinstance(node, Call):
            func = node.func
            if func in ("sqrt", "ln"):
                arg = self._guarded(node.arg, POSITIVE)
            else:
                arg = self.compile(node.arg)
            return lambda env: _apply(func, arg(env))
        if isinstance(node, BinOp):
            return self._binop(node)
        raise TypeError(f"not an expression node: {node!r}")

    def _binop(self, node: BinOp) -> Compiled:
        op = node.op
        if op == "/":
            left = self.compile(node.left)
            right = self._guarded(node.right, NONZERO)
            return lambda env: left(env) / right(env)
        if op == "^":
            return self._power(node)
        left = self.compile(node.left)
        right = self.compile(node.right)
        if op == "+":
            return lambda env: left(env) + right(env)
        if op == "-":
            return lambda env: left(env) - right(env)
        if op == "*":
            return lambda env: left(env) * right(env)
        raise ValueError(f"unknown operator {op!r}")

    def _power(self, node: BinOp) -> Compiled:
        exponent = node.right
        if isinstance(exponent, Num) and symbolic.is_integer(exponent.value):
            n = int(exponent.value)
            base = (
                self._guarded(node.left, NONZERO) if n < 0 else self.compile(node.left)
            )
            return lambda env: _int_power(base(env), n)
        base = self._guarded(node.left, POSITIVE)
        if isinstance(exponent, Num):
            c = exponent.value
            return lambda env: _real_power(base(env), c)
        power = self.compile(exponent)
        return lambda env: _apply("exp", power(env) * _apply("ln", base(env)))


class ScalarField:
    """A real function of the named coordinates ``vars``, differentiable twice.

    Immutable after construction; evaluation keeps no state, so a field can be
    shared between threads.
    """

    def __init__(self, expression: Expression, variables: Sequence[str]):
        self.expression = expression
        self.vars: Tuple[str, ...] = tuple(variables)
        unknown = sorted(symbolic.free_variables(expression) - set(self.vars))
        if unknown:
            raise UnknownIdentifier(unknown[0])
        compiler = _Compiler(self.vars)
        self._fn = compiler.compile(expression)
        self._guards = tuple(compiler.guards)

    @classmethod
    def compile(cls, text: str, variables: Sequence[str]) -> "ScalarField":
        return cls(parse(text, variables), variables)

    @classmethod
    def constant(cls, value: float, variables: Sequence[str]) -> "ScalarField":
        return cls(Num(float(value)), variables)

    @property
    def dim(self) -> int:
        return len(self.vars)

    @property
    def domain_guards(self) -> List[Tuple[Expression, str]]:
        return list(self._guards)

    def _split(self, point: Any) -> Tuple[List[Any], Tuple[int, ...]]:
        values = np.asarray(point, dtype=float)
        if values.ndim == 0 or values.shape[0] != self.dim:
            raise ValueError(
                f"expected {self.dim} coordinates {self.vars}, got shape {values.shape}"
            )
        if values.ndim == 1:
            return [float(v) for v in values], ()
        return list(values), values.shape[1:]

    def _run(self, env: Env) -> Any:
        try:
            return self._fn(env)
        except OverflowError as exc:
            raise NumericalBlowUp(detail=f"{self} overflowed") from exc

    def apply(self, args: Sequence[Any]) -> Any:
        """Evaluate on arbitrary number-like arguments (floats, arrays, duals)."""
        if len(args) != self.dim:
            raise ValueError(f"expected {self.dim} arguments, got {len(args)}")
        return self._run(args)

    def eval(self, point: Any) -> Any:
        env, shape = self._split(point)
        value = self._run(env)
        if shape:
            return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
        return float(value)

    __call__ = eval

    def grad(self, point: Any) -> np.ndarray:
        env, shape = self._split(point)
        out = self._run(Dual.variables(env))
        if not isinstance(out, Dual):
            return np.zeros((self.dim, *shape))
        return np.broadcast_to(out.grad, (self.dim, *shape)).copy()

    def derivatives(self, point: Any) -> Tuple[Any, np.ndarray, np.ndarray]:
        """Value, gradient and (exactly symmetric) Hessian in one pass."""
        env, shape = self._split(point)
        out = self._run(HyperDual.variables(env))
        k = self.dim
        if not isinstance(out, HyperDual):
            value = np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
            return (
                value if shape else float(out),
                np.zeros((k, *shape)),
                np.zeros((k, k, *shape)),
            )
        hess = np.broadcast_to(out.hess, (k, k, *shape))
        hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
        grad = np.broadcast_to(out.grad, (k, *shape)).copy()
        value = out.value if shape else float(out.value)
        return value, grad, hess

    def hessian(self, point: Any) -> np.ndarray:
        return self.derivatives(point)[2]

    # symbolic views -------------------------------------------------------

    def partial(self, name: str) -> "ScalarField":
        if name not in self.vars:
            raise UnknownIdentifier(name)
        return ScalarField(symbolic.differentiate(self.expression, name), self.vars)

    def substitute(
        self,
        mapping: Mapping[str, Any],
        variables: Sequence[str] | None = None,
    ) -> "ScalarField":
        replacements = {
            name: (value.expression if isinstance(value, ScalarField) else value)
            for name, value in mapping.items()
        }
        if variables is None:
            variables = [v for v in self.vars if v not in mapping]
        return ScalarField(symbolic.substitute(self.expression, replacements), variables)

    def rename(self, mapping: Mapping[str, str], variables: Sequence[str]) -> "ScalarField":
        return ScalarField(symbolic.rename(self.expression, mapping), variables)

    def with_vars(self, variables: Sequence[str]) -> "ScalarField":
        return ScalarField(self.expression, variables)

    def free_variables(self) -> Set[str]:
        return symbolic.free_variables(self.expression)

    def __str__(self) -> str:
        return to_text(self.expression)

    def __repr__(self) -> str:
        return f"ScalarField({to_text(self.expression)!r}, vars={list(self.vars)})"
