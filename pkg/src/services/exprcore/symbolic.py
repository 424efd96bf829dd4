"""Tree rewriting: constant folding, substitution and symbolic derivatives.

Two layers of constructors live here. ``fold_*`` only evaluate sub-trees whose
operands are all literals (what the parser does). The short-named builders
(``add``, ``mul``, ...) additionally drop neutral elements; they are used when
derivative trees are generated so that iterated total derivatives stay small.
"""

import math
from typing import Callable, Dict, Mapping, Optional, Set, Union

from src.services.exprcore.nodes import BinOp, Call, Expression, Neg, Num, Var

_FLOAT_INTRINSICS: Dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
    "tanh": math.tanh,
    "abs": abs,
}

ZERO = Num(0.0)
ONE = Num(1.0)


def is_integer(value: float) -> bool:
    return float(value).is_integer()


def _finite(value: float) -> Optional[Num]:
    return Num(value) if math.isfinite(value) else None


def _fold_value(op: str, a: float, b: float) -> Optional[Num]:
    try:
        if op == "+":
            return _finite(a + b)
        if op == "-":
            return _finite(a - b)
        if op == "*":
            return _finite(a * b)
        if op == "/":
            return None if b == 0 else _finite(a / b)
        if op == "^":
            if is_integer(b):
                if a == 0 and b < 0:
                    return None
                return _finite(a ** int(b))
            if a <= 0:
                return None
            return _finite(a**b)
    except (OverflowError, ZeroDivisionError):
        return None
    raise ValueError(f"unknown operator {op!r}")


def fold_binop(op: str, left: Expression, right: Expression) -> Expression:
    if isinstance(left, Num) and isinstance(right, Num):
        folded = _fold_value(op, left.value, right.value)
        if folded is not None:
            return folded
    return BinOp(op, left, right)


def fold_neg(operand: Expression) -> Expression:
    if isinstance(operand, Num):
        return Num(-operand.value)
    return Neg(operand)


def fold_call(func: str, arg: Expression) -> Expression:
    if isinstance(arg, Num):
        if func in ("sqrt", "ln") and arg.value <= 0:
            return Call(func, arg)
        try:
            folded = _finite(_FLOAT_INTRINSICS[func](arg.value))
        except (OverflowError, ValueError):
            folded = None
        if folded is not None:
            return folded
    return Call(func, arg)


def _is(node: Expression, value: float) -> bool:
    return isinstance(node, Num) and node.value == value


def neg(a: Expression) -> Expression:
    if isinstance(a, Neg):
        return a.operand
    return fold_neg(a)


def add(a: Expression, b: Expression) -> Expression:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return fold_binop("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return fold_binop("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return fold_binop("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return fold_binop("/", a, b)


def power(a: Expression, b: Expression) -> Expression:
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    return fold_binop("^", a, b)


def call(func: str, arg: Expression) -> Expression:
    return fold_call(func, arg)


def _call_derivative(func: str, u: Expression) -> Expression:
    if func == "sin":
        return call("cos", u)
    if func == "cos":
        return neg(call("sin", u))
    if func == "exp":
        return call("exp", u)
    if func == "ln":
        return div(ONE, u)
    if func == "sqrt":
        return div(ONE, mul(Num(2.0), call("sqrt", u)))
    if func == "tanh":
        return sub(ONE, power(call("tanh", u), Num(2.0)))
    if func == "abs":
        return div(u, call("abs", u))
    raise ValueError(f"unknown intrinsic {func!r}")


def differentiate(node: Expression, name: str) -> Expression:
    """Symbolic partial derivative of ``node`` with respect to ``name``."""
    if isinstance(node, Num):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == name else ZERO
    if isinstance(node, Neg):
        return neg(differentiate(node.operand, name))
    if isinstance(node, Call):
        du = differentiate(node.arg, name)
        if _is(du, 0.0):
            return ZERO
        return mul(_call_derivative(node.func, node.arg), du)
    if not isinstance(node, BinOp):
        raise TypeError(f"not an expression node: {node!r}")

    u, v = node.left, node.right
    du, dv = differentiate(u, name), differentiate(v, name)
    if node.op == "+":
        return add(du, dv)
    if node.op == "-":
        return sub(du, dv)
    if node.op == "*":
        return add(mul(du, v), mul(u, dv))
    if node.op == "/":
        return sub(div(du, v), div(mul(u, dv), power(v, Num(2.0))))
    # "^"
    if isinstance(v, Num):
        if _is(du, 0.0):
            return ZERO
        return mul(mul(v, power(u, Num(v.value - 1.0))), du)
    log_term = mul(dv, call("ln", u))
    base_term = div(mul(v, du), u)
    return mul(node, add(log_term, base_term))


Replacement = Union[Expression, float]


def substitute(node: Expression, mapping: Mapping[str, Replacement]) -> Expression:
    """Replace variables by sub-trees or numbers, folding what becomes constant."""
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        if node.name not in mapping:
            return node
        value = mapping[node.name]
        return Num(float(value)) if isinstance(value, (int, float)) else value
    if isinstance(node, Neg):
        return fold_neg(substitute(node.operand, mapping))
    if isinstance(node, Call):
        return fold_call(node.func, substitute(node.arg, mapping))
    return fold_binop(
        node.op, substitute(node.left, mapping), substitute(node.right, mapping)
    )


def rename(node: Expression, mapping: Mapping[str, str]) -> Expression:
    return substitute(node, {old: Var(new) for old, new in mapping.items()})


def free_variables(node: Expression) -> Set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, Call):
        return free_variables(node.arg)
    return free_variables(node.left) | free_variables(node.right)
