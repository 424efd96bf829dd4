"""Expression tree and the canonical printer."""

from dataclasses import dataclass
from typing import Union

INTRINSICS = ("sin", "cos", "exp", "ln", "sqrt", "tanh", "abs")
BINARY_OPS = ("+", "-", "*", "/", "^")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"


Expression = Union[Num, Var, Neg, BinOp, Call]


def to_text(node: Expression) -> str:
    """Print an expression so that parsing the text gives the same tree.

    Binary operations and negations are fully parenthesised; negative
    literals (only produced by constant folding) are printed as ``(-x)``.
    """
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")
