from src.services.exprcore.dual import Dual, HyperDual
from src.services.exprcore.nodes import (
    INTRINSICS,
    BinOp,
    Call,
    Expression,
    Neg,
    Num,
    Var,
    to_text,
)
from src.services.exprcore.parser import parse
from src.services.exprcore.scalar_field import ScalarField
from src.services.exprcore.symbolic import (
    differentiate,
    free_variables,
    rename,
    substitute,
)

__all__ = [
    "INTRINSICS",
    "BinOp",
    "Call",
    "Dual",
    "Expression",
    "HyperDual",
    "Neg",
    "Num",
    "ScalarField",
    "Var",
    "differentiate",
    "free_variables",
    "parse",
    "rename",
    "substitute",
    "to_text",
]
