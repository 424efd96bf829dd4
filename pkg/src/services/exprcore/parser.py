import re
from dataclasses import dataclass
from typing import List, Sequence

from src.errors import ExpressionSyntaxError, UnknownIdentifier
from src.services.exprcore.nodes import INTRINSICS, Call, Expression, Num, Var
from src.services.exprcore.symbolic import fold_binop, fold_call, fold_neg

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
)

_ATOM_START = ("number", "identifier", "'('", "'-'")


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | op | end
    text: str
    position: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    position = 0
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None:
            raise ExpressionSyntaxError(position, _ATOM_START + ("operator",), text)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, match.group(), position))
        position = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class Parser:
    """Recursive-descent parser for the expression grammar.

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := unary ("^" factor)?
    unary  := "-" unary | atom
    atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

    Constant sub-trees are folded as they are built; nothing else is rewritten.
    """

    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = set(variables)
        self.tokens = tokenize(text)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def _advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _at(self, *ops: str) -> bool:
        return self.current.kind == "op" and self.current.text in ops

    def _expect(self, op: str) -> None:
        if not self._at(op):
            raise ExpressionSyntaxError(self.current.position, (f"'{op}'",), self.text)
        self._advance()

    def parse(self) -> Expression:
        node = self.expr()
        if self.current.kind != "end":
            raise ExpressionSyntaxError(
                self.current.position, ("operator", "end of input"), self.text
            )
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self._at("+", "-"):
            op = self._advance().text
            node = fold_binop(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.factor()
        while self._at("*", "/"):
            op = self._advance().text
            node = fold_binop(op, node, self.factor())
        return node

    def factor(self) -> Expression:
        base = self.unary()
        if self._at("^"):
            self._advance()
            return fold_binop("^", base, self.factor())
        return base

    def unary(self) -> Expression:
        if self._at("-"):
            self._advance()
            return fold_neg(self.unary())
        return self.atom()

    def atom(self) -> Expression:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Num(float(token.text))
        if token.kind == "ident":
            self._advance()
            if self._at("("):
                if token.text not in INTRINSICS:
                    raise UnknownIdentifier(token.text, token.position)
                self._advance()
                arg = self.expr()
                self._expect(")")
                return fold_call(token.text, arg)
            if token.text not in self.variables:
                raise UnknownIdentifier(token.text, token.position)
            return Var(token.text)
        if self._at("("):
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        raise ExpressionSyntaxError(token.position, _ATOM_START, self.text)


def parse(text: str, variables: Sequence[str]) -> Expression:
    """Parse ``text`` into an expression tree over ``variables``.

    Args:
        text (str): Expression source, e.g. ``"p1^2/2 + q1^2/2"``.
        variables (Sequence[str]): Names the expression may reference.

    Returns:
        Expression: The (constant-folded) syntax tree.

    Raises:
        ExpressionSyntaxError: With the offending offset and expected tokens.
        UnknownIdentifier: For names outside ``variables`` and the intrinsics.
    """
    return Parser(text, variables).parse()
