"""
Boolean expression trees for standard-cell functions.

This module defines the expression tree used as node semantics throughout
netlist-fi and the parser for liberty-style function strings, e.g.
``!(A1 & (B1 | B2))``.

Operator precedence, highest first: NOT (``!`` prefix, ``'`` postfix),
XOR (``^``), AND (``&``, ``*``), OR (``|``, ``+``).
"""

import logging
from dataclasses import dataclass
from functools import reduce
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from lark import Lark, Transformer
from lark.exceptions import UnexpectedInput, VisitError

logger = logging.getLogger(__name__)


class ExpressionError(Exception):
    """Base exception for boolean expression errors."""
    pass


class UndeclaredPin(ExpressionError):
    """Raised when an expression references a pin the cell does not declare."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Undeclared pin in expression: {name}")


class ExpressionSyntaxError(ExpressionError):
    """Raised when a function string cannot be parsed."""

    def __init__(self, position: int, text: str = ""):
        self.position = position
        super().__init__(f"Syntax error at position {position} in expression: {text!r}")


class BoolExpr:
    """Base class of all expression tree nodes."""

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        """
        Evaluate the expression.

        Values are integers used as bit vectors: with ``mask == 1`` this is plain
        0/1 evaluation, with a wider mask every bit position is an independent
        assignment (bit-parallel evaluation).

        Args:
            assignment: Pin name to value
            mask: All-ones mask of the evaluation width

        Returns:
            Value of the expression under the assignment

        Raises:
            KeyError: If a referenced pin is missing from the assignment
        """
        raise NotImplementedError

    def variables(self) -> FrozenSet[str]:
        """Return every pin name referenced by the expression."""
        raise NotImplementedError

    def operator_count(self) -> int:
        """Return the number of operator nodes in the tree."""
        raise NotImplementedError

    def to_string(self) -> str:
        """Serialize to the function-string grammar accepted by parse_bool_expr."""
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_string()


@dataclass(frozen=True)
class Const(BoolExpr):
    value: int

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        return mask if self.value else 0

    def variables(self) -> FrozenSet[str]:
        return frozenset()

    def operator_count(self) -> int:
        return 0

    def to_string(self) -> str:
        return "1" if self.value else "0"


@dataclass(frozen=True)
class Var(BoolExpr):
    name: str

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        return assignment[self.name]

    def variables(self) -> FrozenSet[str]:
        return frozenset((self.name,))

    def operator_count(self) -> int:
        return 0

    def to_string(self) -> str:
        return self.name


@dataclass(frozen=True)
class Not(BoolExpr):
    arg: BoolExpr

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        return mask ^ self.arg.evaluate(assignment, mask)

    def variables(self) -> FrozenSet[str]:
        return self.arg.variables()

    def operator_count(self) -> int:
        return 1 + self.arg.operator_count()

    def to_string(self) -> str:
        return "!" + _wrap(self.arg)


@dataclass(frozen=True)
class _NaryExpr(BoolExpr):
    args: Tuple[BoolExpr, ...]

    symbol = "?"

    def variables(self) -> FrozenSet[str]:
        return frozenset().union(*(arg.variables() for arg in self.args))

    def operator_count(self) -> int:
        return 1 + sum(arg.operator_count() for arg in self.args)

    def to_string(self) -> str:
        return f" {self.symbol} ".join(_wrap(arg) for arg in self.args)


@dataclass(frozen=True)
class And(_NaryExpr):
    symbol = "&"

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        return reduce(lambda acc, arg: acc & arg.evaluate(assignment, mask), self.args, mask)


@dataclass(frozen=True)
class Or(_NaryExpr):
    symbol = "|"

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        return reduce(lambda acc, arg: acc | arg.evaluate(assignment, mask), self.args, 0)


@dataclass(frozen=True)
class Xor(_NaryExpr):
    symbol = "^"

    def evaluate(self, assignment: Mapping[str, int], mask: int = 1) -> int:
        return reduce(lambda acc, arg: acc ^ arg.evaluate(assignment, mask), self.args, 0)


def _wrap(expr: BoolExpr) -> str:
    """Parenthesize compound sub-expressions so re-parsing keeps the tree shape."""
    if isinstance(expr, _NaryExpr):
        return f"({expr.to_string()})"
    return expr.to_string()


_EXPRESSION_GRAMMAR = r"""
    ?start: or_expr

    ?or_expr: and_expr (_OR and_expr)*
    ?and_expr: xor_expr (_AND xor_expr)*
    ?xor_expr: not_expr ("^" not_expr)*
    ?not_expr: "!" not_expr -> negation
             | postfix
    ?postfix: atom
            | postfix "'" -> prime
    ?atom: "(" or_expr ")"
         | CONST -> constant
         | NAME -> variable

    _OR: "|" | "+"
    _AND: "&" | "*"
    CONST: "0" | "1"
    NAME: /[A-Za-z_][A-Za-z0-9_\[\]\.]*/

    %import common.WS
    %ignore WS
"""

_parser: Optional[Lark] = None


def _get_parser() -> Lark:
    global _parser
    if _parser is None:
        _parser = Lark(_EXPRESSION_GRAMMAR, parser="lalr", propagate_positions=False)
    return _parser


class _ExpressionBuilder(Transformer):
    """Turns the parse tree into BoolExpr nodes and checks pin declarations."""

    def __init__(self, declared_pins: Optional[Iterable[str]]):
        super().__init__()
        self.declared_pins = None if declared_pins is None else frozenset(declared_pins)

    def or_expr(self, children: List[BoolExpr]) -> BoolExpr:
        return Or(tuple(children))

    def and_expr(self, children: List[BoolExpr]) -> BoolExpr:
        return And(tuple(children))

    def xor_expr(self, children: List[BoolExpr]) -> BoolExpr:
        return Xor(tuple(children))

    def negation(self, children: List[BoolExpr]) -> BoolExpr:
        return Not(children[0])

    def prime(self, children: List[BoolExpr]) -> BoolExpr:
        return Not(children[0])

    def constant(self, children) -> BoolExpr:
        return Const(int(str(children[0])))

    def variable(self, children) -> BoolExpr:
        name = str(children[0])
        if self.declared_pins is not None and name not in self.declared_pins:
            raise UndeclaredPin(name)
        return Var(name)


def parse_bool_expr(text: str, declared_pins: Optional[Iterable[str]] = None) -> BoolExpr:
    """
    Parse a function string into an expression tree.

    Args:
        text: Function string, e.g. ``"!(A1 & (B1 | B2))"``
        declared_pins: Pins the expression may reference (None disables the check)

    Returns:
        Parsed expression tree; chains of one operator collapse into one n-ary node

    Raises:
        UndeclaredPin: If an identifier is not a declared pin
        ExpressionSyntaxError: If the text does not match the grammar
    """
    try:
        tree = _get_parser().parse(text)
    except UnexpectedInput as e:
        position = getattr(e, "pos_in_stream", None)
        if position is None or position < 0:
            position = len(text)
        raise ExpressionSyntaxError(position, text) from e

    try:
        return _ExpressionBuilder(declared_pins).transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ExpressionError):
            raise e.orig_exc from None
        raise


def truth_table(expr: BoolExpr, pins: List[str]) -> int:
    """
    Compute the truth table of an expression as a single integer.

    Bit ``i`` of the result is the value under the assignment where pin ``j``
    takes bit ``len(pins) - 1 - j`` of ``i``.
    """
    width = 1 << len(pins)
    mask = (1 << width) - 1
    assignment: Dict[str, int] = {}
    for position, pin in enumerate(pins):
        assignment[pin] = input_pattern(len(pins) - 1 - position, len(pins))
    return expr.evaluate(assignment, mask)


def input_pattern(bit: int, count: int) -> int:
    """
    Bit-parallel pattern of one input over all ``2**count`` assignments.

    Position ``i`` of the pattern holds bit ``bit`` of ``i``.
    """
    half = 1 << bit
    period = half << 1
    total = 1 << count
    block = ((1 << half) - 1) << half
    repeat = ((1 << total) - 1) // ((1 << period) - 1)
    return block * repeat
