"""Filter expression evaluation with SPARQL error semantics.

A comparison between incompatible terms or a reference to an unbound variable
raises `ExpressionError`. Logical operators absorb errors the way SPARQL does
(`false && error` is false, `true || error` is true) and a filter rejects any
mapping whose condition ends in an error.
"""

from typing import Optional, Tuple, Union

from .algebra import Comparison, Conjunction, Disjunction, Expr, Negation
from .terms import (
    XSD_BOOLEAN,
    XSD_STRING,
    SolutionMapping,
    Term,
    TermKind,
    Variable,
    numeric_value,
    same_term,
)

Value = Union[Term, bool]


class ExpressionError(Exception):
    pass


def _is_simple_string(term: Term) -> bool:
    return term.kind == TermKind.LITERAL and not term.language and term.datatype in ("", XSD_STRING)


def _compare(op: str, left: Term, right: Term) -> bool:
    a, b = numeric_value(left), numeric_value(right)
    if a is not None and b is not None:
        x, y = a, b
    elif _is_simple_string(left) and _is_simple_string(right):
        x, y = left.lexical, right.lexical
    elif op in ("=", "!="):
        if (a is None) != (b is None) and left.is_literal and right.is_literal:
            raise ExpressionError(f"cannot compare {left} and {right}")
        return same_term(left, right) == (op == "=")
    elif (
        left.kind == right.kind
        and left.datatype == right.datatype
        and left.language.lower() == right.language.lower()
        and left.kind == TermKind.LITERAL
    ):
        x, y = left.lexical, right.lexical
    else:
        raise ExpressionError(f"cannot order {left} and {right}")
    if op == "=":
        return x == y
    if op == "!=":
        return x != y
    if op == "<":
        return x < y
    if op == "<=":
        return x <= y
    if op == ">":
        return x > y
    return x >= y


def effective_boolean_value(value: Value) -> bool:
    if isinstance(value, bool):
        return value
    if value.kind != TermKind.LITERAL:
        raise ExpressionError(f"no boolean value for {value}")
    if value.datatype == XSD_BOOLEAN:
        if value.lexical in ("true", "1"):
            return True
        if value.lexical in ("false", "0"):
            return False
        raise ExpressionError(f"ill-typed boolean {value}")
    number = numeric_value(value)
    if number is not None:
        return number == number and number != 0
    if _is_simple_string(value) or value.language:
        return value.lexical != ""
    raise ExpressionError(f"no boolean value for {value}")


def evaluate(expr: Expr, mapping: SolutionMapping) -> Value:
    if isinstance(expr, Variable):
        value = mapping.get(expr.name)
        if value is None:
            raise ExpressionError(f"unbound variable ?{expr.name}")
        return value
    if isinstance(expr, Term):
        return expr
    if isinstance(expr, Comparison):
        left = evaluate(expr.left, mapping)
        right = evaluate(expr.right, mapping)
        if isinstance(left, bool) or isinstance(right, bool):
            left_bool = effective_boolean_value(left)
            right_bool = effective_boolean_value(right)
            if expr.op not in ("=", "!="):
                raise ExpressionError("cannot order boolean results")
            return (left_bool == right_bool) == (expr.op == "=")
        return _compare(expr.op, left, right)
    if isinstance(expr, Negation):
        return not effective_boolean_value(evaluate(expr.operand, mapping))
    left = _try_ebv(expr.left, mapping)
    right = _try_ebv(expr.right, mapping)
    if isinstance(expr, Conjunction):
        if left is False or right is False:
            return False
        if left is None or right is None:
            raise ExpressionError("error in conjunction")
        return True
    if isinstance(expr, Disjunction):
        if left is True or right is True:
            return True
        if left is None or right is None:
            raise ExpressionError("error in disjunction")
        return False
    raise TypeError(f"not an expression: {expr!r}")


def _try_ebv(expr: Expr, mapping: SolutionMapping) -> Optional[bool]:
    try:
        return effective_boolean_value(evaluate(expr, mapping))
    except ExpressionError:
        return None


def evaluate_filter(expr: Expr, mapping: SolutionMapping) -> bool:
    """True only when the condition holds; errors reject the mapping."""
    return _try_ebv(expr, mapping) is True


def order_key(term: Optional[Term]) -> Tuple:
    """Total order for ORDER BY: unbound, blank nodes, IRIs, then literals.

    Numeric literals sort by value before every other literal.
    """
    if term is None:
        return (0,)
    if term.kind == TermKind.BLANK:
        return (1, term.lexical)
    if term.kind == TermKind.IRI:
        return (2, term.lexical)
    number = numeric_value(term)
    if number is not None and number == number:
        return (3, 0, number, term.lexical, term.datatype)
    return (3, 1, term.lexical, term.datatype, term.language)
