"""Algebra trees for the supported SPARQL subset.

A plan is a tree of frozen dataclasses. The server fragment is made of
mapping-at-a-time operators (ScanTP, Join, Union, pure Filter, Project); every
other node is evaluated by the smart client. `classify` groups each maximal
server-evaluable subtree under a `ServerSubquery` leaf and
`serialize_subquery` turns such a subtree back into query text.
"""

from dataclasses import dataclass, fields, replace
from typing import FrozenSet, Iterator, List, Optional, Tuple, Union as TypingUnion

from .errors import FragmentViolationError, UnsupportedFeatureError
from .terms import Term, TriplePattern, Variable, to_sparql

# ---------------------------------------------------------------------------
# Filter expressions

COMPARISON_OPERATORS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Comparison:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Conjunction:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Disjunction:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Negation:
    operand: "Expr"


Expr = TypingUnion[Variable, Term, Comparison, Conjunction, Disjunction, Negation]


def expr_variables(expr: Expr) -> FrozenSet[str]:
    if isinstance(expr, Variable):
        return frozenset((expr.name,))
    if isinstance(expr, Term):
        return frozenset()
    if isinstance(expr, Negation):
        return expr_variables(expr.operand)
    return expr_variables(expr.left) | expr_variables(expr.right)


def render_expr(expr: Expr) -> str:
    if isinstance(expr, (Variable, Term)):
        return to_sparql(expr)
    if isinstance(expr, Negation):
        return f"(!{render_expr(expr.operand)})"
    if isinstance(expr, Comparison):
        return f"({render_expr(expr.left)} {expr.op} {render_expr(expr.right)})"
    op = "&&" if isinstance(expr, Conjunction) else "||"
    return f"({render_expr(expr.left)} {op} {render_expr(expr.right)})"


def bind_expr(expr: Expr, bindings: dict) -> Expr:
    """Replace bound variables by their values."""
    if isinstance(expr, Variable):
        return bindings.get(expr.name, expr)
    if isinstance(expr, Term):
        return expr
    if isinstance(expr, Negation):
        return Negation(bind_expr(expr.operand, bindings))
    return replace(expr, left=bind_expr(expr.left, bindings), right=bind_expr(expr.right, bindings))


# ---------------------------------------------------------------------------
# Plan nodes


@dataclass(frozen=True)
class OrderKey:
    variable: str
    descending: bool = False


@dataclass(frozen=True)
class Aggregate:
    function: str  # COUNT, SUM, AVG, MIN, MAX
    variable: Optional[str]  # None is COUNT(*)
    alias: str
    distinct: bool = False


@dataclass(frozen=True)
class ScanTP:
    pattern: TriplePattern


@dataclass(frozen=True)
class Join:
    left: "PlanNode"
    right: "PlanNode"


@dataclass(frozen=True)
class Union:
    left: "PlanNode"
    right: "PlanNode"


@dataclass(frozen=True)
class Filter:
    expr: Expr
    child: "PlanNode"


@dataclass(frozen=True)
class Project:
    variables: Tuple[str, ...]
    child: "PlanNode"


@dataclass(frozen=True)
class LeftJoin:
    left: "PlanNode"
    right: "PlanNode"


@dataclass(frozen=True)
class Distinct:
    child: "PlanNode"


@dataclass(frozen=True)
class OrderBy:
    keys: Tuple[OrderKey, ...]
    child: "PlanNode"


@dataclass(frozen=True)
class GroupByAgg:
    group_by: Tuple[str, ...]
    aggregates: Tuple[Aggregate, ...]
    child: "PlanNode"


@dataclass(frozen=True)
class Minus:
    left: "PlanNode"
    right: "PlanNode"


@dataclass(frozen=True)
class Service:
    endpoint: str
    child: "PlanNode"
    silent: bool = False


@dataclass(frozen=True)
class FilterExists:
    pattern: "PlanNode"
    child: "PlanNode"
    negated: bool = False


@dataclass(frozen=True)
class Slice:
    offset: int
    limit: Optional[int]
    child: "PlanNode"


@dataclass(frozen=True)
class ServerSubquery:
    """Leaf of a classified tree: a maximal subtree the server evaluates."""

    plan: "PlanNode"


PlanNode = TypingUnion[
    ScanTP,
    Join,
    Union,
    Filter,
    Project,
    LeftJoin,
    Distinct,
    OrderBy,
    GroupByAgg,
    Minus,
    Service,
    FilterExists,
    Slice,
    ServerSubquery,
]

SERVER_NODES = (ScanTP, Join, Union, Filter, Project)
CLIENT_NODES = (LeftJoin, Distinct, OrderBy, GroupByAgg, Minus, Service, FilterExists, Slice)
_PLAN_TYPES = SERVER_NODES + CLIENT_NODES + (ServerSubquery,)


def children(node: PlanNode) -> Tuple[PlanNode, ...]:
    return tuple(
        getattr(node, f.name)
        for f in fields(node)
        if isinstance(getattr(node, f.name), _PLAN_TYPES)
    )


def with_children(node: PlanNode, new_children: List[PlanNode]) -> PlanNode:
    updates = {}
    it = iter(new_children)
    for f in fields(node):
        if isinstance(getattr(node, f.name), _PLAN_TYPES):
            updates[f.name] = next(it)
    return replace(node, **updates)


def walk(node: PlanNode) -> Iterator[PlanNode]:
    yield node
    for child in children(node):
        yield from walk(child)


def size(node: PlanNode) -> int:
    """|Q|: number of nodes in the tree."""
    return sum(1 for _ in walk(node))


def variables(node: PlanNode) -> FrozenSet[str]:
    """var(P): every variable the node may bind."""
    if isinstance(node, ScanTP):
        return frozenset(node.pattern.variables())
    if isinstance(node, Project):
        return frozenset(node.variables)
    if isinstance(node, GroupByAgg):
        return frozenset(node.group_by) | {a.alias for a in node.aggregates}
    if isinstance(node, (Minus, FilterExists)):
        return variables(node.left if isinstance(node, Minus) else node.child)
    result: FrozenSet[str] = frozenset()
    for child in children(node):
        result |= variables(child)
    return result


def certain_variables(node: PlanNode) -> FrozenSet[str]:
    """Variables bound in every solution of the node."""
    if isinstance(node, ScanTP):
        return frozenset(node.pattern.variables())
    if isinstance(node, Join):
        return certain_variables(node.left) | certain_variables(node.right)
    if isinstance(node, Union):
        return certain_variables(node.left) & certain_variables(node.right)
    if isinstance(node, (LeftJoin, Minus)):
        return certain_variables(node.left)
    if isinstance(node, Project):
        return frozenset(node.variables) & certain_variables(node.child)
    if isinstance(node, GroupByAgg):
        return frozenset(node.group_by) & certain_variables(node.child)
    if isinstance(node, ServerSubquery):
        return certain_variables(node.plan)
    return certain_variables(node.child)


def is_server_evaluable(node: PlanNode) -> bool:
    if not isinstance(node, SERVER_NODES):
        return False
    return all(is_server_evaluable(child) for child in children(node))


def fragment(node: PlanNode) -> str:
    return "server" if is_server_evaluable(node) else "client"


def classify(plan: PlanNode) -> PlanNode:
    """Replace every maximal server-evaluable subtree by a ServerSubquery leaf."""
    if isinstance(plan, ServerSubquery):
        return plan
    if is_server_evaluable(plan):
        return ServerSubquery(plan)
    return with_children(plan, [classify(child) for child in children(plan)])


def server_subqueries(plan: PlanNode) -> List[PlanNode]:
    return [node.plan for node in walk(plan) if isinstance(node, ServerSubquery)]


def bgp(*patterns: TriplePattern) -> PlanNode:
    """Left-deep join chain over the given patterns, in order."""
    if not patterns:
        raise ValueError("empty basic graph pattern")
    node: PlanNode = ScanTP(patterns[0])
    for pattern in patterns[1:]:
        node = Join(node, ScanTP(pattern))
    return node


# ---------------------------------------------------------------------------
# Serialization of server subqueries


def _check_server(node: PlanNode, root: bool) -> None:
    if not isinstance(node, SERVER_NODES):
        raise FragmentViolationError(type(node).__name__)
    if isinstance(node, Project) and not root:
        raise UnsupportedFeatureError("nested projection")
    for child in children(node):
        _check_server(child, False)


def _group(node: PlanNode) -> str:
    filters: List[Expr] = []
    while isinstance(node, Filter):
        filters.append(node.expr)
        node = node.child
    parts = _elements(node)
    parts.extend(f"FILTER {render_expr(expr)}" for expr in reversed(filters))
    return "{ " + " ".join(parts) + " }"


def _elements(node: PlanNode) -> List[str]:
    if isinstance(node, ScanTP):
        return [f"{node.pattern} ."]
    if isinstance(node, Join):
        return _elements(node.left) + [_element(node.right)]
    if isinstance(node, Union):
        return [f"{_group(node.left)} UNION {_group(node.right)}"]
    return [_group(node)]


def _element(node: PlanNode) -> str:
    if isinstance(node, ScanTP):
        return f"{node.pattern} ."
    if isinstance(node, Union):
        return f"{_group(node.left)} UNION {_group(node.right)}"
    return _group(node)


def serialize_subquery(plan: PlanNode) -> str:
    """Query text that parses back to `plan`; `plan` must be server-fragment only."""
    if isinstance(plan, ServerSubquery):
        plan = plan.plan
    _check_server(plan, True)
    if isinstance(plan, Project):
        projection = " ".join(f"?{name}" for name in plan.variables)
        return f"SELECT {projection} WHERE {_group(plan.child)}"
    return f"SELECT * WHERE {_group(plan)}"


# ---------------------------------------------------------------------------
# Pretty printer


def _label(node: PlanNode) -> str:
    if isinstance(node, ScanTP):
        return f"ScanTP({node.pattern})"
    if isinstance(node, Filter):
        return f"Filter({render_expr(node.expr)})"
    if isinstance(node, Project):
        return "Project(" + " ".join(f"?{v}" for v in node.variables) + ")"
    if isinstance(node, OrderBy):
        keys = " ".join(
            f"{'DESC' if k.descending else 'ASC'}(?{k.variable})" for k in node.keys
        )
        return f"OrderBy({keys})"
    if isinstance(node, GroupByAgg):
        by = " ".join(f"?{v}" for v in node.group_by) or "()"
        aggs = ", ".join(
            f"{a.function}({'DISTINCT ' if a.distinct else ''}{'?' + a.variable if a.variable else '*'}) AS ?{a.alias}"
            for a in node.aggregates
        )
        return f"GroupByAgg(by {by}; {aggs})" if aggs else f"GroupByAgg(by {by})"
    if isinstance(node, Service):
        return f"Service(<{node.endpoint}>{' SILENT' if node.silent else ''})"
    if isinstance(node, FilterExists):
        return "FilterNotExists" if node.negated else "FilterExists"
    if isinstance(node, Slice):
        return f"Slice(offset={node.offset}, limit={node.limit})"
    return type(node).__name__


def pretty(plan: PlanNode, indent: int = 0) -> str:
    """One node per line, children indented by two spaces."""
    lines = [("  " * indent) + _label(plan)]
    for child in children(plan):
        lines.append(pretty(child, indent + 1))
    return "\n".join(lines)
