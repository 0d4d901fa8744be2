"""Full-mappings operators evaluated by the client, and plan rewriting for bind joins."""

from decimal import Decimal
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .algebra import (
    Aggregate,
    Comparison,
    Filter,
    OrderKey,
    PlanNode,
    Project,
    ScanTP,
    Union,
    bind_expr,
    children,
    expr_variables,
    variables,
    with_children,
)
from .expr import ExpressionError, evaluate_filter, order_key
from .terms import (
    SolutionMapping,
    Term,
    TriplePattern,
    Variable,
    compatible,
    freeze,
    number_term,
    numeric_value,
    restrict,
    substitute,
)

BRANCH_SEPARATOR = "__b"
PROBE_PREFIX = "__probe"


# ---------------------------------------------------------------------------
# Sequence operators


def distinct(mappings: Iterable[SolutionMapping]) -> Iterator[SolutionMapping]:
    seen: Set = set()
    for mapping in mappings:
        key = freeze(mapping)
        if key not in seen:
            seen.add(key)
            yield mapping


def order_by(mappings: Iterable[SolutionMapping], keys: Sequence[OrderKey]) -> List[SolutionMapping]:
    """Stable multi-key sort; ties keep their input order."""
    rows = list(mappings)
    for key in reversed(keys):
        rows.sort(key=lambda m, name=key.variable: order_key(m.get(name)), reverse=key.descending)
    return rows


def minus(left: Iterable[SolutionMapping], right: List[SolutionMapping]) -> Iterator[SolutionMapping]:
    """Keeps left mappings with no compatible right mapping sharing a variable."""
    for mapping in left:
        if not any(
            set(mapping) & set(other) and compatible(mapping, other) for other in right
        ):
            yield mapping


def join_local(
    left: Iterable[SolutionMapping],
    right: List[SolutionMapping],
    conditions: Sequence = (),
    optional: bool = False,
) -> Iterator[SolutionMapping]:
    """Nested-loop join against a materialized right side."""
    for mapping in left:
        matched = False
        for other in right:
            if not compatible(mapping, other):
                continue
            merged = {**mapping, **other}
            if all(evaluate_filter(expr, merged) for expr in conditions):
                matched = True
                yield merged
        if optional and not matched:
            yield mapping


# ---------------------------------------------------------------------------
# Aggregation


def _aggregate(aggregate: Aggregate, rows: List[SolutionMapping]) -> Optional[Term]:
    if aggregate.variable is None:
        values = [freeze(row) for row in rows]
        return number_term(len(set(values)) if aggregate.distinct else len(values))
    values = [row[aggregate.variable] for row in rows if aggregate.variable in row]
    if aggregate.distinct:
        values = list(dict.fromkeys(values))
    function = aggregate.function
    if function == "COUNT":
        return number_term(len(values))
    if function in ("MIN", "MAX"):
        if not values:
            return None
        pick = min if function == "MIN" else max
        return pick(values, key=order_key)
    numbers = []
    for value in values:
        number = numeric_value(value)
        if number is None:
            raise ExpressionError(f"{function} over non-numeric {value}")
        numbers.append(number)
    total = _sum(numbers)
    if function == "SUM":
        return number_term(total)
    if not numbers:
        return number_term(0)
    if isinstance(total, float):
        return number_term(total / len(numbers))
    return number_term(Decimal(total) / Decimal(len(numbers)))


def _sum(numbers: List) -> object:
    if any(isinstance(n, float) for n in numbers):
        return float(sum(float(n) for n in numbers))
    if any(isinstance(n, Decimal) for n in numbers):
        return sum((Decimal(n) for n in numbers), Decimal(0))
    return sum(numbers, 0)


def group_by_aggregate(
    mappings: Iterable[SolutionMapping],
    group_by: Sequence[str],
    aggregates: Sequence[Aggregate],
) -> List[SolutionMapping]:
    """One output mapping per group, in order of first appearance.

    An aggregate that fails for a group (SUM or AVG over a non-numeric value)
    leaves its alias unbound in that group's mapping.
    """
    groups: Dict[Tuple, List[SolutionMapping]] = {}
    for mapping in mappings:
        groups.setdefault(tuple(mapping.get(name) for name in group_by), []).append(mapping)
    if not groups and not group_by:
        groups[()] = []
    results = []
    for key, rows in groups.items():
        result = {name: value for name, value in zip(group_by, key) if value is not None}
        for aggregate in aggregates:
            try:
                value = _aggregate(aggregate, rows)
            except ExpressionError:
                value = None
            if value is not None:
                result[aggregate.alias] = value
        results.append(result)
    return results


# ---------------------------------------------------------------------------
# Substitution and bind-join branches


def _substitute_scan(pattern: TriplePattern, bindings: SolutionMapping) -> PlanNode:
    """Bound scan; blank node values stay variables pinned by equality filters."""
    blanks = {
        c.name: bindings[c.name]
        for c in pattern
        if isinstance(c, Variable) and c.name in bindings and bindings[c.name].is_blank
    }
    plain = {name: value for name, value in bindings.items() if name not in blanks}
    node: PlanNode = ScanTP(substitute(pattern, plain))
    for name, value in sorted(blanks.items()):
        node = Filter(Comparison("=", Variable(name), value), node)
    return node


def substitute_plan(node: PlanNode, bindings: SolutionMapping, condition: bool = False) -> PlanNode:
    """Instantiate a server subtree with `bindings`.

    Patterns receive every binding. A filter sees only the bindings of
    variables its group can bind, except for the top-level filters of an
    OPTIONAL right side (`condition=True`), which see all of them.
    """
    if isinstance(node, ScanTP):
        return _substitute_scan(node.pattern, bindings)
    if isinstance(node, Filter):
        visible = bindings if condition else restrict(bindings, variables(node.child))
        return Filter(bind_expr(node.expr, visible), substitute_plan(node.child, bindings, condition))
    if isinstance(node, Project):
        kept = tuple(v for v in node.variables if v not in bindings)
        return Project(kept, substitute_plan(node.child, bindings))
    return with_children(node, [substitute_plan(child, bindings) for child in children(node)])


def substitute_exists(node: PlanNode, bindings: SolutionMapping) -> PlanNode:
    """EXISTS substitution: every occurrence of a bound variable is replaced."""
    if isinstance(node, ScanTP):
        return _substitute_scan(node.pattern, bindings)
    if isinstance(node, Filter):
        return Filter(bind_expr(node.expr, bindings), substitute_exists(node.child, bindings))
    return with_children(node, [substitute_exists(child, bindings) for child in children(node)])


def _rename(component, suffix: str):
    if isinstance(component, Variable):
        return Variable(component.name + suffix)
    return component


def _rename_expr(expr, suffix: str):
    if isinstance(expr, Variable):
        return Variable(expr.name + suffix)
    if isinstance(expr, Term):
        return expr
    return bind_expr(expr, {name: Variable(name + suffix) for name in expr_variables(expr)})


def tag_branch(node: PlanNode, index: int) -> PlanNode:
    """Rename every variable of a bound branch with its branch suffix.

    Patterns left without variables get a probe variable on the subject,
    pinned by an equality filter, so that every solution of the branch binds
    at least one tagged variable.
    """
    counter = [0]
    suffix = f"{BRANCH_SEPARATOR}{index}"

    def visit(current: PlanNode) -> PlanNode:
        if isinstance(current, ScanTP):
            pattern = current.pattern
            if not pattern.variables():
                probe = Variable(f"{PROBE_PREFIX}{counter[0]}{suffix}")
                counter[0] += 1
                return Filter(
                    Comparison("=", probe, pattern.subject),
                    ScanTP(TriplePattern(probe, pattern.predicate, pattern.object)),
                )
            return ScanTP(TriplePattern(*(_rename(c, suffix) for c in pattern)))
        if isinstance(current, Filter):
            return Filter(_rename_expr(current.expr, suffix), visit(current.child))
        if isinstance(current, Project):
            return Project(tuple(v + suffix for v in current.variables), visit(current.child))
        return with_children(current, [visit(child) for child in children(current)])

    return visit(node)


def untag(mapping: SolutionMapping) -> Tuple[int, SolutionMapping]:
    """Branch index of a tagged solution and the solution with original names."""
    index = None
    result: SolutionMapping = {}
    for name, value in mapping.items():
        base, _, tag = name.rpartition(BRANCH_SEPARATOR)
        if not base or not tag.isdigit():
            raise ValueError(f"untagged variable ?{name} in bind join result")
        if index is None:
            index = int(tag)
        if not base.startswith(PROBE_PREFIX):
            result[base] = value
    if index is None:
        raise ValueError("empty bind join result")
    return index, result


def union_of(nodes: Sequence[PlanNode]) -> PlanNode:
    node = nodes[0]
    for other in nodes[1:]:
        node = Union(node, other)
    return node


def bound_union(template: PlanNode, block: Sequence[SolutionMapping], condition: bool = False) -> PlanNode:
    """UNION over the block's instantiations of `template`, one tagged branch per mapping."""
    return union_of(
        [tag_branch(substitute_plan(template, mapping, condition), i) for i, mapping in enumerate(block)]
    )


def peel_filters(node: PlanNode) -> Tuple[PlanNode, List]:
    """Split top-level filters from their group; innermost first."""
    conditions = []
    while isinstance(node, Filter):
        conditions.append(node.expr)
        node = node.child
    conditions.reverse()
    return node, conditions
