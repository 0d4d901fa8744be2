"""Physical planning for server subqueries.

Join operands are flattened; triple patterns are ordered by exact range
cardinality, preferring patterns connected to the variables bound so far, and
chained left-deep with index loop joins. Any other operand (a UNION or a
filtered group) becomes the inner template of a loop join after the patterns.
"""

import logging
from typing import List, Optional, Set

from .algebra import SERVER_NODES, Filter, Join, PlanNode, Project, ScanTP, Union, variables, walk
from .errors import FragmentViolationError, UnsupportedFeatureError
from .operators import (
    FilterIterator,
    IndexLoopJoin,
    IndexScan,
    MergeJoin,
    PreemptableIterator,
    Projection,
    UnionIterator,
)
from .store import TripleStore, leading_free_variable
from .terms import SolutionMapping, TriplePattern, Variable, substitute

logger = logging.getLogger(__name__)


def check_server_fragment(plan: PlanNode) -> None:
    """Raise on the first node, in pre-order, that the server cannot evaluate."""
    for node in walk(plan):
        if not isinstance(node, SERVER_NODES):
            raise FragmentViolationError(type(node).__name__)
        if isinstance(node, Project) and node is not plan:
            raise UnsupportedFeatureError("nested projection")


def flatten_join(node: PlanNode) -> List[PlanNode]:
    if isinstance(node, Join):
        return flatten_join(node.left) + flatten_join(node.right)
    return [node]


def flatten_union(node: PlanNode) -> List[PlanNode]:
    if isinstance(node, Union):
        return flatten_union(node.left) + flatten_union(node.right)
    return [node]


def _pattern_variables(pattern: TriplePattern) -> Set[str]:
    return {c.name for c in pattern if isinstance(c, Variable)}


def order_patterns(patterns: List[TriplePattern], store: TripleStore, context: SolutionMapping) -> List[TriplePattern]:
    """Cheapest pattern first, then the cheapest one sharing a bound variable."""
    remaining = [
        (store.cardinality(substitute(p, context)), i, p) for i, p in enumerate(patterns)
    ]
    remaining.sort(key=lambda item: (item[0], item[1]))
    ordered: List[TriplePattern] = []
    bound: Set[str] = set()
    while remaining:
        chosen = next(
            (item for item in remaining if _pattern_variables(item[2]) & bound),
            remaining[0],
        )
        remaining.remove(chosen)
        ordered.append(chosen[2])
        bound |= _pattern_variables(chosen[2])
    return ordered


def _merge_join_variable(left: TriplePattern, right: TriplePattern, context: SolutionMapping) -> Optional[str]:
    """Join variable when both scans come out sorted on it, else None."""
    variable = leading_free_variable(substitute(left, context))
    if variable is None:
        return None
    if leading_free_variable(substitute(right, context)) != variable:
        return None
    return variable


def build_operator(node: PlanNode, store: TripleStore, context: SolutionMapping) -> PreemptableIterator:
    if isinstance(node, ScanTP):
        return IndexScan(store, node.pattern, context)
    if isinstance(node, Filter):
        scope = tuple(sorted(variables(node.child)))
        return FilterIterator(build_operator(node.child, store, context), node.expr, scope, context)
    if isinstance(node, Union):
        return UnionIterator([build_operator(b, store, context) for b in flatten_union(node)])
    if isinstance(node, Project):
        return Projection(build_operator(node.child, store, context), node.variables)
    if isinstance(node, Join):
        return _build_join(flatten_join(node), store, context)
    raise FragmentViolationError(type(node).__name__)


def _build_join(operands: List[PlanNode], store: TripleStore, context: SolutionMapping) -> PreemptableIterator:
    patterns = [op.pattern for op in operands if isinstance(op, ScanTP)]
    others = [op for op in operands if not isinstance(op, ScanTP)]
    patterns = order_patterns(patterns, store, context)

    if len(patterns) == 2 and not others:
        variable = _merge_join_variable(patterns[0], patterns[1], context)
        if variable is not None:
            return MergeJoin(
                IndexScan(store, patterns[0], context),
                IndexScan(store, patterns[1], context),
                variable,
            )

    templates: List[PlanNode] = [ScanTP(p) for p in patterns] + others
    root = build_operator(templates[0], store, context)
    for template in templates[1:]:
        root = IndexLoopJoin(store, root, template, context)
    return root


def build_plan(subquery: PlanNode, store: TripleStore) -> PreemptableIterator:
    """Physical operator tree for a server-fragment query."""
    check_server_fragment(subquery)
    root = build_operator(subquery, store, {})
    logger.debug("built plan with %d operators", root.operator_count())
    return root


def explain(root: PreemptableIterator, indent: int = 0) -> str:
    """Physical plan, one operator per line."""
    label = root.name
    if isinstance(root, IndexScan):
        label = f"IndexScan[{root.index_id}]({root.pattern})"
    elif isinstance(root, MergeJoin):
        label = f"MergeJoin(?{root.variable})"
    elif isinstance(root, Projection):
        label = "Projection(" + " ".join(f"?{v}" for v in root.variables) + ")"
    elif isinstance(root, IndexLoopJoin):
        inner = root.template
        label = f"IndexLoopJoin(inner={inner.pattern})" if isinstance(inner, ScanTP) else "IndexLoopJoin"
    lines = ["  " * indent + label]
    for child in root.children():
        lines.append(explain(child, indent + 1))
    if isinstance(root, IndexLoopJoin) and root.inner is None and not isinstance(root.template, ScanTP):
        lines.append("  " * (indent + 1) + f"<template {type(root.template).__name__}>")
    return "\n".join(lines)

