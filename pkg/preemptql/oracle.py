"""Reference evaluator: whole-collection SPARQL semantics straight over the triples.

Used by the tests and by `bench generate` to record expected cardinalities.
It shares nothing with the preemptable engine beyond the term helpers and
the client-side aggregation functions.
"""

import itertools
from typing import Dict, List, Mapping, Optional

from .algebra import (
    Distinct,
    Filter,
    FilterExists,
    GroupByAgg,
    Join,
    LeftJoin,
    Minus,
    OrderBy,
    PlanNode,
    Project,
    ScanTP,
    ServerSubquery,
    Service,
    Slice,
    Union,
)
from .clientops import distinct, group_by_aggregate, minus, order_by, peel_filters, substitute_exists
from .errors import TransportError, UnsupportedFeatureError
from .expr import evaluate_filter
from .parser import parse
from .store import TripleStore
from .terms import SolutionMapping, compatible, match, restrict


def _join(left: List[SolutionMapping], right: List[SolutionMapping]) -> List[SolutionMapping]:
    if not left or not right:
        return []
    shared = set.intersection(*(set(m) for m in left + right))
    buckets: Dict[tuple, List[SolutionMapping]] = {}
    for mapping in right:
        buckets.setdefault(tuple(mapping[v] for v in sorted(shared)), []).append(mapping)
    results = []
    for mapping in left:
        for other in buckets.get(tuple(mapping[v] for v in sorted(shared)), ()):
            if compatible(mapping, other):
                results.append({**mapping, **other})
    return results


class Oracle:
    """Evaluates parsed plans against a store; SERVICE endpoints map to other stores."""

    def __init__(self, store: TripleStore, services: Optional[Mapping[str, TripleStore]] = None):
        self.store = store
        self.services = dict(services or {})

    def query(self, query_text: str) -> List[SolutionMapping]:
        return self.evaluate(parse(query_text))

    def evaluate(self, node: PlanNode, store: Optional[TripleStore] = None) -> List[SolutionMapping]:
        store = store or self.store
        if isinstance(node, ServerSubquery):
            return self.evaluate(node.plan, store)
        if isinstance(node, ScanTP):
            results = []
            pattern = store.resolve(node.pattern)
            for triple in store.triples():
                mapping = match(pattern, triple)
                if mapping is not None:
                    results.append(mapping)
            return results
        if isinstance(node, Join):
            return _join(self.evaluate(node.left, store), self.evaluate(node.right, store))
        if isinstance(node, Union):
            return self.evaluate(node.left, store) + self.evaluate(node.right, store)
        if isinstance(node, Filter):
            return [m for m in self.evaluate(node.child, store) if evaluate_filter(node.expr, m)]
        if isinstance(node, Project):
            return [restrict(m, node.variables) for m in self.evaluate(node.child, store)]
        if isinstance(node, LeftJoin):
            return self._left_join(node, store)
        if isinstance(node, Distinct):
            return list(distinct(self.evaluate(node.child, store)))
        if isinstance(node, OrderBy):
            return order_by(self.evaluate(node.child, store), node.keys)
        if isinstance(node, GroupByAgg):
            return group_by_aggregate(self.evaluate(node.child, store), node.group_by, node.aggregates)
        if isinstance(node, Minus):
            return list(minus(self.evaluate(node.left, store), self.evaluate(node.right, store)))
        if isinstance(node, FilterExists):
            return [
                m
                for m in self.evaluate(node.child, store)
                if bool(self.evaluate(substitute_exists(node.pattern, m), store)) != node.negated
            ]
        if isinstance(node, Slice):
            rows = self.evaluate(node.child, store)
            stop = None if node.limit is None else node.offset + node.limit
            return list(itertools.islice(rows, node.offset, stop))
        if isinstance(node, Service):
            return self._service(node)
        raise UnsupportedFeatureError(type(node).__name__)

    def _left_join(self, node: LeftJoin, store: TripleStore) -> List[SolutionMapping]:
        core, conditions = peel_filters(node.right)
        right = self.evaluate(core, store)
        results = []
        for mapping in self.evaluate(node.left, store):
            matched = False
            for other in right:
                if compatible(mapping, other):
                    merged = {**mapping, **other}
                    if all(evaluate_filter(expr, merged) for expr in conditions):
                        matched = True
                        results.append(merged)
            if not matched:
                results.append(mapping)
        return results

    def _service(self, node: Service) -> List[SolutionMapping]:
        remote = self.services.get(node.endpoint.rstrip("/"))
        if remote is None:
            if node.silent:
                return [{}]
            raise TransportError(f"no store registered for {node.endpoint}")
        return self.evaluate(node.child, remote)
