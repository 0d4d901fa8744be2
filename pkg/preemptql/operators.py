"""Preemptable physical operators and their saved states.

Every operator pulls one mapping at a time. `next()` performs one bounded step
and returns a mapping or None when that step produced nothing; `has_next()` is
false once the operator is exhausted. `save()` returns a plain-data state from
which `load_operator` rebuilds an operator that continues exactly where the
saved one stopped.

Operators evaluate their pattern under a `context` (bindings supplied by an
enclosing index loop join). Context variables are substituted into patterns
and never appear in the operator's output mappings.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Tuple

from .algebra import Expr, PlanNode
from .expr import evaluate_filter
from .store import ScanPosition, TripleStore, unpermute
from .terms import (
    SolutionMapping,
    Term,
    Triple,
    TriplePattern,
    Variable,
    freeze,
    match,
    merge,
    restrict,
    substitute,
)

FrozenMapping = Tuple[Tuple[str, Term], ...]

# ---------------------------------------------------------------------------
# Saved states


@dataclass(frozen=True)
class ScanState:
    pattern: TriplePattern
    position: ScanPosition


@dataclass(frozen=True)
class ProjectionState:
    variables: Tuple[str, ...]
    child: "OperatorState"


@dataclass(frozen=True)
class FilterState:
    expr: Expr
    scope: Tuple[str, ...]
    child: "OperatorState"


@dataclass(frozen=True)
class UnionState:
    cursor: int
    children: Tuple["OperatorState", ...]


@dataclass(frozen=True)
class IndexLoopJoinState:
    outer: "OperatorState"
    template: PlanNode
    current: Optional[FrozenMapping]
    inner: Optional["OperatorState"]


# MergeJoin phases
NEED_LEFT, FILL, EMIT = 0, 1, 2


@dataclass(frozen=True)
class MergeJoinState:
    variable: str
    phase: int
    left: ScanState
    right: ScanState
    left_current: Optional[FrozenMapping]
    group_key: Optional[Term]
    group: Tuple[FrozenMapping, ...]
    group_index: int


OperatorState = (ScanState, ProjectionState, FilterState, UnionState, IndexLoopJoinState, MergeJoinState)


@dataclass(frozen=True)
class SavedPlan:
    version: int
    fingerprint: bytes
    root: object


# ---------------------------------------------------------------------------
# Operators


class PreemptableIterator(ABC):
    """Pull-based iterator that can be stopped, saved and reloaded."""

    name = "iterator"

    @abstractmethod
    def next(self) -> Optional[SolutionMapping]:
        ...

    @abstractmethod
    def has_next(self) -> bool:
        ...

    @abstractmethod
    def save(self):
        ...

    def children(self) -> List["PreemptableIterator"]:
        return []

    def stop(self) -> None:
        """Interrupt the pipeline; steps are atomic so nothing is left half done."""
        for child in self.children():
            child.stop()

    def operator_count(self) -> int:
        return 1 + sum(child.operator_count() for child in self.children())

    def seek_comparisons(self) -> int:
        return sum(child.seek_comparisons() for child in self.children())


class IndexScan(PreemptableIterator):
    """Reads one index entry per step from the pattern's contiguous range."""

    name = "IndexScan"

    def __init__(
        self,
        store: TripleStore,
        pattern: TriplePattern,
        context: SolutionMapping,
        position: Optional[ScanPosition] = None,
    ):
        self.pattern = pattern
        self._bound = store.resolve(substitute(pattern, context))
        self._index_range = store.range(self._bound)
        self._entries = store.index(self._index_range.index_id)
        self._offset, self.comparisons = store.seek(self._bound, position, self._index_range)
        self._last_key: Optional[Triple] = position.last_key if position is not None else None

    @property
    def index_id(self) -> str:
        return self._index_range.index_id

    def has_next(self) -> bool:
        return self._offset < self._index_range.hi

    def peek_raw(self) -> Optional[Triple]:
        if self._offset >= self._index_range.hi:
            return None
        return unpermute(self._entries[self._offset], self.index_id)

    def next(self) -> Optional[SolutionMapping]:
        triple = self.peek_raw()
        if triple is None:
            return None
        self._offset += 1
        self._last_key = triple
        return match(self._bound, triple)

    def save(self) -> ScanState:
        return ScanState(self.pattern, ScanPosition(self.index_id, self._last_key))

    def seek_comparisons(self) -> int:
        return self.comparisons


class Projection(PreemptableIterator):
    name = "Projection"

    def __init__(self, child: PreemptableIterator, variables: Tuple[str, ...]):
        self.child = child
        self.variables = tuple(variables)

    def children(self):
        return [self.child]

    def has_next(self) -> bool:
        return self.child.has_next()

    def next(self) -> Optional[SolutionMapping]:
        mapping = self.child.next()
        if mapping is None:
            return None
        return restrict(mapping, self.variables)

    def save(self) -> ProjectionState:
        return ProjectionState(self.variables, self.child.save())


class FilterIterator(PreemptableIterator):
    """Pulls and tests in the same step, so no pending mapping is ever saved.

    Only context variables listed in `scope` (those of the filtered group) are
    visible to the expression.
    """

    name = "Filter"

    def __init__(self, child: PreemptableIterator, expr: Expr, scope: Tuple[str, ...], context: SolutionMapping):
        self.child = child
        self.expr = expr
        self.scope = tuple(scope)
        self._context = restrict(context, self.scope)

    def children(self):
        return [self.child]

    def has_next(self) -> bool:
        return self.child.has_next()

    def next(self) -> Optional[SolutionMapping]:
        mapping = self.child.next()
        if mapping is None:
            return None
        visible = merge(self._context, mapping) if self._context else mapping
        return mapping if evaluate_filter(self.expr, visible) else None

    def save(self) -> FilterState:
        return FilterState(self.expr, self.scope, self.child.save())


class UnionIterator(PreemptableIterator):
    """Evaluates its branches one after the other, keeping duplicates."""

    name = "Union"

    def __init__(self, branches: List[PreemptableIterator], cursor: int = 0):
        self.branches = branches
        self.cursor = cursor

    def children(self):
        return list(self.branches)

    def has_next(self) -> bool:
        return any(branch.has_next() for branch in self.branches[self.cursor :])

    def next(self) -> Optional[SolutionMapping]:
        while self.cursor < len(self.branches) and not self.branches[self.cursor].has_next():
            self.cursor += 1
        if self.cursor >= len(self.branches):
            return None
        return self.branches[self.cursor].next()

    def save(self) -> UnionState:
        return UnionState(self.cursor, tuple(branch.save() for branch in self.branches))


class IndexLoopJoin(PreemptableIterator):
    """For each outer mapping, evaluates the inner template with that mapping bound."""

    name = "IndexLoopJoin"

    def __init__(
        self,
        store: TripleStore,
        outer: PreemptableIterator,
        template: PlanNode,
        context: SolutionMapping,
        current: Optional[SolutionMapping] = None,
        inner: Optional[PreemptableIterator] = None,
    ):
        self._store = store
        self.outer = outer
        self.template = template
        self._context = context
        self.current = current
        self.inner = inner

    def children(self):
        return [self.outer] + ([self.inner] if self.inner is not None else [])

    def has_next(self) -> bool:
        return (self.inner is not None and self.inner.has_next()) or self.outer.has_next()

    def next(self) -> Optional[SolutionMapping]:
        if self.inner is not None and self.inner.has_next():
            mapping = self.inner.next()
            if mapping is None:
                return None
            return merge(self.current, mapping)
        if not self.outer.has_next():
            return None
        mapping = self.outer.next()
        if mapping is None:
            return None
        self.current = mapping
        self.inner = build_operator(self.template, self._store, merge(self._context, mapping))
        return None

    def save(self) -> IndexLoopJoinState:
        return IndexLoopJoinState(
            self.outer.save(),
            self.template,
            freeze(self.current) if self.current is not None else None,
            self.inner.save() if self.inner is not None else None,
        )


def _component_index(pattern: TriplePattern, variable: str) -> int:
    for i, component in enumerate(pattern):
        if isinstance(component, Variable) and component.name == variable:
            return i
    raise ValueError(f"?{variable} does not occur in {pattern}")


class MergeJoin(PreemptableIterator):
    """Joins two scans that are both sorted on the join variable.

    The right-side mappings sharing the current key are buffered as a group so
    that consecutive left mappings with the same key reuse it.
    """

    name = "MergeJoin"

    def __init__(
        self,
        left: IndexScan,
        right: IndexScan,
        variable: str,
        phase: int = NEED_LEFT,
        left_current: Optional[SolutionMapping] = None,
        group_key: Optional[Term] = None,
        group: Optional[List[SolutionMapping]] = None,
        group_index: int = 0,
    ):
        self.left = left
        self.right = right
        self.variable = variable
        self.phase = phase
        self.left_current = left_current
        self.group_key = group_key
        self.group = group if group is not None else []
        self.group_index = group_index
        self._right_slot = _component_index(right._bound, variable)

    def children(self):
        return [self.left, self.right]

    def has_next(self) -> bool:
        if self.phase == FILL:
            return True
        if self.phase == EMIT and self.group_index < len(self.group):
            return True
        return self.left.has_next()

    def next(self) -> Optional[SolutionMapping]:
        if self.phase == NEED_LEFT:
            mapping = self.left.next()
            if mapping is None:
                return None
            self.left_current = mapping
            key = mapping[self.variable]
            if key == self.group_key:
                self.phase, self.group_index = EMIT, 0
            else:
                self.phase, self.group_key, self.group, self.group_index = FILL, key, [], 0
            return None
        if self.phase == FILL:
            triple = self.right.peek_raw()
            if triple is None or triple[self._right_slot] > self.group_key:
                self.phase, self.group_index = EMIT, 0
                return None
            mapping = self.right.next()
            if triple[self._right_slot] == self.group_key and mapping is not None:
                self.group.append(mapping)
            return None
        if self.group_index >= len(self.group):
            self.phase = NEED_LEFT
            return None
        candidate = self.group[self.group_index]
        self.group_index += 1
        for name, value in candidate.items():
            bound = self.left_current.get(name)
            if bound is not None and bound != value:
                return None
        return merge(self.left_current, candidate)

    def save(self) -> MergeJoinState:
        return MergeJoinState(
            self.variable,
            self.phase,
            self.left.save(),
            self.right.save(),
            freeze(self.left_current) if self.left_current is not None else None,
            self.group_key,
            tuple(freeze(m) for m in self.group),
            self.group_index,
        )


# ---------------------------------------------------------------------------
# Rebuilding from saved states


def load_operator(state, store: TripleStore, context: Optional[SolutionMapping] = None) -> PreemptableIterator:
    """Rebuild the operator tree described by `state` (the resume path)."""
    context = context or {}
    if isinstance(state, ScanState):
        return IndexScan(store, state.pattern, context, state.position)
    if isinstance(state, ProjectionState):
        return Projection(load_operator(state.child, store, context), state.variables)
    if isinstance(state, FilterState):
        return FilterIterator(load_operator(state.child, store, context), state.expr, state.scope, context)
    if isinstance(state, UnionState):
        return UnionIterator([load_operator(c, store, context) for c in state.children], state.cursor)
    if isinstance(state, IndexLoopJoinState):
        outer = load_operator(state.outer, store, context)
        current = dict(state.current) if state.current is not None else None
        inner = None
        if state.inner is not None:
            inner = load_operator(state.inner, store, merge(context, current or {}))
        return IndexLoopJoin(store, outer, state.template, context, current, inner)
    if isinstance(state, MergeJoinState):
        return MergeJoin(
            IndexScan(store, state.left.pattern, context, state.left.position),
            IndexScan(store, state.right.pattern, context, state.right.position),
            state.variable,
            state.phase,
            dict(state.left_current) if state.left_current is not None else None,
            state.group_key,
            [dict(m) for m in state.group],
            state.group_index,
        )
    raise TypeError(f"unknown operator state {type(state).__name__}")


def build_operator(node: PlanNode, store: TripleStore, context: Optional[SolutionMapping] = None) -> PreemptableIterator:
    from .planner import build_operator as build

    return build(node, store, context or {})
