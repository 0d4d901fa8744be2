"""Quantum-bounded execution with suspend and resume.

One page of work for a query is: build (or resume) the plan, pull mappings
until the quantum expires, the page limit is reached or the plan is
exhausted, then suspend and encode the plan if it is not finished. Build,
resume and suspend time are measured separately and never count against the
quantum.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple

from . import codec
from .errors import IncompatiblePlanVersionError, PlanDecodeError, StalePlanError
from .operators import PreemptableIterator, SavedPlan, load_operator
from .parser import parse
from .planner import build_plan
from .store import TripleStore
from .terms import SolutionMapping

logger = logging.getLogger(__name__)

PLAN_VERSION = 1
DEFAULT_PAGE_LIMIT = 2000

Clock = Callable[[], int]


def quantum_to_ns(quantum_ms: float) -> float:
    return math.inf if math.isinf(quantum_ms) else quantum_ms * 1_000_000


def execute_quantum(
    root: PreemptableIterator,
    quantum_ns: float,
    limit: int = DEFAULT_PAGE_LIMIT,
    clock: Clock = time.perf_counter_ns,
) -> Tuple[List[SolutionMapping], bool]:
    """Pull mappings for one quantum; returns them and whether the plan is exhausted.

    The deadline is checked after each step, so even a zero quantum performs
    one step.
    """
    results: List[SolutionMapping] = []
    deadline = clock() + quantum_ns
    while root.has_next():
        mapping = root.next()
        if mapping is not None:
            results.append(mapping)
            if len(results) >= limit:
                break
        if clock() >= deadline:
            break
    return results, not root.has_next()


def suspend(root: PreemptableIterator, fingerprint: bytes) -> SavedPlan:
    root.stop()
    return SavedPlan(PLAN_VERSION, fingerprint, root.save())


def resume(saved: SavedPlan, store: TripleStore) -> PreemptableIterator:
    if saved.version != PLAN_VERSION:
        raise IncompatiblePlanVersionError(saved.version, PLAN_VERSION)
    if saved.fingerprint != store.fingerprint:
        raise StalePlanError()
    try:
        return load_operator(saved.root, store)
    except (TypeError, ValueError, KeyError) as e:
        raise PlanDecodeError(codec.HEADER_SIZE, f"inconsistent operator state: {e}") from None


@dataclass
class PageStats:
    suspend_ns: int = 0
    resume_ns: int = 0
    build_ns: int = 0
    quantum_used_ns: int = 0
    plan_bytes: int = 0
    results: int = 0
    # instrumentation of the resume path
    resume_operators: int = 0
    resume_comparisons: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Page:
    bindings: List[SolutionMapping]
    plan: Optional[bytes]
    stats: PageStats = field(default_factory=PageStats)

    @property
    def complete(self) -> bool:
        return self.plan is None


class Engine:
    """Runs pages of queries against one store; safe to share between workers."""

    def __init__(self, store: TripleStore, page_limit: int = DEFAULT_PAGE_LIMIT, clock: Clock = time.perf_counter_ns):
        self.store = store
        self.page_limit = page_limit
        self.clock = clock

    def start(self, query: str) -> Tuple[PreemptableIterator, int]:
        begin = self.clock()
        root = build_plan(parse(query), self.store)
        return root, self.clock() - begin

    def run_page(self, quantum_ns: float, query: Optional[str] = None, plan: Optional[bytes] = None) -> Page:
        if (query is None) == (plan is None):
            raise ValueError("a page needs exactly one of query or plan")
        stats = PageStats()
        if query is not None:
            root, stats.build_ns = self.start(query)
        else:
            begin = self.clock()
            root = resume(codec.decode(plan), self.store)
            stats.resume_ns = self.clock() - begin
            stats.resume_operators = root.operator_count()
            stats.resume_comparisons = root.seek_comparisons()

        begin = self.clock()
        bindings, done = execute_quantum(root, quantum_ns, self.page_limit, self.clock)
        stats.quantum_used_ns = self.clock() - begin
        stats.results = len(bindings)

        encoded = None
        if not done:
            begin = self.clock()
            encoded = codec.encode(suspend(root, self.store.fingerprint))
            stats.suspend_ns = self.clock() - begin
            stats.plan_bytes = len(encoded)
        logger.debug(
            "%s page: %d mappings, %s, quantum %.3f ms",
            "fresh" if query is not None else "resumed",
            len(bindings),
            "complete" if done else f"suspended ({len(encoded)} bytes)",
            stats.quantum_used_ns / 1e6,
        )
        return Page(bindings, encoded, stats)

    def run_to_completion(self, query: str, quantum_ns: float = math.inf) -> Tuple[List[SolutionMapping], int]:
        """All mappings of a query plus the number of pages it took."""
        page = self.run_page(quantum_ns, query=query)
        results = list(page.bindings)
        pages = 1
        while not page.complete:
            page = self.run_page(quantum_ns, plan=page.plan)
            results.extend(page.bindings)
            pages += 1
        return results, pages
