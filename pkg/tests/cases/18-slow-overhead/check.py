"""Suspend plus resume time on 10^4, 10^5 and 10^6 triples: small and flat in the dataset size."""

import itertools
import sys

import numpy as np

from harness import Checks, generated_triples

from preemptql.engine import Engine, quantum_to_ns
from preemptql.store import TripleStore
from preemptql.workload import SHAPES, build_query

QUANTUM_MS = 75
BUDGET_MS = 0.1 * QUANTUM_MS
# below this the ratio between sizes is timer noise
FLOOR_MS = 0.5


def measure(store, pages):
    engine = Engine(store)
    suspend, resume = [], []
    middle = next(itertools.islice(store.triples(), len(store) // 2, None)).subject.lexical
    for shape in SHAPES:
        for anchor in (None, middle):
            page = engine.run_page(quantum_to_ns(2), query=build_query(shape, 10, list(range(10)), anchor))
            for _ in range(pages):
                if page.complete:
                    break
                suspend.append(page.stats.suspend_ns / 1e6)
                page = engine.run_page(quantum_to_ns(2), plan=page.plan)
                resume.append(page.stats.resume_ns / 1e6)
    return suspend, resume


def main():
    sizes = [int(s) for s in sys.argv[1:]] or [10_000, 100_000, 1_000_000]
    checks = Checks()
    totals = []
    for size in sizes:
        store = TripleStore.from_triples(generated_triples(size, predicates=12, seed=1))
        suspend, resume = measure(store, 15)
        del store
        if not suspend or not resume:
            checks.check(f"{size} triples: queries were suspended", False)
            continue
        total = float(np.mean(suspend)) + float(np.mean(resume))
        totals.append((size, total))
        checks.check(f"{size} triples: suspend plus resume within 10% of the quantum", total <= BUDGET_MS, f"{total:.3f} ms")
        checks.fact(str(size), {"suspend_ms": float(np.mean(suspend)), "resume_ms": float(np.mean(resume)), "pages": len(resume)})
    for (small, a), (large, b) in zip(totals, totals[1:]):
        growth = max(b, FLOOR_MS) / max(a, FLOOR_MS)
        checks.check(f"overhead flat from {small} to {large} triples", growth <= 2.0, f"{a:.3f} ms -> {b:.3f} ms")
    checks.emit()


if __name__ == "__main__":
    main()
