import math

from harness import Checks, ex, multiset, people_store

from preemptql import codec
from preemptql.engine import PLAN_VERSION, Engine, quantum_to_ns
from preemptql.errors import IncompatiblePlanVersionError, PlanDecodeError, StalePlanError
from preemptql.store import TripleStore
from preemptql.terms import Triple

PREFIX = "PREFIX ex: <http://example.org/> "
ALL = "SELECT * WHERE { ?s ?p ?o }"
CROSS = 'SELECT * WHERE { ?a ?p ?b . ?c ?q ?d FILTER(?d = "absent") }'


class StepClock:
    """Advances by `tick` nanoseconds on every reading."""

    def __init__(self, tick):
        self.tick = tick
        self.now = 0

    def __call__(self):
        self.now += self.tick
        return self.now


def main():
    checks = Checks()
    store = people_store()
    total = len(store)

    engine = Engine(store, page_limit=30)
    page = engine.run_page(math.inf, query=ALL)
    sizes = [len(page.bindings)]
    first = page
    while not page.complete:
        page = engine.run_page(math.inf, plan=page.plan)
        sizes.append(len(page.bindings))
    checks.check("page limit splits pages", sizes == [30] * (total // 30) + ([total % 30] if total % 30 else []), sizes)
    checks.check("build time on the first page", first.stats.build_ns > 0 and first.stats.resume_ns == 0)
    checks.check("plan bytes reported", first.stats.plan_bytes == len(first.plan), first.stats.plan_bytes)
    checks.check("suspend time measured", first.stats.suspend_ns > 0)
    checks.check("results counted", first.stats.results == 30)

    resumed = engine.run_page(math.inf, plan=first.plan)
    checks.check("resume time measured", resumed.stats.resume_ns > 0 and resumed.stats.build_ns == 0)
    checks.check("resume seeks with comparisons", resumed.stats.resume_comparisons > 0, resumed.stats.resume_comparisons)
    checks.check("resume rebuilds operators", resumed.stats.resume_operators == 1, resumed.stats.resume_operators)
    again = engine.run_page(math.inf, plan=first.plan)
    checks.check("a saved plan can be resumed twice", multiset(again.bindings) == multiset(resumed.bindings))

    # one step per quantum when the clock moves past the deadline on every reading
    join = PREFIX + "SELECT * WHERE { ?s ex:knows ?f . ?f ex:name ?n }"
    stepping = Engine(store, page_limit=1000, clock=StepClock(10))
    page = stepping.run_page(quantum_to_ns(0.00001), query=join)
    pages, results = 1, list(page.bindings)
    while not page.complete:
        checks.check("at most one mapping per quantum", len(page.bindings) <= 1, len(page.bindings))
        page = stepping.run_page(quantum_to_ns(0.00001), plan=page.plan)
        results.extend(page.bindings)
        pages += 1
    expected, _ = Engine(store).run_to_completion(join)
    checks.check("tiny quantum still terminates", multiset(results) == multiset(expected) and pages > len(expected), pages)

    other = TripleStore.from_triples(list(store.triples()) + [Triple(ex("x"), ex("y"), ex("z"))])
    try:
        Engine(other).run_page(math.inf, plan=first.plan)
        checks.check("stale plan rejected", False, "resumed on another dataset")
    except StalePlanError as e:
        checks.check("stale plan rejected", True, e.message)

    future = first.plan[:3] + str(PLAN_VERSION + 1).encode() + first.plan[4:]
    try:
        engine.run_page(math.inf, plan=future)
        checks.check("version mismatch rejected", False)
    except IncompatiblePlanVersionError as e:
        checks.check("version mismatch rejected", e.found == PLAN_VERSION + 1, e.message)

    for cut in (0, 5, 12, len(first.plan) - 1):
        try:
            engine.run_page(math.inf, plan=first.plan[:cut])
            checks.check(f"plan cut at {cut} rejected", False)
        except PlanDecodeError:
            checks.check(f"plan cut at {cut} rejected", True)

    try:
        engine.run_page(math.inf)
        checks.check("page needs a query or a plan", False)
    except ValueError:
        checks.check("page needs a query or a plan", True)

    decoded = codec.decode(first.plan)
    checks.check("plan carries the store fingerprint", decoded.fingerprint == store.fingerprint)
    checks.check("plan carries the version", decoded.version == PLAN_VERSION)
    checks.check("fresh plan bytes are deterministic", engine.run_page(math.inf, query=ALL).plan == first.plan)

    # a resumed cross product re-seeks its two scans and nothing else
    cross = Engine(store, page_limit=1000, clock=StepClock(1))
    page = cross.run_page(400, query=CROSS)
    resumed_pages = []
    while not page.complete:
        page = cross.run_page(400, plan=page.plan)
        resumed_pages.append(page.stats)
    bound = 2 * (total.bit_length() + 1)
    checks.check("cross product yields nothing", all(s.results == 0 for s in resumed_pages))
    checks.check("cross product was preempted", len(resumed_pages) > 10, len(resumed_pages))
    checks.check(
        "each resume rebuilds the filter, the join and two scans",
        all(s.resume_operators == 4 for s in resumed_pages),
        sorted({s.resume_operators for s in resumed_pages}),
    )
    worst = max(s.resume_comparisons for s in resumed_pages)
    checks.check("each resume costs two binary searches", worst <= bound, (worst, bound))

    checks.fact("triples", total)
    checks.fact("pages", sizes)
    checks.emit()


if __name__ == "__main__":
    main()
