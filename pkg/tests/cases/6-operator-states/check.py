from harness import Checks, multiset, people_store

from preemptql import codec
from preemptql.engine import Engine
from preemptql.operators import (
    EMIT,
    FILL,
    NEED_LEFT,
    FilterState,
    IndexLoopJoinState,
    MergeJoinState,
    ProjectionState,
    UnionState,
)
from preemptql.oracle import Oracle

PREFIX = "PREFIX ex: <http://example.org/> "


def states(engine, text):
    """Decoded root state of every suspended page, plus all results."""
    page = engine.run_page(0, query=text)
    roots, results = [], list(page.bindings)
    while not page.complete:
        roots.append(codec.decode(page.plan).root)
        page = engine.run_page(0, plan=page.plan)
        results.extend(page.bindings)
    return roots, results


def walk(state):
    yield state
    for name in ("child", "outer", "inner"):
        child = getattr(state, name, None)
        if child is not None and not isinstance(child, tuple) and hasattr(child, "__dataclass_fields__"):
            yield from walk(child)
    if isinstance(state, UnionState):
        for child in state.children:
            yield from walk(child)


def main():
    checks = Checks()
    store = people_store()
    oracle = Oracle(store)
    engine = Engine(store, page_limit=1)

    merge = PREFIX + "SELECT * WHERE { ?a ex:knows ?x . ?b ex:knows ?x }"
    roots, results = states(engine, merge)
    phases = {root.phase for root in roots if isinstance(root, MergeJoinState)}
    checks.check("merge join is the root", roots and all(isinstance(r, MergeJoinState) for r in roots))
    checks.check("every merge phase gets suspended", phases == {NEED_LEFT, FILL, EMIT}, phases)
    checks.check("merge join results", multiset(results) == multiset(oracle.query(merge)), len(results))
    groups = [len(root.group) for root in roots if isinstance(root, MergeJoinState)]
    checks.check("buffered group is saved", max(groups) >= 2, max(groups))

    loop = PREFIX + "SELECT ?s ?f WHERE { ?s ex:knows ?f . ?f ex:city ?c . ?c ex:country ?k }"
    roots, results = states(engine, loop)
    checks.check("projection on top", all(isinstance(r, ProjectionState) for r in roots))
    joins = [s for r in roots for s in walk(r) if isinstance(s, IndexLoopJoinState)]
    checks.check("loop joins are saved", len(joins) > 0)
    checks.check("saved current mapping", any(j.current is not None and j.inner is not None for j in joins))
    checks.check("loop join results", multiset(results) == multiset(oracle.query(loop)), len(results))
    checks.check("projection restricts", all(set(m) == {"s", "f"} for m in results), results[:2])

    union = PREFIX + "SELECT * WHERE { ?s ex:name ?n . { ?s ex:age ?a } UNION { ?s ex:label ?a } }"
    roots, results = states(engine, union)
    cursors = {s.cursor for r in roots for s in walk(r) if isinstance(s, UnionState)}
    checks.check("union inner template resumes in both branches", cursors >= {0, 1}, cursors)
    checks.check("union results", multiset(results) == multiset(oracle.query(union)), len(results))

    # ?s is not bound inside the filtered group, so the filter rejects everything
    scoped = PREFIX + "SELECT * WHERE { ?s ex:knows ?o . { ?o ex:name ?n FILTER(?s = ex:person0) } }"
    roots, results = states(engine, scoped)
    filters = [s for r in roots for s in walk(r) if isinstance(s, FilterState)]
    checks.check("filter keeps its group scope", all(set(f.scope) == {"o", "n"} for f in filters), [f.scope for f in filters])
    checks.check("out-of-scope variable is unbound", results == [] and oracle.query(scoped) == [], len(results))

    visible = PREFIX + "SELECT * WHERE { ?s ex:knows ?o . ?o ex:age ?a FILTER(?a > 40) }"
    roots, results = states(engine, visible)
    checks.check("group-level filter", multiset(results) == multiset(oracle.query(visible)), len(results))

    checks.emit()


if __name__ == "__main__":
    main()
