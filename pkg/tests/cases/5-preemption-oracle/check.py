"""Every server-fragment query, suspended after every single step, returns the oracle's multiset."""

import random
import sys

from harness import Checks, generated_triples, multiset, people_store

from preemptql.engine import Engine
from preemptql.oracle import Oracle
from preemptql.store import TripleStore
from preemptql.terms import to_ntriples
from preemptql.workload import SHAPES, build_query, predicate_name

MAX_RESULTS = 1500


def random_bgp_query(rng, store, predicates):
    shape = rng.choice(SHAPES)
    joins = rng.randint(1, min(4, predicates))
    chosen = rng.sample(range(predicates), joins)
    anchor = None
    if rng.random() < 0.4:
        subjects = sorted({t.subject.lexical for t in store.triples()})
        anchor = rng.choice(subjects)
    text = build_query(shape, joins, chosen, anchor)
    if rng.random() < 0.3:
        variables = sorted({word for word in text.split() if word.startswith("?")})
        keep = rng.sample(variables, rng.randint(1, len(variables))) if variables else []
        if keep:
            text = text.replace("SELECT *", "SELECT " + " ".join(keep), 1)
    return text


def random_composite_query(rng, store, predicates):
    p = [f"<{predicate_name(i)}>" for i in rng.sample(range(predicates), 3)]
    objects = sorted({to_ntriples(t.object) for t in store.triples()})
    constant = rng.choice(objects)
    kind = rng.randrange(5)
    if kind == 0:
        return f"SELECT * WHERE {{ {{ ?s {p[0]} ?o }} UNION {{ ?s {p[1]} ?o }} ?o {p[2]} ?z }}"
    if kind == 1:
        return f"SELECT * WHERE {{ ?s {p[0]} ?o . {{ ?o {p[1]} ?z FILTER(?z != {constant}) }} }}"
    if kind == 2:
        return f"SELECT ?s ?z WHERE {{ ?s {p[0]} ?o . ?o {p[1]} ?z FILTER(?o = {constant} || ?z = {constant}) }}"
    if kind == 3:
        return (
            f"SELECT * WHERE {{ ?s {p[0]} ?o . {{ ?o {p[1]} ?z }} UNION {{ ?o {p[2]} ?z FILTER(?s != ?z) }} }}"
        )
    return f"SELECT * WHERE {{ ?s {p[0]} ?o . ?s {p[1]} ?o2 FILTER(?o != ?o2) }}"


PEOPLE_QUERIES = [
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ex:age ?a FILTER(?a > 30 && ?a <= 50) }",
    "PREFIX ex: <http://example.org/> SELECT ?s ?n WHERE { ?s ex:knows ?f . ?f ex:age ?a . ?s ex:name ?n FILTER(?a >= 40) }",
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ex:name ?n . { ?s ex:age ?a } UNION { ?s ex:label ?a } }",
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ex:city ?c . ?c ex:country ?k . ?s ex:knows ?f . ?f ex:city ?c }",
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ex:label ?l FILTER(?l = \"p0\"@en) }",
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ex:name ?n FILTER(?n < \"name05\" || ?n > \"name20\") }",
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?a ex:knows ?x . ?b ex:knows ?x }",
    "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ?p ?o FILTER(!(?p = ex:type)) }",
]


def drain_one_step_at_a_time(engine, text):
    page = engine.run_page(0, query=text)
    results = list(page.bindings)
    pages = 1
    while not page.complete:
        if len(page.bindings) > engine.page_limit:
            raise AssertionError("page limit exceeded")
        page = engine.run_page(0, plan=page.plan)
        results.extend(page.bindings)
        pages += 1
    return results, pages


def main():
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 2024
    count = int(sys.argv[2]) if len(sys.argv) > 2 else 520
    rng = random.Random(seed)
    checks = Checks()
    stores = [
        (TripleStore.from_triples(generated_triples(1000, predicates=6, seed=seed)), 6),
        (TripleStore.from_triples(generated_triples(3000, predicates=8, seed=seed + 1)), 8),
    ]
    people = people_store()

    queries = [(people, text) for text in PEOPLE_QUERIES]
    while len(queries) < count:
        store, predicates = stores[rng.randrange(len(stores))]
        make = random_bgp_query if rng.random() < 0.6 else random_composite_query
        queries.append((store, make(rng, store, predicates)))

    tested = discrepancies = suspended = 0
    for store, text in queries:
        expected = Oracle(store).query(text)
        if len(expected) > MAX_RESULTS:
            continue
        engine = Engine(store, page_limit=rng.choice([1, 1, 2, 3]))
        results, pages = drain_one_step_at_a_time(engine, text)
        tested += 1
        suspended += pages > 1
        if multiset(results) != multiset(expected):
            discrepancies += 1
            checks.check(f"oracle multiset for {text!r}", False, f"{len(results)} results, expected {len(expected)}")
        whole, whole_pages = Engine(store).run_to_completion(text)
        if whole_pages != 1 or multiset(whole) != multiset(expected):
            discrepancies += 1
            checks.check(f"unpreempted run of {text!r}", False, f"{whole_pages} pages")

    checks.check("at least 500 queries compared", tested >= 500, tested)
    checks.check("most runs were suspended", suspended >= tested // 2, f"{suspended}/{tested}")
    checks.check("no discrepancy", discrepancies == 0, discrepancies)
    checks.fact("queries", tested)
    checks.emit()


if __name__ == "__main__":
    main()
