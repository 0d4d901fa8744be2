"""Two `bench generate` runs of one spec: identical bytes and a truthful manifest."""

import json
import sys
from pathlib import Path

from harness import Checks

from preemptql.errors import WorkloadSpecError
from preemptql.oracle import Oracle
from preemptql.store import load_ntriples
from preemptql.workload import SHAPES, WorkloadSpec


def tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def main():
    build = Path(sys.argv[1])
    spec = json.loads(Path(sys.argv[2]).read_text())
    first, second = build / "a", build / "b"
    checks = Checks()

    a, b = tree(first), tree(second)
    checks.check("same files", sorted(a) == sorted(b), sorted(set(a) ^ set(b)))
    different = [name for name in a if a[name] != b.get(name)]
    checks.check("byte-identical outputs", not different, different)

    manifest = json.loads((first / "manifest.json").read_text())
    store = load_ntriples(first / "dataset.nt")
    checks.check("manifest counts the dataset", manifest["triples"] == len(store), manifest["triples"])
    checks.check("manifest fingerprint", manifest["fingerprint"] == store.fingerprint.hex())
    checks.check("dataset size near the request", 0.5 * spec["triples"] <= len(store) <= spec["triples"], len(store))
    predicates = {t.predicate.lexical for t in store.triples()}
    checks.check("one IRI per predicate", len(predicates) == spec["predicates"], sorted(predicates))
    checks.check("spec echoed", manifest["spec"]["seed"] == spec["seed"] and manifest["spec"]["quanta"] == [75, 1000, "inf"])

    queries = manifest["queries"]
    checks.check("query count", len(queries) == spec["queries"], len(queries))
    oracle = Oracle(store)
    for query in queries:
        text = (first / query["file"]).read_text()
        checks.check(f"{query['name']} shape", query["shape"] in SHAPES, query["shape"])
        checks.check(
            f"{query['name']} joins in range",
            spec["min_joins"] <= query["joins"] <= spec["max_joins"] and text.count(" .\n") == query["joins"],
            query["joins"],
        )
        expected = len(oracle.query(text))
        checks.check(f"{query['name']} cardinality recorded", query["cardinality"] == expected, f"{query['cardinality']} != {expected}")

    pinned = {
        "clients": 2,
        "queries": [{"name": "a", "text": "SELECT * WHERE { ?s ?p ?o }", "client": 1}, {"name": "b", "text": "SELECT * WHERE { ?s ?p ?o }"}],
    }
    explicit = WorkloadSpec.from_dict(pinned).explicit
    checks.check("explicit queries keep their client", [q.client for q in explicit] == [1, None], [q.client for q in explicit])
    checks.check("pinned client written back", WorkloadSpec.from_dict(pinned).to_dict()["queries"] == pinned["queries"])
    try:
        WorkloadSpec.from_dict(dict(pinned, clients=1))
        checks.check("client outside the pool rejected", False, "accepted")
    except WorkloadSpecError as e:
        checks.check("client outside the pool rejected", "client 1" in e.message, e.message)
    checks.emit()


if __name__ == "__main__":
    main()
