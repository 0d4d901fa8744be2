"""`preemptql query` end to end against a spawned server."""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from harness import Checks, multiset, people_store, spawn_server, write_ntriples

from preemptql.oracle import Oracle
from preemptql.terms import to_ntriples
from preemptql.wire import mapping_from_json

PREFIX = "PREFIX ex: <http://example.org/> "
QUERY = PREFIX + "SELECT ?s ?a WHERE { ?s ex:city ex:paris OPTIONAL { ?s ex:age ?a } }"
ORDERED = PREFIX + "SELECT ?n WHERE { ?s ex:name ?n } ORDER BY DESC(?n) LIMIT 3"


def cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "preemptql", *args],
        capture_output=True,
        text=True,
        timeout=120,
    )


def main():
    checks = Checks()
    work = Path(tempfile.mkdtemp(prefix="preemptql-cli-"))
    store = people_store()
    write_ntriples(work / "people.nt", store.triples())
    oracle = Oracle(store)
    expected = oracle.query(QUERY)
    (work / "ordered.rq").write_text(ORDERED, encoding="utf-8")

    with spawn_server(work / "people.nt", work, quantum_ms=5, page_limit=4) as server:
        stats_path = work / "stats.json"
        done = cli("query", "--endpoint", server.endpoint, "--query", QUERY, "--format", "json", "--stats-json", str(stats_path))
        checks.check("json query exits 0", done.returncode == 0, done.stderr[-300:])
        if done.returncode == 0:
            body = json.loads(done.stdout)
            rows = [mapping_from_json(b) for b in body["results"]["bindings"]]
            checks.check("json head lists the projection", body["head"]["vars"] == ["s", "a"], body["head"])
            checks.check("json results match the oracle", multiset(rows) == multiset(expected), len(rows))
            stats = json.loads(stats_path.read_text())
            checks.check("stats count the results", stats["results"] == len(expected), stats)
            checks.check("stats count requests", stats["http_requests"] >= 2 and stats["bytes_received"] > 0, stats)

        done = cli("client", "query", "--endpoint", server.endpoint, "--query", QUERY, "--optional-strategy", "bind")
        checks.check("tsv query exits 0", done.returncode == 0, done.stderr[-300:])
        lines = done.stdout.splitlines()
        checks.check("tsv header", lines[:1] == ["?s\t?a"], lines[:1])
        want = sorted(
            "\t".join(to_ntriples(m[v]) if v in m else "" for v in ("s", "a")) for m in expected
        )
        checks.check("tsv rows match the oracle", sorted(lines[1:]) == want, lines[1:5])

        done = cli("query", "--endpoint", server.endpoint, "--file", str(work / "ordered.rq"))
        names = [m["n"] for m in oracle.query(ORDERED)]
        checks.check(
            "ordered query keeps its order",
            done.stdout.splitlines()[1:] == [to_ntriples(n) for n in names],
            done.stdout,
        )

        done = cli("query", "--endpoint", server.endpoint, "--query", "SELECT * WHERE { ?s ?p }")
        checks.check("syntax error exits 1", done.returncode == 1, done.returncode)
        checks.check("syntax error reported", done.stderr.startswith("ERROR: syntax error at line 1"), done.stderr[:200])

    done = cli("query", "--endpoint", server.endpoint, "--query", QUERY, "--max-retries", "0", "--timeout", "2")
    checks.check("stopped server exits 1", done.returncode == 1, done.returncode)
    checks.check("stopped server reported", done.stderr.startswith("ERROR: cannot reach"), done.stderr[:200])
    checks.emit()


if __name__ == "__main__":
    main()
