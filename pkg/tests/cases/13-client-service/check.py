"""SERVICE clauses are bind-joined against a second server; SILENT swallows a dead endpoint."""

import socket
import tempfile
from pathlib import Path

from harness import Checks, ex, multiset, people_store, spawn_server, write_ntriples

from preemptql.client import SmartClient, sparql_url
from preemptql.config import ClientConfig
from preemptql.errors import PreemptQLError
from preemptql.oracle import Oracle
from preemptql.store import TripleStore
from preemptql.terms import Triple, integer

PREFIX = "PREFIX ex: <http://example.org/> "


def city_triples():
    triples = []
    for i, city in enumerate(["paris", "nantes", "lyon", "lille"]):
        triples.append(Triple(ex(city), ex("population"), integer(100 * (i + 1))))
        triples.append(Triple(ex(city), ex("mayor"), ex(f"mayor{i}")))
    return triples


def dead_endpoint():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    return f"http://127.0.0.1:{port}"


def main():
    checks = Checks()
    work = Path(tempfile.mkdtemp(prefix="preemptql-service-"))
    people = people_store()
    cities = TripleStore.from_triples(city_triples())
    write_ntriples(work / "people.nt", people.triples())
    write_ntriples(work / "cities.nt", cities.triples())

    with spawn_server(work / "people.nt", work / "a", quantum_ms=5, page_limit=9) as local, spawn_server(
        work / "cities.nt", work / "b", quantum_ms=5, page_limit=3
    ) as remote:
        oracle = Oracle(people, services={remote.endpoint: cities})
        queries = {
            "service join": PREFIX + f"SELECT * WHERE {{ ?s ex:city ?c SERVICE <{remote.endpoint}> {{ ?c ex:population ?n }} }}",
            "service with filter": (
                PREFIX
                + f"SELECT ?s ?m WHERE {{ ?s ex:city ?c . ?s ex:age ?a "
                f"SERVICE <{remote.endpoint}/sparql> {{ ?c ex:mayor ?m . ?c ex:population ?n FILTER(?n > 100) }} "
                f"FILTER(?a > 30) }}"
            ),
            "service alone": PREFIX + f"SELECT * WHERE {{ SERVICE <{remote.endpoint}> {{ ?c ex:population ?n }} }}",
        }
        pages = []
        client = SmartClient(
            ClientConfig(endpoint=local.endpoint, block_size=4),
            on_page=lambda url, stats: pages.append(url),
        )
        for name, text in queries.items():
            pages.clear()
            results = list(client.execute(text))
            expected = oracle.query(text.replace(f"{remote.endpoint}/sparql", remote.endpoint))
            checks.check(f"{name} matches the oracle", multiset(results) == multiset(expected), len(results))
            checks.check(f"{name} reached the remote", sparql_url(remote.endpoint) in pages, sorted(set(pages)))

        dead = dead_endpoint()
        quick = ClientConfig(endpoint=local.endpoint, max_retries=1, backoff_ms=1, timeout=5)
        silent = PREFIX + f"SELECT * WHERE {{ ?s ex:city ?c SERVICE SILENT <{dead}> {{ ?c ex:population ?n }} }}"
        results = list(SmartClient(quick).execute(silent))
        expected = Oracle(people).query(silent)
        checks.check("silent service keeps the left side", multiset(results) == multiset(expected), len(results))
        checks.check("silent service binds nothing", all("n" not in m for m in results))

        loud = silent.replace("SERVICE SILENT", "SERVICE")
        try:
            list(SmartClient(quick).execute(loud))
            checks.check("dead service fails the query", False, "no error")
        except PreemptQLError as e:
            checks.check("dead service fails the query", True, e.message)
        client.close()

    checks.emit()


if __name__ == "__main__":
    main()
