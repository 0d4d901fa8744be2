"""One worker, three long queries: suspended queries take turns at the tail of the queue."""

import tempfile
import threading
import time
from pathlib import Path

import requests

from harness import Checks, generated_triples, spawn_server, write_ntriples

from preemptql.terms import to_ntriples

QUANTUM_MS = 25
LONG = 'SELECT * WHERE {{ ?a ?p ?b . ?c ?q ?d FILTER(?d = "absent{}") }}'
SHORT = "SELECT * WHERE {{ {} ?p ?o }}"


def drain(endpoint, query, name, log, lock):
    body = {"query": query}
    while True:
        response = requests.post(endpoint + "/sparql", json=body, timeout=120)
        response.raise_for_status()
        page = response.json()
        with lock:
            log.append((time.monotonic(), name, page["complete"]))
        if page["complete"]:
            return
        body = {"plan": page["plan"]}


def main():
    checks = Checks()
    work = Path(tempfile.mkdtemp(prefix="preemptql-fair-"))
    triples = generated_triples(700, predicates=5, seed=11)
    write_ntriples(work / "data.nt", triples)
    short_query = SHORT.format(to_ntriples(triples[0].subject))
    expected = sum(1 for t in triples if t.subject == triples[0].subject)
    log, lock = [], threading.Lock()

    with spawn_server(work / "data.nt", work, quantum_ms=QUANTUM_MS, workers=1) as server:
        threads = [
            threading.Thread(target=drain, args=(server.endpoint, LONG.format(i), f"q{i}", log, lock))
            for i in range(3)
        ]
        for thread in threads:
            thread.start()
            time.sleep(0.01)
        time.sleep(0.2)
        started = time.monotonic()
        short = requests.post(server.endpoint + "/sparql", json={"query": short_query}, timeout=60)
        short_ms = (time.monotonic() - started) * 1000
        for thread in threads:
            thread.join()

    answered = short.status_code == 200 and short.json()["complete"]
    checks.check("short query answered in one page while long ones run", answered, f"{short.status_code} {short.text[:200]}")
    checks.check("short query returns its matches", answered and len(short.json()["bindings"]) == expected, expected)
    # three quanta ahead of it in the queue at most, plus slack for the HTTP round trip
    checks.check("short query waits a few quanta", short_ms < 10 * QUANTUM_MS + 500, f"{short_ms:.0f} ms")

    log.sort()
    finished = {name: t for t, name, done in log if done}
    checks.check("every long query completes", len(finished) == 3, finished)
    window_end = min(finished.values()) if finished else 0
    counts = {f"q{i}": 0 for i in range(3)}
    spread = 0
    for t, name, _ in log:
        if t >= window_end:
            break
        counts[name] += 1
        spread = max(spread, max(counts.values()) - min(counts.values()))
    checks.check("queries are suspended many times", min(counts.values()) >= 5, counts)
    checks.check("pages alternate round robin", spread <= 2, f"spread {spread}, counts {counts}")
    checks.fact("pages", counts)
    checks.fact("short_ms", round(short_ms, 1))
    checks.emit()


if __name__ == "__main__":
    main()
