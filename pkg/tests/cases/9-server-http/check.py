"""HTTP surface of `preemptql serve`: pages, resumption and error statuses."""

import base64
import tempfile
import threading
import time
from pathlib import Path

import requests

from harness import Checks, ex, generated_triples, multiset, people_triples, spawn_server, write_ntriples

from preemptql import codec
from preemptql.operators import MergeJoinState, SavedPlan, ScanState
from preemptql.oracle import Oracle
from preemptql.store import ScanPosition, TripleStore
from preemptql.terms import TriplePattern, Variable
from preemptql.wire import mapping_from_json

PEOPLE = "PREFIX ex: <http://example.org/> SELECT * WHERE { ?s ex:knows ?f . ?f ex:name ?n }"
EVERYTHING = "SELECT * WHERE { ?s ?p ?o }"
# a cross product no mapping survives; long enough to hold the only worker
NOTHING = 'SELECT * WHERE { ?a ?p ?b . ?c ?q ?d FILTER(?b = "absent") }'


def post(endpoint, body=None, data=None):
    if data is None:
        return requests.post(endpoint + "/sparql", json=body, timeout=60)
    return requests.post(endpoint + "/sparql", data=data, headers={"Content-Type": "application/json"}, timeout=60)


def drain(checks, endpoint, query):
    pages = []
    response = post(endpoint, {"query": query})
    while True:
        if response.status_code != 200:
            checks.check(f"page {len(pages)} accepted", False, response.text)
            break
        page = response.json()
        pages.append(page)
        if page["complete"]:
            break
        response = post(endpoint, {"plan": page["plan"]})
    return pages


def main():
    checks = Checks()
    work = Path(tempfile.mkdtemp(prefix="preemptql-http-"))
    people = TripleStore.from_triples(people_triples())
    other = generated_triples(400, predicates=4, seed=3)
    write_ntriples(work / "people.nt", people.triples())
    write_ntriples(work / "other.nt", other)

    with spawn_server(work / "people.nt", work / "a", quantum_ms=75, page_limit=10) as server, spawn_server(
        work / "other.nt", work / "b", quantum_ms=75
    ) as second:
        endpoint = server.endpoint
        health = requests.get(endpoint + "/healthz", timeout=10).json()
        checks.check("healthz reports the dataset", health["triples"] == len(people), health)
        checks.check("healthz reports the fingerprint", health["fingerprint"] == people.fingerprint.hex(), health)
        checks.check("healthz reports the quantum", health["quantum_ms"] == 75 and health["workers"] == 1, health)

        pages = drain(checks, endpoint, PEOPLE)
        bindings = [mapping_from_json(b) for page in pages for b in page["bindings"]]
        checks.check("paged results match the oracle", multiset(bindings) == multiset(Oracle(people).query(PEOPLE)))
        checks.check("page limit splits the query", len(pages) > 1, len(pages))
        checks.check("only the last page is complete", [p["complete"] for p in pages] == [False] * (len(pages) - 1) + [True])
        checks.check("complete page has no plan", "plan" not in pages[-1])
        checks.check(
            "plan size reported",
            all(p["stats"]["plan_bytes"] == len(base64.b64decode(p["plan"])) for p in pages[:-1]),
        )
        checks.check("stats count the page", all(p["stats"]["results"] == len(p["bindings"]) for p in pages))

        # the same saved plan can be posted again and yields the same page
        first = post(endpoint, {"query": PEOPLE}).json()
        again = [post(endpoint, {"plan": first["plan"]}).json()["bindings"] for _ in range(2)]
        checks.check("a saved plan is replayable", again[0] == again[1])

        statuses = {
            "syntax error": (post(endpoint, {"query": "SELECT * WHERE { ?s ?p }"}), 400, "parse"),
            "body not json": (post(endpoint, data=b"{not json"), 400, "bad_request"),
            "body not an object": (post(endpoint, data=b"[1, 2]"), 400, "bad_request"),
            "neither query nor plan": (post(endpoint, {}), 400, "bad_request"),
            "both query and plan": (post(endpoint, {"query": EVERYTHING, "plan": first["plan"]}), 400, "bad_request"),
            "optional outside the fragment": (
                post(endpoint, {"query": "SELECT * WHERE { ?s ?p ?o OPTIONAL { ?o ?q ?z } }"}),
                400,
                "fragment",
            ),
            "construct unsupported": (
                post(endpoint, {"query": "CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }"}),
                400,
                "unsupported",
            ),
            "plan not base64": (post(endpoint, {"plan": "***"}), 409, "plan_decode"),
        }
        plan = base64.b64decode(first["plan"])
        corrupted = base64.b64encode(b"XYZ" + plan[3:]).decode()
        statuses["corrupted plan"] = (post(endpoint, {"plan": corrupted}), 409, "plan_decode")
        truncated = base64.b64encode(plan[:-1]).decode()
        statuses["truncated plan"] = (post(endpoint, {"plan": truncated}), 409, "plan_decode")
        bumped = base64.b64encode(plan[:3] + b"2" + plan[4:]).decode()
        statuses["other plan version"] = (post(endpoint, {"plan": bumped}), 409, "plan_version")
        statuses["plan from another dataset"] = (post(second.endpoint, {"plan": first["plan"]}), 409, "stale_plan")
        knows = ScanState(TriplePattern(Variable("s"), ex("knows"), Variable("f")), ScanPosition.start("pos"))
        stuck = MergeJoinState("f", 2, knows, knows, None, ex("person1"), (), 0)
        inconsistent = base64.b64encode(codec.encode(SavedPlan(1, people.fingerprint, stuck))).decode()
        statuses["inconsistent operator state"] = (post(endpoint, {"plan": inconsistent}), 409, "plan_decode")
        for name, (response, status, kind) in statuses.items():
            body = response.json() if response.headers.get("content-type", "").startswith("application/json") else {}
            checks.check(f"{name} is {status}", response.status_code == status, response.status_code)
            checks.check(f"{name} reports {kind}", body.get("error") == kind and body.get("message"), body)

        checks.check("GET /sparql not allowed", requests.get(endpoint + "/sparql", timeout=10).status_code == 405)

    big = generated_triples(3000, predicates=6, seed=5)
    write_ntriples(work / "big.nt", big)
    with spawn_server(work / "big.nt", work / "c", quantum_ms=3000, queue_size=0) as server:
        endpoint = server.endpoint
        holder = {}

        def long_request():
            holder["response"] = post(endpoint, {"query": NOTHING})

        thread = threading.Thread(target=long_request)
        thread.start()
        rejected = None
        deadline = time.monotonic() + 2.5
        time.sleep(0.2)
        while time.monotonic() < deadline and thread.is_alive():
            response = post(endpoint, {"query": EVERYTHING})
            if response.status_code == 503:
                rejected = response
                break
            time.sleep(0.05)
        thread.join()
        checks.check("busy server with no queue rejects", rejected is not None)
        if rejected is not None:
            checks.check("overload carries Retry-After", rejected.headers.get("Retry-After") == "1", dict(rejected.headers))
            checks.check("overload reports its kind", rejected.json().get("error") == "overload", rejected.text)
        long_page = holder.get("response")
        checks.check("long quantum still answered", long_page is not None and long_page.status_code == 200)
        checks.check("idle server admits again", post(endpoint, {"query": EVERYTHING}).status_code == 200)

    checks.emit()


if __name__ == "__main__":
    main()
