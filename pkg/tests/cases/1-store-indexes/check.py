import random

from harness import EX, Checks, ex, generated_triples, load, multiset

from preemptql.algebra import Comparison
from preemptql.errors import NTriplesSyntaxError, StalePositionError
from preemptql.expr import evaluate_filter
from preemptql.store import ScanPosition, TripleStore, permute, select_index
from preemptql.terms import XSD_INTEGER, Triple, TriplePattern, Variable, blank, literal, match

S, P, O = Variable("s"), Variable("p"), Variable("o")


def brute_force(store, pattern):
    return [t for t in store.triples() if match(pattern, t) is not None]


def main():
    checks = Checks()
    store = load("data.nt")
    checks.check("duplicates collapse", len(store) == 11, len(store))

    checks.check(
        "blank label kept",
        Triple(blank("anon1"), ex("name"), literal("Dave")) in set(store.triples()),
        sorted(str(t) for t in store.triples() if t.subject.is_blank),
    )
    checks.check(
        "escapes decoded",
        Triple(ex("bob"), ex("note"), literal('line\nbreak "quoted"')) in set(store.triples()),
    )
    checks.check(
        "language tags kept apart",
        store.cardinality(TriplePattern(ex("alice"), ex("name"), O)) == 2,
    )

    patterns = [
        TriplePattern(S, P, O),
        TriplePattern(ex("alice"), P, O),
        TriplePattern(ex("alice"), ex("knows"), O),
        TriplePattern(S, ex("knows"), O),
        TriplePattern(S, ex("knows"), ex("carol")),
        TriplePattern(S, P, ex("carol")),
        TriplePattern(ex("alice"), P, ex("bob")),
        TriplePattern(ex("alice"), ex("knows"), ex("bob")),
        TriplePattern(S, ex("missing"), O),
        TriplePattern(S, P, S),
    ]
    expected_index = ["spo", "spo", "spo", "pos", "pos", "osp", "spo", "spo", "pos", "spo"]
    for pattern, index_id in zip(patterns, expected_index):
        scanned = list(store.scan(pattern))
        keys = [permute(t, index_id) for t in scanned]
        checks.check(f"index for {pattern}", select_index(pattern) == index_id, select_index(pattern))
        checks.check(f"scan of {pattern} matches", multiset(match(pattern, t) for t in scanned) == multiset(
            match(pattern, t) for t in brute_force(store, pattern)
        ))
        checks.check(f"scan of {pattern} in index order", keys == sorted(keys))

    knows = TriplePattern(S, ex("knows"), O)
    checks.check("cardinality is the range width", store.cardinality(knows) == 4, store.cardinality(knows))

    # resuming strictly after every position yields exactly the rest of the scan
    full = list(store.scan(knows))
    for i, triple in enumerate(full):
        rest = list(store.scan(knows, ScanPosition("pos", triple)))
        checks.check(f"resume after position {i}", rest == full[i + 1 :], [str(t) for t in rest])
    checks.check("sentinel starts at the beginning", list(store.scan(knows, ScanPosition.start("pos"))) == full)
    offset, comparisons = store.seek(knows, ScanPosition("pos", full[1]))
    checks.check("seek counts comparisons", comparisons > 0, comparisons)

    try:
        list(store.scan(knows, ScanPosition("pos", Triple(ex("zed"), ex("knows"), ex("nobody")))))
        checks.check("unknown key is stale", False, "no error")
    except StalePositionError as e:
        checks.check("unknown key is stale", e.index_id == "pos", e.message)
    try:
        list(store.scan(knows, ScanPosition("spo", full[0])))
        checks.check("position on another index is stale", False, "no error")
    except StalePositionError:
        checks.check("position on another index is stale", True)

    shuffled = list(store.triples())
    random.Random(7).shuffle(shuffled)
    same = TripleStore.from_triples(shuffled)
    checks.check("fingerprint ignores load order", same.fingerprint == store.fingerprint)
    checks.check("checksums ignore load order", same.checksums == store.checksums)
    bigger = TripleStore.from_triples(shuffled + [Triple(ex("zed"), ex("knows"), ex("alice"))])
    checks.check("fingerprint tracks content", bigger.fingerprint != store.fingerprint)
    checks.check("fingerprint is 8 bytes", len(store.fingerprint) == 8)

    lexical = load("lexical.nt")
    values = sorted(t.object.lexical for t in lexical.scan(TriplePattern(ex("x"), ex("v"), O)))
    checks.check("typed lexical forms kept as written", values == ["01", "1", "1", "1.50", "true"], values)
    checks.check(
        "equal values with distinct lexical forms stay distinct",
        literal("01", XSD_INTEGER) != literal("1", XSD_INTEGER)
        and Triple(ex("x"), ex("v"), literal("01", XSD_INTEGER)) in set(lexical.triples()),
    )
    labels = {t.object for t in lexical.scan(TriplePattern(S, ex("label"), O))}
    checks.check("language tags differing in case are one term", len(labels) == 1, sorted(map(str, labels)))
    checks.check("language tag case kept for output", [str(t) for t in labels] == ['"Hi"@EN-GB'], sorted(map(str, labels)))
    lower = TriplePattern(S, ex("label"), literal("Hi", language="en-gb"))
    checks.check("language tag lookup ignores case", lexical.cardinality(lower) == 2, lexical.cardinality(lower))
    checks.check(
        "language tag equality ignores case",
        evaluate_filter(Comparison("=", literal("Hi", language="en-GB"), literal("Hi", language="EN-gb")), {}),
    )

    # a resume re-seeks with one binary search over the pattern's range
    for size in (2000, 20000):
        big = TripleStore.from_triples(generated_triples(size, predicates=4, seed=3))
        everything = TriplePattern(S, P, O)
        width = big.cardinality(everything)
        keys = list(big.scan(everything))
        worst = max(big.seek(everything, ScanPosition("spo", key))[1] for key in keys[:: max(1, len(keys) // 200)])
        checks.check(f"resume over {width} triples is logarithmic", worst <= width.bit_length() + 1, worst)

    try:
        load("bad.nt")
        checks.check("syntax error reported", False, "bad.nt loaded")
    except NTriplesSyntaxError as e:
        checks.check("syntax error carries the line", e.line == 3, e.message)

    checks.fact("namespace", EX)
    checks.emit()


if __name__ == "__main__":
    main()
