from pathlib import Path

from harness import Checks

from preemptql import codec
from preemptql.algebra import Comparison, Conjunction, Disjunction, Filter, Join, Negation, Project, ScanTP, Union
from preemptql.errors import IncompatiblePlanVersionError, PlanDecodeError
from preemptql.operators import (
    FilterState,
    IndexLoopJoinState,
    MergeJoinState,
    ProjectionState,
    SavedPlan,
    ScanState,
    UnionState,
)
from preemptql.store import ScanPosition
from preemptql.terms import Triple, TriplePattern, Variable, blank, integer, iri, literal

FINGERPRINT = bytes.fromhex("0102030405060708")
GOLDEN = Path(__file__).parent / "golden"


def e(name):
    return iri("http://e/" + name)


def v(name):
    return Variable(name)


def scan(s, p, o, index_id, last_key=None):
    return ScanState(TriplePattern(s, p, o), ScanPosition(index_id, last_key))


def read_golden(name):
    lines = (GOLDEN / name).read_text().splitlines()
    return bytes.fromhex("".join(line.split("#", 1)[0].strip() for line in lines))


def plans():
    a, b, c = e("a"), e("b"), e("c")
    running = IndexLoopJoinState(
        scan(v("s"), e("p"), v("o"), "pos", Triple(a, e("p"), b)),
        ScanTP(TriplePattern(v("o"), e("q"), v("z"))),
        (("o", b), ("s", a)),
        scan(v("o"), e("q"), v("z"), "spo"),
    )
    template = Project(
        ("z",),
        Filter(
            Disjunction(
                Negation(Comparison("=", v("z"), literal("v"))),
                Conjunction(v("o"), literal("t")),
            ),
            Union(
                ScanTP(TriplePattern(v("o"), e("q"), v("z"))),
                Join(
                    ScanTP(TriplePattern(v("o"), e("r"), v("z"))),
                    ScanTP(TriplePattern(v("z"), e("q"), c)),
                ),
            ),
        ),
    )
    return {
        "01-fresh-scan.hex": scan(v("s"), e("p"), v("o"), "pos"),
        "02-scan-position.hex": scan(v("s"), e("p"), v("o"), "pos", Triple(a, e("p"), literal("x", language="en"))),
        "03-projection.hex": ProjectionState(("s",), scan(a, v("p"), v("o"), "spo")),
        "04-filter.hex": FilterState(
            Comparison(">", v("a"), integer(42)),
            ("a", "s"),
            scan(v("s"), e("age"), v("a"), "pos", Triple(b, e("age"), integer(30))),
        ),
        "05-union.hex": UnionState(
            1,
            (
                scan(v("s"), e("p"), v("o"), "pos"),
                scan(v("s"), e("q"), v("o"), "pos", Triple(b, e("q"), blank("n1"))),
            ),
        ),
        "06-loop-join-fresh.hex": IndexLoopJoinState(
            scan(v("s"), e("p"), v("o"), "pos"), ScanTP(TriplePattern(v("o"), e("q"), v("z"))), None, None
        ),
        "07-loop-join-running.hex": running,
        "08-loop-join-delta.hex": IndexLoopJoinState(
            running,
            ScanTP(TriplePattern(v("z"), e("r"), v("w"))),
            (("o", b), ("s", a), ("z", c)),
            None,
        ),
        "09-merge-join.hex": MergeJoinState(
            "x",
            2,
            scan(v("a"), e("k"), v("x"), "pos", Triple(a, e("k"), b)),
            scan(v("c"), e("k"), v("x"), "pos", Triple(c, e("k"), b)),
            (("a", a), ("x", b)),
            b,
            ((("c", a), ("x", b)), (("c", c), ("x", b))),
            1,
        ),
        "10-template-mix.hex": IndexLoopJoinState(scan(v("s"), e("p"), v("o"), "pos"), template, None, None),
    }


def rejects(data):
    try:
        codec.decode(data)
    except PlanDecodeError:
        return True
    return False


def main():
    checks = Checks()
    for name, root in plans().items():
        golden = read_golden(name)
        saved = SavedPlan(1, FINGERPRINT, root)
        encoded = codec.encode(saved)
        checks.check(f"{name} encodes to the golden bytes", encoded == golden, encoded.hex())
        try:
            decoded = codec.decode(golden)
            checks.check(f"{name} decodes to the plan", decoded == saved, decoded)
        except PlanDecodeError as err:
            checks.check(f"{name} decodes to the plan", False, err.message)
        cut = [n for n in range(len(golden)) if not rejects(golden[:n])]
        checks.check(f"{name} rejects every truncation", not cut, cut[:10])
        checks.check(f"{name} rejects trailing bytes", rejects(golden + b"\x00"))
        checks.check(f"{name} rejects bad magic", rejects(b"SGQ" + golden[3:]))
        try:
            codec.decode(golden[:3] + b"2" + golden[4:])
            checks.check(f"{name} rejects another version", False, "decoded")
        except IncompatiblePlanVersionError:
            checks.check(f"{name} rejects another version", True)
        checks.fact(name, len(golden))

    # a delta mapping needs a current mapping to extend
    golden = read_golden("06-loop-join-fresh.hex")
    forged = golden[:-2] + bytes.fromhex("02000000")
    checks.check("orphan delta mapping rejected", rejects(forged))

    # well-formed bytes whose operator states cannot be resumed
    a, b, c = e("a"), e("b"), e("c")
    left = scan(v("a"), e("k"), v("x"), "pos", Triple(a, e("k"), b))
    right = scan(v("c"), e("k"), v("x"), "pos")
    group = ((("c", a), ("x", b)), (("c", c), ("x", b)))
    inconsistent = {
        "merge join emitting without a left mapping": MergeJoinState("x", 2, left, right, None, b, group, 0),
        "merge join filling without a key": MergeJoinState("x", 1, left, right, (("a", a), ("x", b)), None, (), 0),
        "merge join index past its group": MergeJoinState("x", 2, left, right, (("a", a), ("x", b)), b, group, 3),
        "merge join on a variable no scan binds": MergeJoinState("y", 0, left, right, None, None, (), 0),
        "merge join left mapping off its key": MergeJoinState("x", 2, left, right, (("a", a), ("x", c)), b, group, 0),
        "loop join inner without a current mapping": IndexLoopJoinState(
            scan(v("s"), e("p"), v("o"), "pos"),
            ScanTP(TriplePattern(v("o"), e("q"), v("z"))),
            None,
            scan(v("o"), e("q"), v("z"), "spo"),
        ),
    }
    for name, root in inconsistent.items():
        checks.check(f"{name} rejected", rejects(codec.encode(SavedPlan(1, FINGERPRINT, root))))
    checks.emit()


if __name__ == "__main__":
    main()
