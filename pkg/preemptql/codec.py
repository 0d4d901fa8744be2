"""Canonical binary encoding of saved plans.

    plan    := "SGP" version-digit fingerprint[8] state
    state   := tag:u8 payload            (children left to right)
    string  := length:u32 utf8-bytes
    term    := kind:u8 string [flag:u8 (0 plain, 1 datatype, 2 language) [string]]

Integers are little-endian: counts are u16, cursors and group sizes u32.
Optional values carry a presence byte. Mapping entries are sorted by
variable name. The current mapping of an index loop join may be written as a
delta against the current mapping of the loop join feeding it, which keeps
plan size linear in the number of joins.
"""

import struct
from typing import Dict, Optional, Tuple

from .algebra import (
    COMPARISON_OPERATORS,
    Comparison,
    Conjunction,
    Disjunction,
    Filter,
    Join,
    Negation,
    Project,
    ScanTP,
    Union,
)
from .errors import IncompatiblePlanVersionError, PlanDecodeError
from .operators import (
    FilterState,
    IndexLoopJoinState,
    MergeJoinState,
    ProjectionState,
    SavedPlan,
    ScanState,
    UnionState,
)
from .store import INDEX_IDS, ScanPosition
from .terms import Term, TermKind, Triple, TriplePattern, Variable

MAGIC = b"SGP"
VERSION = 1
FINGERPRINT_SIZE = 8
MAX_DEPTH = 256
HEADER_SIZE = len(MAGIC) + 1 + FINGERPRINT_SIZE

# physical operator states
TAG_PROJECTION = 0x01
TAG_SCAN = 0x02
TAG_MERGE_JOIN = 0x03
TAG_LOOP_JOIN = 0x04
TAG_UNION = 0x05
TAG_FILTER = 0x06
# logical templates
TAG_T_SCAN = 0x10
TAG_T_JOIN = 0x11
TAG_T_UNION = 0x12
TAG_T_FILTER = 0x13
TAG_T_PROJECT = 0x14
# expressions and pattern components
TAG_VARIABLE = 0x20
TAG_TERM = 0x21
TAG_COMPARISON = 0x22
TAG_AND = 0x23
TAG_OR = 0x24
TAG_NOT = 0x25

CURRENT_ABSENT, CURRENT_FULL, CURRENT_DELTA = 0, 1, 2

_LITERAL_PLAIN, _LITERAL_DATATYPE, _LITERAL_LANGUAGE = 0, 1, 2

FrozenMapping = Tuple[Tuple[str, Term], ...]


class _Writer:
    def __init__(self):
        self.buffer = bytearray()

    def u8(self, value: int) -> None:
        self.buffer += struct.pack("<B", value)

    def u16(self, value: int) -> None:
        self.buffer += struct.pack("<H", value)

    def u32(self, value: int) -> None:
        self.buffer += struct.pack("<I", value)

    def string(self, value: str) -> None:
        data = value.encode("utf-8")
        self.u32(len(data))
        self.buffer += data

    def term(self, term: Term) -> None:
        self.u8(int(term.kind))
        self.string(term.lexical)
        if term.kind != TermKind.LITERAL:
            return
        if term.language:
            self.u8(_LITERAL_LANGUAGE)
            self.string(term.language)
        elif term.datatype:
            self.u8(_LITERAL_DATATYPE)
            self.string(term.datatype)
        else:
            self.u8(_LITERAL_PLAIN)

    def component(self, component) -> None:
        if isinstance(component, Variable):
            self.u8(TAG_VARIABLE)
            self.string(component.name)
        else:
            self.u8(TAG_TERM)
            self.term(component)

    def pattern(self, pattern: TriplePattern) -> None:
        for component in pattern:
            self.component(component)

    def mapping(self, items) -> None:
        items = sorted(items)
        self.u16(len(items))
        for name, value in items:
            self.string(name)
            self.term(value)

    def names(self, names) -> None:
        self.u16(len(names))
        for name in names:
            self.string(name)

    def expr(self, expr) -> None:
        if isinstance(expr, (Variable, Term)):
            self.component(expr)
        elif isinstance(expr, Comparison):
            self.u8(TAG_COMPARISON)
            self.u8(COMPARISON_OPERATORS.index(expr.op))
            self.expr(expr.left)
            self.expr(expr.right)
        elif isinstance(expr, (Conjunction, Disjunction)):
            self.u8(TAG_AND if isinstance(expr, Conjunction) else TAG_OR)
            self.expr(expr.left)
            self.expr(expr.right)
        elif isinstance(expr, Negation):
            self.u8(TAG_NOT)
            self.expr(expr.operand)
        else:
            raise TypeError(f"cannot encode expression {expr!r}")

    def template(self, node) -> None:
        if isinstance(node, ScanTP):
            self.u8(TAG_T_SCAN)
            self.pattern(node.pattern)
        elif isinstance(node, (Join, Union)):
            self.u8(TAG_T_JOIN if isinstance(node, Join) else TAG_T_UNION)
            self.template(node.left)
            self.template(node.right)
        elif isinstance(node, Filter):
            self.u8(TAG_T_FILTER)
            self.expr(node.expr)
            self.template(node.child)
        elif isinstance(node, Project):
            self.u8(TAG_T_PROJECT)
            self.names(node.variables)
            self.template(node.child)
        else:
            raise TypeError(f"cannot encode template {type(node).__name__}")

    def scan(self, state: ScanState) -> None:
        self.u8(TAG_SCAN)
        self.pattern(state.pattern)
        self.u8(INDEX_IDS.index(state.position.index_id))
        if state.position.last_key is None:
            self.u8(0)
        else:
            self.u8(1)
            for term in state.position.last_key:
                self.term(term)

    def state(self, state) -> None:
        if isinstance(state, ScanState):
            self.scan(state)
        elif isinstance(state, ProjectionState):
            self.u8(TAG_PROJECTION)
            self.names(state.variables)
            self.state(state.child)
        elif isinstance(state, FilterState):
            self.u8(TAG_FILTER)
            self.expr(state.expr)
            self.names(state.scope)
            self.state(state.child)
        elif isinstance(state, UnionState):
            self.u8(TAG_UNION)
            self.u32(state.cursor)
            self.u16(len(state.children))
            for child in state.children:
                self.state(child)
        elif isinstance(state, IndexLoopJoinState):
            self.u8(TAG_LOOP_JOIN)
            self.state(state.outer)
            self.template(state.template)
            self.current(state.current, _inherited(state.outer))
            if state.inner is None:
                self.u8(0)
            else:
                self.u8(1)
                self.state(state.inner)
        elif isinstance(state, MergeJoinState):
            self.u8(TAG_MERGE_JOIN)
            self.string(state.variable)
            self.u8(state.phase)
            self.scan(state.left)
            self.scan(state.right)
            if state.left_current is None:
                self.u8(0)
            else:
                self.u8(1)
                self.mapping(state.left_current)
            if state.group_key is None:
                self.u8(0)
            else:
                self.u8(1)
                self.term(state.group_key)
            self.u32(len(state.group))
            for mapping in state.group:
                self.mapping(mapping)
            self.u32(state.group_index)
        else:
            raise TypeError(f"cannot encode state {type(state).__name__}")

    def current(self, current: Optional[FrozenMapping], base: Dict[str, Term]) -> None:
        if current is None:
            self.u8(CURRENT_ABSENT)
            return
        items = dict(current)
        if base and all(items.get(name) == value for name, value in base.items()):
            self.u8(CURRENT_DELTA)
            self.mapping((n, v) for n, v in items.items() if n not in base)
        else:
            self.u8(CURRENT_FULL)
            self.mapping(items.items())


def _inherited(outer) -> Dict[str, Term]:
    if isinstance(outer, IndexLoopJoinState) and outer.current is not None:
        return dict(outer.current)
    return {}


def encode(saved: SavedPlan) -> bytes:
    """Deterministic bytes for a saved plan."""
    writer = _Writer()
    writer.buffer += MAGIC + str(saved.version).encode("ascii")
    if len(saved.fingerprint) != FINGERPRINT_SIZE:
        raise ValueError("fingerprint must be 8 bytes")
    writer.buffer += saved.fingerprint
    writer.state(saved.root)
    return bytes(writer.buffer)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0
        self.depth = 0

    def fail(self, reason: str, offset: Optional[int] = None) -> PlanDecodeError:
        return PlanDecodeError(self.offset if offset is None else offset, reason)

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise self.fail(f"truncated {what}")
        chunk = self.data[self.offset : end]
        self.offset = end
        return chunk

    def u8(self, what: str = "byte") -> int:
        return self.take(1, what)[0]

    def u16(self, what: str = "count") -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str = "integer") -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str = "string") -> str:
        start = self.offset
        size = self.u32(f"{what} length")
        try:
            return self.take(size, what).decode("utf-8")
        except UnicodeDecodeError:
            raise self.fail(f"invalid UTF-8 in {what}", start) from None

    def term(self) -> Term:
        start = self.offset
        kind = self.u8("term kind")
        if kind not in (TermKind.IRI, TermKind.BLANK, TermKind.LITERAL):
            raise self.fail(f"unknown term kind {kind}", start)
        lexical = self.string("term")
        if kind != TermKind.LITERAL:
            return Term(TermKind(kind), lexical)
        flag_at = self.offset
        flag = self.u8("literal flag")
        if flag == _LITERAL_PLAIN:
            return Term(TermKind.LITERAL, lexical)
        if flag == _LITERAL_DATATYPE:
            return Term(TermKind.LITERAL, lexical, self.string("datatype"))
        if flag == _LITERAL_LANGUAGE:
            return Term(TermKind.LITERAL, lexical, "", self.string("language"))
        raise self.fail(f"unknown literal flag {flag}", flag_at)

    def component(self):
        start = self.offset
        tag = self.u8("pattern tag")
        if tag == TAG_VARIABLE:
            return Variable(self.string("variable"))
        if tag == TAG_TERM:
            return self.term()
        raise self.fail(f"unexpected tag {tag:#04x} in pattern", start)

    def pattern(self) -> TriplePattern:
        return TriplePattern(self.component(), self.component(), self.component())

    def mapping(self) -> FrozenMapping:
        count = self.u16("mapping size")
        items = []
        for _ in range(count):
            items.append((self.string("variable"), self.term()))
        if [name for name, _ in items] != sorted(name for name, _ in items):
            raise self.fail("mapping entries out of order")
        return tuple(items)

    def names(self) -> Tuple[str, ...]:
        return tuple(self.string("variable") for _ in range(self.u16("variable count")))

    def enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.fail("plan nested too deeply")

    def expr(self):
        self.enter()
        start = self.offset
        tag = self.u8("expression tag")
        if tag == TAG_VARIABLE:
            result = Variable(self.string("variable"))
        elif tag == TAG_TERM:
            result = self.term()
        elif tag == TAG_COMPARISON:
            op = self.u8("operator")
            if op >= len(COMPARISON_OPERATORS):
                raise self.fail(f"unknown comparison operator {op}", start + 1)
            result = Comparison(COMPARISON_OPERATORS[op], self.expr(), self.expr())
        elif tag == TAG_AND:
            result = Conjunction(self.expr(), self.expr())
        elif tag == TAG_OR:
            result = Disjunction(self.expr(), self.expr())
        elif tag == TAG_NOT:
            result = Negation(self.expr())
        else:
            raise self.fail(f"unexpected tag {tag:#04x} in expression", start)
        self.depth -= 1
        return result

    def template(self):
        self.enter()
        start = self.offset
        tag = self.u8("template tag")
        if tag == TAG_T_SCAN:
            result = ScanTP(self.pattern())
        elif tag == TAG_T_JOIN:
            result = Join(self.template(), self.template())
        elif tag == TAG_T_UNION:
            result = Union(self.template(), self.template())
        elif tag == TAG_T_FILTER:
            result = Filter(self.expr(), self.template())
        elif tag == TAG_T_PROJECT:
            result = Project(self.names(), self.template())
        else:
            raise self.fail(f"unexpected tag {tag:#04x} in template", start)
        self.depth -= 1
        return result

    def scan_body(self) -> ScanState:
        pattern = self.pattern()
        start = self.offset
        index = self.u8("index id")
        if index >= len(INDEX_IDS):
            raise self.fail(f"unknown index {index}", start)
        last_key = None
        if self.presence("scan position"):
            last_key = Triple(self.term(), self.term(), self.term())
        return ScanState(pattern, ScanPosition(INDEX_IDS[index], last_key))

    def scan(self) -> ScanState:
        start = self.offset
        tag = self.u8("scan tag")
        if tag != TAG_SCAN:
            raise self.fail(f"expected an index scan, found tag {tag:#04x}", start)
        return self.scan_body()

    def presence(self, what: str) -> bool:
        start = self.offset
        flag = self.u8(f"{what} flag")
        if flag > 1:
            raise self.fail(f"bad presence flag {flag} for {what}", start)
        return flag == 1

    def state(self):
        self.enter()
        start = self.offset
        tag = self.u8("operator tag")
        if tag == TAG_SCAN:
            result = self.scan_body()
        elif tag == TAG_PROJECTION:
            result = ProjectionState(self.names(), self.state())
        elif tag == TAG_FILTER:
            result = FilterState(self.expr(), self.names(), self.state())
        elif tag == TAG_UNION:
            cursor = self.u32("union cursor")
            count = self.u16("union width")
            children = tuple(self.state() for _ in range(count))
            if cursor > count:
                raise self.fail(f"union cursor {cursor} beyond {count} branches", start + 1)
            result = UnionState(cursor, children)
        elif tag == TAG_LOOP_JOIN:
            outer = self.state()
            template = self.template()
            current = self.current(_inherited(outer))
            inner_at = self.offset
            inner = self.state() if self.presence("inner") else None
            if inner is not None and current is None:
                raise self.fail("inner state without a current mapping", inner_at)
            result = IndexLoopJoinState(outer, template, current, inner)
        elif tag == TAG_MERGE_JOIN:
            variable = self.string("join variable")
            phase_at = self.offset
            phase = self.u8("phase")
            if phase > 2:
                raise self.fail(f"unknown merge join phase {phase}", phase_at)
            left = self.scan()
            right = self.scan()
            left_current = self.mapping() if self.presence("left mapping") else None
            group_key = self.term() if self.presence("group key") else None
            size = self.u32("group size")
            if size > len(self.data) - self.offset:
                raise self.fail("truncated group")
            group = tuple(self.mapping() for _ in range(size))
            index_at = self.offset
            group_index = self.u32("group index")
            if group_index > size:
                raise self.fail(f"group index {group_index} beyond {size} buffered mappings", index_at)
            if variable not in left.pattern.variables() or variable not in right.pattern.variables():
                raise self.fail(f"join variable ?{variable} missing from a scan pattern", start + 1)
            if phase != 0 and (left_current is None or group_key is None):
                raise self.fail(f"merge join phase {phase} without a left mapping and key", phase_at)
            if left_current is not None and dict(left_current).get(variable, group_key) != group_key:
                raise self.fail("left mapping disagrees with the group key", phase_at)
            result = MergeJoinState(variable, phase, left, right, left_current, group_key, group, group_index)
        else:
            raise self.fail(f"unknown operator tag {tag:#04x}", start)
        self.depth -= 1
        return result

    def current(self, base: Dict[str, Term]) -> Optional[FrozenMapping]:
        start = self.offset
        mode = self.u8("mapping mode")
        if mode == CURRENT_ABSENT:
            return None
        if mode == CURRENT_FULL:
            return self.mapping()
        if mode == CURRENT_DELTA:
            if not base:
                raise self.fail("delta mapping without an inherited mapping", start)
            merged = dict(base)
            merged.update(self.mapping())
            return tuple(sorted(merged.items()))
        raise self.fail(f"unknown mapping mode {mode}", start)


def decode(data: bytes) -> SavedPlan:
    """Inverse of `encode`; malformed input raises PlanDecodeError."""
    if not isinstance(data, (bytes, bytearray)):
        raise PlanDecodeError(0, "plan must be bytes")
    if len(data) < len(MAGIC) + 1:
        raise PlanDecodeError(len(data), "truncated header")
    if data[: len(MAGIC)] != MAGIC:
        raise PlanDecodeError(0, "bad magic")
    digit = data[len(MAGIC)]
    if not 0x30 <= digit <= 0x39:
        raise PlanDecodeError(len(MAGIC), "bad version tag")
    if digit - 0x30 != VERSION:
        raise IncompatiblePlanVersionError(digit - 0x30, VERSION)
    reader = _Reader(bytes(data))
    reader.offset = len(MAGIC) + 1
    fingerprint = reader.take(FINGERPRINT_SIZE, "fingerprint")
    root = reader.state()
    if reader.offset != len(data):
        raise PlanDecodeError(reader.offset, f"{len(data) - reader.offset} trailing bytes")
    return SavedPlan(VERSION, fingerprint, root)
