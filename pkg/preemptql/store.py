"""Read-only in-memory triple store with three clustered sort orders.

Every index is a sorted list of permuted keys: spo holds (s, p, o), pos holds
(p, o, s) and osp holds (o, s, p). A pattern is answered by the index whose
order puts the pattern's bound components first, so its matches form one
contiguous range found with two binary searches.
"""

import hashlib
import io
import logging
from bisect import bisect_left
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from rdflib import BNode, URIRef
from rdflib.exceptions import ParserError as ParseError
from rdflib.plugins.parsers.ntriples import W3CNTriplesParser, r_literal, r_nodeid, unquote, uriquote

from .errors import NTriplesSyntaxError, StalePositionError
from .terms import (
    PatternTerm,
    Term,
    TermKind,
    Triple,
    TriplePattern,
    Variable,
    blank,
    iri,
    language_key,
    literal,
    match,
    to_ntriples,
)

logger = logging.getLogger(__name__)

INDEX_IDS = ("spo", "pos", "osp")
INDEX_ORDERS: Dict[str, Tuple[int, int, int]] = {
    "spo": (0, 1, 2),
    "pos": (1, 2, 0),
    "osp": (2, 0, 1),
}
# inverse permutations: position of s, p, o inside a permuted key
_INVERSE = {
    index_id: tuple(order.index(i) for i in range(3))
    for index_id, order in INDEX_ORDERS.items()
}
# sorts after every real term
_TOP = Term(3, "", "", "")

Key = Tuple[Term, Term, Term]


@dataclass(frozen=True)
class ScanPosition:
    """Where a scan stopped: the (s, p, o) key of the last triple read.

    `last_key` None is the not-started sentinel.
    """

    index_id: str
    last_key: Optional[Triple] = None

    @classmethod
    def start(cls, index_id: str) -> "ScanPosition":
        return cls(index_id, None)

    @property
    def is_sentinel(self) -> bool:
        return self.last_key is None


@dataclass(frozen=True)
class IndexRange:
    index_id: str
    lo: int
    hi: int
    # bound components outside the index prefix, or repeated variables
    needs_filter: bool

    def __len__(self) -> int:
        return self.hi - self.lo


def _is_bound(component: PatternTerm) -> bool:
    return not isinstance(component, Variable)


def select_index(pattern: TriplePattern) -> str:
    subject, predicate, obj = (_is_bound(c) for c in pattern)
    if subject:
        return "spo"
    if predicate:
        return "pos"
    if obj:
        return "osp"
    return "spo"


def permute(triple: Triple, index_id: str) -> Key:
    a, b, c = INDEX_ORDERS[index_id]
    return (triple[a], triple[b], triple[c])


def unpermute(key: Key, index_id: str) -> Triple:
    a, b, c = _INVERSE[index_id]
    return Triple(key[a], key[b], key[c])


def index_prefix(pattern: TriplePattern, index_id: str) -> Tuple[Tuple[Term, ...], bool]:
    """Leading bound components of `pattern` in index order, and whether a post-filter is needed."""
    permuted = permute(pattern, index_id)
    prefix: List[Term] = []
    for component in permuted:
        if not _is_bound(component):
            break
        prefix.append(component)
    rest = permuted[len(prefix):]
    names = [c.name for c in pattern if isinstance(c, Variable)]
    needs_filter = any(_is_bound(c) for c in rest) or len(names) != len(set(names))
    return tuple(prefix), needs_filter


def leading_free_variable(pattern: TriplePattern) -> Optional[str]:
    """Variable the selected index sorts on first, right after the bound prefix."""
    index_id = select_index(pattern)
    prefix, _ = index_prefix(pattern, index_id)
    if len(prefix) == 3:
        return None
    component = permute(pattern, index_id)[len(prefix)]
    return component.name if isinstance(component, Variable) else None


def _language_spellings(triples: Iterable[Triple]) -> Dict[Tuple[str, str], Term]:
    """One spelling per language-tagged literal, the smallest one; tags compare case-insensitively."""
    spellings: Dict[Tuple[str, str], Term] = {}
    for triple in triples:
        term = triple.object
        if term.language:
            key = language_key(term)
            current = spellings.get(key)
            if current is None or term < current:
                spellings[key] = term
    return spellings


class TripleStore:
    """Immutable after construction; safe to read from any number of threads."""

    def __init__(self, triples: Iterable[Triple]):
        unique = set(triples)
        self._spellings = _language_spellings(unique)
        if self._spellings:
            unique = {self._respell(t) for t in unique}
        for triple in unique:
            if triple.subject.kind == TermKind.LITERAL:
                raise ValueError(f"literal subject in {triple}")
            if triple.predicate.kind != TermKind.IRI:
                raise ValueError(f"non-IRI predicate in {triple}")
        self._indexes: Dict[str, List[Key]] = {
            "spo": sorted(unique),
            "pos": sorted(permute(t, "pos") for t in unique),
            "osp": sorted(permute(t, "osp") for t in unique),
        }
        logger.debug("built store with %d triples", len(unique))

    @classmethod
    def from_triples(cls, triples: Iterable[Triple]) -> "TripleStore":
        return cls(triples)

    def __len__(self) -> int:
        return len(self._indexes["spo"])

    def triples(self) -> Iterator[Triple]:
        return iter(self._indexes["spo"])

    def index(self, index_id: str) -> List[Key]:
        return self._indexes[index_id]

    @cached_property
    def checksums(self) -> Dict[str, str]:
        sums = {}
        for index_id in INDEX_IDS:
            digest = hashlib.blake2b(digest_size=8)
            for key in self._indexes[index_id]:
                digest.update(" ".join(to_ntriples(term) for term in key).encode("utf-8"))
                digest.update(b"\n")
            sums[index_id] = digest.hexdigest()
        return sums

    @cached_property
    def fingerprint(self) -> bytes:
        digest = hashlib.blake2b(digest_size=8)
        for index_id in INDEX_IDS:
            digest.update(bytes.fromhex(self.checksums[index_id]))
        return digest.digest()

    def _respell(self, triple: Triple) -> Triple:
        term = triple.object
        if not term.language:
            return triple
        return triple._replace(object=self._spellings[language_key(term)])

    def resolve(self, pattern: TriplePattern) -> TriplePattern:
        """`pattern` with a language-tagged object spelled the way the dataset spells it."""
        term = pattern.object
        if not self._spellings or not isinstance(term, Term) or not term.language:
            return pattern
        return pattern._replace(object=self._spellings.get(language_key(term), term))

    def range(self, pattern: TriplePattern) -> IndexRange:
        pattern = self.resolve(pattern)
        index_id = select_index(pattern)
        index = self._indexes[index_id]
        prefix, needs_filter = index_prefix(pattern, index_id)
        if not prefix:
            return IndexRange(index_id, 0, len(index), needs_filter)
        lo = bisect_left(index, prefix)
        hi = bisect_left(index, prefix + (_TOP,), lo)
        return IndexRange(index_id, lo, hi, needs_filter)

    def cardinality(self, pattern: TriplePattern) -> int:
        """Width of the pattern's index range (exact unless a post-filter applies)."""
        return len(self.range(pattern))

    def seek(
        self,
        pattern: TriplePattern,
        position: Optional[ScanPosition] = None,
        bounds: Optional[IndexRange] = None,
    ) -> Tuple[int, int]:
        """Offset of the first entry after `position`, and the key comparisons spent finding it.

        `bounds` is the pattern's range when the caller already computed it.
        """
        if bounds is None:
            bounds = self.range(pattern)
        if position is None or position.is_sentinel:
            return bounds.lo, 0
        if position.index_id != bounds.index_id:
            raise StalePositionError(position.index_id, position.last_key)
        index = self._indexes[bounds.index_id]
        key = permute(position.last_key, bounds.index_id)
        lo, hi = bounds.lo, bounds.hi
        comparisons = 0
        while lo < hi:
            mid = (lo + hi) // 2
            comparisons += 1
            if key < index[mid]:
                hi = mid
            else:
                lo = mid + 1
        comparisons += 1
        if lo == bounds.lo or index[lo - 1] != key:
            raise StalePositionError(bounds.index_id, position.last_key)
        return lo, comparisons

    def read_range(self, pattern: TriplePattern, position: Optional[ScanPosition] = None) -> Iterator[Triple]:
        """Every triple of the pattern's index range after `position`, unfiltered, in index order."""
        bounds = self.range(pattern)
        start, _ = self.seek(pattern, position)
        index = self._indexes[bounds.index_id]
        index_id = bounds.index_id
        for offset in range(start, bounds.hi):
            yield unpermute(index[offset], index_id)

    def scan(self, pattern: TriplePattern, position: Optional[ScanPosition] = None) -> Iterator[Triple]:
        """Triples matching `pattern` strictly after `position`, in index order."""
        pattern = self.resolve(pattern)
        for triple in self.read_range(pattern, position):
            if match(pattern, triple) is not None:
                yield triple


class _TermSink:
    """Receives terms from the line parser and interns them as store terms."""

    def __init__(self):
        self.triples: List[Triple] = []
        self._terms: Dict[object, Term] = {}

    def _convert(self, node) -> Term:
        if isinstance(node, Term):
            return self._terms.setdefault(node, node)
        cached = self._terms.get(node)
        if cached is not None:
            return cached
        if isinstance(node, URIRef):
            term = iri(str(node))
        elif isinstance(node, BNode):
            term = blank(str(node))
        else:
            raise ParseError(f"unexpected node {node!r}")
        self._terms[node] = term
        return term

    def triple(self, s, p, o):
        self.triples.append(Triple(self._convert(s), self._convert(p), self._convert(o)))


class _LabelPreservingParser(W3CNTriplesParser):
    """Keeps blank node labels from the file instead of minting fresh ones."""

    def nodeid(self, bnode_context=None):
        if self.peek("_"):
            return BNode(self.eat(r_nodeid).group(1))
        return False

    def literal(self):
        """Literal with its lexical form kept as written."""
        if not self.peek('"'):
            return False
        lexical, language, datatype = self.eat(r_literal).groups()
        if language and datatype:
            raise ParseError("Can't have both a language and a datatype")
        if datatype:
            datatype = uriquote(unquote(datatype))
        return literal(unquote(lexical), datatype or "", language or "")


def _lines(source: Union[str, Path, bytes, BinaryIO, Iterable[bytes]]) -> Iterator[bytes]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            yield from f
    elif isinstance(source, bytes):
        yield from io.BytesIO(source)
    else:
        yield from source


def load_ntriples(source: Union[str, Path, bytes, BinaryIO, Iterable[bytes]]) -> TripleStore:
    """Parse N-Triples strictly: the first bad line aborts the whole load."""
    sink = _TermSink()
    parser = _LabelPreservingParser(sink=sink)
    number = 0
    for number, raw in enumerate(_lines(source), 1):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise NTriplesSyntaxError(number, "invalid UTF-8") from None
        parser.line = text.rstrip("\r\n")
        try:
            parser.parseline()
        except ParseError as e:
            raise NTriplesSyntaxError(number, str(e)) from None
    logger.info("loaded %d statements from %d lines", len(sink.triples), number)
    return TripleStore(sink.triples)
