"""RDF terms, triples, variables and solution mappings.

Terms are named tuples so that the natural tuple order is the storage order:
kind rank (iri < blank < literal), then lexical form, then datatype, then
language. Absent datatype/language are stored as empty strings.
"""

from decimal import Decimal, InvalidOperation
from enum import IntEnum
from typing import Dict, Iterable, NamedTuple, Optional, Tuple, Union


class TermKind(IntEnum):
    IRI = 0
    BLANK = 1
    LITERAL = 2


KIND_NAMES = {TermKind.IRI: "iri", TermKind.BLANK: "blank", TermKind.LITERAL: "literal"}
KINDS_BY_NAME = {name: kind for kind, name in KIND_NAMES.items()}

XSD = "http://www.w3.org/2001/XMLSchema#"
XSD_STRING = XSD + "string"
XSD_BOOLEAN = XSD + "boolean"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_FLOAT = XSD + "float"
XSD_DOUBLE = XSD + "double"
RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"

INTEGER_DATATYPES = frozenset(
    XSD + name
    for name in (
        "integer",
        "int",
        "long",
        "short",
        "byte",
        "nonNegativeInteger",
        "nonPositiveInteger",
        "negativeInteger",
        "positiveInteger",
        "unsignedLong",
        "unsignedInt",
        "unsignedShort",
        "unsignedByte",
    )
)
NUMERIC_DATATYPES = INTEGER_DATATYPES | {XSD_DECIMAL, XSD_FLOAT, XSD_DOUBLE}

Number = Union[int, Decimal, float]


class Term(NamedTuple):
    kind: TermKind
    lexical: str
    datatype: str = ""
    language: str = ""

    @property
    def is_iri(self) -> bool:
        return self.kind == TermKind.IRI

    @property
    def is_blank(self) -> bool:
        return self.kind == TermKind.BLANK

    @property
    def is_literal(self) -> bool:
        return self.kind == TermKind.LITERAL

    def __str__(self) -> str:
        return to_ntriples(self)


class Variable(NamedTuple):
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


class Triple(NamedTuple):
    subject: Term
    predicate: Term
    object: Term


PatternTerm = Union[Term, Variable]


class TriplePattern(NamedTuple):
    subject: PatternTerm
    predicate: PatternTerm
    object: PatternTerm

    def variables(self) -> Tuple[str, ...]:
        seen = []
        for component in self:
            if isinstance(component, Variable) and component.name not in seen:
                seen.append(component.name)
        return tuple(seen)

    def __str__(self) -> str:
        return " ".join(to_sparql(component) for component in self)


SolutionMapping = Dict[str, Term]


def iri(value: str) -> Term:
    return Term(TermKind.IRI, value)


def blank(label: str) -> Term:
    return Term(TermKind.BLANK, label)


def literal(lexical: str, datatype: str = "", language: str = "") -> Term:
    if datatype and language:
        raise ValueError("a literal has either a datatype or a language tag")
    return Term(TermKind.LITERAL, lexical, datatype, language)


def language_key(term: Term) -> Tuple[str, str]:
    return term.lexical, term.language.lower()


def same_term(left: Term, right: Term) -> bool:
    """Term equality with language tags compared case-insensitively."""
    if left.language and right.language:
        return left.kind == right.kind and language_key(left) == language_key(right)
    return left == right


def integer(value: int) -> Term:
    return Term(TermKind.LITERAL, str(value), XSD_INTEGER)


def is_variable(component: PatternTerm) -> bool:
    return isinstance(component, Variable)


def numeric_value(term: Optional[Term]) -> Optional[Number]:
    """Value of a numeric literal, or None for anything else (ill-typed included)."""
    if term is None or term.kind != TermKind.LITERAL:
        return None
    datatype = term.datatype
    if datatype not in NUMERIC_DATATYPES:
        return None
    text = term.lexical.strip()
    try:
        if datatype in INTEGER_DATATYPES:
            return int(text)
        if datatype == XSD_DECIMAL:
            return Decimal(text)
        return float(text)
    except (ValueError, InvalidOperation):
        return None


def number_term(value: Number) -> Term:
    """Literal for an arithmetic result, typed by the widest operand type."""
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        return Term(TermKind.LITERAL, str(value), XSD_INTEGER)
    if isinstance(value, Decimal):
        text = format(value.normalize(), "f")
        if "." not in text:
            text += ".0"
        return Term(TermKind.LITERAL, text, XSD_DECIMAL)
    return Term(TermKind.LITERAL, repr(float(value)), XSD_DOUBLE)


def _escape(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )


def to_ntriples(term: Term) -> str:
    if term.kind == TermKind.IRI:
        return f"<{term.lexical}>"
    if term.kind == TermKind.BLANK:
        return f"_:{term.lexical}"
    text = f'"{_escape(term.lexical)}"'
    if term.language:
        return f"{text}@{term.language}"
    if term.datatype:
        return f"{text}^^<{term.datatype}>"
    return text


def to_sparql(component: PatternTerm) -> str:
    if isinstance(component, Variable):
        return f"?{component.name}"
    return to_ntriples(component)


def triple_to_ntriples(triple: Triple) -> str:
    return f"{to_ntriples(triple.subject)} {to_ntriples(triple.predicate)} {to_ntriples(triple.object)} ."


def substitute(pattern: TriplePattern, bindings: SolutionMapping) -> TriplePattern:
    if not bindings:
        return pattern
    return TriplePattern(
        *(
            bindings.get(c.name, c) if isinstance(c, Variable) else c
            for c in pattern
        )
    )


def match(pattern: TriplePattern, triple: Triple) -> Optional[SolutionMapping]:
    """Mapping that turns `pattern` into `triple`, or None if they disagree."""
    result: SolutionMapping = {}
    for component, value in zip(pattern, triple):
        if isinstance(component, Variable):
            bound = result.get(component.name)
            if bound is None:
                result[component.name] = value
            elif bound != value:
                return None
        elif component != value:
            return None
    return result


def compatible(left: SolutionMapping, right: SolutionMapping) -> bool:
    if len(right) < len(left):
        left, right = right, left
    for name, value in left.items():
        other = right.get(name)
        if other is not None and other != value:
            return False
    return True


def merge(left: SolutionMapping, right: SolutionMapping) -> SolutionMapping:
    merged = dict(left)
    merged.update(right)
    return merged


def restrict(mapping: SolutionMapping, names: Iterable[str]) -> SolutionMapping:
    return {name: mapping[name] for name in names if name in mapping}


def freeze(mapping: SolutionMapping) -> Tuple[Tuple[str, Term], ...]:
    """Canonical hashable form of a mapping (sorted by variable name)."""
    return tuple(sorted(mapping.items()))
