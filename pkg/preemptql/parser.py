"""Recursive-descent parser for the supported SELECT subset.

Grammar (keywords are case-insensitive):

    query     := prologue SELECT [DISTINCT|REDUCED] ('*' | item+) [WHERE] group modifiers
    item      := var | '(' aggregate AS var ')'
    group     := '{' (triples | OPTIONAL group | MINUS group | FILTER constraint
                      | SERVICE [SILENT] iri group | group (UNION group)* | '.')* '}'
    modifiers := [GROUP BY var+] [ORDER BY cond+] [LIMIT n] [OFFSET n]

Triple patterns are joined left-deep in syntactic order; filters apply to the
whole group they appear in, innermost first.
"""

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .algebra import (
    COMPARISON_OPERATORS,
    Aggregate,
    Comparison,
    Conjunction,
    Disjunction,
    Distinct,
    Expr,
    Filter,
    FilterExists,
    GroupByAgg,
    Join,
    LeftJoin,
    Minus,
    Negation,
    OrderBy,
    OrderKey,
    PlanNode,
    Project,
    ScanTP,
    Service,
    Slice,
    Union,
)
from .errors import QuerySyntaxError, UnsupportedFeatureError
from .terms import (
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    PatternTerm,
    Term,
    TriplePattern,
    Variable,
    blank,
    iri,
    literal,
)

_TOKEN_SPEC = [
    ("WS", r"\s+"),
    ("COMMENT", r"#[^\n]*"),
    ("IRIREF", r"<[^<>\"{}|^`\\\x00-\x20]*>"),
    ("LONG_STRING", r'"""(?:[^"\\]|\\.|"(?!""))*"""' + r"|'''(?:[^'\\]|\\.|'(?!''))*'''"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"' + r"|'(?:[^'\\\n\r]|\\.)*'"),
    ("LANGTAG", r"@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("VAR", r"[?$][A-Za-z0-9_]+"),
    ("BLANK", r"_:[A-Za-z0-9_\-.]*"),
    ("PNAME", r"(?:[A-Za-z][\w\-]*(?:\.[\w\-]+)*)?:(?:[\w\-]+(?:\.[\w\-]+)*)?"),
    ("NUMBER", r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+)"),
    ("WORD", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("OP", r"&&|\|\||!=|<=|>="),
    ("PUNCT", r"[{}().;,*=<>!/|^+?\[\]]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))
# after an operand, `<` starts a comparison when what follows cannot begin an IRI
_OPERAND_KINDS = ("VAR", "NUMBER", "STRING", "LONG_STRING", "LANGTAG")
_COMPARISON_RE = re.compile(r"<=?(?=\s*[?$\"'(!=+\-0-9])")

_UNSUPPORTED_WORDS = {
    "CONSTRUCT": "CONSTRUCT queries",
    "ASK": "ASK queries",
    "DESCRIBE": "DESCRIBE queries",
    "INSERT": "SPARQL update",
    "DELETE": "SPARQL update",
    "LOAD": "SPARQL update",
    "CLEAR": "SPARQL update",
    "VALUES": "VALUES",
    "BIND": "BIND",
    "GRAPH": "named graphs (GRAPH)",
    "FROM": "dataset clauses (FROM)",
    "HAVING": "HAVING",
}
_AGGREGATES = ("COUNT", "SUM", "AVG", "MIN", "MAX")
_ESCAPES = {"t": "\t", "n": "\n", "r": "\r", "b": "\b", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


@dataclass
class Token:
    kind: str
    text: str
    position: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    position = 0
    while position < len(text):
        m = _TOKEN_RE.match(text, position)
        if m is None:
            raise QuerySyntaxError(position, f"unexpected character {text[position]!r}", text)
        kind = m.lastgroup
        if kind == "IRIREF" and tokens and (tokens[-1].kind in _OPERAND_KINDS or tokens[-1].text == ")"):
            comparison = _COMPARISON_RE.match(text, position)
            if comparison is not None:
                m, kind = comparison, "OP" if comparison.group() == "<=" else "PUNCT"
        if kind not in ("WS", "COMMENT"):
            tokens.append(Token(kind, m.group(), position))
        position = m.end()
    tokens.append(Token("EOF", "", len(text)))
    return tokens


def _unescape(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = body[i + 1]
        if nxt in _ESCAPES:
            out.append(_ESCAPES[nxt])
            i += 2
        elif nxt == "u":
            out.append(chr(int(body[i + 2 : i + 6], 16)))
            i += 6
        elif nxt == "U":
            out.append(chr(int(body[i + 2 : i + 10], 16)))
            i += 10
        else:
            raise ValueError(f"bad escape \\{nxt}")
    return "".join(out)


class QueryParser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0
        self.prefixes: Dict[str, str] = {}
        self.base = ""

    # -- token helpers -----------------------------------------------------

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.index + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        if token.kind != "EOF":
            self.index += 1
        return token

    def error(self, detail: str, token: Optional[Token] = None) -> QuerySyntaxError:
        token = token or self.current
        return QuerySyntaxError(token.position, detail, self.text)

    def at_word(self, *words: str) -> bool:
        return self.current.kind == "WORD" and self.current.upper in words

    def at(self, text: str) -> bool:
        return self.current.kind in ("PUNCT", "OP") and self.current.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {self.current.text or 'end of query'!r}")
        return self.advance()

    def expect_word(self, word: str) -> Token:
        if not self.at_word(word):
            raise self.error(f"expected {word}, found {self.current.text or 'end of query'!r}")
        return self.advance()

    def check_unsupported(self) -> None:
        token = self.current
        if token.kind == "WORD" and token.upper in _UNSUPPORTED_WORDS:
            raise UnsupportedFeatureError(_UNSUPPORTED_WORDS[token.upper])

    # -- query ---------------------------------------------------------------

    def parse(self) -> PlanNode:
        self.parse_prologue()
        self.check_unsupported()
        self.expect_word("SELECT")
        distinct = False
        if self.at_word("DISTINCT"):
            self.advance()
            distinct = True
        elif self.at_word("REDUCED"):
            self.advance()
        projection, aggregates = self.parse_projection()
        self.check_unsupported()
        if self.at_word("WHERE"):
            self.advance()
        node = self.parse_group()
        group_by = self.parse_group_by()
        order = self.parse_order_by()
        offset, limit = self.parse_slice()
        self.check_unsupported()
        if self.current.kind != "EOF":
            raise self.error(f"unexpected {self.current.text!r} after query")

        if group_by or aggregates:
            if projection is None:
                raise self.error("SELECT * is not allowed with GROUP BY")
            aliases = {a.alias for a in aggregates}
            for name in projection:
                if name not in aliases and name not in group_by:
                    raise self.error(f"variable ?{name} is neither grouped nor aggregated")
            node = GroupByAgg(tuple(group_by), tuple(aggregates), node)
        if order:
            node = OrderBy(tuple(order), node)
        if projection is not None:
            node = Project(tuple(projection), node)
        if distinct:
            node = Distinct(node)
        if offset or limit is not None:
            node = Slice(offset, limit, node)
        return node

    def parse_prologue(self) -> None:
        while True:
            if self.at_word("PREFIX"):
                self.advance()
                token = self.advance()
                if token.kind != "PNAME" or not token.text.endswith(":"):
                    raise self.error("expected a prefix name like 'ex:'", token)
                self.prefixes[token.text[:-1]] = self.parse_iriref()
            elif self.at_word("BASE"):
                self.advance()
                self.base = self.parse_iriref()
            else:
                return

    def parse_iriref(self) -> str:
        token = self.advance()
        if token.kind != "IRIREF":
            raise self.error("expected an IRI", token)
        value = token.text[1:-1]
        if self.base and not re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*:", value):
            value = self.base + value
        return value

    def parse_projection(self) -> Tuple[Optional[List[str]], List[Aggregate]]:
        if self.at("*"):
            self.advance()
            return None, []
        names: List[str] = []
        aggregates: List[Aggregate] = []
        while True:
            if self.current.kind == "VAR":
                names.append(self.advance().text[1:])
            elif self.at("("):
                self.advance()
                aggregate = self.parse_aggregate()
                aggregates.append(aggregate)
                names.append(aggregate.alias)
                self.expect(")")
            else:
                break
        if not names:
            raise self.error("expected '*' or a projection list")
        if len(set(names)) != len(names):
            raise self.error("duplicate variable in projection")
        return names, aggregates

    def parse_aggregate(self) -> Aggregate:
        token = self.current
        if not self.at_word(*_AGGREGATES):
            if token.kind == "WORD":
                raise UnsupportedFeatureError(f"expression {token.text}(...) in SELECT")
            raise self.error("expected an aggregate")
        function = self.advance().upper
        self.expect("(")
        distinct = False
        if self.at_word("DISTINCT"):
            self.advance()
            distinct = True
        variable: Optional[str] = None
        if self.at("*"):
            if function != "COUNT":
                raise self.error(f"{function}(*) is not allowed")
            self.advance()
        elif self.current.kind == "VAR":
            variable = self.advance().text[1:]
        else:
            raise UnsupportedFeatureError("aggregate over an expression")
        self.expect(")")
        self.expect_word("AS")
        if self.current.kind != "VAR":
            raise self.error("expected a variable after AS")
        alias = self.advance().text[1:]
        return Aggregate(function, variable, alias, distinct)

    def parse_group_by(self) -> List[str]:
        if not self.at_word("GROUP"):
            return []
        self.advance()
        self.expect_word("BY")
        names = []
        while self.current.kind == "VAR":
            names.append(self.advance().text[1:])
        if not names:
            if self.at("("):
                raise UnsupportedFeatureError("GROUP BY expression")
            raise self.error("expected variables after GROUP BY")
        return names

    def parse_order_by(self) -> List[OrderKey]:
        if not self.at_word("ORDER"):
            return []
        self.advance()
        self.expect_word("BY")
        keys = []
        while True:
            if self.current.kind == "VAR":
                keys.append(OrderKey(self.advance().text[1:]))
            elif self.at_word("ASC", "DESC"):
                descending = self.advance().upper == "DESC"
                self.expect("(")
                if self.current.kind != "VAR":
                    raise UnsupportedFeatureError("ORDER BY expression")
                keys.append(OrderKey(self.advance().text[1:], descending))
                self.expect(")")
            elif self.at("("):
                raise UnsupportedFeatureError("ORDER BY expression")
            else:
                break
        if not keys:
            raise self.error("expected an order condition")
        return keys

    def parse_slice(self) -> Tuple[int, Optional[int]]:
        offset, limit = 0, None
        while self.at_word("LIMIT", "OFFSET"):
            word = self.advance().upper
            token = self.advance()
            if token.kind != "NUMBER" or not token.text.isdigit():
                raise self.error(f"{word} expects a non-negative integer", token)
            if word == "LIMIT":
                limit = int(token.text)
            else:
                offset = int(token.text)
        return offset, limit

    # -- group graph patterns ------------------------------------------------

    def parse_group(self) -> PlanNode:
        self.expect("{")
        if self.at_word("SELECT"):
            raise UnsupportedFeatureError("subqueries")
        node: Optional[PlanNode] = None
        filters: List[Expr] = []
        exists: List[Tuple[PlanNode, bool]] = []

        def join(current: Optional[PlanNode], other: PlanNode) -> PlanNode:
            return other if current is None else Join(current, other)

        while not self.at("}"):
            self.check_unsupported()
            token = self.current
            if token.kind == "EOF":
                raise self.error("unterminated group, expected '}'")
            if self.at("."):
                self.advance()
            elif self.at_word("OPTIONAL"):
                self.advance()
                inner = self.parse_group()
                if node is None:
                    raise UnsupportedFeatureError("OPTIONAL at the start of a group")
                node = LeftJoin(node, inner)
            elif self.at_word("MINUS"):
                self.advance()
                inner = self.parse_group()
                if node is None:
                    raise UnsupportedFeatureError("MINUS at the start of a group")
                node = Minus(node, inner)
            elif self.at_word("FILTER"):
                self.advance()
                self.parse_constraint(filters, exists)
            elif self.at_word("SERVICE"):
                self.advance()
                silent = False
                if self.at_word("SILENT"):
                    self.advance()
                    silent = True
                endpoint = self.parse_iri_term().lexical
                node = join(node, Service(endpoint, self.parse_group(), silent))
            elif self.at("{"):
                union = self.parse_group()
                while self.at_word("UNION"):
                    self.advance()
                    union = Union(union, self.parse_group())
                node = join(node, union)
            else:
                for pattern in self.parse_triples():
                    node = join(node, ScanTP(pattern))
        self.expect("}")
        if node is None:
            raise UnsupportedFeatureError("empty group pattern")
        for expr in filters:
            node = Filter(expr, node)
        for pattern, negated in exists:
            node = FilterExists(pattern, node, negated)
        return node

    def parse_constraint(self, filters: List[Expr], exists: List[Tuple[PlanNode, bool]]) -> None:
        if self.at_word("EXISTS"):
            self.advance()
            exists.append((self.parse_group(), False))
        elif self.at_word("NOT") and self.peek().kind == "WORD" and self.peek().upper == "EXISTS":
            self.advance()
            self.advance()
            exists.append((self.parse_group(), True))
        elif self.at("("):
            self.advance()
            filters.append(self.parse_expression())
            self.expect(")")
        elif self.current.kind == "WORD":
            raise UnsupportedFeatureError(f"function {self.current.text}()")
        else:
            raise self.error("expected a FILTER constraint")

    def parse_triples(self) -> List[TriplePattern]:
        patterns = []
        subject = self.parse_term("subject")
        while True:
            predicate = self.parse_predicate()
            while True:
                obj = self.parse_term("object")
                patterns.append(TriplePattern(subject, predicate, obj))
                if self.at(","):
                    self.advance()
                    continue
                break
            if self.at(";"):
                self.advance()
                while self.at(";"):
                    self.advance()
                if self.at(".") or self.at("}"):
                    break
                continue
            break
        return patterns

    def parse_predicate(self) -> PatternTerm:
        if self.current.kind == "WORD" and self.current.text == "a":
            self.advance()
            predicate: PatternTerm = iri(RDF_TYPE)
        elif self.at("^") or self.at("!") or self.at("("):
            raise UnsupportedFeatureError("property paths")
        else:
            predicate = self.parse_term("predicate")
        if any(self.at(op) for op in ("/", "|", "*", "+", "?", "^")):
            raise UnsupportedFeatureError("property paths")
        if not isinstance(predicate, Variable) and not predicate.is_iri:
            raise self.error("predicate must be an IRI or a variable")
        return predicate

    def parse_term(self, role: str) -> PatternTerm:
        token = self.current
        if token.kind == "VAR":
            self.advance()
            return Variable(token.text[1:])
        if token.kind == "BLANK" or self.at("["):
            raise UnsupportedFeatureError("blank nodes in query patterns")
        if self.at("("):
            raise UnsupportedFeatureError("RDF collections")
        if token.kind in ("IRIREF", "PNAME"):
            return self.parse_iri_term()
        if token.kind in ("STRING", "LONG_STRING", "NUMBER") or self.at_word("TRUE", "FALSE"):
            term = self.parse_literal()
            if role == "subject":
                raise self.error("a literal cannot be a subject", token)
            return term
        raise self.error(f"expected an RDF term for the {role}, found {token.text or 'end of query'!r}")

    def parse_iri_term(self) -> Term:
        token = self.current
        if token.kind == "IRIREF":
            return iri(self.parse_iriref())
        if token.kind == "PNAME":
            self.advance()
            prefix, _, local = token.text.partition(":")
            if prefix not in self.prefixes:
                raise self.error(f"undeclared prefix {prefix!r}", token)
            return iri(self.prefixes[prefix] + local)
        raise self.error("expected an IRI")

    def parse_literal(self) -> Term:
        token = self.advance()
        if token.kind == "NUMBER":
            text = token.text
            if re.search(r"[eE]", text):
                datatype = XSD_DOUBLE
            elif "." in text:
                datatype = XSD_DECIMAL
            else:
                datatype = XSD_INTEGER
            return literal(text, datatype)
        if token.kind == "WORD":
            return literal(token.text.lower(), XSD_BOOLEAN)
        quote = 3 if token.kind == "LONG_STRING" else 1
        try:
            lexical = _unescape(token.text[quote:-quote])
        except (ValueError, IndexError) as e:
            raise self.error(f"invalid string escape: {e}", token)
        if self.current.kind == "LANGTAG":
            return literal(lexical, language=self.advance().text[1:])
        if self.current.kind == "DTYPE":
            self.advance()
            return literal(lexical, self.parse_iri_term().lexical)
        return literal(lexical)

    # -- expressions ---------------------------------------------------------

    def parse_expression(self) -> Expr:
        left = self.parse_conjunction()
        while self.at("||"):
            self.advance()
            left = Disjunction(left, self.parse_conjunction())
        return left

    def parse_conjunction(self) -> Expr:
        left = self.parse_relational()
        while self.at("&&"):
            self.advance()
            left = Conjunction(left, self.parse_relational())
        return left

    def parse_relational(self) -> Expr:
        left = self.parse_unary()
        for op in COMPARISON_OPERATORS:
            if self.at(op):
                self.advance()
                return Comparison(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at("!"):
            self.advance()
            return Negation(self.parse_unary())
        if self.at("("):
            self.advance()
            expr = self.parse_expression()
            self.expect(")")
            return expr
        token = self.current
        if token.kind == "VAR":
            self.advance()
            return Variable(token.text[1:])
        if self.at_word("EXISTS", "NOT"):
            raise UnsupportedFeatureError("EXISTS inside an expression")
        if token.kind == "WORD" and not self.at_word("TRUE", "FALSE"):
            raise UnsupportedFeatureError(f"function {token.text}()")
        if token.kind == "BLANK":
            self.advance()
            return blank(token.text[2:])
        if token.kind in ("IRIREF", "PNAME"):
            return self.parse_iri_term()
        if token.kind in ("STRING", "LONG_STRING", "NUMBER", "WORD"):
            return self.parse_literal()
        if self.at("+") or self.at("-") or self.at("*") or self.at("/"):
            raise UnsupportedFeatureError("arithmetic expressions")
        raise self.error(f"unexpected {token.text or 'end of query'!r} in expression")


def parse(query_text: str) -> PlanNode:
    """Parse a SELECT query into its algebra tree."""
    return QueryParser(query_text).parse()
