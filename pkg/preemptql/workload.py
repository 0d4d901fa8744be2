"""Synthetic workloads: a seeded N-Triples dataset plus star, path and snowflake queries.

Predicates are split into fan-out classes so the selectivity of a query can
be steered by the predicates it uses. Every output is a function of the
spec alone; the same seed gives byte-identical files.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .config import parse_quanta
from .errors import ConfigError, WorkloadSpecError
from .oracle import Oracle
from .store import TripleStore
from .terms import Triple, TriplePattern, Variable, iri, triple_to_ntriples

logger = logging.getLogger(__name__)

NAMESPACE = "http://example.org/"
SHAPES = ("star", "path", "snowflake")
SELECTIVITIES = ("bound", "unbound")
FANOUT_CLASSES = {"low": 1, "high": 4}


@dataclass
class QuerySpec:
    name: str
    text: str
    shape: str = "explicit"
    joins: int = 0
    cardinality: Optional[int] = None
    # client that runs the query; None deals it round robin
    client: Optional[int] = None


@dataclass
class WorkloadSpec:
    triples: int = 10_000
    queries: int = 30
    shapes: Dict[str, float] = field(default_factory=lambda: {s: 1.0 for s in SHAPES})
    min_joins: int = 1
    max_joins: int = 10
    selectivity: Dict[str, float] = field(default_factory=lambda: {"bound": 1.0, "unbound": 1.0})
    predicates: int = 12
    entities: Optional[int] = None
    clients: int = 1
    quanta: List[Any] = field(default_factory=lambda: [75, 1000, "inf"])
    workers: int = 1
    seed: int = 0
    latency_ms: float = 0.0
    explicit: List[QuerySpec] = field(default_factory=list)

    def __post_init__(self):
        if self.triples < 1 or self.predicates < 1:
            raise WorkloadSpecError("triples and predicates must be positive")
        if not 1 <= self.min_joins <= self.max_joins:
            raise WorkloadSpecError("join counts must satisfy 1 <= min_joins <= max_joins")
        if self.max_joins > self.predicates:
            raise WorkloadSpecError(
                f"{self.max_joins} joins need at least as many predicates (have {self.predicates})"
            )
        for weights, allowed, what in ((self.shapes, SHAPES, "shape"), (self.selectivity, SELECTIVITIES, "selectivity")):
            unknown = set(weights) - set(allowed)
            if unknown:
                raise WorkloadSpecError(f"unknown {what}: {', '.join(sorted(unknown))}")
            if not weights or any(w < 0 for w in weights.values()) or sum(weights.values()) <= 0:
                raise WorkloadSpecError(f"{what} weights must be non-negative and not all zero")
        if self.clients < 1 or self.workers < 1:
            raise WorkloadSpecError("clients and workers must be at least 1")
        for query in self.explicit:
            if query.client is not None and not (isinstance(query.client, int) and 0 <= query.client < self.clients):
                raise WorkloadSpecError(f"query {query.name} names client {query.client!r}, not one of 0..{self.clients - 1}")
        if self.entities is None:
            self.entities = max(16, self.triples // 4)
        try:
            self.quanta = parse_quanta(self.quanta)
        except ConfigError as e:
            raise WorkloadSpecError(e.message) from None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WorkloadSpec":
        data = dict(data)
        queries = data.get("queries")
        if isinstance(queries, list):
            try:
                data["explicit"] = [QuerySpec(name=q["name"], text=q["text"], client=q.get("client")) for q in queries]
            except (AttributeError, KeyError, TypeError):
                raise WorkloadSpecError("explicit queries need 'name' and 'text'") from None
            data["queries"] = len(queries)
        try:
            return cls(**data)
        except TypeError as e:
            raise WorkloadSpecError(str(e)) from None

    @classmethod
    def load(cls, path: Path) -> "WorkloadSpec":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise WorkloadSpecError(f"cannot read {path}: {e.strerror or e}") from None
        except ValueError as e:
            raise WorkloadSpecError(f"invalid JSON in {path}: {e}") from None
        if not isinstance(data, dict):
            raise WorkloadSpecError("workload spec must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("explicit")
        if self.explicit:
            data["queries"] = [
                {"name": q.name, "text": q.text, **({} if q.client is None else {"client": q.client})}
                for q in self.explicit
            ]
        data["quanta"] = [q if math.isfinite(q) else "inf" for q in self.quanta]
        return data


def predicate_name(index: int) -> str:
    return f"{NAMESPACE}p{index}"


def entity_name(index: int) -> str:
    return f"{NAMESPACE}e{index}"


def fanout_of(index: int) -> int:
    """Even predicates are single-valued, odd ones fan out."""
    return FANOUT_CLASSES["low"] if index % 2 == 0 else FANOUT_CLASSES["high"]


def generate_triples(spec: WorkloadSpec) -> List[Triple]:
    rng = np.random.default_rng(spec.seed)
    per_predicate = max(1, spec.triples // spec.predicates)
    triples = set()
    for p in range(spec.predicates):
        fanout = fanout_of(p)
        subjects = rng.choice(spec.entities, size=min(spec.entities, max(1, per_predicate // fanout)), replace=False)
        predicate = iri(predicate_name(p))
        for s in sorted(int(x) for x in subjects):
            for o in rng.integers(0, spec.entities, size=fanout):
                triples.add(Triple(iri(entity_name(s)), predicate, iri(entity_name(int(o)))))
    return sorted(triples)


def _weighted(rng: np.random.Generator, weights: Dict[str, float], order: Tuple[str, ...]) -> str:
    names = [name for name in order if name in weights]
    p = np.array([weights[name] for name in names], dtype=float)
    return names[int(rng.choice(len(names), p=p / p.sum()))]


def _pattern(subject: str, predicate: int, obj: str) -> str:
    return f"  {subject} <{predicate_name(predicate)}> {obj} ."


def build_query(shape: str, joins: int, predicates: List[int], anchor: Optional[str]) -> str:
    """SPARQL text of a query with `joins` triple patterns."""
    start = f"<{anchor}>" if anchor else "?s"
    lines: List[str] = []
    if shape == "star":
        lines = [_pattern(start, p, f"?o{i}") for i, p in enumerate(predicates[:joins])]
    elif shape == "path":
        node = start
        for i, p in enumerate(predicates[:joins]):
            lines.append(_pattern(node, p, f"?v{i + 1}"))
            node = f"?v{i + 1}"
    elif shape == "snowflake":
        arms = max(1, (joins + 1) // 2)
        lines = [_pattern(start, p, f"?a{i}") for i, p in enumerate(predicates[:arms])]
        for i, p in enumerate(predicates[arms:joins]):
            lines.append(_pattern(f"?a{i % arms}", p, f"?b{i}"))
    else:
        raise WorkloadSpecError(f"unknown shape {shape!r}")
    return "SELECT * WHERE {\n" + "\n".join(lines) + "\n}\n"


def generate_queries(spec: WorkloadSpec, store: TripleStore) -> List[QuerySpec]:
    if spec.explicit:
        return list(spec.explicit)
    rng = np.random.default_rng(spec.seed + 1)
    queries = []
    for n in range(spec.queries):
        shape = _weighted(rng, spec.shapes, SHAPES)
        joins = int(rng.integers(spec.min_joins, spec.max_joins + 1))
        predicates = [int(p) for p in rng.permutation(spec.predicates)[:joins]]
        anchor = None
        if _weighted(rng, spec.selectivity, SELECTIVITIES) == "bound":
            first = TriplePattern(Variable("s"), iri(predicate_name(predicates[0])), Variable("o"))
            subjects = sorted({t.subject.lexical for t in store.scan(first)})
            if subjects:
                anchor = subjects[int(rng.integers(0, len(subjects)))]
        name = f"q{n + 1:04d}-{shape}-{joins}"
        queries.append(QuerySpec(name, build_query(shape, joins, predicates, anchor), shape, joins))
    return queries


@dataclass
class Workload:
    spec: WorkloadSpec
    dataset: Path
    queries: List[QuerySpec]


def generate(spec: WorkloadSpec, out_dir: Path, record_cardinalities: bool = True) -> Workload:
    """Write dataset.nt, queries/*.rq and manifest.json under `out_dir`."""
    out_dir = Path(out_dir)
    (out_dir / "queries").mkdir(parents=True, exist_ok=True)
    triples = generate_triples(spec)
    dataset = out_dir / "dataset.nt"
    with open(dataset, "w", encoding="utf-8", newline="\n") as f:
        for triple in triples:
            f.write(triple_to_ntriples(triple) + "\n")
    store = TripleStore.from_triples(triples)
    logger.info("generated %d triples into %s", len(store), dataset)
    queries = generate_queries(spec, store)
    oracle = Oracle(store) if record_cardinalities else None
    for query in queries:
        (out_dir / "queries" / f"{query.name}.rq").write_text(query.text, encoding="utf-8")
        if oracle is not None:
            query.cardinality = len(oracle.query(query.text))
    manifest = {
        "spec": spec.to_dict(),
        "triples": len(store),
        "fingerprint": store.fingerprint.hex(),
        "queries": [
            {
                "name": q.name,
                "file": f"queries/{q.name}.rq",
                "shape": q.shape,
                "joins": q.joins,
                "cardinality": q.cardinality,
            }
            for q in queries
        ],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %d queries and manifest.json", len(queries))
    return Workload(spec, dataset, queries)
