"""Smart client: drains server subqueries page by page and runs everything else locally.

The query is classified into maximal server subtrees (sent as SPARQL text,
then resumed by posting back the saved plan of each page) and client
operators evaluated over the resulting streams. Joins and OPTIONALs whose
right side is a server subtree are evaluated as bind joins: blocks of left
mappings are sent as one UNION of bound copies of the right side.
"""

import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Optional

import requests

from .algebra import (
    Distinct,
    Filter,
    FilterExists,
    GroupByAgg,
    Join,
    LeftJoin,
    Minus,
    OrderBy,
    PlanNode,
    Project,
    ServerSubquery,
    Service,
    Slice,
    Union,
    certain_variables,
    classify,
    expr_variables,
    serialize_subquery,
    variables,
)
from .clientops import (
    bound_union,
    distinct,
    group_by_aggregate,
    join_local,
    minus,
    order_by,
    peel_filters,
    substitute_exists,
    tag_branch,
    union_of,
    untag,
)
from .codec import FINGERPRINT_SIZE, HEADER_SIZE
from .config import ClientConfig
from .errors import (
    OverloadError,
    PlanDecodeError,
    PreemptQLError,
    ServerResponseError,
    TransportError,
    UnsupportedFeatureError,
)
from .expr import evaluate_filter
from .parser import parse
from .terms import SolutionMapping, freeze, restrict
from .wire import decode_plan, mapping_from_json

logger = logging.getLogger(__name__)

MAX_BACKOFF_SECONDS = 2.0

PageCallback = Callable[[str, dict], None]


@dataclass
class ClientStats:
    http_requests: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    plan_bytes_received: int = 0
    suspended_pages: int = 0
    retries: int = 0
    restarts: int = 0
    results: int = 0
    first_result_ms: Optional[float] = None
    total_ms: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def sparql_url(endpoint: str) -> str:
    endpoint = endpoint.rstrip("/")
    return endpoint if endpoint.endswith("/sparql") else endpoint + "/sparql"


def plan_fingerprint(plan_text: str) -> Optional[str]:
    """Hex dataset fingerprint carried in the header of a base64 saved plan."""
    try:
        return decode_plan(plan_text)[HEADER_SIZE - FINGERPRINT_SIZE : HEADER_SIZE].hex()
    except PlanDecodeError:
        return None


class SageHttpClient:
    """Transport to one endpoint; counts requests and bytes into shared stats."""

    def __init__(
        self,
        endpoint: str,
        config: ClientConfig,
        stats: ClientStats,
        session: Optional[requests.Session] = None,
        on_page: Optional[PageCallback] = None,
    ):
        self.url = sparql_url(endpoint)
        self.health_url = self.url[: -len("/sparql")] + "/healthz"
        self.config = config
        self.stats = stats
        self.session = session or requests.Session()
        self.on_page = on_page

    def post(self, body: dict) -> dict:
        payload = json.dumps(body).encode("utf-8")
        attempt = 0
        while True:
            if self.config.latency_ms:
                time.sleep(self.config.latency_ms / 1000)
            self.stats.http_requests += 1
            self.stats.bytes_sent += len(payload)
            try:
                response = self.session.post(
                    self.url,
                    data=payload,
                    headers={"Content-Type": "application/json"},
                    timeout=self.config.timeout,
                )
            except requests.RequestException as e:
                if attempt >= self.config.max_retries:
                    raise TransportError(f"cannot reach {self.url}: {e}") from None
                self._backoff(attempt, f"transport error: {e}")
                attempt += 1
                continue
            self.stats.bytes_received += len(response.content)
            if response.status_code == 503:
                if attempt >= self.config.max_retries:
                    raise OverloadError(f"{self.url} is still overloaded after {attempt} retries")
                self._backoff(attempt, "server overloaded")
                attempt += 1
                continue
            if response.status_code != 200:
                raise _response_error(response)
            return response.json()

    def _backoff(self, attempt: int, reason: str) -> None:
        delay = min(MAX_BACKOFF_SECONDS, self.config.backoff_ms / 1000 * (2 ** attempt))
        self.stats.retries += 1
        logger.debug("%s, retrying in %.3f s", reason, delay)
        time.sleep(delay)

    def drain_text(self, query: str) -> Iterator[SolutionMapping]:
        """Every mapping of a server-fragment query, resuming until the last page.

        A rejected plan restarts the query once. When mappings were already
        produced, the restart is only taken if the server still holds the
        dataset the plan was made against; the second run then skips them.
        """
        body = {"query": query}
        produced = skip = 0
        fingerprint: Optional[str] = None
        restarted = False
        while True:
            try:
                page = self.post(body)
            except ServerResponseError as e:
                if e.status != 409 or restarted:
                    raise
                if produced and self.dataset_fingerprint() != fingerprint:
                    raise ServerResponseError(
                        e.status,
                        e.error_kind,
                        f"{e.detail}; the dataset changed after {produced} results were returned",
                    ) from None
                logger.warning("saved plan rejected (%s), restarting the subquery", e.detail)
                restarted = True
                self.stats.restarts += 1
                body, skip = {"query": query}, produced
                continue
            if self.on_page is not None:
                self.on_page(self.url, page.get("stats", {}))
            for item in page["bindings"]:
                if skip:
                    skip -= 1
                    continue
                produced += 1
                yield mapping_from_json(item)
            if "plan" not in page:
                return
            self.stats.suspended_pages += 1
            self.stats.plan_bytes_received += page.get("stats", {}).get("plan_bytes", 0)
            body = {"plan": page["plan"]}
            fingerprint = plan_fingerprint(page["plan"])

    def dataset_fingerprint(self) -> Optional[str]:
        """Fingerprint the endpoint reports on /healthz, or None if it cannot be read."""
        try:
            response = self.session.get(self.health_url, timeout=self.config.timeout)
            self.stats.http_requests += 1
            self.stats.bytes_received += len(response.content)
            return response.json().get("fingerprint") if response.ok else None
        except (requests.RequestException, ValueError):
            return None

    def drain(self, subquery: PlanNode) -> Iterator[SolutionMapping]:
        return self.drain_text(serialize_subquery(subquery))


def _response_error(response: requests.Response) -> ServerResponseError:
    try:
        body = response.json()
        return ServerResponseError(response.status_code, body.get("error", "unknown"), body.get("message", ""))
    except ValueError:
        return ServerResponseError(response.status_code, "unknown", response.text[:200])


def _blocks(stream: Iterable[SolutionMapping], size: int) -> Iterator[List[SolutionMapping]]:
    iterator = iter(stream)
    while True:
        block = list(itertools.islice(iterator, size))
        if not block:
            return
        yield block


def opt_join_applicable(left: PlanNode, right: PlanNode) -> bool:
    """Whether results of (left JOIN right) UNION left can be told apart by their domain."""
    left_vars = variables(left)
    if certain_variables(left) != left_vars:
        return False
    if not left_vars & variables(right):
        return False
    if not certain_variables(right) - left_vars:
        return False
    core, conditions = peel_filters(right)
    outside = left_vars - variables(core)
    return all(not (expr_variables(expr) & outside) for expr in conditions)


def result_variables(plan: PlanNode) -> List[str]:
    node = plan
    while isinstance(node, (Slice, Distinct, OrderBy)):
        node = node.child
    if isinstance(node, Project):
        return list(node.variables)
    if isinstance(node, GroupByAgg):
        return list(node.group_by) + [a.alias for a in node.aggregates]
    return sorted(variables(plan))


class ResultStream:
    """Iterator over the results of one execution; `stats` is final once exhausted."""

    def __init__(self, source: Iterator[SolutionMapping], variables: List[str], stats: ClientStats):
        self._source = source
        self.variables = variables
        self.stats = stats
        self._started = time.perf_counter()

    def __iter__(self):
        return self

    def __next__(self) -> SolutionMapping:
        try:
            mapping = next(self._source)
        except StopIteration:
            if self.stats.total_ms is None:
                self.stats.total_ms = (time.perf_counter() - self._started) * 1000
            raise
        if self.stats.first_result_ms is None:
            self.stats.first_result_ms = (time.perf_counter() - self._started) * 1000
        self.stats.results += 1
        return mapping


class _Execution:
    def __init__(self, config: ClientConfig, session: requests.Session, stats: ClientStats, on_page: Optional[PageCallback]):
        self.config = config
        self.session = session
        self.stats = stats
        self.on_page = on_page
        self._transports: Dict[str, SageHttpClient] = {}
        self.default = self.transport(config.endpoint)

    def transport(self, endpoint: str) -> SageHttpClient:
        url = sparql_url(endpoint)
        if url not in self._transports:
            self._transports[url] = SageHttpClient(endpoint, self.config, self.stats, self.session, self.on_page)
        return self._transports[url]

    def evaluate(self, node: PlanNode) -> Iterator[SolutionMapping]:
        if isinstance(node, ServerSubquery):
            return self.default.drain(node.plan)
        if isinstance(node, Slice):
            stop = None if node.limit is None else node.offset + node.limit
            return itertools.islice(self.evaluate(node.child), node.offset, stop)
        if isinstance(node, Distinct):
            return distinct(self.evaluate(node.child))
        if isinstance(node, OrderBy):
            return iter(order_by(self.evaluate(node.child), node.keys))
        if isinstance(node, GroupByAgg):
            return iter(group_by_aggregate(self.evaluate(node.child), node.group_by, node.aggregates))
        if isinstance(node, Project):
            return (restrict(m, node.variables) for m in self.evaluate(node.child))
        if isinstance(node, Filter):
            return (m for m in self.evaluate(node.child) if evaluate_filter(node.expr, m))
        if isinstance(node, Union):
            return itertools.chain(self.evaluate(node.left), self.evaluate(node.right))
        if isinstance(node, Minus):
            return minus(self.evaluate(node.left), list(self.evaluate(node.right)))
        if isinstance(node, FilterExists):
            return self.filter_exists(node)
        if isinstance(node, Service):
            return self.service_join(iter([{}]), node)
        if isinstance(node, Join):
            return self.join(node)
        if isinstance(node, LeftJoin):
            return self.left_join(node)
        raise UnsupportedFeatureError(f"client evaluation of {type(node).__name__}")

    # -- joins ----------------------------------------------------------------

    def join(self, node: Join) -> Iterator[SolutionMapping]:
        if isinstance(node.right, Service):
            return self.service_join(self.evaluate(node.left), node.right)
        if isinstance(node.right, ServerSubquery):
            return self.bind_join(self.evaluate(node.left), node.right.plan, optional=False)
        return join_local(self.evaluate(node.left), list(self.evaluate(node.right)))

    def left_join(self, node: LeftJoin) -> Iterator[SolutionMapping]:
        if not isinstance(node.right, ServerSubquery):
            core, conditions = peel_filters(node.right)
            return join_local(self.evaluate(node.left), list(self.evaluate(core)), conditions, optional=True)
        right = node.right.plan
        strategy = self.config.optional_strategy
        if (
            strategy in ("opt", "auto")
            and isinstance(node.left, ServerSubquery)
            and opt_join_applicable(node.left.plan, right)
        ):
            return self.opt_join(node.left.plan, right)
        if strategy == "opt":
            logger.debug("OPTIONAL is not eligible for the union strategy, using bind joins")
        return self.bind_join(self.evaluate(node.left), right, optional=True)

    def bind_join(
        self,
        left: Iterable[SolutionMapping],
        right: PlanNode,
        optional: bool,
        transport: Optional[SageHttpClient] = None,
        silent: bool = False,
    ) -> Iterator[SolutionMapping]:
        """Blocked bind join; with `optional`, unmatched left mappings pass through."""
        transport = transport or self.default
        for block in _blocks(left, self.config.block_size):
            buckets: List[List[SolutionMapping]] = [[] for _ in block]
            try:
                for mapping in transport.drain(bound_union(right, block, condition=optional)):
                    index, solution = untag(mapping)
                    buckets[index].append(solution)
            except PreemptQLError:
                if not silent:
                    raise
                logger.warning("SERVICE %s failed, ignored (SILENT)", transport.url)
                yield from block
                continue
            for mapping, solutions in zip(block, buckets):
                if solutions:
                    for solution in solutions:
                        yield {**mapping, **solution}
                elif optional:
                    yield mapping

    def opt_join(self, left: PlanNode, right: PlanNode) -> Iterator[SolutionMapping]:
        """One subquery (left JOIN right) UNION left, split by binding domain."""
        left_vars = variables(left)
        marker = certain_variables(right) - left_vars
        matched = set()
        pending: List[SolutionMapping] = []
        for mapping in self.default.drain(Union(Join(left, right), left)):
            if marker <= mapping.keys():
                matched.add(freeze(restrict(mapping, left_vars)))
                yield mapping
            else:
                pending.append(mapping)
        for mapping in pending:
            if freeze(mapping) not in matched:
                yield mapping

    def service_join(self, left: Iterable[SolutionMapping], node: Service) -> Iterator[SolutionMapping]:
        if not isinstance(node.child, ServerSubquery):
            raise UnsupportedFeatureError("SERVICE over client-only operators")
        transport = self.transport(node.endpoint)
        return self.bind_join(left, node.child.plan, optional=False, transport=transport, silent=node.silent)

    def filter_exists(self, node: FilterExists) -> Iterator[SolutionMapping]:
        if not isinstance(node.pattern, ServerSubquery):
            candidates = list(self.evaluate(node.pattern))
            for mapping in self.evaluate(node.child):
                found = any(
                    all(other.get(k, v) == v for k, v in mapping.items()) for other in candidates
                )
                if found != node.negated:
                    yield mapping
            return
        pattern = node.pattern.plan
        for block in _blocks(self.evaluate(node.child), self.config.block_size):
            query = union_of([tag_branch(substitute_exists(pattern, m), i) for i, m in enumerate(block)])
            found = {untag(m)[0] for m in self.default.drain(query)}
            for index, mapping in enumerate(block):
                if (index in found) != node.negated:
                    yield mapping


class SmartClient:
    def __init__(
        self,
        config: ClientConfig,
        session: Optional[requests.Session] = None,
        on_page: Optional[PageCallback] = None,
    ):
        self.config = config
        self.session = session or requests.Session()
        self.on_page = on_page

    def plan(self, query_text: str) -> PlanNode:
        return classify(parse(query_text))

    def execute(self, query_text: str) -> ResultStream:
        plan = parse(query_text)
        stats = ClientStats()
        execution = _Execution(self.config, self.session, stats, self.on_page)
        return ResultStream(execution.evaluate(classify(plan)), result_variables(plan), stats)

    def drain_subquery(self, subquery: PlanNode, stats: Optional[ClientStats] = None) -> Iterator[SolutionMapping]:
        stats = stats or ClientStats()
        return SageHttpClient(self.config.endpoint, self.config, stats, self.session, self.on_page).drain(subquery)

    def close(self) -> None:
        self.session.close()
