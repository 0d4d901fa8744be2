"""Benchmark runner: one server process per quantum, concurrent smart clients, a metrics report."""

import csv
import hashlib
import json
import logging
import math
import os
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import requests
from rich.console import Console
from rich.table import Table

from . import codec
from .client import SmartClient
from .config import BenchConfig, ClientConfig
from .engine import Engine
from .errors import PreemptQLError
from .operators import IndexLoopJoinState, MergeJoinState, ScanState, UnionState
from .store import load_ntriples
from .terms import freeze, to_ntriples
from .workload import QuerySpec, Workload, WorkloadSpec, generate

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
CSV_FIELDS = (
    "quantum_ms",
    "client",
    "query",
    "results",
    "expected",
    "tfr_ms",
    "completion_ms",
    "requests",
    "bytes_sent",
    "bytes_received",
    "suspended_pages",
    "plan_bytes_total",
    "max_plan_bytes",
    "mean_suspend_ms",
    "mean_resume_ms",
)


def quantum_label(quantum_ms: float) -> Any:
    return "inf" if math.isinf(quantum_ms) else quantum_ms


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def result_digest(mappings) -> str:
    """Order-independent digest of a result multiset."""
    rows = sorted(" ".join(f"?{k}={to_ntriples(v)}" for k, v in freeze(m)) for m in mappings)
    digest = hashlib.blake2b(digest_size=8)
    for row in rows:
        digest.update(row.encode("utf-8") + b"\n")
    return digest.hexdigest()


@dataclass
class QueryRow:
    client: int
    query: str
    expected: Optional[int]
    results: int = 0
    digest: str = ""
    start_ms: float = 0.0
    tfr_ms: Optional[float] = None
    completion_ms: float = 0.0
    end_ms: float = 0.0
    requests: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    suspended_pages: int = 0
    plan_bytes_total: int = 0
    max_plan_bytes: int = 0
    suspend_ms: List[float] = field(default_factory=list)
    resume_ms: List[float] = field(default_factory=list)
    error: Optional[str] = None

    def on_page(self, url: str, stats: Dict[str, int]) -> None:
        if stats.get("plan_bytes"):
            self.max_plan_bytes = max(self.max_plan_bytes, stats["plan_bytes"])
            self.suspend_ms.append(stats.get("suspend_ns", 0) / 1e6)
        if stats.get("resume_ns"):
            self.resume_ms.append(stats["resume_ns"] / 1e6)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mean_suspend_ms"] = _mean(self.suspend_ms)
        data["mean_resume_ms"] = _mean(self.resume_ms)
        del data["suspend_ms"], data["resume_ms"]
        return data


@dataclass
class RunReport:
    quantum_ms: float
    rows: List[QueryRow]

    def summary(self) -> Dict[str, Any]:
        """Aggregates, always recomputed from the rows."""
        rows = self.rows
        by_client: Dict[int, List[QueryRow]] = {}
        for row in rows:
            by_client.setdefault(row.client, []).append(row)
        wct = {
            str(client): max(r.end_ms for r in group) - min(r.start_ms for r in group)
            for client, group in sorted(by_client.items())
        }
        suspend = [ms for r in rows for ms in r.suspend_ms]
        resume = [ms for r in rows for ms in r.resume_ms]
        mean_suspend, mean_resume = _mean(suspend), _mean(resume)
        overhead = None
        if not math.isinf(self.quantum_ms) and suspend and resume:
            overhead = (mean_suspend + mean_resume) / self.quantum_ms
        return {
            "quantum_ms": quantum_label(self.quantum_ms),
            "queries": len(rows),
            "errors": sum(1 for r in rows if r.error),
            "wct_ms": wct,
            "max_wct_ms": max(wct.values(), default=0.0),
            "mean_completion_ms": _mean([r.completion_ms for r in rows]),
            "mean_tfr_ms": _mean([r.tfr_ms for r in rows if r.tfr_ms is not None]),
            "mean_suspend_ms": mean_suspend,
            "mean_resume_ms": mean_resume,
            "overhead_fraction": overhead,
            "requests": sum(r.requests for r in rows),
            "bytes_sent": sum(r.bytes_sent for r in rows),
            "bytes_received": sum(r.bytes_received for r in rows),
            "suspended_pages": sum(r.suspended_pages for r in rows),
            "transfer_overhead_bytes": sum(r.plan_bytes_total for r in rows),
            "max_plan_bytes": max((r.max_plan_bytes for r in rows), default=0),
            "results": sum(r.results for r in rows),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {**self.summary(), "rows": [r.to_dict() for r in self.rows]}


# ---------------------------------------------------------------------------
# Server process


class ServerProcess:
    """`preemptql serve` as a child process on an ephemeral port."""

    def __init__(self, dataset: Path, quantum_ms: float, workers: int, config: BenchConfig, work_dir: Path):
        self.dataset = dataset
        self.quantum_ms = quantum_ms
        self.workers = workers
        self.config = config
        self.port_file = work_dir / f"port-{quantum_label(quantum_ms)}"
        self.log_path = work_dir / f"server-{quantum_label(quantum_ms)}.log"
        self.process: Optional[subprocess.Popen] = None
        self.endpoint = ""

    def __enter__(self) -> "ServerProcess":
        self.port_file.unlink(missing_ok=True)
        command = [
            sys.executable, "-m", "preemptql", "serve",
            "--data", str(self.dataset),
            "--port", "0",
            "--port-file", str(self.port_file),
            "--quantum-ms", str(quantum_label(self.quantum_ms)),
            "--workers", str(self.workers),
            "--queue-size", str(self.config.queue_size),
            "--page-limit", str(self.config.page_limit),
            "--log-level", "WARNING",
        ]
        self._log = open(self.log_path, "wb")
        package_root = str(Path(__file__).resolve().parent.parent)
        env = dict(os.environ)
        env["PYTHONPATH"] = os.pathsep.join(filter(None, [package_root, env.get("PYTHONPATH")]))
        self.process = subprocess.Popen(command, stdout=subprocess.DEVNULL, stderr=self._log, env=env)
        try:
            self._wait_ready()
        except BaseException:
            self.__exit__(None, None, None)
            raise
        return self

    def _wait_ready(self) -> None:
        deadline = time.monotonic() + self.config.startup_timeout
        while time.monotonic() < deadline:
            if self.process.poll() is not None:
                raise PreemptQLError(
                    f"server exited with code {self.process.returncode} during startup:\n{self._log_tail()}"
                )
            if self.port_file.exists() and self.port_file.read_text().strip():
                self.endpoint = f"http://127.0.0.1:{int(self.port_file.read_text())}"
                try:
                    if requests.get(self.endpoint + "/healthz", timeout=1).ok:
                        return
                except requests.RequestException:
                    pass
            time.sleep(0.05)
        raise PreemptQLError(
            f"server not ready after {self.config.startup_timeout:g} s:\n{self._log_tail()}"
        )

    def _log_tail(self) -> str:
        self._log.flush()
        lines = self.log_path.read_text(errors="replace").splitlines()
        return "\n".join(lines[-20:])

    def __exit__(self, exc_type, exc, tb) -> None:
        if self.process is not None and self.process.poll() is None:
            self.process.terminate()
            try:
                self.process.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()
        self._log.close()


# ---------------------------------------------------------------------------
# Clients


def _run_query(client_config: ClientConfig, session: requests.Session, query: QuerySpec, row: QueryRow, origin: float) -> None:
    client = SmartClient(client_config, session=session, on_page=row.on_page)
    started = time.perf_counter()
    row.start_ms = (started - origin) * 1000
    results = []
    stream = None
    try:
        stream = client.execute(query.text)
        for mapping in stream:
            if row.tfr_ms is None:
                row.tfr_ms = (time.perf_counter() - started) * 1000
            results.append(mapping)
    except PreemptQLError as e:
        row.error = e.message
        logger.error("query %s failed: %s", query.name, e.message)
    finished = time.perf_counter()
    row.completion_ms = (finished - started) * 1000
    row.end_ms = (finished - origin) * 1000
    if row.tfr_ms is None:
        row.tfr_ms = row.completion_ms
    row.results = len(results)
    row.digest = result_digest(results)
    if stream is not None:
        stats = stream.stats
        row.requests = stats.http_requests
        row.bytes_sent = stats.bytes_sent
        row.bytes_received = stats.bytes_received
        row.suspended_pages = stats.suspended_pages
        row.plan_bytes_total = stats.plan_bytes_received


def run_clients(workload: Workload, endpoint: str) -> List[QueryRow]:
    """All clients start together; each runs its share of the queries in order.

    A query that names its client goes to that client; the others are dealt
    round robin.
    """
    spec = workload.spec
    client_config = ClientConfig(endpoint=endpoint, latency_ms=spec.latency_ms)
    assignments: Dict[int, List[QuerySpec]] = {c: [] for c in range(spec.clients)}
    dealt = 0
    for query in workload.queries:
        if query.client is not None:
            assignments[query.client].append(query)
        else:
            assignments[dealt % spec.clients].append(query)
            dealt += 1
    rows = {
        c: [QueryRow(c, q.name, q.cardinality) for q in queries] for c, queries in assignments.items()
    }
    barrier = threading.Barrier(spec.clients)
    origin = [0.0]

    def client_loop(client: int) -> None:
        with requests.Session() as session:
            if barrier.wait() == 0:
                origin[0] = time.perf_counter()
            barrier.wait()
            for query, row in zip(assignments[client], rows[client]):
                _run_query(client_config, session, query, row, origin[0])

    with ThreadPoolExecutor(max_workers=spec.clients) as pool:
        list(pool.map(client_loop, range(spec.clients)))
    return [row for c in range(spec.clients) for row in rows[c]]


# ---------------------------------------------------------------------------
# Plan-size profile


# pages searched for a plan whose every join has an inner iterator
PROFILE_SEARCH_PAGES = 200


def _live_scans(state) -> int:
    """Scan states present in a saved operator tree."""
    if isinstance(state, ScanState):
        return 1
    if isinstance(state, MergeJoinState):
        return 2
    if isinstance(state, IndexLoopJoinState):
        return _live_scans(state.outer) + (_live_scans(state.inner) if state.inner is not None else 0)
    if isinstance(state, UnionState):
        return sum(_live_scans(child) for child in state.children)
    return _live_scans(state.child)


def _live_plan_bytes(engine: Engine, query: QuerySpec, pages: int) -> Optional[int]:
    """Largest plan over `pages` pages once the whole iterator tree is live."""
    page = engine.run_page(0, query=query.text)
    for _ in range(PROFILE_SEARCH_PAGES):
        if page.complete:
            return None
        if _live_scans(codec.decode(page.plan).root) >= query.joins:
            break
        page = engine.run_page(0, plan=page.plan)
    else:
        return None
    largest = page.stats.plan_bytes
    for _ in range(pages - 1):
        page = engine.run_page(0, plan=page.plan)
        if page.complete:
            break
        largest = max(largest, page.stats.plan_bytes)
    return largest


def plan_size_profile(workload: Workload, config: BenchConfig) -> Dict[str, Any]:
    """Saved-plan size of each query with its whole iterator tree live, fitted against its join count.

    Queries whose tree never becomes fully live (no partial match reaches the
    last pattern) are counted as skipped.
    """
    engine = Engine(load_ntriples(workload.dataset), page_limit=1)
    sizes: Dict[int, List[int]] = {}
    skipped = 0
    for query in workload.queries:
        if query.joins < 1:
            continue
        largest = _live_plan_bytes(engine, query, config.profile_pages)
        if largest is None:
            skipped += 1
            continue
        sizes.setdefault(query.joins, []).append(largest)
    if skipped:
        logger.info("plan-size profile skipped %d queries whose iterator tree never became live", skipped)
    points = [[joins, float(np.mean(values))] for joins, values in sorted(sizes.items())]
    profile: Dict[str, Any] = {
        "points": points,
        "profiled": sum(len(v) for v in sizes.values()),
        "skipped": skipped,
        "max_plan_bytes": max((max(v) for v in sizes.values()), default=0),
        "slope": None,
        "intercept": None,
        "r2": None,
    }
    if len(points) >= 2:
        x, y = np.array(points).T
        slope, intercept = np.polyfit(x, y, 1)
        residual = float(np.sum((y - (slope * x + intercept)) ** 2))
        total = float(np.sum((y - y.mean()) ** 2))
        profile.update(
            slope=float(slope),
            intercept=float(intercept),
            r2=1.0 - residual / total if total else 1.0,
        )
    return profile


# ---------------------------------------------------------------------------
# Report


def compare(runs: List[RunReport]) -> Dict[str, Any]:
    """Each finite quantum against the FCFS (infinite quantum) run."""
    fcfs = next((r for r in runs if math.isinf(r.quantum_ms)), None)
    if fcfs is None:
        return {"fcfs": None, "preemptive": []}
    base = fcfs.summary()
    digests = {row.query: row.digest for row in fcfs.rows}
    block = []
    for run in runs:
        if run is fcfs:
            continue
        summary = run.summary()
        block.append(
            {
                "quantum_ms": run.quantum_ms,
                "mean_completion_ms": summary["mean_completion_ms"],
                "mean_tfr_ms": summary["mean_tfr_ms"],
                "completion_ratio": _ratio(summary["mean_completion_ms"], base["mean_completion_ms"]),
                "tfr_ratio": _ratio(summary["mean_tfr_ms"], base["mean_tfr_ms"]),
                "same_results": all(digests.get(row.query) == row.digest for row in run.rows),
            }
        )
    return {
        "fcfs": {"mean_completion_ms": base["mean_completion_ms"], "mean_tfr_ms": base["mean_tfr_ms"]},
        "preemptive": block,
    }


def _ratio(value: Optional[float], base: Optional[float]) -> Optional[float]:
    if value is None or not base:
        return None
    return value / base


def build_report(workload: Workload, runs: List[RunReport], profile: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "version": REPORT_VERSION,
        "spec": workload.spec.to_dict(),
        "runs": [run.to_dict() for run in runs],
        "comparison": compare(runs),
        "plan_size_profile": profile,
    }


def _fmt(value: Optional[float], digits: int = 1) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def render_table(report: Dict[str, Any], console: Console) -> None:
    table = Table(title="preemptql benchmark")
    for column in ("quantum (ms)", "queries", "WCT (ms)", "completion (ms)", "TFR (ms)",
                   "suspend (ms)", "resume (ms)", "overhead", "requests", "KiB recv", "plan KiB"):
        table.add_column(column, justify="right")
    for run in report["runs"]:
        overhead = run["overhead_fraction"]
        table.add_row(
            str(run["quantum_ms"]),
            str(run["queries"]),
            _fmt(run["max_wct_ms"]),
            _fmt(run["mean_completion_ms"]),
            _fmt(run["mean_tfr_ms"]),
            _fmt(run["mean_suspend_ms"], 3),
            _fmt(run["mean_resume_ms"], 3),
            "-" if overhead is None else f"{overhead:.1%}",
            str(run["requests"]),
            _fmt(run["bytes_received"] / 1024),
            _fmt(run["transfer_overhead_bytes"] / 1024),
        )
    console.print(table)
    profile = report["plan_size_profile"]
    if profile["slope"] is not None:
        console.print(
            f"plan size: {profile['slope']:.1f} bytes per join, R² {profile['r2']:.4f}, "
            f"max {profile['max_plan_bytes']} bytes"
        )


def write_csv(report: Dict[str, Any], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for run in report["runs"]:
            for row in run["rows"]:
                writer.writerow({"quantum_ms": run["quantum_ms"], **row})


def run(
    spec: WorkloadSpec,
    config: BenchConfig,
    report_path: Optional[Path] = None,
    csv_path: Optional[Path] = None,
    out_dir: Optional[Path] = None,
    console: Optional[Console] = None,
) -> Dict[str, Any]:
    """Generate the workload, run it once per quantum and write the report."""
    quanta = config.quanta or spec.quanta
    with tempfile.TemporaryDirectory(prefix="preemptql-bench-") as scratch:
        work_dir = Path(out_dir) if out_dir else Path(scratch)
        workload = generate(spec, work_dir)
        runs = []
        for quantum in quanta:
            logger.info("running %d queries with quantum %s ms", len(workload.queries), quantum_label(quantum))
            with ServerProcess(workload.dataset, quantum, spec.workers, config, work_dir) as server:
                runs.append(RunReport(quantum, run_clients(workload, server.endpoint)))
        profile = plan_size_profile(workload, config)
    report = build_report(workload, runs, profile)
    if report_path is not None:
        Path(report_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        logger.info("report written to %s", report_path)
    if csv_path is not None:
        write_csv(report, Path(csv_path))
    render_table(report, console or Console())
    return report
