"""Command line entry point: `python -m preemptql <command>`.

Exit codes: 0 on success, 1 for user errors (bad flags, bad input, failed
queries), 2 for internal errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO

from rich.console import Console

from . import bench, workload
from .algebra import classify, pretty, server_subqueries
from .client import SmartClient
from .config import (
    LOG_LEVELS,
    OPTIONAL_STRATEGIES,
    OUTPUT_FORMATS,
    BenchConfig,
    ClientConfig,
    GlobalConfig,
    ServerConfig,
    default_of,
    global_config,
    layered,
    load_config_file,
)
from .errors import PreemptQLError
from .log import setup_logging, stderr_console
from .parser import parse
from .planner import build_plan, explain
from .server import run_server
from .store import TripleStore, load_ntriples
from .terms import to_ntriples
from .wire import term_to_json

logger = logging.getLogger("preemptql")

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """Reports argument errors as `USAGE:` lines instead of exiting."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def _default(cls, name: str) -> str:
    return f"(default: {default_of(cls, name)})"


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, help="log level (default: INFO, or $PREEMPTQL_LOG)")
    common.add_argument("--config", type=Path, help="TOML configuration file; flags override its values")
    common.add_argument("--format", choices=OUTPUT_FORMATS, help="output format (default: tsv)")
    return common


def _add_client_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--endpoint", help=f"server URL {_default(ClientConfig, 'endpoint')}")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--file", type=Path, help="file holding the SPARQL query")
    source.add_argument("--query", help="SPARQL query text")
    parser.add_argument("--optional-strategy", choices=OPTIONAL_STRATEGIES, help=f"OPTIONAL evaluation {_default(ClientConfig, 'optional_strategy')}")
    parser.add_argument("--block-size", type=int, help=f"mappings per bind-join request {_default(ClientConfig, 'block_size')}")
    parser.add_argument("--max-retries", type=int, help=f"retries on overload or transport failure {_default(ClientConfig, 'max_retries')}")
    parser.add_argument("--timeout", type=float, help=f"HTTP timeout in seconds {_default(ClientConfig, 'timeout')}")
    parser.add_argument("--latency-ms", type=float, help=f"delay injected before each request {_default(ClientConfig, 'latency_ms')}")
    parser.add_argument("--stats-json", type=Path, help="write client statistics to this file")


def build_parser() -> ArgumentParser:
    common = _common_options()
    parser = ArgumentParser(prog="preemptql", description="Web-preemptable SPARQL server, smart client and benchmark.")
    commands = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)

    store = commands.add_parser("store", help="inspect datasets")
    store_commands = store.add_subparsers(dest="store_command", metavar="command", parser_class=ArgumentParser)
    info = store_commands.add_parser("info", help="size, fingerprint and index checksums", parents=[common])
    info.add_argument("--data", type=Path, required=True, help="N-Triples file")

    serve = commands.add_parser("serve", help="run the preemptive SPARQL server", parents=[common])
    serve.add_argument("--data", type=Path, help="N-Triples file to serve (required)")
    serve.add_argument("--host", help=f"address to bind {_default(ServerConfig, 'host')}")
    serve.add_argument("--port", type=int, help=f"port to bind, 0 for any {_default(ServerConfig, 'port')}")
    serve.add_argument("--quantum-ms", help=f"time quantum in ms, or 'inf' {_default(ServerConfig, 'quantum_ms')}")
    serve.add_argument("--workers", type=int, help=f"worker threads {_default(ServerConfig, 'workers')}")
    serve.add_argument("--queue-size", type=int, help=f"waiting jobs before 503 {_default(ServerConfig, 'queue_size')}")
    serve.add_argument("--page-limit", type=int, help=f"mappings per page {_default(ServerConfig, 'page_limit')}")
    serve.add_argument("--port-file", type=Path, help="write the bound port to this file once listening")

    query = commands.add_parser("query", help="run a query with the smart client", parents=[common])
    _add_client_options(query)
    client = commands.add_parser("client", help="smart client commands")
    client_commands = client.add_subparsers(dest="client_command", metavar="command", parser_class=ArgumentParser)
    _add_client_options(client_commands.add_parser("query", help="same as the top-level query command", parents=[common]))

    explain_cmd = commands.add_parser("explain", help="show logical, classified and physical plans", parents=[common])
    source = explain_cmd.add_mutually_exclusive_group(required=True)
    source.add_argument("--file", type=Path, help="file holding the SPARQL query")
    source.add_argument("--query", help="SPARQL query text")
    explain_cmd.add_argument("--data", type=Path, help="N-Triples file used to build physical plans")

    bench_cmd = commands.add_parser("bench", help="workload generation and benchmarks")
    bench_commands = bench_cmd.add_subparsers(dest="bench_command", metavar="command", parser_class=ArgumentParser)
    generate = bench_commands.add_parser("generate", help="write dataset, queries and manifest", parents=[common])
    generate.add_argument("--spec", type=Path, required=True, help="workload spec (JSON)")
    generate.add_argument("--out", type=Path, required=True, help="output directory")
    run = bench_commands.add_parser("run", help="run the workload once per quantum", parents=[common])
    run.add_argument("--spec", type=Path, required=True, help="workload spec (JSON)")
    run.add_argument("--quanta", help="comma-separated quanta in ms, 'inf' for FCFS (default: the spec's list)")
    run.add_argument("--report", type=Path, help="write the JSON report here")
    run.add_argument("--csv", type=Path, help="write per-query rows as CSV here")
    run.add_argument("--out", type=Path, help="keep the generated workload and server logs here")
    run.add_argument("--queue-size", type=int, help=f"server queue size {_default(BenchConfig, 'queue_size')}")
    run.add_argument("--page-limit", type=int, help=f"server page limit {_default(BenchConfig, 'page_limit')}")
    run.add_argument("--startup-timeout", type=float, help=f"seconds to wait for each server {_default(BenchConfig, 'startup_timeout')}")
    return parser


# ---------------------------------------------------------------------------
# Output


def write_bindings(out: TextIO, variables: List[str], rows, fmt: str) -> int:
    count = 0
    if fmt == "json":
        bindings = []
        for row in rows:
            bindings.append({v: term_to_json(row[v]) for v in variables if v in row})
            count += 1
        json.dump({"head": {"vars": variables}, "results": {"bindings": bindings}}, out, indent=2)
        out.write("\n")
        return count
    out.write("\t".join(f"?{v}" for v in variables) + "\n")
    for row in rows:
        out.write("\t".join(to_ntriples(row[v]) if v in row else "" for v in variables) + "\n")
        count += 1
    out.flush()
    return count


def _read_query(args) -> str:
    if args.query is not None:
        return args.query
    try:
        return args.file.read_text(encoding="utf-8")
    except OSError as e:
        raise PreemptQLError(f"cannot read {args.file}: {e.strerror or e}") from None


def _load_store(path: Path) -> TripleStore:
    try:
        return load_ntriples(path)
    except OSError as e:
        raise PreemptQLError(f"cannot read {path}: {e.strerror or e}") from None


def _overrides(args, names: List[str]) -> Dict[str, Any]:
    return {name: getattr(args, name, None) for name in names}


# ---------------------------------------------------------------------------
# Commands


def cmd_store_info(args, settings: GlobalConfig, file_data) -> int:
    store = _load_store(args.data)
    info = {"triples": len(store), "fingerprint": store.fingerprint.hex(), "checksums": store.checksums}
    if settings.format == "json":
        print(json.dumps(info, indent=2))
    else:
        print(f"triples\t{info['triples']}")
        print(f"fingerprint\t{info['fingerprint']}")
        for index_id, checksum in info["checksums"].items():
            print(f"checksum.{index_id}\t{checksum}")
    return EXIT_OK


def cmd_serve(args, settings: GlobalConfig, file_data) -> int:
    config = layered(
        ServerConfig,
        file_data.get("server", {}),
        _overrides(args, ["data", "host", "port", "quantum_ms", "workers", "queue_size", "page_limit"]),
    )
    run_server(config, port_file=args.port_file)
    return EXIT_OK


def cmd_query(args, settings: GlobalConfig, file_data) -> int:
    config = layered(
        ClientConfig,
        file_data.get("client", {}),
        _overrides(args, ["endpoint", "optional_strategy", "block_size", "max_retries", "timeout", "latency_ms"]),
    )
    client = SmartClient(config)
    try:
        stream = client.execute(_read_query(args))
        count = write_bindings(sys.stdout, stream.variables, stream, settings.format)
    finally:
        client.close()
    logger.info("%d results, %d requests", count, stream.stats.http_requests)
    if args.stats_json is not None:
        args.stats_json.write_text(json.dumps(stream.stats.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_explain(args, settings: GlobalConfig, file_data) -> int:
    plan = parse(_read_query(args))
    classified = classify(plan)
    print("logical plan:")
    print(pretty(plan, 1))
    print("classified plan:")
    print(pretty(classified, 1))
    if args.data is not None:
        store = _load_store(args.data)
        for n, subquery in enumerate(server_subqueries(classified), 1):
            print(f"physical plan of server subquery {n}:")
            print(explain(build_plan(subquery, store), 1))
    return EXIT_OK


def cmd_bench_generate(args, settings: GlobalConfig, file_data) -> int:
    spec = workload.WorkloadSpec.load(args.spec)
    result = workload.generate(spec, args.out)
    print(f"dataset\t{result.dataset}")
    print(f"queries\t{len(result.queries)}")
    return EXIT_OK


def cmd_bench_run(args, settings: GlobalConfig, file_data) -> int:
    spec = workload.WorkloadSpec.load(args.spec)
    config = layered(
        BenchConfig,
        file_data.get("bench", {}),
        _overrides(args, ["quanta", "queue_size", "page_limit", "startup_timeout"]),
    )
    report = bench.run(spec, config, report_path=args.report, csv_path=args.csv, out_dir=args.out, console=Console())
    failed = sum(run["errors"] for run in report["runs"])
    if failed:
        logger.error("%d queries failed", failed)
        return EXIT_USER
    return EXIT_OK


def _handler(args, parser: ArgumentParser):
    command = args.command
    if command == "store" and args.store_command == "info":
        return cmd_store_info
    if command == "serve":
        return cmd_serve
    if command == "query" or (command == "client" and args.client_command == "query"):
        return cmd_query
    if command == "explain":
        return cmd_explain
    if command == "bench" and args.bench_command == "generate":
        return cmd_bench_generate
    if command == "bench" and args.bench_command == "run":
        return cmd_bench_run
    raise UsageError(f"missing or unknown command\n{parser.format_usage().strip()}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = _handler(args, parser)
    except UsageError as e:
        print(f"USAGE: {e}", file=sys.stderr)
        return EXIT_USER
    try:
        file_data = load_config_file(args.config)
        settings = global_config(file_data, args.log_level, args.format, args.config)
        setup_logging(settings.log_level)
        return handler(args, settings, file_data)
    except PreemptQLError as e:
        print(f"ERROR: {e.message}", file=sys.stderr)
        return EXIT_USER
    except KeyboardInterrupt:
        return EXIT_USER
    except Exception as e:
        print(f"ERROR: internal error: {e!r}", file=sys.stderr)
        logger.debug("internal error", exc_info=True)
        if logging.getLogger().isEnabledFor(logging.DEBUG):
            stderr_console.print_exception()
        return EXIT_INTERNAL
