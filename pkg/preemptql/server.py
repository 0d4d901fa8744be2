"""HTTP front end: POST /sparql runs one quantum of a query, GET /healthz reports the dataset."""

import asyncio
import contextlib
import json
import logging
import socket
from pathlib import Path
from typing import Optional

import uvicorn
from starlette.applications import Starlette
from starlette.requests import Request
from starlette.responses import JSONResponse
from starlette.routing import Route

from .config import ServerConfig
from .engine import Engine, Page, quantum_to_ns
from .errors import (
    FragmentViolationError,
    IncompatiblePlanVersionError,
    OverloadError,
    PlanDecodeError,
    PreemptQLError,
    QuerySyntaxError,
    StalePlanError,
    StalePositionError,
    UnsupportedFeatureError,
)
from .scheduler import QueryJob, WorkerPool
from .store import TripleStore, load_ntriples
from .wire import decode_plan, error_to_json, page_to_json

logger = logging.getLogger(__name__)

RETRY_AFTER_SECONDS = 1

_CLIENT_ERRORS = (QuerySyntaxError, UnsupportedFeatureError, FragmentViolationError)
_CONFLICTS = (StalePlanError, StalePositionError, PlanDecodeError, IncompatiblePlanVersionError)


class BadRequest(PreemptQLError):
    kind = "bad_request"


def status_for(error: PreemptQLError) -> int:
    if isinstance(error, (BadRequest,) + _CLIENT_ERRORS):
        return 400
    if isinstance(error, _CONFLICTS):
        return 409
    if isinstance(error, OverloadError):
        return 503
    return 500


def error_response(error: PreemptQLError) -> JSONResponse:
    status = status_for(error)
    headers = {"Retry-After": str(RETRY_AFTER_SECONDS)} if status == 503 else None
    return JSONResponse(error_to_json(error), status_code=status, headers=headers)


class SageService:
    """Owns the engine and the worker pool behind the HTTP routes."""

    def __init__(self, store: TripleStore, config: ServerConfig):
        self.store = store
        self.config = config
        self.engine = Engine(store, page_limit=config.page_limit)
        self.quantum_ns = quantum_to_ns(config.quantum_ms)
        self.pool = WorkerPool(self.handle_job, config.workers, config.queue_size)

    def handle_job(self, job: QueryJob) -> Page:
        return self.engine.run_page(self.quantum_ns, query=job.query, plan=job.plan)

    async def sparql(self, request: Request) -> JSONResponse:
        try:
            job = await _read_job(request)
            page = await asyncio.wrap_future(self.pool.submit(job))
        except PreemptQLError as e:
            if status_for(e) >= 500:
                logger.warning("rejected job: %s", e.message)
            else:
                logger.debug("job failed: %s", e.message)
            return error_response(e)
        except Exception:
            logger.exception("internal error while running a quantum")
            return JSONResponse({"error": "internal", "message": "internal server error"}, status_code=500)
        return JSONResponse(page_to_json(page.bindings, page.plan, page.stats.to_dict()))

    async def healthz(self, request: Request) -> JSONResponse:
        return JSONResponse(
            {
                "status": "ok",
                "triples": len(self.store),
                "fingerprint": self.store.fingerprint.hex(),
                "quantum_ms": None if self.quantum_ns == float("inf") else self.config.quantum_ms,
                "workers": self.config.workers,
                "pending": self.pool.pending,
            }
        )

    @contextlib.asynccontextmanager
    async def lifespan(self, app):
        self.pool.start()
        logger.info(
            "serving %d triples with %d workers, quantum %s ms",
            len(self.store),
            self.config.workers,
            self.config.quantum_ms,
        )
        try:
            yield
        finally:
            await asyncio.get_running_loop().run_in_executor(None, self.pool.shutdown)
            logger.info("server stopped")


async def _read_job(request: Request) -> QueryJob:
    try:
        body = json.loads(await request.body())
    except (ValueError, UnicodeDecodeError):
        raise BadRequest("request body is not valid JSON") from None
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    query, plan = body.get("query"), body.get("plan")
    if (query is None) == (plan is None):
        raise BadRequest("send exactly one of 'query' or 'plan'")
    if query is not None:
        if not isinstance(query, str):
            raise BadRequest("'query' must be a string")
        return QueryJob(query=query)
    if not isinstance(plan, str):
        raise BadRequest("'plan' must be a base64 string")
    return QueryJob(plan=decode_plan(plan))


def create_app(store: TripleStore, config: ServerConfig) -> Starlette:
    service = SageService(store, config)
    app = Starlette(
        routes=[
            Route("/sparql", service.sparql, methods=["POST"]),
            Route("/healthz", service.healthz, methods=["GET"]),
        ],
        lifespan=service.lifespan,
    )
    app.state.service = service
    return app


def bind_socket(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET6 if ":" in host else socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as e:
        sock.close()
        raise PreemptQLError(f"cannot bind {host}:{port}: {e.strerror or e}") from None
    sock.listen(128)
    sock.set_inheritable(True)
    return sock


def run_server(config: ServerConfig, port_file: Optional[Path] = None) -> None:
    """Serve until interrupted; startup failures raise before anything is served."""
    if config.data is None:
        raise PreemptQLError("no dataset given (use --data)")
    try:
        store = load_ntriples(config.data)
    except OSError as e:
        raise PreemptQLError(f"cannot read {config.data}: {e.strerror or e}") from None
    sock = bind_socket(config.host, config.port)
    host, port = sock.getsockname()[:2]
    logger.info("listening on http://%s:%d", host, port)
    if port_file is not None:
        port_file.write_text(f"{port}\n")
    server = uvicorn.Server(
        uvicorn.Config(create_app(store, config), log_config=None, lifespan="on", access_log=False)
    )
    try:
        server.run(sockets=[sock])
    finally:
        sock.close()
