"""Bounded FIFO job queue served by a fixed pool of worker threads.

A job is admitted only while the number of waiting jobs is below the queue
capacity plus the number of idle workers; otherwise it is rejected with
OverloadError. Workers take jobs strictly in arrival order. A suspended query
comes back as a new job at the tail, which makes the discipline round-robin.
"""

import logging
import threading
import time
from collections import deque
from concurrent.futures import Future
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional

from .errors import OverloadError

logger = logging.getLogger(__name__)


@dataclass
class QueryJob:
    """A fresh query or a saved plan, never both."""

    query: Optional[str] = None
    plan: Optional[bytes] = None
    arrival_ns: int = field(default_factory=time.perf_counter_ns)

    def __post_init__(self):
        if (self.query is None) == (self.plan is None):
            raise ValueError("a job carries exactly one of query or plan")

    @property
    def kind(self) -> str:
        return "query" if self.query is not None else "plan"


@dataclass
class _Entry:
    job: QueryJob
    future: Future


class WorkerPool:
    def __init__(self, handler: Callable[[QueryJob], object], workers: int, capacity: int):
        self._handler = handler
        self._capacity = capacity
        self._queue: Deque[_Entry] = deque()
        self._cond = threading.Condition()
        self._idle = 0
        self._closed = False
        self._threads: List[threading.Thread] = [
            threading.Thread(target=self._work, name=f"worker-{i}", daemon=True)
            for i in range(workers)
        ]
        self.completed = 0

    def start(self) -> None:
        for thread in self._threads:
            thread.start()

    @property
    def pending(self) -> int:
        with self._cond:
            return len(self._queue)

    def submit(self, job: QueryJob) -> Future:
        future: Future = Future()
        with self._cond:
            if self._closed:
                raise OverloadError("server is shutting down")
            if len(self._queue) >= self._capacity + self._idle:
                raise OverloadError()
            self._queue.append(_Entry(job, future))
            self._cond.notify()
        return future

    def _work(self) -> None:
        while True:
            with self._cond:
                self._idle += 1
                while not self._queue and not self._closed:
                    self._cond.wait()
                self._idle -= 1
                if not self._queue:
                    return
                entry = self._queue.popleft()
            if not entry.future.set_running_or_notify_cancel():
                continue
            try:
                entry.future.set_result(self._handler(entry.job))
            except BaseException as e:
                entry.future.set_exception(e)
            with self._cond:
                self.completed += 1

    def shutdown(self, timeout: Optional[float] = None) -> None:
        """Reject new jobs, let queued and running quanta finish, then join the workers."""
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        for thread in self._threads:
            thread.join(timeout)
        logger.debug("worker pool stopped after %d jobs", self.completed)
