"""The desk-scale build farm: queue, stores, workers and request service.

``BuildFarm`` wires the pieces together over one clock and drives the
workers event by event, which keeps every run bit-reproducible under a
virtual clock. Given a root directory the queue, record store and
artifact store persist as files beneath it; the same directory doubles as
the package store surface the client syncs from and downloads artifacts
out of.
"""
from __future__ import annotations

import threading
from pathlib import Path

from .clock import Clock, VirtualClock, WallClock
from .commands import generate_emerge_commands
from .queue import (
    MAX_DELIVERIES,
    RENEWAL_INTERVAL,
    VISIBILITY_TIMEOUT,
    CompileQueue,
    ReceivedMessage,
)
from .service import FarmServer, RequestService
from .stores import (
    BUILT,
    FAILED,
    PENDING,
    ArtifactStore,
    BuildRecord,
    BuildRecordStore,
)
from .worker import (
    BuildEvent,
    ExecutionResult,
    ExecutorFactory,
    ExecutorTable,
    JobProfile,
    SimulatedExecutor,
    Worker,
    WorkerMode,
    build_artifact_tar,
)

__all__ = [
    "ArtifactStore",
    "BuildEvent",
    "BuildFarm",
    "BuildRecord",
    "BuildRecordStore",
    "BUILT",
    "Clock",
    "CompileQueue",
    "ExecutionResult",
    "ExecutorFactory",
    "ExecutorTable",
    "FAILED",
    "FarmServer",
    "JobProfile",
    "MAX_DELIVERIES",
    "PENDING",
    "ReceivedMessage",
    "RENEWAL_INTERVAL",
    "RequestService",
    "SimulatedExecutor",
    "VirtualClock",
    "VISIBILITY_TIMEOUT",
    "WallClock",
    "Worker",
    "WorkerMode",
    "build_artifact_tar",
    "generate_emerge_commands",
]


class BuildFarm:
    def __init__(
        self,
        clock: Clock | None = None,
        root: str | Path | None = None,
        executor_table: ExecutorTable | None = None,
        num_workers: int = 1,
        worker_poll_interval: float = 1.0,
    ):
        self.clock = clock or VirtualClock()
        self.root = Path(root) if root else None
        queue_path = self.root / "queue.json" if self.root else None
        records_dir = self.root / "records" if self.root else None
        artifacts_dir = self.root / "artifacts" if self.root else None
        self.queue = CompileQueue(queue_path)
        self.records = BuildRecordStore(records_dir)
        self.artifacts = ArtifactStore(artifacts_dir)
        self.executor_factory = ExecutorFactory(executor_table)
        start = self.clock.now()
        self.workers = [
            Worker(
                f"worker{i}",
                self.queue,
                self.records,
                self.artifacts,
                self.executor_factory,
                poll_interval=worker_poll_interval,
                start_time=start,
            )
            for i in range(num_workers)
        ]
        self.service = RequestService(self.records, self.queue, self.clock)
        self._server: FarmServer | None = None
        self._pump_stop: threading.Event | None = None
        self._pump_thread: threading.Thread | None = None

    # --- service mode ---

    def start_service(
        self, host: str = "127.0.0.1", port: int = 0, pump_interval: float = 0.02
    ) -> FarmServer:
        """Serve the wire protocol and keep the workers polling.

        Service mode is meant for a wall clock: workers are stepped from a
        background thread at the pump interval until stop_service().
        """
        self._server = FarmServer(self.service, host, port).start()
        self._pump_stop = threading.Event()

        def pump() -> None:
            while not self._pump_stop.is_set():
                for worker in self.workers:
                    worker.step(self.clock.now())
                self._pump_stop.wait(pump_interval)

        self._pump_thread = threading.Thread(target=pump, daemon=True)
        self._pump_thread.start()
        return self._server

    def stop_service(self) -> None:
        if self._pump_stop is not None:
            self._pump_stop.set()
        if self._pump_thread is not None:
            self._pump_thread.join()
            self._pump_thread = None
        if self._server is not None:
            self._server.stop()
            self._server = None

    # --- event-driven simulation ---

    def next_event_time(self) -> float | None:
        times = [
            t
            for t in (w.next_event_time() for w in self.workers)
            if t is not None
        ]
        return min(times) if times else None

    def _step_due(self, t: float) -> None:
        for worker in self.workers:
            due = worker.next_event_time()
            if due is not None and due <= t:
                worker.step(t)

    def advance_to(self, target: float) -> None:
        """Run all worker events up to the target time, then land on it."""
        assert isinstance(self.clock, VirtualClock)
        while True:
            t = self.next_event_time()
            if t is None or t > target:
                break
            if t > self.clock.now():
                self.clock.set_time(t)
            self._step_due(t)
        if target > self.clock.now():
            self.clock.set_time(target)

    def run_until_settled(self, max_time: float) -> None:
        """Run until no record is pending, or progress becomes impossible."""
        assert isinstance(self.clock, VirtualClock)
        while self.records.pending_keys():
            if self.queue.depth() == 0 and not any(
                w.mode in (WorkerMode.BUILDING, WorkerMode.HIBERNATED)
                for w in self.workers
            ):
                break
            t = self.next_event_time()
            if t is None or t > max_time:
                break
            if t > self.clock.now():
                self.clock.set_time(t)
            self._step_due(t)
