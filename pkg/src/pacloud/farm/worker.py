"""Simulated spot workers: polling, building, interruption and hibernation.

A worker polls the queue; on a message it constructs a fresh executor
(never reused across messages), builds for the executor's duration, and
renews the message's visibility every ten seconds. On completion it stores
the artifact, finalizes the build record (preserving an executor's error
text verbatim on failure), and deletes the message. Failures delete the
message too and store nothing.

An interruption gives the worker a notice window: a build that fits inside
it finishes normally, otherwise the worker keeps working until the window
closes and then hibernates with its remaining work preserved. A resumed
worker finishes the same build, but consults the record store before
publishing in case another worker completed the key during hibernation;
first-write-wins on the record and artifact stores makes that race
harmless either way.

Workers are event-driven: a driver advances them with ``step(now)`` and
can ask for the next instant anything is due. A crashed worker simply
stops being driven; its message resurfaces via the visibility timeout.
"""
from __future__ import annotations

import io
import tarfile
from dataclasses import dataclass
from enum import Enum

from ..core import BuildKey
from .queue import RENEWAL_INTERVAL, CompileQueue
from .stores import ArtifactStore, BuildRecordStore

DEFAULT_POLL_INTERVAL = 1.0
DEFAULT_NOTICE_SECONDS = 120.0
DEFAULT_BUILD_SECONDS = 10.0


def build_artifact_tar(key: BuildKey) -> bytes:
    """Deterministic single-file tar payload for a simulated build.

    Entries are paths relative to the client's install root; the bytes are
    identical across runs so stores and caches can be compared exactly.
    """
    member = (
        f"usr/share/pacloud/{key.package.category}/"
        f"{key.package.name}-{key.version}"
    )
    data = (key.canonical() + "\n").encode("utf-8")
    buffer = io.BytesIO()
    with tarfile.open(
        fileobj=buffer, mode="w", format=tarfile.USTAR_FORMAT
    ) as tar:
        info = tarfile.TarInfo(name=member)
        info.size = len(data)
        info.mtime = 0
        info.mode = 0o644
        info.uid = info.gid = 0
        info.uname = info.gname = ""
        tar.addfile(info, io.BytesIO(data))
    return buffer.getvalue()


@dataclass(frozen=True)
class JobProfile:
    """Simulated outcome for one build key: how long, and success or error."""

    duration: float = DEFAULT_BUILD_SECONDS
    error: str | None = None


class ExecutorTable:
    """Per-key build profiles, looked up by canonical key, then by
    package-version, then falling back to a default."""

    def __init__(
        self,
        profiles: dict[str, JobProfile] | None = None,
        default: JobProfile = JobProfile(),
    ):
        self.profiles = dict(profiles or {})
        self.default = default

    def profile_for(self, key: BuildKey) -> JobProfile:
        profile = self.profiles.get(key.canonical())
        if profile is None:
            profile = self.profiles.get(f"{key.package}-{key.version}")
        return profile if profile is not None else self.default


@dataclass(frozen=True)
class ExecutionResult:
    duration: float
    artifact: bytes | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.artifact is not None


class SimulatedExecutor:
    """One-shot executor; reuse across messages is a bug and raises."""

    def __init__(self, table: ExecutorTable, serial: int):
        self.table = table
        self.serial = serial
        self._used = False

    def execute(self, key: BuildKey) -> ExecutionResult:
        if self._used:
            raise RuntimeError(f"executor {self.serial} reused")
        self._used = True
        profile = self.table.profile_for(key)
        if profile.error is not None:
            return ExecutionResult(profile.duration, error=profile.error)
        return ExecutionResult(profile.duration, artifact=build_artifact_tar(key))


class ExecutorFactory:
    """Creates a fresh executor per message and counts the instances."""

    def __init__(self, table: ExecutorTable | None = None):
        self.table = table or ExecutorTable()
        self.created = 0

    def __call__(self) -> SimulatedExecutor:
        self.created += 1
        return SimulatedExecutor(self.table, self.created)


class WorkerMode(Enum):
    IDLE = "idle"
    BUILDING = "building"
    HIBERNATED = "hibernated"
    STOPPED = "stopped"


@dataclass(frozen=True)
class BuildEvent:
    key: str
    started_at: float
    finished_at: float
    status: str  # built | failed | discarded


class Worker:
    def __init__(
        self,
        name: str,
        queue: CompileQueue,
        records: BuildRecordStore,
        artifacts: ArtifactStore,
        executor_factory: ExecutorFactory,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        start_time: float = 0.0,
    ):
        self.name = name
        self.queue = queue
        self.records = records
        self.artifacts = artifacts
        self.executor_factory = executor_factory
        self.poll_interval = poll_interval
        self.mode = WorkerMode.IDLE
        self.next_poll_at = start_time
        self.busy_seconds = 0.0
        self.history: list[BuildEvent] = []
        # in-flight build state
        self._handle: str | None = None
        self._key: BuildKey | None = None
        self._result: ExecutionResult | None = None
        self._started_at = 0.0
        self._segment_started = 0.0
        self._completion_at = 0.0
        self._next_renewal_at = 0.0
        self._hibernate_at: float | None = None
        self._remaining = 0.0
        self._resumed = False
        self._stop_after_build = False

    # --- driving ---

    def next_event_time(self) -> float | None:
        if self.mode is WorkerMode.IDLE:
            return self.next_poll_at
        if self.mode is WorkerMode.BUILDING:
            t = min(self._completion_at, self._next_renewal_at)
            if self._hibernate_at is not None:
                t = min(t, self._hibernate_at)
            return t
        return None

    def step(self, now: float) -> None:
        """Process every event due up to and including ``now``."""
        while True:
            t = self.next_event_time()
            if t is None or t > now:
                return
            self._fire(t)

    def _fire(self, t: float) -> None:
        if self.mode is WorkerMode.IDLE:
            self._poll(t)
            return
        # Building: completion wins ties, then hibernation, then renewal.
        if self._completion_at == t:
            self._complete(t)
        elif self._hibernate_at is not None and self._hibernate_at == t:
            self._hibernate(t)
        else:
            self._renew(t)

    # --- lifecycle events ---

    def _poll(self, t: float) -> None:
        received = self.queue.receive(t)
        if received is None:
            self.next_poll_at = t + self.poll_interval
            return
        message, handle = received
        key = BuildKey.parse(message.body)
        executor = self.executor_factory()
        result = executor.execute(key)
        self.mode = WorkerMode.BUILDING
        self._handle = handle
        self._key = key
        self._result = result
        self._started_at = t
        self._segment_started = t
        self._completion_at = t + result.duration
        self._next_renewal_at = t + RENEWAL_INTERVAL
        self._hibernate_at = None
        self._remaining = result.duration
        self._resumed = False
        self._stop_after_build = False

    def _renew(self, t: float) -> None:
        assert self._handle is not None
        self.queue.renew(self._handle, t)
        self._next_renewal_at = t + RENEWAL_INTERVAL

    def _hibernate(self, t: float) -> None:
        self.busy_seconds += t - self._segment_started
        self._remaining = self._completion_at - t
        self._hibernate_at = None
        self.mode = WorkerMode.HIBERNATED

    def _complete(self, t: float) -> None:
        assert self._key is not None and self._result is not None
        assert self._handle is not None
        self.busy_seconds += t - self._segment_started
        canonical = self._key.canonical()
        record = self.records.get(canonical)
        if self._resumed and record is not None and record.terminal:
            # Someone else finished this key while we were hibernated.
            self.queue.delete(self._handle)
            status = "discarded"
        else:
            if self._result.ok:
                assert self._result.artifact is not None
                url = self.artifacts.put(self._key, self._result.artifact)
                self.records.finalize_built(canonical, url, t)
                status = "built"
            else:
                assert self._result.error is not None
                self.records.finalize_failed(canonical, self._result.error, t)
                status = "failed"
            self.queue.delete(self._handle)
        self.history.append(BuildEvent(canonical, self._started_at, t, status))
        self._clear_build()
        if self._stop_after_build:
            self.mode = WorkerMode.STOPPED
        else:
            self.mode = WorkerMode.IDLE
            self.next_poll_at = t

    def _clear_build(self) -> None:
        self._handle = None
        self._key = None
        self._result = None
        self._hibernate_at = None
        self._resumed = False

    # --- external events ---

    @property
    def reclaiming(self) -> bool:
        """A reclamation notice is pending on the current build."""
        return self._stop_after_build or self._hibernate_at is not None

    def interrupt(self, now: float, notice: float = DEFAULT_NOTICE_SECONDS) -> None:
        """Reclamation notice with a grace window.

        An idle worker just stops polling. A building worker finishes
        normally if the remaining work fits inside the notice, otherwise
        it hibernates when the notice runs out. A second notice while one
        is pending does not extend the deadline.
        """
        if self.mode is WorkerMode.IDLE:
            self.mode = WorkerMode.STOPPED
        elif self.mode is WorkerMode.BUILDING and not self.reclaiming:
            remaining = self._completion_at - now
            if remaining <= notice:
                self._stop_after_build = True
            else:
                self._hibernate_at = now + notice

    def resume(self, now: float) -> None:
        """Continue a hibernated build from its preserved remaining work."""
        if self.mode is not WorkerMode.HIBERNATED:
            raise ValueError(f"worker {self.name} is not hibernated")
        self.mode = WorkerMode.BUILDING
        self._segment_started = now
        self._completion_at = now + self._remaining
        self._next_renewal_at = now + RENEWAL_INTERVAL
        self._resumed = True
        assert self._handle is not None
        # Best effort: the handle is usually stale after a long hibernation.
        self.queue.renew(self._handle, now)

    def crash(self) -> None:
        """Vanish without cleanup; the in-flight message will resurface."""
        self.mode = WorkerMode.STOPPED
