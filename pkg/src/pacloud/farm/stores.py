"""The build-record table and the artifact blob store.

Both are first-write-wins: a record moves from pending to exactly one
terminal state, and an artifact's first upload is the one that is kept.
That makes double compilation harmless: a duplicate terminal write or
upload is simply ignored.

When given a directory, both write through to files (records as JSON
documents, artifacts as tars) named by the build key's canonical string
with ``/`` replaced by ``_``.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from pathlib import Path

from ..core import BuildKey

PENDING = "pending"
BUILT = "built"
FAILED = "failed"

ARTIFACT_URL_PREFIX = "store://"


@dataclass
class BuildRecord:
    """Terminal outcome (or pending marker) for one build key."""

    key: str
    status: str
    artifact_url: str | None = None
    error_message: str | None = None
    created_at: float = 0.0
    completed_at: float | None = None

    @property
    def terminal(self) -> bool:
        return self.status != PENDING

    def to_document(self) -> dict:
        doc: dict = {
            "key": self.key,
            "status": self.status,
            "created_at": self.created_at,
        }
        if self.artifact_url is not None:
            doc["artifact_url"] = self.artifact_url
        if self.error_message is not None:
            doc["error_message"] = self.error_message
        if self.completed_at is not None:
            doc["completed_at"] = self.completed_at
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "BuildRecord":
        return cls(
            key=doc["key"],
            status=doc["status"],
            artifact_url=doc.get("artifact_url"),
            error_message=doc.get("error_message"),
            created_at=doc.get("created_at", 0.0),
            completed_at=doc.get("completed_at"),
        )


def _token(canonical: str) -> str:
    return canonical.replace("/", "_")


class BuildRecordStore:
    def __init__(self, persist_dir: str | Path | None = None):
        self._lock = threading.Lock()
        self._records: dict[str, BuildRecord] = {}
        self._persist_dir = Path(persist_dir) if persist_dir else None
        if self._persist_dir and self._persist_dir.is_dir():
            for path in sorted(self._persist_dir.glob("*.json")):
                record = BuildRecord.from_document(
                    json.loads(path.read_text(encoding="utf-8"))
                )
                self._records[record.key] = record

    def get(self, canonical: str) -> BuildRecord | None:
        with self._lock:
            record = self._records.get(canonical)
            return replace(record) if record else None

    def create_pending(self, canonical: str, now: float) -> bool:
        """Create a pending record; False if any record already exists."""
        with self._lock:
            if canonical in self._records:
                return False
            record = BuildRecord(canonical, PENDING, created_at=now)
            self._records[canonical] = record
            self._save(record)
            return True

    def finalize_built(self, canonical: str, url: str, now: float) -> BuildRecord:
        return self._finalize(canonical, BUILT, url, None, now)

    def finalize_failed(
        self, canonical: str, error: str, now: float
    ) -> BuildRecord:
        return self._finalize(canonical, FAILED, None, error, now)

    def _finalize(
        self,
        canonical: str,
        status: str,
        url: str | None,
        error: str | None,
        now: float,
    ) -> BuildRecord:
        with self._lock:
            record = self._records.get(canonical)
            if record is None:
                record = BuildRecord(canonical, PENDING, created_at=now)
                self._records[canonical] = record
            if record.terminal:
                return replace(record)
            record.status = status
            record.artifact_url = url
            record.error_message = error
            record.completed_at = now
            self._save(record)
            return replace(record)

    def pending_keys(self) -> list[str]:
        with self._lock:
            return sorted(
                k for k, r in self._records.items() if r.status == PENDING
            )

    def all_records(self) -> list[BuildRecord]:
        with self._lock:
            return [replace(r) for r in self._records.values()]

    def _save(self, record: BuildRecord) -> None:
        if self._persist_dir is None:
            return
        self._persist_dir.mkdir(parents=True, exist_ok=True)
        path = self._persist_dir / f"{_token(record.key)}.json"
        path.write_text(
            json.dumps(record.to_document(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


class ArtifactStore:
    def __init__(self, persist_dir: str | Path | None = None):
        self._lock = threading.Lock()
        self._blobs: dict[str, bytes] = {}
        self.put_attempts: dict[str, int] = {}
        self._persist_dir = Path(persist_dir) if persist_dir else None
        if self._persist_dir:
            index = self._persist_dir / "index.json"
            if index.is_file():
                # Forward index: file-name tokens are not reversible when a
                # category itself contains '_'.
                for token, canonical in json.loads(
                    index.read_text(encoding="utf-8")
                ).items():
                    blob = self._persist_dir / f"{token}.tar"
                    if blob.is_file():
                        self._blobs[canonical] = blob.read_bytes()

    @staticmethod
    def url_for(key: BuildKey) -> str:
        return f"{ARTIFACT_URL_PREFIX}{key.canonical()}"

    def put(self, key: BuildKey, data: bytes) -> str:
        """Store the artifact; a later write for the same key is a no-op."""
        canonical = key.canonical()
        with self._lock:
            self.put_attempts[canonical] = self.put_attempts.get(canonical, 0) + 1
            if canonical not in self._blobs:
                self._blobs[canonical] = data
                if self._persist_dir is not None:
                    self._persist_dir.mkdir(parents=True, exist_ok=True)
                    path = self._persist_dir / f"{_token(canonical)}.tar"
                    path.write_bytes(data)
                    index = self._persist_dir / "index.json"
                    (index).write_text(
                        json.dumps(
                            {_token(c): c for c in sorted(self._blobs)},
                            indent=2,
                            sort_keys=True,
                        )
                        + "\n",
                        encoding="utf-8",
                    )
            return self.url_for(key)

    def get(self, key: BuildKey) -> bytes | None:
        with self._lock:
            return self._blobs.get(key.canonical())

    def get_by_url(self, url: str) -> bytes | None:
        if not url.startswith(ARTIFACT_URL_PREFIX):
            return None
        with self._lock:
            return self._blobs.get(url[len(ARTIFACT_URL_PREFIX):])

    def stored_keys(self) -> list[str]:
        with self._lock:
            return sorted(self._blobs)
