"""The compile-request queue: at-least-once delivery with visibility timeouts.

A received message turns invisible for fifteen seconds; a builder renews
that window every ten seconds while it works. Undeleted messages resurface
once their window lapses. A message is delivered at most three times: on
its fourth eligibility it moves to the dead-letter queue instead, where a
maintenance listing can inspect it.

Receive handles go stale as soon as the message is redelivered elsewhere
(or dead-lettered); renewing or deleting through a stale handle is a no-op
that reports the staleness.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

VISIBILITY_TIMEOUT = 15.0
RENEWAL_INTERVAL = 10.0
MAX_DELIVERIES = 3


@dataclass
class _Message:
    id: str
    body: str
    visible_at: float
    receive_count: int = 0


@dataclass(frozen=True)
class ReceivedMessage:
    id: str
    body: str
    receive_count: int


class CompileQueue:
    """FIFO queue of build-key bodies, optionally persisted to a JSON file."""

    def __init__(self, persist_path: str | Path | None = None):
        self._lock = threading.Lock()
        self._messages: list[_Message] = []
        self._dead: list[_Message] = []
        self._handles: dict[str, str] = {}  # handle -> message id
        self._current_handle: dict[str, str] = {}  # message id -> handle
        self._seq = 0
        self._persist_path = Path(persist_path) if persist_path else None
        if self._persist_path and self._persist_path.is_file():
            self._load()

    def send(self, body: str, now: float) -> str:
        with self._lock:
            self._seq += 1
            message = _Message(id=f"m{self._seq}", body=body, visible_at=now)
            self._messages.append(message)
            self._save()
            return message.id

    def receive(self, now: float) -> tuple[ReceivedMessage, str] | None:
        """Deliver the oldest eligible message, claiming it atomically.

        Messages that already used up their deliveries are dead-lettered
        as they are encountered instead of being returned.
        """
        with self._lock:
            changed = False
            i = 0
            result = None
            while i < len(self._messages):
                message = self._messages[i]
                if now < message.visible_at:
                    i += 1
                    continue
                if message.receive_count >= MAX_DELIVERIES:
                    self._messages.pop(i)
                    self._invalidate(message.id)
                    self._dead.append(message)
                    changed = True
                    continue
                message.receive_count += 1
                message.visible_at = now + VISIBILITY_TIMEOUT
                self._invalidate(message.id)
                self._seq += 1
                handle = f"h{self._seq}"
                self._handles[handle] = message.id
                self._current_handle[message.id] = handle
                result = (
                    ReceivedMessage(
                        message.id, message.body, message.receive_count
                    ),
                    handle,
                )
                changed = True
                break
            if changed:
                self._save()
            return result

    def renew(self, handle: str, now: float) -> bool:
        """Extend the visibility window; False if the handle went stale."""
        with self._lock:
            message = self._message_for(handle)
            if message is None:
                return False
            message.visible_at = now + VISIBILITY_TIMEOUT
            self._save()
            return True

    def delete(self, handle: str) -> bool:
        """Remove the message permanently; False if the handle went stale."""
        with self._lock:
            message = self._message_for(handle)
            if message is None:
                return False
            self._messages.remove(message)
            self._invalidate(message.id)
            self._save()
            return True

    def depth(self) -> int:
        with self._lock:
            return len(self._messages)

    def dead_letters(self) -> list[ReceivedMessage]:
        with self._lock:
            return [
                ReceivedMessage(m.id, m.body, m.receive_count)
                for m in self._dead
            ]

    # --- internals ---

    def _message_for(self, handle: str) -> _Message | None:
        message_id = self._handles.get(handle)
        if message_id is None or self._current_handle.get(message_id) != handle:
            return None
        for message in self._messages:
            if message.id == message_id:
                return message
        return None

    def _invalidate(self, message_id: str) -> None:
        handle = self._current_handle.pop(message_id, None)
        if handle is not None:
            self._handles.pop(handle, None)

    def _save(self) -> None:
        if self._persist_path is None:
            return
        doc = {
            "seq": self._seq,
            "messages": [vars(m) for m in self._messages],
            "dead_letters": [vars(m) for m in self._dead],
        }
        self._persist_path.parent.mkdir(parents=True, exist_ok=True)
        self._persist_path.write_text(
            json.dumps(doc, indent=2) + "\n", encoding="utf-8"
        )

    def _load(self) -> None:
        doc = json.loads(self._persist_path.read_text(encoding="utf-8"))
        self._seq = doc["seq"]
        self._messages = [_Message(**m) for m in doc["messages"]]
        self._dead = [_Message(**m) for m in doc["dead_letters"]]
