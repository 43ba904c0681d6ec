"""Durable occupancy records: append-only journal plus periodic snapshots.

Journal lines are one applied event each:

    location_id sensor_id event_seq direction timestamp_ms

Snapshot lines are one location each:

    location_id occupancy as_of_ms

The journal is never truncated at this deployment's scale, so a full
replay reconstructs the exact accounting state including per-sensor
deduplication; snapshots give a fast consistency reference and would seed
recovery if journal rotation were ever added.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import RejectedInput


@dataclass(frozen=True)
class JournalEntry:
    location_id: str
    sensor_id: str
    event_seq: int
    direction: int
    timestamp_ms: int


def format_entry(entry: JournalEntry) -> str:
    return (
        f"{entry.location_id} {entry.sensor_id} {entry.event_seq} "
        f"{entry.direction} {entry.timestamp_ms}"
    )


def parse_entry(line: str) -> JournalEntry:
    tokens = line.split()
    if len(tokens) != 5:
        raise RejectedInput(f"journal line has {len(tokens)} tokens, expected 5")
    direction = int(tokens[3])
    if direction not in (1, -1):
        raise RejectedInput("journal direction must be +1 or -1")
    return JournalEntry(tokens[0], tokens[1], int(tokens[2]), direction, int(tokens[4]))


class EventJournal:
    """Append-only writer. Appends are flushed before returning so an event
    acknowledged upstream is already on disk."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()

    def append(self, entry: JournalEntry) -> None:
        with self._lock:
            self._fh.write(format_entry(entry) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.close()


def read_journal(path: str | Path) -> Iterator[JournalEntry]:
    path = Path(path)
    if not path.exists():
        return
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_entry(line)


def write_snapshot(path: str | Path, rows: dict[str, tuple[int, int]]) -> None:
    """Atomically write {location_id: (occupancy, as_of_ms)}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for location_id in sorted(rows):
            occupancy, as_of_ms = rows[location_id]
            fh.write(f"{location_id} {occupancy} {as_of_ms}\n")
    os.replace(tmp, path)


def read_snapshot(path: str | Path) -> dict[str, tuple[int, int]]:
    path = Path(path)
    rows: dict[str, tuple[int, int]] = {}
    if not path.exists():
        return rows
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise RejectedInput(f"snapshot line has {len(tokens)} tokens, expected 3")
        rows[tokens[0]] = (int(tokens[1]), int(tokens[2]))
    return rows


class JournalReader:
    """Incremental tail reader used by the registry for read-your-writes
    occupancy queries against the broker's journal file."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._offset = 0
        self._partial = ""

    def poll(self) -> list[JournalEntry]:
        if not self.path.exists():
            return []
        entries: list[JournalEntry] = []
        with open(self.path, "r", encoding="utf-8") as fh:
            fh.seek(self._offset)
            data = fh.read()
            self._offset = fh.tell()
        data = self._partial + data
        lines = data.split("\n")
        self._partial = lines.pop()  # incomplete trailing line, if any
        for line in lines:
            if line.strip():
                entries.append(parse_entry(line))
        return entries
