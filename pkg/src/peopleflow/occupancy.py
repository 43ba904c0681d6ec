"""Closed-system occupancy accounting.

Each location's occupancy is the running sum of the signed events applied
to it, floored at zero. An event is identified by (sensor_id, event_seq)
and applied at most once, which turns the at-least-once delivery of the
messaging layer into exactly-once accounting. Deltas for one sensor arrive
in sequence order (the coordinator guarantees wire order), so a sequence
number at or below the last applied one is a duplicate.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .journal import EventJournal, JournalEntry, read_journal


@dataclass
class LocationState:
    occupancy: int = 0
    as_of_ms: int = 0
    anomaly_underflow: int = 0
    last_seq: dict = field(default_factory=dict)  # sensor_id -> event_seq


@dataclass(frozen=True)
class AppliedUpdate:
    location_id: str
    occupancy: int
    as_of_ms: int


class OccupancyStore:
    """Mutations are serialized through one lock, which also realizes the
    one-writer-per-location rule."""

    def __init__(self, journal: EventJournal | None = None) -> None:
        self._lock = threading.RLock()
        self._locations: dict[str, LocationState] = {}
        self._journal = journal
        self.dropped_unknown_location = 0

    def register_location(self, location_id: str) -> None:
        with self._lock:
            self._locations.setdefault(location_id, LocationState())

    def knows(self, location_id: str) -> bool:
        with self._lock:
            return location_id in self._locations

    def locations(self) -> list[str]:
        with self._lock:
            return sorted(self._locations)

    def state(self, location_id: str) -> LocationState | None:
        with self._lock:
            return self._locations.get(location_id)

    def apply(
        self,
        location_id: str,
        sensor_id: str,
        event_seq: int,
        direction: int,
        timestamp_ms: int,
        journal: bool = True,
    ) -> AppliedUpdate | None:
        """Apply one event; returns the new state, or None when the event is
        a duplicate or targets an unknown location."""
        with self._lock:
            state = self._locations.get(location_id)
            if state is None:
                self.dropped_unknown_location += 1
                return None
            if event_seq <= state.last_seq.get(sensor_id, 0):
                return None
            state.last_seq[sensor_id] = event_seq
            if direction < 0 and state.occupancy == 0:
                state.anomaly_underflow += 1
            else:
                state.occupancy += direction
            state.as_of_ms = timestamp_ms
            if journal and self._journal is not None:
                self._journal.append(
                    JournalEntry(location_id, sensor_id, event_seq, direction, timestamp_ms)
                )
            return AppliedUpdate(location_id, state.occupancy, state.as_of_ms)

    def recover(self, journal_path) -> int:
        """Rebuild state by replaying the journal; returns events applied.
        Locations seen in the journal become known automatically."""
        applied = 0
        for entry in read_journal(journal_path):
            self.register_location(entry.location_id)
            if self.apply(
                entry.location_id,
                entry.sensor_id,
                entry.event_seq,
                entry.direction,
                entry.timestamp_ms,
                journal=False,
            ):
                applied += 1
        return applied

    def snapshot_rows(self) -> dict[str, tuple[int, int]]:
        with self._lock:
            return {
                loc: (state.occupancy, state.as_of_ms)
                for loc, state in self._locations.items()
            }
