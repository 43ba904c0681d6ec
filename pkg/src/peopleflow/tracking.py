"""Directional crossing detection: the software flow meter.

Centroids from the pipeline are stitched into tracks by greedy nearest-
neighbor matching, and each track runs through a three-zone state machine
along the row axis (the walking direction): zone A is rows 0-8, MID rows
9-14, zone B rows 15-23 of the 24x24 grid. A track that has committed to
one outer zone fires a signed event when it reaches the opposite outer
zone, and must fully return before it can fire again, so dithering on the
counting line never double-counts. Entries (A to B) are +1, exits are -1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import RejectedInput

ZONE_A = "A"
ZONE_MID = "MID"
ZONE_B = "B"
MID_MIN_ROW = 9.0
MID_MAX_ROW = 15.0  # exclusive: rows >= 15 are zone B

D_MAX_CELLS = 6.0
MAX_MISSED_FRAMES = 3
EMIT_QUEUE_LIMIT = 10_000


def zone_of(row: float) -> str:
    if row < MID_MIN_ROW:
        return ZONE_A
    if row >= MID_MAX_ROW:
        return ZONE_B
    return ZONE_MID


@dataclass(frozen=True)
class FlowEvent:
    """A signed, sequence-numbered passage signal from one sensor."""

    sensor_id: str
    event_seq: int
    direction: int  # +1 entry (A->B), -1 exit (B->A)
    timestamp_ms: int


@dataclass
class Track:
    track_id: int
    positions: list = field(default_factory=list)  # (timestamp_ms, row, col)
    zone_history: list = field(default_factory=list)
    missed_frames: int = 0
    crossings_reported: int = 0

    @property
    def last_position(self) -> tuple:
        return self.positions[-1]

    def append(self, timestamp_ms: int, row: float, col: float) -> None:
        if self.positions and timestamp_ms <= self.positions[-1][0]:
            raise RejectedInput("track positions must have strictly increasing timestamps")
        self.positions.append((timestamp_ms, row, col))
        self.zone_history.append(zone_of(row))
        self.missed_frames = 0


def detect_crossings(track: Track) -> list[tuple[int, int]]:
    """All completed transits in ``track`` as (direction, timestamp_ms),
    applying the arm/fire/re-arm hysteresis over its zone history."""
    armed: str | None = None
    out: list[tuple[int, int]] = []
    for idx, zone in enumerate(track.zone_history):
        if zone == ZONE_MID:
            continue
        if armed is None:
            armed = zone
        elif zone != armed:
            out.append((1 if armed == ZONE_A else -1, track.positions[idx][0]))
            armed = zone
    return out


def associate(
    tracks: list[Track],
    centroids: Sequence[tuple[float, float]],
    timestamp_ms: int,
    next_track_id: int,
) -> tuple[list[Track], int]:
    """Greedy nearest-neighbor update, each track and centroid used at most
    once, matches beyond D_MAX_CELLS rejected. Unmatched centroids spawn
    tracks; tracks unmatched for MAX_MISSED_FRAMES consecutive frames are
    retired. Returns the surviving tracks and the next free track id."""
    pairs = []
    for ti, track in enumerate(tracks):
        _, row, col = track.last_position
        for ci, (cr, cc) in enumerate(centroids):
            dist = ((row - cr) ** 2 + (col - cc) ** 2) ** 0.5
            if dist <= D_MAX_CELLS:
                pairs.append((dist, ti, ci))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))

    matched_tracks: set[int] = set()
    matched_centroids: set[int] = set()
    for dist, ti, ci in pairs:
        if ti in matched_tracks or ci in matched_centroids:
            continue
        matched_tracks.add(ti)
        matched_centroids.add(ci)
        tracks[ti].append(timestamp_ms, centroids[ci][0], centroids[ci][1])

    survivors: list[Track] = []
    for ti, track in enumerate(tracks):
        if ti in matched_tracks:
            survivors.append(track)
            continue
        track.missed_frames += 1
        if track.missed_frames < MAX_MISSED_FRAMES:
            survivors.append(track)

    for ci, (cr, cc) in enumerate(centroids):
        if ci in matched_centroids:
            continue
        track = Track(track_id=next_track_id)
        next_track_id += 1
        track.append(timestamp_ms, cr, cc)
        survivors.append(track)
    return survivors, next_track_id


@dataclass
class FlowMeterDiagnostics:
    events_emitted: int = 0
    events_dropped_oldest: int = 0


class FlowMeter:
    """Tracker plus event emitter for one sensor."""

    def __init__(self, sensor_id: str, queue_limit: int = EMIT_QUEUE_LIMIT) -> None:
        self.sensor_id = sensor_id
        self.tracks: list[Track] = []
        self.queue: deque[FlowEvent] = deque()
        self.queue_limit = queue_limit
        self.diagnostics = FlowMeterDiagnostics()
        self._next_track_id = 1
        self._next_event_seq = 1

    def step(self, centroids: Sequence[tuple[float, float]], timestamp_ms: int) -> list[FlowEvent]:
        """Feed one frame's centroids; returns the events it completed."""
        self.tracks, self._next_track_id = associate(
            self.tracks, centroids, timestamp_ms, self._next_track_id
        )
        emitted: list[FlowEvent] = []
        for track in self.tracks:
            crossings = detect_crossings(track)
            for direction, ts in crossings[track.crossings_reported:]:
                emitted.append(self._emit(direction, ts))
            track.crossings_reported = len(crossings)
        return emitted

    def _emit(self, direction: int, timestamp_ms: int) -> FlowEvent:
        event = FlowEvent(self.sensor_id, self._next_event_seq, direction, timestamp_ms)
        self._next_event_seq += 1
        if len(self.queue) >= self.queue_limit:
            self.queue.popleft()
            self.diagnostics.events_dropped_oldest += 1
        self.queue.append(event)
        self.diagnostics.events_emitted += 1
        return event

    def drain(self) -> list[FlowEvent]:
        out = list(self.queue)
        self.queue.clear()
        return out


def format_event_line(event: FlowEvent) -> str:
    return f"{event.sensor_id} {event.event_seq} {event.direction} {event.timestamp_ms}"


def parse_event_line(line: str) -> FlowEvent:
    tokens = line.split()
    if len(tokens) != 4:
        raise RejectedInput(f"event line has {len(tokens)} tokens, expected 4")
    direction = int(tokens[2])
    if direction not in (1, -1):
        raise RejectedInput("event direction must be +1 or -1")
    return FlowEvent(tokens[0], int(tokens[1]), direction, int(tokens[3]))


def write_event_log(events: Iterable[FlowEvent], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(format_event_line(event) + "\n")
            count += 1
    return count


def read_event_log(path: str | Path) -> Iterator[FlowEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_event_line(line)
