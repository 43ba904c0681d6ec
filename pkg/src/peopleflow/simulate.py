"""Deterministic synthetic scene generator.

Stands in for the physical sensor: people are isotropic Gaussian warm
blobs walking across the 8x8 footprint along the row axis, plus seeded
per-cell Gaussian noise, quantized exactly like the real sensor. Every
rendered frame comes with ground truth (true blob centers in 24x24
coordinates and the scripted crossing events), so detector claims can be
checked against construction rather than against other code.

The footprint geometry: one source cell edge is taken as 0.25 m at the
nominal 2 m mounting height, so a 1.2 m/s walker moves 4.8 source cells
per second. Walkers enter off-grid at source row -2 and leave past row 9.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigurationError
from .frames import GRID_SIZE, ThermalFrame, quantize_c
from .interpolate import UPSCALE

CELL_METERS = 0.25
ROW_LOW = -2.0  # off-grid start on the A side (source coordinates)
ROW_HIGH = 9.0  # off-grid end on the B side
# Zone boundaries of the tracker, converted to source coordinates.
ROW_ENTER_B = 14.0 / 3.0
ROW_ENTER_A = 8.0 / 3.0

PATH_KINDS = ("in", "out", "loiter")


def to_upscaled(source_coord: float) -> float:
    """Map a source-grid coordinate to the 24x24 working grid."""
    return UPSCALE * source_coord + 1.0


@dataclass(frozen=True)
class PersonScript:
    """One scripted walker."""

    kind: str  # "in" (A->B), "out" (B->A), or "loiter"
    enter_time_s: float
    speed_mps: float = 1.2
    column: float = 3.5  # source-grid column of the walking lane
    body_excess_c: float = 8.0
    blob_sigma_cells: float = 0.9
    turn_row: float = 3.5  # loiter only: where the walker stops and turns
    dwell_s: float = 5.0  # loiter only: how long they linger

    def __post_init__(self) -> None:
        if self.kind not in PATH_KINDS:
            raise ConfigurationError(f"unknown path kind {self.kind!r}")
        if self.speed_mps <= 0 or self.body_excess_c <= 0 or self.blob_sigma_cells <= 0:
            raise ConfigurationError("speed, body excess and blob sigma must be positive")
        if self.kind == "loiter" and not (ROW_LOW < self.turn_row < ROW_ENTER_B):
            raise ConfigurationError("loiter turn_row must stay short of the far zone")

    @property
    def cells_per_s(self) -> float:
        return self.speed_mps / CELL_METERS

    @property
    def duration_s(self) -> float:
        if self.kind == "loiter":
            walk = (self.turn_row - ROW_LOW) / self.cells_per_s
            return 2.0 * walk + self.dwell_s
        return (ROW_HIGH - ROW_LOW) / self.cells_per_s

    def position_at(self, t_s: float) -> tuple[float, float] | None:
        """Source-grid (row, col) at scenario time ``t_s``, or None when the
        walker is not in the scene."""
        rel = t_s - self.enter_time_s
        if rel < 0 or rel > self.duration_s:
            return None
        if self.kind == "in":
            return (ROW_LOW + self.cells_per_s * rel, self.column)
        if self.kind == "out":
            return (ROW_HIGH - self.cells_per_s * rel, self.column)
        walk = (self.turn_row - ROW_LOW) / self.cells_per_s
        if rel <= walk:
            return (ROW_LOW + self.cells_per_s * rel, self.column)
        if rel <= walk + self.dwell_s:
            return (self.turn_row, self.column)
        return (self.turn_row - self.cells_per_s * (rel - walk - self.dwell_s), self.column)


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration_s: float
    persons: tuple = ()
    ambient_c: float = 21.0
    fps: float = 10.0
    noise_sigma_c: float = 0.3
    sensor_id: str = "sensor-1"
    start_ms: int = 0

    def __post_init__(self) -> None:
        if self.fps <= 0 or self.duration_s <= 0:
            raise ConfigurationError("fps and duration_s must be positive")
        if self.noise_sigma_c < 0:
            raise ConfigurationError("noise_sigma_c must be non-negative")
        object.__setattr__(self, "persons", tuple(self.persons))
        for person in self.persons:
            if not 0 <= person.enter_time_s < self.duration_s:
                raise ConfigurationError("person enter_time_s outside scenario duration")

    @property
    def frame_count(self) -> int:
        return int(round(self.duration_s * self.fps))


@dataclass(frozen=True)
class TrueEvent:
    person_id: str
    direction: int
    time_ms: int


@dataclass(frozen=True)
class FrameTruth:
    frame_index: int
    timestamp_ms: int
    # (person_id, row, col) in 24x24 coordinates for walkers whose blob
    # center is within half a source cell of the footprint.
    centers: tuple


def true_events(scenario: Scenario) -> list[TrueEvent]:
    """The scripted crossings, by construction of the paths."""
    events = []
    for idx, person in enumerate(scenario.persons):
        pid = f"p{idx}"
        if person.kind == "in":
            offset = (ROW_ENTER_B - ROW_LOW) / person.cells_per_s
            events.append(TrueEvent(pid, +1, scenario.start_ms + round((person.enter_time_s + offset) * 1000)))
        elif person.kind == "out":
            offset = (ROW_HIGH - ROW_ENTER_A) / person.cells_per_s
            events.append(TrueEvent(pid, -1, scenario.start_ms + round((person.enter_time_s + offset) * 1000)))
    events.sort(key=lambda e: (e.time_ms, e.person_id))
    return events


def render(scenario: Scenario) -> Iterator[tuple[ThermalFrame, FrameTruth]]:
    """Yield (frame, truth) pairs. Identical scenario values give a byte-
    identical stream."""
    rng = np.random.default_rng(scenario.seed)
    ii, jj = np.mgrid[0:GRID_SIZE, 0:GRID_SIZE].astype(np.float64)
    for k in range(scenario.frame_count):
        t_s = k / scenario.fps
        cells = np.full((GRID_SIZE, GRID_SIZE), scenario.ambient_c, dtype=np.float64)
        centers = []
        for idx, person in enumerate(scenario.persons):
            pos = person.position_at(t_s)
            if pos is None:
                continue
            row, col = pos
            two_sigma_sq = 2.0 * person.blob_sigma_cells**2
            cells += person.body_excess_c * np.exp(
                -(((ii - row) ** 2 + (jj - col) ** 2) / two_sigma_sq)
            )
            if -0.5 <= row <= GRID_SIZE - 0.5:
                centers.append((f"p{idx}", to_upscaled(row), to_upscaled(col)))
        noise = rng.standard_normal((GRID_SIZE, GRID_SIZE))
        cells = quantize_c(cells + scenario.noise_sigma_c * noise)
        timestamp_ms = scenario.start_ms + round(k * 1000.0 / scenario.fps)
        frame = ThermalFrame(scenario.sensor_id, seq=k + 1, timestamp_ms=timestamp_ms, cells=cells)
        yield frame, FrameTruth(frame_index=k, timestamp_ms=timestamp_ms, centers=tuple(centers))


def make_test_day(
    passes: int,
    seed: int,
    *,
    duration_s: float = 300.0,
    fps: float = 10.0,
    ambient_c: float = 21.0,
    noise_sigma_c: float = 0.3,
    min_gap_s: float = 4.0,
    sensor_id: str = "sensor-1",
    start_ms: int = 0,
) -> Scenario:
    """A balanced day: half entries, half exits, spread over the day with a
    refractory gap so walkers do not share the doorway. Odd pass counts
    round up to the next balanced even count, so every day closes at zero
    true occupancy and running occupancy never goes negative."""
    if passes < 0:
        raise ConfigurationError("passes must be non-negative")
    total = passes if passes % 2 == 0 else passes + 1
    rng = np.random.default_rng(seed)
    persons: list[PersonScript] = []
    if total:
        lo, hi = 1.0, duration_s - 5.0
        slack = (hi - lo) - (total - 1) * min_gap_s
        if slack <= 0:
            raise ConfigurationError("day too short for the requested pass count")
        offsets = np.sort(rng.uniform(0.0, slack, size=total))
        times = [lo + i * min_gap_s + float(offsets[i]) for i in range(total)]

        directions = [1] * (total // 2) + [-1] * (total // 2)
        rng.shuffle(directions)
        # Ballot fix: an exit can never precede the entry that covers it.
        running = 0
        for i in range(total):
            if running + directions[i] < 0:
                j = next(k for k in range(i + 1, total) if directions[k] == 1)
                directions[i], directions[j] = directions[j], directions[i]
            running += directions[i]

        for time_s, direction in zip(times, directions):
            persons.append(
                PersonScript(
                    kind="in" if direction == 1 else "out",
                    enter_time_s=time_s,
                    speed_mps=float(rng.uniform(1.0, 1.4)),
                    column=float(rng.uniform(2.0, 5.0)),
                )
            )
    return Scenario(
        seed=seed,
        duration_s=duration_s,
        persons=tuple(persons),
        ambient_c=ambient_c,
        fps=fps,
        noise_sigma_c=noise_sigma_c,
        sensor_id=sensor_id,
        start_ms=start_ms,
    )


# Scenario files: plain key-value lines plus one "person" line per walker.

_SCALAR_KEYS = {
    "seed": int,
    "duration_s": float,
    "ambient_c": float,
    "fps": float,
    "noise_sigma_c": float,
    "sensor_id": str,
    "start_ms": int,
}
_PERSON_KEYS = {
    "kind": str,
    "enter_time_s": float,
    "speed_mps": float,
    "column": float,
    "body_excess_c": float,
    "blob_sigma_cells": float,
    "turn_row": float,
    "dwell_s": float,
}


def write_scenario(scenario: Scenario, path: str | Path) -> None:
    lines = [
        f"seed {scenario.seed}",
        f"sensor_id {scenario.sensor_id}",
        f"duration_s {scenario.duration_s!r}",
        f"ambient_c {scenario.ambient_c!r}",
        f"fps {scenario.fps!r}",
        f"noise_sigma_c {scenario.noise_sigma_c!r}",
        f"start_ms {scenario.start_ms}",
    ]
    for person in scenario.persons:
        fields = [
            f"kind={person.kind}",
            f"enter_time_s={person.enter_time_s!r}",
            f"speed_mps={person.speed_mps!r}",
            f"column={person.column!r}",
            f"body_excess_c={person.body_excess_c!r}",
            f"blob_sigma_cells={person.blob_sigma_cells!r}",
        ]
        if person.kind == "loiter":
            fields += [f"turn_row={person.turn_row!r}", f"dwell_s={person.dwell_s!r}"]
        lines.append("person " + " ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scenario(path: str | Path) -> Scenario:
    scalars: dict = {}
    persons: list[PersonScript] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "person":
            kwargs: dict = {}
            for token in rest.split():
                name, _, value = token.partition("=")
                if name not in _PERSON_KEYS:
                    raise ConfigurationError(f"unknown person field {name!r}")
                kwargs[name] = _PERSON_KEYS[name](value)
            persons.append(PersonScript(**kwargs))
        elif key in _SCALAR_KEYS:
            scalars[key] = _SCALAR_KEYS[key](rest.strip())
        else:
            raise ConfigurationError(f"unknown scenario key {key!r}")
    if "seed" not in scalars or "duration_s" not in scalars:
        raise ConfigurationError("scenario file must set seed and duration_s")
    return Scenario(persons=tuple(persons), **scalars)


def write_true_events(events: list[TrueEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(f"{event.person_id} {event.direction} {event.time_ms}\n")
