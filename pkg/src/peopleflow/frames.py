"""Raw sensor frames and the frame dump file format.

A frame is one 8x8 temperature reading. Cell values are what the sensor
family actually reports: 0.25 degC steps inside 0..80 degC. The dump format
is one frame per line: ``sensor_id seq timestamp_ms`` followed by the 64
cell temperatures in row-major order (67 whitespace-separated tokens).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import RejectedInput

GRID_SIZE = 8
QUANT_STEP_C = 0.25
TEMP_MIN_C = 0.0
TEMP_MAX_C = 80.0
_DUMP_TOKENS = 3 + GRID_SIZE * GRID_SIZE


def quantize_c(values: np.ndarray) -> np.ndarray:
    """Round to the sensor's 0.25 degC step (half-up) and clamp to range."""
    stepped = np.floor(np.asarray(values, dtype=np.float64) / QUANT_STEP_C + 0.5)
    return np.clip(stepped * QUANT_STEP_C, TEMP_MIN_C, TEMP_MAX_C)


@dataclass(frozen=True)
class ThermalFrame:
    """One 8x8 reading with its origin and position in the sensor's stream."""

    sensor_id: str
    seq: int
    timestamp_ms: int
    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.shape != (GRID_SIZE, GRID_SIZE):
            raise RejectedInput(f"expected {GRID_SIZE}x{GRID_SIZE} cells, got shape {cells.shape}")
        if np.any(cells < TEMP_MIN_C) or np.any(cells > TEMP_MAX_C):
            raise RejectedInput("cell temperature outside 0..80 degC")
        steps = cells / QUANT_STEP_C
        if np.any(np.abs(steps - np.round(steps)) > 1e-9):
            raise RejectedInput("cell temperature not a multiple of 0.25 degC")
        if self.seq < 0:
            raise RejectedInput("seq must be non-negative")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)


def format_frame_line(frame: ThermalFrame) -> str:
    temps = " ".join(f"{v:.2f}" for v in frame.cells.ravel())
    return f"{frame.sensor_id} {frame.seq} {frame.timestamp_ms} {temps}"


def parse_frame_line(line: str) -> ThermalFrame:
    tokens = line.split()
    if len(tokens) != _DUMP_TOKENS:
        raise RejectedInput(f"frame line has {len(tokens)} tokens, expected {_DUMP_TOKENS}")
    try:
        seq = int(tokens[1])
        timestamp_ms = int(tokens[2])
        cells = np.array([float(t) for t in tokens[3:]], dtype=np.float64)
    except ValueError as exc:
        raise RejectedInput(f"unparseable frame line: {exc}") from exc
    return ThermalFrame(tokens[0], seq, timestamp_ms, cells.reshape(GRID_SIZE, GRID_SIZE))


def write_frame_dump(frames: Iterable[ThermalFrame], path: str | Path) -> int:
    """Write frames one per line; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for frame in frames:
            fh.write(format_frame_line(frame) + "\n")
            count += 1
    return count


def read_frame_dump(path: str | Path) -> Iterator[ThermalFrame]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_frame_line(line)
