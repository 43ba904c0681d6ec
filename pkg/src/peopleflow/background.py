"""Adaptive ambient-temperature model for background subtraction.

Per-cell exponential moving average over the 24x24 grid. Cells currently
covered by a detected person are frozen so bodies do not burn into the
background. The first 10 frames are an assumed-empty warm-up absorbed as a
plain running mean with the occupancy mask ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInput
from .interpolate import OUT_SIZE, InterpolatedFrame

EMA_ALPHA = 0.02
WARMUP_FRAMES = 10


@dataclass(frozen=True)
class BackgroundModel:
    cells: np.ndarray
    frames_absorbed: int = 0

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.shape != (OUT_SIZE, OUT_SIZE):
            raise RejectedInput(f"expected {OUT_SIZE}x{OUT_SIZE} model, got shape {cells.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def empty(cls) -> "BackgroundModel":
        return cls(cells=np.zeros((OUT_SIZE, OUT_SIZE)), frames_absorbed=0)


def update_background(
    model: BackgroundModel,
    frame: InterpolatedFrame | np.ndarray,
    occupied_mask: np.ndarray,
) -> BackgroundModel:
    """Absorb one frame and return the updated model."""
    cells = frame.cells if isinstance(frame, InterpolatedFrame) else np.asarray(frame, dtype=np.float64)
    mask = np.asarray(occupied_mask, dtype=bool)
    if cells.shape != model.cells.shape or mask.shape != model.cells.shape:
        raise RejectedInput("frame/mask shape does not match background model")

    absorbed = model.frames_absorbed + 1
    if absorbed <= WARMUP_FRAMES:
        alpha = 1.0 / absorbed
        updated = (1.0 - alpha) * model.cells + alpha * cells
    else:
        ema = (1.0 - EMA_ALPHA) * model.cells + EMA_ALPHA * cells
        updated = np.where(mask, model.cells, ema)
    return BackgroundModel(cells=updated, frames_absorbed=absorbed)
