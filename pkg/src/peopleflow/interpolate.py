"""Bicubic upscaling of 8x8 frames to the 24x24 working grid.

The upscaler is a Catmull-Rom (a = -0.5) reconstruction sampled on a 3x
denser grid with pixel centers aligned: output position r reads the source
at coordinate (r + 0.5) / 3 - 0.5. Samples the kernel needs beyond the
source grid are synthesized by point reflection through the border sample,
S(-i) = 2*S(0) - S(i). That boundary rule keeps constant and linear fields
exact over the whole 24x24 output, which plain border replication does not
(replication biases the outer two output rows by up to 0.26 per unit of
slope). The tracker and the zone constants all assume this 24x24 geometry;
a source coordinate s lands at output coordinate 3*s + 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInput
from .frames import GRID_SIZE, ThermalFrame

UPSCALE = 3
OUT_SIZE = GRID_SIZE * UPSCALE
KERNEL_A = -0.5


def kernel_weight(x: float, a: float = KERNEL_A) -> float:
    """The piecewise-cubic interpolation kernel W(x)."""
    x = abs(x)
    if x <= 1.0:
        return (a + 2.0) * x**3 - (a + 3.0) * x**2 + 1.0
    if x < 2.0:
        return a * (x**3 - 5.0 * x**2 + 8.0 * x - 4.0)
    return 0.0


def source_coordinate(out_index: int) -> float:
    """Source-grid coordinate sampled by output row/column ``out_index``."""
    return (out_index + 0.5) / UPSCALE - 0.5


def _reflect_into_row(coeffs: np.ndarray, index: int, weight: float) -> None:
    # Out-of-range samples are 2*S(border) - S(mirrored), folded into the
    # coefficients of the real cells.
    if 0 <= index < GRID_SIZE:
        coeffs[index] += weight
    elif index < 0:
        coeffs[0] += 2.0 * weight
        coeffs[-index] -= weight
    else:
        coeffs[GRID_SIZE - 1] += 2.0 * weight
        coeffs[2 * (GRID_SIZE - 1) - index] -= weight


def _build_operator() -> np.ndarray:
    op = np.zeros((OUT_SIZE, GRID_SIZE))
    for r in range(OUT_SIZE):
        u = source_coordinate(r)
        base = int(np.floor(u))
        for i in range(base - 1, base + 3):
            _reflect_into_row(op[r], i, kernel_weight(u - i))
    return op


_OPERATOR = _build_operator()
_OPERATOR.setflags(write=False)


@dataclass(frozen=True)
class InterpolatedFrame:
    """A 24x24 reconstruction of one raw frame."""

    cells: np.ndarray
    source_seq: int

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.shape != (OUT_SIZE, OUT_SIZE):
            raise RejectedInput(f"expected {OUT_SIZE}x{OUT_SIZE} cells, got shape {cells.shape}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)


def interpolate_bicubic(frame: ThermalFrame) -> InterpolatedFrame:
    """Upscale one validated frame. Separable, so one 24x8 operator applied
    to rows and columns reproduces the full 2D kernel sum exactly."""
    cells = _OPERATOR @ frame.cells @ _OPERATOR.T
    return InterpolatedFrame(cells=cells, source_seq=frame.seq)
