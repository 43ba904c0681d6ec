"""Thresholding and flood-fill clustering on the 24x24 grid.

Segmentation keeps cells that exceed the background by at least the
configured delta and zeroes everything else; clustering groups the
surviving cells into 8-connected components, drops tiny ones as noise, and
reduces each component to its excess-weighted center of gravity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, RejectedInput
from .interpolate import OUT_SIZE

DEFAULT_DELTA_THRESHOLD_C = 1.5
MIN_CLUSTER_PIXELS = 4

_NEIGHBOR_STEPS = tuple(
    (dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)
)


@dataclass(frozen=True)
class Cluster:
    """One warm region: its cells, total excess heat, and center of gravity."""

    pixels: frozenset
    mass: float
    centroid: tuple
    bbox: tuple  # (min_row, min_col, max_row, max_col)


def segment(
    frame_cells: np.ndarray,
    model_cells: np.ndarray,
    delta_threshold: float = DEFAULT_DELTA_THRESHOLD_C,
) -> tuple[np.ndarray, np.ndarray]:
    """Return (mask, excess): mask is true where frame - model >= delta,
    excess carries the positive difference on masked cells and 0 elsewhere."""
    if delta_threshold <= 0:
        raise ConfigurationError("delta_threshold must be positive")
    frame_cells = np.asarray(frame_cells, dtype=np.float64)
    model_cells = np.asarray(model_cells, dtype=np.float64)
    if frame_cells.shape != (OUT_SIZE, OUT_SIZE) or model_cells.shape != (OUT_SIZE, OUT_SIZE):
        raise RejectedInput("segment expects 24x24 frame and model")
    diff = frame_cells - model_cells
    mask = diff >= delta_threshold
    excess = np.where(mask, np.maximum(diff, 0.0), 0.0)
    return mask, excess


def find_clusters(mask: np.ndarray, excess: np.ndarray) -> list[Cluster]:
    """8-connected components of the mask, smallest-noise components removed,
    ordered by bbox (min_row, min_col)."""
    mask = np.asarray(mask, dtype=bool)
    excess = np.asarray(excess, dtype=np.float64)
    if mask.shape != (OUT_SIZE, OUT_SIZE) or excess.shape != (OUT_SIZE, OUT_SIZE):
        raise RejectedInput("find_clusters expects 24x24 mask and excess")
    if np.any((excess > 0) & ~mask):
        raise RejectedInput("excess present on unmasked cell")

    visited = np.zeros_like(mask, dtype=bool)
    clusters: list[Cluster] = []
    rows, cols = np.nonzero(mask)
    for start in zip(rows.tolist(), cols.tolist()):
        if visited[start]:
            continue
        # Iterative flood fill; recursion depth is unbounded on big blobs.
        stack = [start]
        visited[start] = True
        pixels = []
        while stack:
            r, c = stack.pop()
            pixels.append((r, c))
            for dr, dc in _NEIGHBOR_STEPS:
                nr, nc = r + dr, c + dc
                if 0 <= nr < OUT_SIZE and 0 <= nc < OUT_SIZE and mask[nr, nc] and not visited[nr, nc]:
                    visited[nr, nc] = True
                    stack.append((nr, nc))
        if len(pixels) < MIN_CLUSTER_PIXELS:
            continue
        weights = np.array([excess[p] for p in pixels])
        mass = float(weights.sum())
        coords = np.array(pixels, dtype=np.float64)
        if mass > 0:
            centroid = (coords * weights[:, None]).sum(axis=0) / mass
        else:
            centroid = coords.mean(axis=0)
        r_min, c_min = coords.min(axis=0).astype(int)
        r_max, c_max = coords.max(axis=0).astype(int)
        # A weighted mean of member coordinates cannot leave the bbox; clamp
        # away float rounding so the containment invariant holds exactly.
        centroid = np.clip(centroid, (r_min, c_min), (r_max, c_max))
        clusters.append(
            Cluster(
                pixels=frozenset(pixels),
                mass=mass,
                centroid=(float(centroid[0]), float(centroid[1])),
                bbox=(int(r_min), int(c_min), int(r_max), int(c_max)),
            )
        )
    clusters.sort(key=lambda cl: (cl.bbox[0], cl.bbox[1]))
    return clusters
