"""Per-sensor image processing: raw frame in, warm-body centroids out.

Composition per frame: upscale, subtract background, threshold, cluster,
then fold the frame into the background model using the fresh mask so
occupied cells stay frozen. The whole thing is a pure function of the
accumulated state and the frame, so replaying a dump reproduces output
byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundModel, update_background
from .errors import RejectedInput
from .frames import ThermalFrame
from .interpolate import OUT_SIZE, interpolate_bicubic
from .segmentation import DEFAULT_DELTA_THRESHOLD_C, Cluster, find_clusters, segment


@dataclass
class PipelineDiagnostics:
    frames_processed: int = 0
    frames_dropped_out_of_order: int = 0


@dataclass
class SensorPipeline:
    """Processing state for one sensor's frame stream."""

    sensor_id: str
    delta_threshold: float = DEFAULT_DELTA_THRESHOLD_C
    model: BackgroundModel = field(default_factory=BackgroundModel.empty)
    last_seq: int = -1
    diagnostics: PipelineDiagnostics = field(default_factory=PipelineDiagnostics)

    def process(self, frame: ThermalFrame) -> list[Cluster]:
        if frame.sensor_id != self.sensor_id:
            raise RejectedInput(
                f"frame from {frame.sensor_id!r} fed to pipeline for {self.sensor_id!r}"
            )
        if frame.seq <= self.last_seq:
            self.diagnostics.frames_dropped_out_of_order += 1
            return []
        self.last_seq = frame.seq

        interp = interpolate_bicubic(frame)
        if self.model.frames_absorbed == 0:
            # Cold start: the first frame defines the background, so it can
            # never differ from itself and the scene starts empty.
            mask = np.zeros((OUT_SIZE, OUT_SIZE), dtype=bool)
            clusters: list[Cluster] = []
        else:
            mask, excess = segment(interp.cells, self.model.cells, self.delta_threshold)
            clusters = find_clusters(mask, excess)
        self.model = update_background(self.model, interp, mask)
        self.diagnostics.frames_processed += 1
        return clusters
