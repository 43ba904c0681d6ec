"""Device runtime: one provisioned coordinator driving one sensor chain.

Wires a frame source (simulator scenario or recorded dump) through the
image pipeline and flow meter into the coordinator, which publishes deltas
to the broker. This is the process started by ``peopleflow device`` and
embedded by the simulation harness.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .client import BrokerClient
from .coordinator import Coordinator, DeviceConfig, ProvisioningCollector, provision
from .errors import ConfigurationError
from .frames import ThermalFrame
from .pipeline import SensorPipeline
from .segmentation import DEFAULT_DELTA_THRESHOLD_C
from .tracking import FlowEvent, FlowMeter

logger = logging.getLogger("peopleflow.device")


@dataclass(frozen=True)
class DeviceSettings:
    """Contents of a device config file: identity plus broker endpoint."""

    device_id: str
    device_key: str
    broker_host: str
    broker_port: int

    @classmethod
    def load(cls, path: str | Path) -> "DeviceSettings":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            host, port = raw["broker"].rsplit(":", 1)
            return cls(
                device_id=raw["device_id"],
                device_key=raw["device_key"],
                broker_host=host,
                broker_port=int(port),
            )
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"bad device config {path}: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(
                {
                    "device_id": self.device_id,
                    "device_key": self.device_key,
                    "broker": f"{self.broker_host}:{self.broker_port}",
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )


class DeviceRuntime:
    """Provision, then stream frames until the source is exhausted."""

    def __init__(
        self,
        settings: DeviceSettings,
        retransmit_interval_s: float = 5.0,
        provision_timeout_s: float = 10.0,
        provision_attempts: int | None = None,
    ) -> None:
        self.settings = settings
        self.client = BrokerClient(
            settings.broker_host,
            settings.broker_port,
            key=settings.device_key,
            client_id=settings.device_id,
            retransmit_interval_s=retransmit_interval_s,
        )
        self._provision_timeout_s = provision_timeout_s
        self._provision_attempts = provision_attempts
        self.config: DeviceConfig | None = None
        self.coordinator: Coordinator | None = None
        self.pipeline: SensorPipeline | None = None
        self.meter: FlowMeter | None = None
        self.events: list[FlowEvent] = []

    def start(self, wait_for_location_s: float = 30.0) -> DeviceConfig:
        collector = ProvisioningCollector(self.settings.device_id, self.settings.device_key)
        self.config = provision(
            self.client,
            self.settings.device_id,
            self.settings.device_key,
            timeout_s=self._provision_timeout_s,
            max_attempts=self._provision_attempts,
            collector=collector,
        )
        # An unassociated device keeps its config subscription open; when
        # the owner pairs it with an activity, the broker republishes the
        # retained location and the config completes here.
        deadline = time.monotonic() + wait_for_location_s
        while self.config.location_id is None and time.monotonic() < deadline:
            time.sleep(0.2)
            self.config = collector.build()
        if self.config.location_id is None:
            raise ConfigurationError(
                f"device {self.settings.device_id} has no assigned location; "
                "associate it with an activity first"
            )
        threshold = float(self.config.constants.get("delta_threshold", DEFAULT_DELTA_THRESHOLD_C))
        self.coordinator = Coordinator(self.config, self.client)
        self.coordinator.start_publisher()
        logger.info(
            "device %s provisioned for location %s (%s)",
            self.config.device_id,
            self.config.location_id,
            self.config.location_name,
        )
        self._threshold = threshold
        return self.config

    def begin_sensor(self, sensor_id: str) -> None:
        """Reset the per-sensor processing chain (new day or new dump)."""
        self.pipeline = SensorPipeline(sensor_id, delta_threshold=self._threshold)
        self.meter = FlowMeter(sensor_id)
        self.coordinator.attach_sensor(sensor_id)

    def feed(self, frame: ThermalFrame) -> list[FlowEvent]:
        clusters = self.pipeline.process(frame)
        events = self.meter.step([c.centroid for c in clusters], frame.timestamp_ms)
        for event in events:
            self.coordinator.ingest(event)
        self.meter.drain()
        self.events.extend(events)
        return events

    def run(self, frames: Iterable[ThermalFrame], realtime_fps: float | None = None) -> int:
        """Process a frame stream; returns the number of events emitted."""
        count = 0
        sensor_id = None
        for frame in frames:
            if sensor_id != frame.sensor_id:
                sensor_id = frame.sensor_id
                self.begin_sensor(sensor_id)
            count += len(self.feed(frame))
            if realtime_fps:
                time.sleep(1.0 / realtime_fps)
        return count

    def drain(self, timeout_s: float = 30.0) -> bool:
        return self.coordinator.wait_drained(timeout_s)

    def stop(self) -> None:
        if self.coordinator is not None:
            self.coordinator.stop()
        self.client.close()
