"""Location-side aggregation: provisioning, per-sensor ledgers, delta
publication.

On startup a coordinator says hello on its device topic and waits for the
three config answers (type, location, constants), in any order, retrying
with exponential backoff. At runtime it keeps a difference value per
sensor (the running sum of accepted signed events, deduplicated by event
sequence number) and forwards every accepted event as a delta message.

Ingestion and publication are decoupled through a bounded queue: events
are accepted and ledgered regardless of broker reachability, and a
publisher thread drains the queue with blocking QoS-1 publishes so deltas
for one sensor hit the wire in order, exactly as ledgered.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass

from .client import BrokerClient
from .errors import AuthorizationError, ConfigurationError
from .tracking import FlowEvent
from .wire import decode_payload, delta_payload, encode_payload

logger = logging.getLogger("peopleflow.coordinator")

PROVISION_TIMEOUT_S = 10.0
PROVISION_BACKOFF_S = (1.0, 2.0, 4.0, 8.0, 16.0, 30.0)
PUBLISH_QUEUE_LIMIT = 100_000

_CONFIG_SUFFIXES = ("type", "location", "constants")


@dataclass(frozen=True)
class DeviceConfig:
    """Provisioned identity of one coordinator. Built only when all three
    config answers have arrived."""

    device_id: str
    device_key: str
    device_type: str
    location_id: str | None
    location_name: str | None
    constants: dict


@dataclass(frozen=True)
class DeltaUpdate:
    location_id: str
    sensor_id: str
    event_seq: int
    direction: int
    timestamp_ms: int


class ProvisioningCollector:
    """Accumulates the three config answers; order-independent."""

    def __init__(self, device_id: str, device_key: str) -> None:
        self.device_id = device_id
        self.device_key = device_key
        self._parts: dict[str, dict] = {}
        self.complete = threading.Event()

    def feed(self, topic: str, payload: str) -> None:
        suffix = topic.rsplit("/", 1)[1]
        if suffix not in _CONFIG_SUFFIXES:
            return
        self._parts[suffix] = decode_payload(payload)
        if all(s in self._parts for s in _CONFIG_SUFFIXES):
            self.complete.set()

    def build(self) -> DeviceConfig:
        if not self.complete.is_set():
            raise ConfigurationError("provisioning incomplete")
        location = self._parts["location"]
        return DeviceConfig(
            device_id=self.device_id,
            device_key=self.device_key,
            device_type=self._parts["type"].get("device_type", "flow-meter"),
            location_id=location.get("location_id"),
            location_name=location.get("name"),
            constants=dict(self._parts["constants"]),
        )


def provision(
    client: BrokerClient,
    device_id: str,
    device_key: str,
    timeout_s: float = PROVISION_TIMEOUT_S,
    backoff_s: tuple = PROVISION_BACKOFF_S,
    max_attempts: int | None = None,
    collector: ProvisioningCollector | None = None,
) -> DeviceConfig:
    """Run the hello handshake until the config is complete. An unknown key
    surfaces as AuthorizationError from the client and is not retried.
    Callers may pass their own collector to keep receiving config updates
    (association, key rotation) after the handshake finishes."""
    if collector is None:
        collector = ProvisioningCollector(device_id, device_key)
    client.connect()
    client.subscribe(f"devices/{device_id}/config/+", collector.feed)
    attempt = 0
    while True:
        client.publish(
            f"devices/{device_id}/hello", encode_payload({"device_id": device_id}), qos=1
        )
        if collector.complete.wait(timeout_s):
            return collector.build()
        attempt += 1
        if max_attempts is not None and attempt >= max_attempts:
            raise TimeoutError(f"provisioning timed out after {attempt} attempts")
        delay = backoff_s[min(attempt - 1, len(backoff_s) - 1)]
        logger.warning("provisioning attempt %d timed out, retrying in %.0fs", attempt, delay)
        time.sleep(delay)


@dataclass
class SensorEntry:
    last_event_seq: int = 0
    difference: int = 0
    coverage: str = ""


@dataclass
class CoordinatorDiagnostics:
    events_accepted: int = 0
    events_duplicate: int = 0
    events_unknown_sensor: int = 0
    deltas_rejected_full: int = 0
    deltas_published: int = 0


class Coordinator:
    def __init__(
        self,
        config: DeviceConfig,
        client: BrokerClient,
        queue_limit: int = PUBLISH_QUEUE_LIMIT,
    ) -> None:
        if not config.location_id:
            raise ConfigurationError(
                f"device {config.device_id} has no location; associate it first"
            )
        self.config = config
        self.client = client
        self.ledger: dict[str, SensorEntry] = {}
        self.diagnostics = CoordinatorDiagnostics()
        self._queue: list[DeltaUpdate] = []
        self._queue_limit = queue_limit
        self._cv = threading.Condition()
        self._publisher: threading.Thread | None = None
        self._stopping = False

    def attach_sensor(self, sensor_id: str, coverage: str = "") -> None:
        self.ledger.setdefault(sensor_id, SensorEntry(coverage=coverage))

    def ingest(self, event: FlowEvent) -> DeltaUpdate | None:
        """Apply one event to the ledger. Redeliveries are no-ops; accepted
        events are queued for publication and never block on the broker."""
        entry = self.ledger.get(event.sensor_id)
        if entry is None:
            self.diagnostics.events_unknown_sensor += 1
            logger.warning("event from unassociated sensor %s dropped", event.sensor_id)
            return None
        if event.event_seq <= entry.last_event_seq:
            self.diagnostics.events_duplicate += 1
            return None
        entry.last_event_seq = event.event_seq
        entry.difference += event.direction
        self.diagnostics.events_accepted += 1
        update = DeltaUpdate(
            location_id=self.config.location_id,
            sensor_id=event.sensor_id,
            event_seq=event.event_seq,
            direction=event.direction,
            timestamp_ms=event.timestamp_ms,
        )
        with self._cv:
            if len(self._queue) >= self._queue_limit:
                self.diagnostics.deltas_rejected_full += 1
                logger.error("delta queue full, rejecting newest event")
                return update
            self._queue.append(update)
            self._cv.notify()
        return update

    # -- publication ---------------------------------------------------------

    def start_publisher(self) -> None:
        if self._publisher is not None:
            return
        self._publisher = threading.Thread(
            target=self._publish_loop, name=f"coordinator-{self.config.device_id}", daemon=True
        )
        self._publisher.start()

    def stop(self) -> None:
        with self._cv:
            self._stopping = True
            self._cv.notify_all()
        if self._publisher is not None:
            self._publisher.join(timeout=5.0)
            self._publisher = None

    def _publish_loop(self) -> None:
        topic = f"locations/{self.config.location_id}/delta"
        while True:
            with self._cv:
                while not self._queue and not self._stopping:
                    self._cv.wait(0.2)
                if self._stopping and not self._queue:
                    return
                head = self._queue[0]
            payload = delta_payload(
                head.sensor_id, head.event_seq, head.direction, head.timestamp_ms
            )
            try:
                self.client.publish(topic, payload, qos=1)
            except AuthorizationError:
                logger.error("publisher stopped: broker revoked our key")
                return
            except Exception:
                if self._stopping:
                    return
                logger.exception("delta publish failed, retrying")
                continue
            with self._cv:
                # only remove after the broker acknowledged
                if self._queue and self._queue[0] is head:
                    self._queue.pop(0)
                self.diagnostics.deltas_published += 1
                self._cv.notify_all()

    def pending(self) -> int:
        with self._cv:
            return len(self._queue)

    def wait_drained(self, timeout_s: float = 30.0) -> bool:
        deadline = time.monotonic() + timeout_s
        with self._cv:
            while self._queue:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cv.wait(min(0.2, remaining))
        return True
