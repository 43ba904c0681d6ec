"""Topic pub/sub server with whitelist auth and server-side interception.

Sessions speak the line protocol from ``wire``. A connection must open
with CONNECT carrying a whitelisted, non-revoked key; everything before
that is rejected. Published messages pass through an interception layer
that triggers server-side actions on designated topics before normal
fan-out:

* ``devices/+/hello``   answers with the device's three config messages
  (type, location, constants), the provisioning handshake;
* ``locations/+/delta`` applies the signed event to the occupancy store,
  journals it, and publishes the new occupancy;
* ``registry/updates``  learns new locations and device associations from
  the registry and refreshes the device's retained config.

QoS 1 messages to subscribers are retransmitted every few seconds until
acknowledged, a bounded number of times. Config and key topics are
retained so devices that were offline pick up the latest values when they
subscribe again. PUBACK for an inbound publish is sent only after the
interception handlers ran, so an acknowledged delta is already journaled.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

from .clock import Clock, system_clock
from .errors import ProtocolError
from .journal import EventJournal, write_snapshot
from .occupancy import OccupancyStore
from .topics import topic_matches, validate_filter, validate_topic
from .whitelist import DeviceRecord, Whitelist, generate_key
from .wire import (
    LineTransport,
    decode_payload,
    encode_payload,
    occupancy_payload,
    parse_delta_payload,
)

logger = logging.getLogger("peopleflow.broker")

RETRANSMIT_INTERVAL_S = 5.0
MAX_RETRANSMIT_ATTEMPTS = 5
INFLIGHT_LIMIT = 1000
ROTATION_GRACE_S = 60.0
_HOUSEKEEPING_TICK_S = 0.1

_RETAINED_PATTERNS = ("devices/+/config/+", "devices/+/key")


class _Inflight:
    __slots__ = ("frame", "attempts", "due_at")

    def __init__(self, frame: dict, due_at: float) -> None:
        self.frame = frame
        self.attempts = 1
        self.due_at = due_at


class Session:
    def __init__(self, transport: LineTransport, peer: str) -> None:
        self.transport = transport
        self.peer = peer
        self.authenticated = False
        self.device_id: str | None = None
        self.client_id: str | None = None
        self.key: str | None = None
        self.subscriptions: list[str] = []
        self.inflight: dict[int, _Inflight] = {}
        self.next_mid = 1
        self.send_lock = threading.Lock()
        self.lock = threading.Lock()
        self.alive = True

    def send(self, frame: dict) -> None:
        with self.send_lock:
            self.transport.send_frame(frame)


class BrokerStats:
    def __init__(self) -> None:
        self.connections = 0
        self.auth_failures = 0
        self.protocol_errors = 0
        self.messages_routed = 0
        self.handler_failures = 0
        self.qos1_gave_up = 0


class Broker:
    def __init__(
        self,
        host: str,
        port: int,
        whitelist: Whitelist,
        journal_path,
        snapshot_path=None,
        snapshot_interval_s: float = 30.0,
        clock: Clock = system_clock,
        retransmit_interval_s: float = RETRANSMIT_INTERVAL_S,
        max_retransmit_attempts: int = MAX_RETRANSMIT_ATTEMPTS,
        inflight_limit: int = INFLIGHT_LIMIT,
        rotation_grace_s: float = ROTATION_GRACE_S,
    ) -> None:
        self.host = host
        self.port = port
        self.whitelist = whitelist
        self.clock = clock
        self.retransmit_interval_s = retransmit_interval_s
        self.max_retransmit_attempts = max_retransmit_attempts
        self.inflight_limit = inflight_limit
        self.rotation_grace_s = rotation_grace_s
        self.snapshot_path = snapshot_path
        self.snapshot_interval_s = snapshot_interval_s
        self.stats = BrokerStats()

        self.store = OccupancyStore()
        self.store.recover(journal_path)
        self._journal = EventJournal(journal_path)
        self.store._journal = self._journal
        for location_id in whitelist.known_locations():
            self.store.register_location(location_id)

        self._sessions: set[Session] = set()
        self._sessions_lock = threading.Lock()
        self._retained: dict[str, str] = {}
        self._retained_lock = threading.Lock()
        self._pending_rotations: dict[str, tuple[str, int]] = {}
        self._rotation_lock = threading.Lock()
        self._handlers = [
            ("devices/+/hello", self._on_hello),
            ("locations/+/delta", self._on_delta),
            ("registry/updates", self._on_registry_update),
        ]
        self._listener: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()
        self._last_snapshot = time.monotonic()

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(64)
        listener.settimeout(0.2)  # lets the accept loop notice shutdown
        self._listener = listener
        self.port = listener.getsockname()[1]
        accept = threading.Thread(target=self._accept_loop, name="broker-accept", daemon=True)
        keeper = threading.Thread(target=self._housekeeping_loop, name="broker-keeper", daemon=True)
        self._threads = [accept, keeper]
        accept.start()
        keeper.start()
        logger.info("listening on %s:%d", self.host, self.port)

    def stop(self) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._sessions_lock:
            sessions = list(self._sessions)
        for session in sessions:
            self._close_session(session)
        for thread in self._threads:
            thread.join(timeout=2.0)
        self._write_snapshot()
        self._journal.close()

    @property
    def endpoint(self) -> tuple[str, int]:
        return self.host, self.port

    # -- connection handling -------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sock.settimeout(None)
            session = Session(LineTransport(sock), f"{addr[0]}:{addr[1]}")
            with self._sessions_lock:
                self._sessions.add(session)
            self.stats.connections += 1
            thread = threading.Thread(
                target=self._session_loop, args=(session,), name=f"broker-{session.peer}", daemon=True
            )
            thread.start()

    def _session_loop(self, session: Session) -> None:
        try:
            first = session.transport.recv_frame()
            if first is None:
                return
            if first["t"] != "CONNECT" or not self._authenticate(session, first):
                return
            while not self._stopping.is_set():
                frame = session.transport.recv_frame()
                if frame is None:
                    return
                self._on_frame(session, frame)
        except ProtocolError as exc:
            self.stats.protocol_errors += 1
            logger.warning("protocol error from %s: %s", session.peer, exc)
            self._reject(session, "protocol-error")
        except OSError:
            pass
        finally:
            self._close_session(session)

    def _authenticate(self, session: Session, frame: dict) -> bool:
        record = self.whitelist.lookup_key(frame["key"])
        if record is None:
            self.stats.auth_failures += 1
            logger.warning("rejected key from %s", session.peer)
            self._reject(session, "unknown-key")
            return False
        session.authenticated = True
        session.device_id = record.device_id
        session.client_id = frame["client_id"]
        session.key = frame["key"]
        session.send({"t": "CONNACK"})
        self._finalize_rotation_on_connect(record.device_id, frame["key"])
        return True

    def _reject(self, session: Session, reason: str) -> None:
        try:
            session.send({"t": "REJECT", "reason": reason})
        except OSError:
            pass
        self._close_session(session)

    def _close_session(self, session: Session) -> None:
        if not session.alive:
            return
        session.alive = False
        with self._sessions_lock:
            self._sessions.discard(session)
        session.transport.close()

    # -- frame dispatch ------------------------------------------------------

    def _on_frame(self, session: Session, frame: dict) -> None:
        kind = frame["t"]
        if kind == "PING":
            session.send({"t": "PONG"})
            return
        if kind == "PUBACK":
            with session.lock:
                session.inflight.pop(frame["mid"], None)
            return
        if kind == "SUB":
            validate_filter(frame["filter"])
            with session.lock:
                if frame["filter"] not in session.subscriptions:
                    session.subscriptions.append(frame["filter"])
            session.send({"t": "SUBACK", "filter": frame["filter"]})
            self._deliver_retained(session, frame["filter"])
            return
        if kind == "PUB":
            validate_topic(frame["topic"])
            self._intercept(frame["topic"], frame["payload"], session)
            if frame["qos"] == 1:
                session.send({"t": "PUBACK", "mid": frame["mid"]})
            self._retain_if_config(frame["topic"], frame["payload"])
            self._route(frame["topic"], frame["payload"], frame["qos"])
            return
        raise ProtocolError(f"unexpected frame {kind} on established session")

    # -- routing -------------------------------------------------------------

    def publish(self, topic: str, payload: str, qos: int = 1) -> None:
        """Broker-originated publication (config answers, occupancy)."""
        validate_topic(topic)
        self._retain_if_config(topic, payload)
        self._route(topic, payload, qos)

    def _route(self, topic: str, payload: str, qos: int) -> None:
        with self._sessions_lock:
            sessions = list(self._sessions)
        for session in sessions:
            if not session.authenticated or not session.alive:
                continue
            with session.lock:
                matched = any(topic_matches(f, topic) for f in session.subscriptions)
            if matched:
                self._deliver(session, topic, payload, qos)
        self.stats.messages_routed += 1

    def _deliver(self, session: Session, topic: str, payload: str, qos: int) -> None:
        with session.lock:
            mid = session.next_mid
            session.next_mid = mid + 1 if mid < 2**32 - 1 else 1
            if qos == 1:
                if len(session.inflight) >= self.inflight_limit:
                    logger.error("inflight overflow for %s, closing", session.peer)
                    self._reject(session, "inflight-overflow")
                    return
                frame = {"t": "PUB", "topic": topic, "mid": mid, "qos": 1, "payload": payload}
                session.inflight[mid] = _Inflight(
                    frame, time.monotonic() + self.retransmit_interval_s
                )
            else:
                frame = {"t": "PUB", "topic": topic, "mid": mid, "qos": 0, "payload": payload}
        try:
            session.send(frame)
        except OSError:
            self._close_session(session)

    def _retain_if_config(self, topic: str, payload: str) -> None:
        if any(topic_matches(pattern, topic) for pattern in _RETAINED_PATTERNS):
            with self._retained_lock:
                self._retained[topic] = payload

    def _deliver_retained(self, session: Session, topic_filter: str) -> None:
        with self._retained_lock:
            matches = [
                (topic, payload)
                for topic, payload in self._retained.items()
                if topic_matches(topic_filter, topic)
            ]
        for topic, payload in matches:
            self._deliver(session, topic, payload, qos=1)

    # -- interception ----------------------------------------------------------

    def _intercept(self, topic: str, payload: str, session: Session | None) -> None:
        for pattern, handler in self._handlers:
            if topic_matches(pattern, topic):
                try:
                    handler(topic, payload, session)
                except Exception:
                    self.stats.handler_failures += 1
                    logger.exception("intercept handler failed for topic %s", topic)

    def _on_hello(self, topic: str, payload: str, session: Session | None) -> None:
        device_id = topic.split("/")[1]
        if session is not None and session.device_id != device_id:
            logger.warning("hello for %s from session of %s ignored", device_id, session.device_id)
            return
        record = self.whitelist.lookup_id(device_id)
        if record is None:
            logger.warning("hello from unregistered device %s", device_id)
            return
        base = f"devices/{device_id}/config"
        self.publish(f"{base}/type", encode_payload({"device_type": record.device_type}))
        self.publish(
            f"{base}/location",
            encode_payload({"location_id": record.location_id, "name": record.location_name}),
        )
        self.publish(f"{base}/constants", encode_payload(record.constants))

    def _on_delta(self, topic: str, payload: str, session: Session | None) -> None:
        location_id = topic.split("/")[1]
        sensor_id, event_seq, direction, timestamp_ms = parse_delta_payload(payload)
        update = self.store.apply(location_id, sensor_id, event_seq, direction, timestamp_ms)
        if update is None:
            if not self.store.knows(location_id):
                logger.warning("delta for unknown location %s dropped", location_id)
            return
        self.publish(
            f"locations/{location_id}/occupancy",
            occupancy_payload(location_id, update.occupancy, update.as_of_ms),
        )

    def _on_registry_update(self, topic: str, payload: str, session: Session | None) -> None:
        obj = decode_payload(payload)
        kind = obj.get("kind")
        if kind in ("activity_created", "activity_updated"):
            location_id = obj.get("location_id")
            if location_id:
                self.store.register_location(location_id)
        elif kind == "device_associated":
            device_id = obj.get("device_id")
            location_id = obj.get("location_id")
            record = self.whitelist.lookup_id(device_id) if device_id else None
            if record is None or not location_id:
                logger.warning("association update for unknown device %r", device_id)
                return
            record.location_id = location_id
            record.location_name = obj.get("activity_name")
            for key, value in (obj.get("constants") or {}).items():
                record.constants[key] = value
            self.whitelist.save()
            self.store.register_location(location_id)
            self.publish(
                f"devices/{device_id}/config/location",
                encode_payload({"location_id": location_id, "name": record.location_name}),
            )

    # -- key management ----------------------------------------------------------

    def rotate_key(self, device_id: str) -> str:
        """Issue a fresh key; the old one dies when the device reconnects
        with the new key or when the grace period lapses."""
        record = self.whitelist.lookup_id(device_id)
        if record is None:
            raise KeyError(f"unknown device {device_id}")
        old_key = record.device_key
        new_key = generate_key()
        self.whitelist.add(
            DeviceRecord(
                device_id=device_id,
                device_key=new_key,
                device_type=record.device_type,
                location_id=record.location_id,
                location_name=record.location_name,
                constants=dict(record.constants),
            )
        )
        self.whitelist.save()
        with self._rotation_lock:
            self._pending_rotations[device_id] = (
                old_key,
                self.clock() + int(self.rotation_grace_s * 1000),
            )
        self.publish(f"devices/{device_id}/key", encode_payload({"device_key": new_key}))
        return new_key

    def revoke_key(self, key: str) -> None:
        self.whitelist.revoke(key)
        self.whitelist.save()
        with self._sessions_lock:
            victims = [s for s in self._sessions if s.key == key]
        for session in victims:
            self._reject(session, "key-revoked")

    def _finalize_rotation_on_connect(self, device_id: str, key: str) -> None:
        with self._rotation_lock:
            pending = self._pending_rotations.get(device_id)
            if pending is None or pending[0] == key:
                return
            del self._pending_rotations[device_id]
        self.revoke_key(pending[0])

    # -- housekeeping ----------------------------------------------------------

    def _housekeeping_loop(self) -> None:
        while not self._stopping.wait(_HOUSEKEEPING_TICK_S):
            self._retransmit_due()
            self._expire_rotations()
            self._sweep_revoked()
            if (
                self.snapshot_path is not None
                and self.snapshot_interval_s
                and time.monotonic() - self._last_snapshot >= self.snapshot_interval_s
            ):
                self._write_snapshot()

    def _retransmit_due(self) -> None:
        now = time.monotonic()
        with self._sessions_lock:
            sessions = list(self._sessions)
        for session in sessions:
            resend: list[dict] = []
            with session.lock:
                for mid, entry in list(session.inflight.items()):
                    if entry.due_at > now:
                        continue
                    if entry.attempts >= self.max_retransmit_attempts:
                        del session.inflight[mid]
                        self.stats.qos1_gave_up += 1
                        continue
                    entry.attempts += 1
                    entry.due_at = now + self.retransmit_interval_s
                    resend.append(entry.frame)
            for frame in resend:
                try:
                    session.send(frame)
                except OSError:
                    self._close_session(session)
                    break

    def _expire_rotations(self) -> None:
        now = self.clock()
        with self._rotation_lock:
            expired = [
                (device_id, old_key)
                for device_id, (old_key, deadline) in self._pending_rotations.items()
                if now >= deadline
            ]
            for device_id, _ in expired:
                del self._pending_rotations[device_id]
        for _, old_key in expired:
            self.revoke_key(old_key)

    def _sweep_revoked(self) -> None:
        with self._sessions_lock:
            victims = [s for s in self._sessions if s.key and s.key in self.whitelist.revoked]
        for session in victims:
            self._reject(session, "key-revoked")

    def _write_snapshot(self) -> None:
        if self.snapshot_path is None:
            return
        write_snapshot(self.snapshot_path, self.store.snapshot_rows())
        self._last_snapshot = time.monotonic()
