"""Broker client used by coordinators, the registry and test harnesses.

QoS 1 publishes block until the broker acknowledges, retransmitting on a
timer, and transparently reconnect with exponential backoff when the link
fails; an authorization rejection is terminal and never retried. The
transport is injectable so tests can interpose seeded frame loss.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from typing import Callable

from .errors import AuthorizationError, PeopleFlowError, ProtocolError
from .topics import topic_matches, validate_filter, validate_topic
from .wire import LineTransport

logger = logging.getLogger("peopleflow.client")

CONNECT_TIMEOUT_S = 5.0
DEFAULT_BACKOFF_S = (1.0, 2.0, 4.0, 8.0, 16.0, 30.0)


class ClientClosed(PeopleFlowError):
    """The client was closed while an operation was waiting."""


class BrokerClient:
    def __init__(
        self,
        host: str,
        port: int,
        key: str,
        client_id: str,
        transport_factory: Callable[[socket.socket], LineTransport] = LineTransport,
        retransmit_interval_s: float = 5.0,
        backoff_s: tuple = DEFAULT_BACKOFF_S,
        connect_timeout_s: float = CONNECT_TIMEOUT_S,
    ) -> None:
        self.host = host
        self.port = port
        self.key = key
        self.client_id = client_id
        self.transport_factory = transport_factory
        self.retransmit_interval_s = retransmit_interval_s
        self.backoff_s = backoff_s
        self.connect_timeout_s = connect_timeout_s

        self._transport: LineTransport | None = None
        self._reader: threading.Thread | None = None
        self._lock = threading.RLock()
        self._send_lock = threading.Lock()
        self._connected = threading.Event()
        self._closed = False
        self._auth_error: AuthorizationError | None = None
        self._next_mid = 1
        self._acks: dict[int, threading.Event] = {}
        self._suback: dict[str, threading.Event] = {}
        self._subscriptions: list[tuple[str, Callable[[str, str], None]]] = []
        self.reconnects = 0

    # -- connection management ---------------------------------------------

    def connect(self) -> None:
        """Establish the session; raises AuthorizationError on rejection."""
        with self._lock:
            if self._closed:
                raise ClientClosed("client closed")
            if self._connected.is_set():
                return
            sock = socket.create_connection((self.host, self.port), timeout=self.connect_timeout_s)
            sock.settimeout(None)
            transport = self.transport_factory(sock)
            transport.send_frame({"t": "CONNECT", "key": self.key, "client_id": self.client_id})
            reply = transport.recv_frame()
            if reply is None:
                transport.close()
                raise ConnectionError("connection closed during handshake")
            if reply["t"] == "REJECT":
                transport.close()
                error = AuthorizationError(f"broker rejected key: {reply['reason']}")
                if reply["reason"] in ("unknown-key", "key-revoked"):
                    self._auth_error = error
                raise error
            if reply["t"] != "CONNACK":
                transport.close()
                raise ProtocolError(f"expected CONNACK, got {reply['t']}")
            self._transport = transport
            self._connected.set()
            self._reader = threading.Thread(
                target=self._reader_loop, args=(transport,), name=f"client-{self.client_id}", daemon=True
            )
            self._reader.start()
            for topic_filter, _ in self._subscriptions:
                self._send({"t": "SUB", "filter": topic_filter})

    def close(self) -> None:
        with self._lock:
            self._closed = True
            self._drop_connection()
        for event in list(self._acks.values()):
            event.set()

    @property
    def connected(self) -> bool:
        return self._connected.is_set()

    def _drop_connection(self) -> None:
        self._connected.clear()
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def _ensure_connected(self) -> None:
        """Block until connected, retrying with exponential backoff. An
        authorization rejection aborts immediately."""
        attempt = 0
        while not self._closed:
            if self._auth_error is not None:
                raise self._auth_error
            if self._connected.is_set():
                return
            try:
                self.connect()
                self.reconnects += attempt > 0
                return
            except AuthorizationError:
                raise
            except (OSError, ProtocolError, ConnectionError) as exc:
                delay = self.backoff_s[min(attempt, len(self.backoff_s) - 1)]
                logger.debug("connect to %s:%s failed (%s), retrying in %.1fs", self.host, self.port, exc, delay)
                attempt += 1
                if self._closed:
                    break
                time.sleep(delay)
        raise ClientClosed("client closed while reconnecting")

    def _send(self, frame: dict) -> None:
        transport = self._transport
        if transport is None:
            raise ConnectionError("not connected")
        with self._send_lock:
            transport.send_frame(frame)

    # -- reader ----------------------------------------------------------------

    def _reader_loop(self, transport: LineTransport) -> None:
        try:
            while True:
                frame = transport.recv_frame()
                if frame is None:
                    break
                self._on_frame(frame)
        except (OSError, ProtocolError):
            pass
        finally:
            with self._lock:
                if self._transport is transport:
                    self._connected.clear()
                    self._transport = None

    def _on_frame(self, frame: dict) -> None:
        kind = frame["t"]
        if kind == "PUBACK":
            event = self._acks.get(frame["mid"])
            if event is not None:
                event.set()
        elif kind == "PUB":
            if frame["qos"] == 1:
                try:
                    self._send({"t": "PUBACK", "mid": frame["mid"]})
                except (OSError, ConnectionError):
                    pass
            for topic_filter, callback in list(self._subscriptions):
                if topic_matches(topic_filter, frame["topic"]):
                    try:
                        callback(frame["topic"], frame["payload"])
                    except Exception:
                        logger.exception("subscription callback failed for %s", frame["topic"])
        elif kind == "SUBACK":
            event = self._suback.get(frame["filter"])
            if event is not None:
                event.set()
        elif kind == "PING":
            try:
                self._send({"t": "PONG"})
            except (OSError, ConnectionError):
                pass
        elif kind == "REJECT":
            if frame["reason"] in ("unknown-key", "key-revoked"):
                self._auth_error = AuthorizationError(f"broker rejected session: {frame['reason']}")
            for event in list(self._acks.values()):
                # wake publishers so they observe the auth error
                if self._auth_error is not None:
                    event.set()

    # -- API ----------------------------------------------------------------

    def subscribe(self, topic_filter: str, callback: Callable[[str, str], None], timeout_s: float = 10.0) -> None:
        validate_filter(topic_filter)
        self._subscriptions.append((topic_filter, callback))
        self._ensure_connected()
        event = self._suback.setdefault(topic_filter, threading.Event())
        event.clear()
        self._send({"t": "SUB", "filter": topic_filter})
        if not event.wait(timeout_s):
            raise TimeoutError(f"no SUBACK for {topic_filter!r}")

    def publish(self, topic: str, payload: str, qos: int = 0, ack_timeout_s: float | None = None) -> None:
        """Publish one message. QoS 1 blocks until acknowledged, resending
        every retransmit interval and reconnecting as needed."""
        validate_topic(topic)
        with self._lock:
            mid = self._next_mid
            self._next_mid = mid + 1 if mid < 2**32 - 1 else 1
        frame = {"t": "PUB", "topic": topic, "mid": mid, "qos": qos, "payload": payload}
        if qos == 0:
            self._ensure_connected()
            self._send(frame)
            return
        event = threading.Event()
        self._acks[mid] = event
        deadline = None if ack_timeout_s is None else time.monotonic() + ack_timeout_s
        try:
            while True:
                if self._auth_error is not None:
                    raise self._auth_error
                if self._closed:
                    raise ClientClosed("client closed during publish")
                self._ensure_connected()
                try:
                    self._send(frame)
                except (OSError, ConnectionError):
                    self._connected.clear()
                    continue
                if event.wait(self.retransmit_interval_s):
                    if self._auth_error is not None:
                        raise self._auth_error
                    if self._closed:
                        raise ClientClosed("client closed during publish")
                    return
                if deadline is not None and time.monotonic() > deadline:
                    raise TimeoutError(f"no PUBACK for mid {mid} within {ack_timeout_s}s")
        finally:
            self._acks.pop(mid, None)

    def ping(self, timeout_s: float = 5.0) -> bool:
        self._ensure_connected()
        try:
            self._send({"t": "PING"})
            return True
        except (OSError, ConnectionError):
            return False
