"""The line-oriented wire protocol shared by broker and clients.

One frame per LF-terminated line, encoded as a JSON object with a ``t``
field naming the frame type plus type-specific fields:

    CONNECT {key, client_id}     first frame on a connection
    CONNACK {}                   accepted
    REJECT  {reason}             refused; the sender closes after this
    SUB     {filter}             subscribe to a topic filter
    SUBACK  {filter}
    PUB     {topic, mid, qos, payload}
    PUBACK  {mid}
    PING    {} / PONG {}

Payloads are UTF-8 text; structured payloads carry a nested JSON object as
a string. Lines never contain embedded newlines and payloads are capped at
64 KiB.
"""

from __future__ import annotations

import json
import socket

from .errors import ProtocolError

MAX_PAYLOAD_BYTES = 64 * 1024
MAX_LINE_BYTES = 160 * 1024
MAX_MID = 2**32 - 1

_REQUIRED_FIELDS = {
    "CONNECT": {"key": str, "client_id": str},
    "CONNACK": {},
    "REJECT": {"reason": str},
    "SUB": {"filter": str},
    "SUBACK": {"filter": str},
    "PUB": {"topic": str, "mid": int, "qos": int, "payload": str},
    "PUBACK": {"mid": int},
    "PING": {},
    "PONG": {},
}


def encode_frame(frame: dict) -> bytes:
    kind = frame.get("t")
    if kind not in _REQUIRED_FIELDS:
        raise ProtocolError(f"unknown frame type {kind!r}")
    data = json.dumps(frame, separators=(",", ":"), ensure_ascii=False)
    if "\n" in data:
        raise ProtocolError("frame must not contain newlines")
    raw = (data + "\n").encode("utf-8")
    if len(raw) > MAX_LINE_BYTES:
        raise ProtocolError("frame too large")
    return raw


def decode_frame(line: str) -> dict:
    try:
        frame = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable frame: {exc}") from exc
    if not isinstance(frame, dict):
        raise ProtocolError("frame must be an object")
    kind = frame.get("t")
    fields = _REQUIRED_FIELDS.get(kind)
    if fields is None:
        raise ProtocolError(f"unknown frame type {kind!r}")
    for name, typ in fields.items():
        value = frame.get(name)
        if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            raise ProtocolError(f"{kind} frame missing/invalid field {name!r}")
    if kind == "PUB":
        if frame["qos"] not in (0, 1):
            raise ProtocolError("qos must be 0 or 1")
        if not 0 <= frame["mid"] <= MAX_MID:
            raise ProtocolError("mid out of range")
        if len(frame["payload"].encode("utf-8")) > MAX_PAYLOAD_BYTES:
            raise ProtocolError("payload exceeds 64 KiB")
    if kind == "PUBACK" and not 0 <= frame["mid"] <= MAX_MID:
        raise ProtocolError("mid out of range")
    return frame


def encode_payload(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def decode_payload(payload: str) -> dict:
    try:
        obj = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparseable payload: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("payload must be an object")
    return obj


def delta_payload(sensor_id: str, event_seq: int, direction: int, timestamp_ms: int) -> str:
    return encode_payload(
        {
            "sensor_id": sensor_id,
            "event_seq": event_seq,
            "direction": direction,
            "timestamp_ms": timestamp_ms,
        }
    )


def parse_delta_payload(payload: str) -> tuple[str, int, int, int]:
    obj = decode_payload(payload)
    try:
        sensor_id = obj["sensor_id"]
        event_seq = int(obj["event_seq"])
        direction = int(obj["direction"])
        timestamp_ms = int(obj["timestamp_ms"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad delta payload: {exc}") from exc
    if direction not in (1, -1):
        raise ProtocolError("delta direction must be +1 or -1")
    if not isinstance(sensor_id, str) or not sensor_id:
        raise ProtocolError("delta sensor_id must be a non-empty string")
    return sensor_id, event_seq, direction, timestamp_ms


def occupancy_payload(location_id: str, occupancy: int, timestamp_ms: int) -> str:
    return encode_payload(
        {"location_id": location_id, "occupancy": occupancy, "timestamp_ms": timestamp_ms}
    )


class LineTransport:
    """Blocking line framing over a socket. Subclassed in tests to inject
    frame loss; the rest of the stack only sees send/receive of frames."""

    def __init__(self, sock: socket.socket) -> None:
        self.sock = sock
        self._buffer = b""

    def send_frame(self, frame: dict) -> None:
        self.sock.sendall(encode_frame(frame))

    def recv_frame(self) -> dict | None:
        """Next frame, or None on clean EOF."""
        while b"\n" not in self._buffer:
            if len(self._buffer) > MAX_LINE_BYTES:
                raise ProtocolError("line exceeds maximum length")
            chunk = self.sock.recv(65536)
            if not chunk:
                if self._buffer.strip():
                    raise ProtocolError("connection closed mid-frame")
                return None
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return decode_frame(line.decode("utf-8"))

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
