"""Device whitelist: the broker's only authentication mechanism.

Each device holds a unique 128-bit key (32 hex chars). A connection is
accepted only if its key maps to a known, non-revoked device. The file also
carries each device's provisioning defaults (type, location, constants) so
a broker can answer hello requests without any other service running.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

KEY_HEX_CHARS = 32


def generate_key() -> str:
    return secrets.token_hex(KEY_HEX_CHARS // 2)


def validate_key(key: str) -> str:
    if not isinstance(key, str) or len(key) != KEY_HEX_CHARS:
        raise ConfigurationError("device key must be 32 hex chars")
    try:
        int(key, 16)
    except ValueError as exc:
        raise ConfigurationError("device key must be hex") from exc
    return key.lower()


@dataclass
class DeviceRecord:
    device_id: str
    device_key: str
    device_type: str = "flow-meter"
    location_id: str | None = None
    location_name: str | None = None
    constants: dict = field(default_factory=lambda: {"delta_threshold": 1.5})


class Whitelist:
    """In-memory view of the device file, safe for concurrent use."""

    def __init__(self, devices: list[DeviceRecord] | None = None, revoked: set[str] | None = None,
                 path: str | Path | None = None) -> None:
        self._lock = threading.RLock()
        self._by_key: dict[str, DeviceRecord] = {}
        self._by_id: dict[str, DeviceRecord] = {}
        self.revoked: set[str] = set(revoked or ())
        self.path = Path(path) if path else None
        for record in devices or []:
            self.add(record)

    def add(self, record: DeviceRecord) -> None:
        with self._lock:
            record.device_key = validate_key(record.device_key)
            self._by_key[record.device_key] = record
            self._by_id.setdefault(record.device_id, record)
            # A rotation maps a second key onto an existing id; keep the
            # id index pointing at the freshest record.
            self._by_id[record.device_id] = record

    def lookup_key(self, key: str) -> DeviceRecord | None:
        with self._lock:
            if key in self.revoked:
                return None
            return self._by_key.get(key)

    def lookup_id(self, device_id: str) -> DeviceRecord | None:
        with self._lock:
            return self._by_id.get(device_id)

    def keys_for(self, device_id: str) -> list[str]:
        with self._lock:
            return [k for k, rec in self._by_key.items() if rec.device_id == device_id]

    def revoke(self, key: str) -> None:
        with self._lock:
            self.revoked.add(key)

    def device_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._by_id)

    def known_locations(self) -> set[str]:
        with self._lock:
            return {rec.location_id for rec in self._by_id.values() if rec.location_id}

    @classmethod
    def load(cls, path: str | Path) -> "Whitelist":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read whitelist {path}: {exc}") from exc
        devices = []
        for entry in raw.get("devices", []):
            devices.append(
                DeviceRecord(
                    device_id=entry["device_id"],
                    device_key=entry["device_key"],
                    device_type=entry.get("device_type", "flow-meter"),
                    location_id=entry.get("location_id"),
                    location_name=entry.get("location_name"),
                    constants=entry.get("constants", {"delta_threshold": 1.5}),
                )
            )
        return cls(devices=devices, revoked=set(raw.get("revoked", [])), path=path)

    def save(self, path: str | Path | None = None) -> None:
        target = Path(path) if path else self.path
        if target is None:
            return
        with self._lock:
            payload = {
                "devices": [
                    {
                        "device_id": rec.device_id,
                        "device_key": rec.device_key,
                        "device_type": rec.device_type,
                        "location_id": rec.location_id,
                        "location_name": rec.location_name,
                        "constants": rec.constants,
                    }
                    for rec in self._by_key.values()
                ],
                "revoked": sorted(self.revoked),
            }
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, target)
