"""Registry state: users, activities, OTP grants, device associations.

Every mutation is appended to a JSON-lines journal and replayed on
startup, so killing the service loses nothing that was acknowledged.
Session tokens are deliberately memory-only; clients log in again after a
restart. All mutations run under one lock, which is what makes an OTP
single-use even when two association calls race.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .clock import Clock, system_clock
from .errors import ConfigurationError

TOKEN_TTL_MS = 24 * 3600 * 1000
OTP_TTL_S = 300
PBKDF2_ITERATIONS = 50_000

ROLE_STANDARD = "standard"
ROLE_BUSINESS = "business"


@dataclass
class UserRecord:
    user_id: str
    email: str
    salt_hex: str
    hash_hex: str
    iterations: int
    role: str


@dataclass
class Activity:
    activity_id: str
    owner_id: str
    name: str
    address: str
    geo: tuple
    capacity: int
    location_id: str
    visibility: dict = field(default_factory=lambda: {"public": True, "occupancy": True})
    device_ids: list = field(default_factory=list)


@dataclass
class OtpGrant:
    otp: str
    activity_id: str
    issued_ms: int
    ttl_s: int = OTP_TTL_S
    used: bool = False

    def usable(self, now_ms: int) -> bool:
        return not self.used and (now_ms - self.issued_ms) <= self.ttl_s * 1000


class StoreError(Exception):
    """Carries the HTTP status the API layer should answer with."""

    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status


def _hash_password(password: str, salt: bytes, iterations: int) -> str:
    return hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations).hex()


class RegistryStore:
    def __init__(
        self,
        journal_path: str | Path,
        clock: Clock = system_clock,
        iterations: int = PBKDF2_ITERATIONS,
    ) -> None:
        self.clock = clock
        self.iterations = iterations
        self._lock = threading.RLock()
        self.users: dict[str, UserRecord] = {}  # by email
        self.users_by_id: dict[str, UserRecord] = {}
        self.activities: dict[str, Activity] = {}
        self.otps: dict[str, OtpGrant] = {}
        self.associations: dict[str, str] = {}  # device_id -> activity_id
        self.tokens: dict[str, tuple[str, int]] = {}  # token -> (user_id, issued_ms)
        self._next_user = 1
        self._next_activity = 1
        self._journal_path = Path(journal_path)
        self._journal_path.parent.mkdir(parents=True, exist_ok=True)
        self._replay()
        self._journal = open(self._journal_path, "a", encoding="utf-8")

    # -- persistence ---------------------------------------------------------

    def _append(self, entry: dict) -> None:
        self._journal.write(json.dumps(entry, separators=(",", ":")) + "\n")
        self._journal.flush()
        os.fsync(self._journal.fileno())

    def _replay(self) -> None:
        if not self._journal_path.exists():
            return
        for line in self._journal_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                self._apply(json.loads(line))

    def _apply(self, entry: dict) -> None:
        op = entry["op"]
        if op == "user":
            record = UserRecord(
                entry["user_id"], entry["email"], entry["salt"], entry["hash"],
                entry["iterations"], entry["role"],
            )
            self.users[record.email] = record
            self.users_by_id[record.user_id] = record
            self._next_user = max(self._next_user, int(record.user_id.split("-")[1]) + 1)
        elif op == "activity":
            a = entry["activity"]
            activity = Activity(
                activity_id=a["activity_id"], owner_id=a["owner_id"], name=a["name"],
                address=a["address"], geo=tuple(a["geo"]), capacity=a["capacity"],
                location_id=a["location_id"], visibility=a["visibility"],
                device_ids=a.get("device_ids", []),
            )
            self.activities[activity.activity_id] = activity
            self._next_activity = max(
                self._next_activity, int(activity.activity_id.split("-")[1]) + 1
            )
        elif op == "activity_patch":
            activity = self.activities[entry["activity_id"]]
            for key, value in entry["fields"].items():
                if key == "visibility":
                    activity.visibility = value
                elif key == "geo":
                    activity.geo = tuple(value)
                else:
                    setattr(activity, key, value)
        elif op == "otp":
            self.otps[entry["otp"]] = OtpGrant(
                entry["otp"], entry["activity_id"], entry["issued_ms"], entry["ttl_s"]
            )
        elif op == "otp_used":
            if entry["otp"] in self.otps:
                self.otps[entry["otp"]].used = True
        elif op == "associate":
            self.associations[entry["device_id"]] = entry["activity_id"]
            activity = self.activities[entry["activity_id"]]
            if entry["device_id"] not in activity.device_ids:
                activity.device_ids.append(entry["device_id"])
        elif op == "dissociate":
            activity_id = self.associations.pop(entry["device_id"], None)
            if activity_id and activity_id in self.activities:
                devices = self.activities[activity_id].device_ids
                if entry["device_id"] in devices:
                    devices.remove(entry["device_id"])
        else:
            raise ConfigurationError(f"unknown journal op {op!r}")

    def close(self) -> None:
        with self._lock:
            if not self._journal.closed:
                self._journal.close()

    # -- users and sessions -----------------------------------------------------

    def register_user(self, email: str, password: str, role: str = ROLE_STANDARD) -> UserRecord:
        with self._lock:
            if email in self.users:
                raise StoreError(409, "email already registered")
            salt = secrets.token_bytes(16)
            record = UserRecord(
                user_id=f"user-{self._next_user}",
                email=email,
                salt_hex=salt.hex(),
                hash_hex=_hash_password(password, salt, self.iterations),
                iterations=self.iterations,
                role=role,
            )
            self._next_user += 1
            self.users[email] = record
            self.users_by_id[record.user_id] = record
            self._append(
                {
                    "op": "user", "user_id": record.user_id, "email": email,
                    "salt": record.salt_hex, "hash": record.hash_hex,
                    "iterations": record.iterations, "role": role,
                }
            )
            return record

    def login(self, email: str, password: str) -> str:
        with self._lock:
            record = self.users.get(email)
            # Hash against a fixed dummy salt when the user is unknown so
            # both failure paths cost the same.
            salt = bytes.fromhex(record.salt_hex) if record else b"\x00" * 16
            computed = _hash_password(password, salt, record.iterations if record else self.iterations)
            if record is None or not hmac.compare_digest(computed, record.hash_hex):
                raise StoreError(401, "bad credentials")
            token = secrets.token_hex(16)
            self.tokens[token] = (record.user_id, self.clock())
            return token

    def authenticate(self, token: str | None) -> UserRecord:
        with self._lock:
            if not token or token not in self.tokens:
                raise StoreError(401, "missing or unknown token")
            user_id, issued_ms = self.tokens[token]
            if self.clock() - issued_ms > TOKEN_TTL_MS:
                del self.tokens[token]
                raise StoreError(401, "token expired")
            return self.users_by_id[user_id]

    def require_business(self, token: str | None) -> UserRecord:
        user = self.authenticate(token)
        if user.role != ROLE_BUSINESS:
            raise StoreError(403, "business role required")
        return user

    # -- activities ---------------------------------------------------------------

    def create_activity(
        self, owner: UserRecord, name: str, address: str, capacity: int, geo: tuple
    ) -> Activity:
        with self._lock:
            activity_id = f"act-{self._next_activity}"
            self._next_activity += 1
            activity = Activity(
                activity_id=activity_id,
                owner_id=owner.user_id,
                name=name,
                address=address,
                geo=geo,
                capacity=capacity,
                location_id=f"loc-{activity_id}",
            )
            self.activities[activity_id] = activity
            self._append(
                {
                    "op": "activity",
                    "activity": {
                        "activity_id": activity_id, "owner_id": owner.user_id,
                        "name": name, "address": address, "geo": list(geo),
                        "capacity": capacity, "location_id": activity.location_id,
                        "visibility": activity.visibility, "device_ids": [],
                    },
                }
            )
            return activity

    def get_activity(self, activity_id: str) -> Activity:
        with self._lock:
            activity = self.activities.get(activity_id)
            if activity is None:
                raise StoreError(404, "no such activity")
            return activity

    def visible_activity(self, activity_id: str, user: UserRecord | None) -> Activity:
        """Hidden activities answer 404 to everyone but their owner."""
        activity = self.get_activity(activity_id)
        if not activity.visibility.get("public", True):
            if user is None or user.user_id != activity.owner_id:
                raise StoreError(404, "no such activity")
        return activity

    def patch_activity(self, owner: UserRecord, activity_id: str, fields: dict) -> Activity:
        with self._lock:
            activity = self.get_activity(activity_id)
            if activity.owner_id != owner.user_id:
                raise StoreError(403, "not the owner")
            allowed = {"name", "capacity", "visibility", "address", "geo"}
            bad = set(fields) - allowed
            if bad:
                raise StoreError(400, f"cannot patch fields {sorted(bad)}")
            if "capacity" in fields and (
                not isinstance(fields["capacity"], int) or fields["capacity"] <= 0
            ):
                raise StoreError(400, "capacity must be a positive integer")
            if "visibility" in fields and not isinstance(fields["visibility"], dict):
                raise StoreError(400, "visibility must be an object")
            self._apply({"op": "activity_patch", "activity_id": activity_id, "fields": fields})
            self._append({"op": "activity_patch", "activity_id": activity_id, "fields": fields})
            return activity

    # -- OTP and association -----------------------------------------------------

    def issue_otp(self, owner: UserRecord, activity_id: str) -> OtpGrant:
        with self._lock:
            activity = self.get_activity(activity_id)
            if activity.owner_id != owner.user_id:
                raise StoreError(403, "not the owner")
            now = self.clock()
            while True:
                otp = f"{secrets.randbelow(10**6):06d}"
                existing = self.otps.get(otp)
                if existing is None or not existing.usable(now):
                    break
            grant = OtpGrant(otp=otp, activity_id=activity_id, issued_ms=now)
            self.otps[otp] = grant
            self._append(
                {
                    "op": "otp", "otp": otp, "activity_id": activity_id,
                    "issued_ms": grant.issued_ms, "ttl_s": grant.ttl_s,
                }
            )
            return grant

    def associate_device(self, device_id: str, otp: str, device_known: bool) -> Activity:
        with self._lock:
            if not device_known:
                raise StoreError(400, "device not registered in whitelist")
            grant = self.otps.get(otp)
            if grant is None:
                raise StoreError(400, "unknown OTP")
            if not grant.usable(self.clock()):
                raise StoreError(400, "OTP expired or already used")
            if device_id in self.associations:
                raise StoreError(409, "device already associated; dissociate first")
            grant.used = True
            self._append({"op": "otp_used", "otp": otp})
            activity = self.get_activity(grant.activity_id)
            self.associations[device_id] = activity.activity_id
            activity.device_ids.append(device_id)
            self._append(
                {"op": "associate", "device_id": device_id, "activity_id": activity.activity_id}
            )
            return activity

    def dissociate_device(self, owner: UserRecord, device_id: str) -> Activity:
        with self._lock:
            activity_id = self.associations.get(device_id)
            if activity_id is None:
                raise StoreError(404, "device not associated")
            activity = self.get_activity(activity_id)
            if activity.owner_id != owner.user_id:
                raise StoreError(403, "not the owner")
            self._apply({"op": "dissociate", "device_id": device_id})
            self._append({"op": "dissociate", "device_id": device_id})
            return activity

    def public_activities(self) -> list[Activity]:
        with self._lock:
            return [a for a in self.activities.values() if a.visibility.get("public", True)]
