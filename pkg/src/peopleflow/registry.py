"""HTTP API for the presentation layer.

Endpoints (JSON in, JSON out, ``Authorization: Bearer <token>``):

    POST   /auth/register                 {email, password}
    POST   /auth/login                    {email, password} -> {token, role}
    GET    /activities/nearby?lat&lon&radius
    POST   /activities                    business: {name, address, capacity}
    GET    /activities/{id}
    PATCH  /activities/{id}               owner
    POST   /activities/{id}/otp           owner
    POST   /devices/associate             {device_id, otp}
    DELETE /devices/{id}/association      owner
    GET    /activities/{id}/occupancy
    GET    /activities/{id}/history?from&to   owner
    GET    /activities/{id}/devices       owner

Statuses: 400 validation, 401 auth, 403 role/ownership, 404 hidden or
missing (hidden activities are indistinguishable from absent ones), 409
conflict. Occupancy and history are read straight from the broker's
journal file, so a query issued after an acknowledged delta sees it.
Mutations publish one change notification on the ``registry/updates``
topic for other clients.
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .clock import Clock, system_clock
from .errors import GeocodeError
from .geocode import StubGeocoder
from .journal import JournalReader
from .registrystore import ROLE_BUSINESS, ROLE_STANDARD, RegistryStore, StoreError, UserRecord
from .whitelist import Whitelist

logger = logging.getLogger("peopleflow.registry")

EARTH_RADIUS_M = 6371008.8
MAX_RADIUS_M = 100_000.0
_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


class OccupancyView:
    """Per-location occupancy and history derived by tailing the broker's
    journal. The journal holds applied events only, so replaying it with
    the same floor rule reproduces the broker's accounting exactly."""

    def __init__(self, journal_path) -> None:
        self._reader = JournalReader(journal_path)
        self._lock = threading.Lock()
        self._occupancy: dict[str, int] = {}
        self._as_of: dict[str, int] = {}
        self._history: dict[str, list[tuple[int, int]]] = {}

    def refresh(self) -> None:
        with self._lock:
            for entry in self._reader.poll():
                occ = self._occupancy.get(entry.location_id, 0)
                if entry.direction > 0 or occ > 0:
                    occ += entry.direction
                self._occupancy[entry.location_id] = occ
                self._as_of[entry.location_id] = entry.timestamp_ms
                self._history.setdefault(entry.location_id, []).append(
                    (entry.timestamp_ms, occ)
                )

    def occupancy(self, location_id: str) -> tuple[int, int | None]:
        self.refresh()
        with self._lock:
            return self._occupancy.get(location_id, 0), self._as_of.get(location_id)

    def history(self, location_id: str, from_ms: int, to_ms: int) -> list[tuple[int, int]]:
        self.refresh()
        with self._lock:
            points = self._history.get(location_id, [])
            return [(ts, occ) for ts, occ in points if from_ms <= ts <= to_ms]


class Notifier:
    """Publishes change notifications without ever blocking a request."""

    def __init__(self, publish=None) -> None:
        self._publish = publish
        self._queue: list[dict] = []
        self._cv = threading.Condition()
        self._stopping = False
        self._thread: threading.Thread | None = None
        self.sent = 0
        if publish is not None:
            self._thread = threading.Thread(target=self._loop, name="registry-notify", daemon=True)
            self._thread.start()

    def notify(self, kind: str, **fields) -> None:
        message = {"kind": kind, **fields}
        with self._cv:
            self._queue.append(message)
            self._cv.notify()

    def _loop(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._stopping:
                    self._cv.wait(0.2)
                if self._stopping and not self._queue:
                    return
                message = self._queue[0]
            try:
                self._publish("registry/updates", json.dumps(message, separators=(",", ":")), 1)
            except Exception:
                if self._stopping:
                    return
                logger.exception("notification publish failed, retrying")
                continue
            with self._cv:
                if self._queue and self._queue[0] is message:
                    self._queue.pop(0)
                self.sent += 1
                self._cv.notify_all()

    def wait_drained(self, timeout_s: float = 10.0) -> bool:
        import time

        deadline = time.monotonic() + timeout_s
        with self._cv:
            while self._queue:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cv.wait(min(0.2, remaining))
        return True

    def stop(self) -> None:
        with self._cv:
            self._stopping = True
            self._cv.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=3.0)


class RegistryService:
    def __init__(
        self,
        store: RegistryStore,
        occupancy_view: OccupancyView,
        geocoder=None,
        notifier: Notifier | None = None,
        whitelist_path: str | Path | None = None,
        business_emails: set[str] | None = None,
        clock: Clock = system_clock,
    ) -> None:
        self.store = store
        self.view = occupancy_view
        self.geocoder = geocoder or StubGeocoder()
        self.notifier = notifier or Notifier()
        self.whitelist_path = Path(whitelist_path) if whitelist_path else None
        self.business_emails = {e.casefold() for e in (business_emails or set())}
        self.clock = clock
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None
        self.host = ""
        self.port = 0

    # -- lifecycle ------------------------------------------------------------

    def start(self, host: str, port: int) -> None:
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                logger.debug("http %s", fmt % args)

            def _dispatch(self, method: str) -> None:
                service.handle(self, method)

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_PATCH(self):
                self._dispatch("PATCH")

            def do_DELETE(self):
                self._dispatch("DELETE")

            def do_OPTIONS(self):
                self.send_response(204)
                service._cors(self)
                self.send_header("Content-Length", "0")
                self.end_headers()

        self._server = ThreadingHTTPServer((host, port), Handler)
        self.host, self.port = self._server.server_address[0], self._server.server_address[1]
        self._thread = threading.Thread(target=self._server.serve_forever, name="registry-http", daemon=True)
        self._thread.start()
        logger.info("registry listening on %s:%d", self.host, self.port)

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=3.0)
        self.notifier.stop()
        self.store.close()

    @staticmethod
    def _cors(handler: BaseHTTPRequestHandler) -> None:
        handler.send_header("Access-Control-Allow-Origin", "*")
        handler.send_header("Access-Control-Allow-Headers", "Authorization, Content-Type")
        handler.send_header("Access-Control-Allow-Methods", "GET, POST, PATCH, DELETE, OPTIONS")

    # -- request plumbing --------------------------------------------------------

    def handle(self, handler: BaseHTTPRequestHandler, method: str) -> None:
        parsed = urlparse(handler.path)
        segments = [s for s in parsed.path.split("/") if s]
        query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        token = None
        auth = handler.headers.get("Authorization", "")
        if auth.startswith("Bearer "):
            token = auth[len("Bearer "):].strip()
        body = {}
        length = int(handler.headers.get("Content-Length") or 0)
        if length:
            try:
                body = json.loads(handler.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._respond(handler, 400, {"error": "body must be JSON"})
                return
            if not isinstance(body, dict):
                self._respond(handler, 400, {"error": "body must be a JSON object"})
                return
        try:
            status, payload = self.route(method, segments, query, body, token)
        except StoreError as exc:
            status, payload = exc.status, {"error": str(exc)}
        except GeocodeError as exc:
            status, payload = 400, {"error": str(exc)}
        except Exception:
            logger.exception("unhandled error for %s %s", method, handler.path)
            status, payload = 500, {"error": "internal error"}
        self._respond(handler, status, payload)

    def _respond(self, handler: BaseHTTPRequestHandler, status: int, payload: dict) -> None:
        raw = json.dumps(payload).encode("utf-8")
        handler.send_response(status)
        self._cors(handler)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(raw)))
        handler.end_headers()
        try:
            handler.wfile.write(raw)
        except (BrokenPipeError, ConnectionResetError):
            pass

    # -- routing -------------------------------------------------------------------

    def route(self, method, segments, query, body, token):
        match (method, segments):
            case ("POST", ["auth", "register"]):
                return self._register(body)
            case ("POST", ["auth", "login"]):
                return self._login(body)
            case ("GET", ["activities", "nearby"]):
                return self._nearby(query)
            case ("POST", ["activities"]):
                return self._create_activity(body, token)
            case ("GET", ["activities", activity_id]):
                return self._activity_detail(activity_id, token)
            case ("PATCH", ["activities", activity_id]):
                return self._patch_activity(activity_id, body, token)
            case ("POST", ["activities", activity_id, "otp"]):
                return self._issue_otp(activity_id, token)
            case ("POST", ["devices", "associate"]):
                return self._associate(body)
            case ("DELETE", ["devices", device_id, "association"]):
                return self._dissociate(device_id, token)
            case ("GET", ["activities", activity_id, "occupancy"]):
                return self._occupancy(activity_id, token)
            case ("GET", ["activities", activity_id, "history"]):
                return self._history(activity_id, query, token)
            case ("GET", ["activities", activity_id, "devices"]):
                return self._devices(activity_id, token)
        return 404, {"error": "no such endpoint"}

    # -- handlers -------------------------------------------------------------------

    def _register(self, body):
        email = body.get("email", "")
        password = body.get("password", "")
        if not isinstance(email, str) or not _EMAIL_RE.match(email):
            raise StoreError(400, "invalid email")
        if not isinstance(password, str) or len(password) < 8:
            raise StoreError(400, "password must be at least 8 characters")
        role = ROLE_BUSINESS if email.casefold() in self.business_emails else ROLE_STANDARD
        record = self.store.register_user(email, password, role)
        return 200, {"user_id": record.user_id, "role": record.role}

    def _login(self, body):
        email = body.get("email", "")
        password = body.get("password", "")
        token = self.store.login(email, password)
        return 200, {"token": token, "role": self.store.users[email].role}

    def _maybe_user(self, token) -> UserRecord | None:
        if token is None:
            return None
        try:
            return self.store.authenticate(token)
        except StoreError:
            return None

    def _nearby(self, query):
        try:
            lat = float(query["lat"])
            lon = float(query["lon"])
            radius = float(query["radius"])
        except (KeyError, ValueError):
            raise StoreError(400, "lat, lon and radius are required numbers")
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise StoreError(400, "coordinates out of range")
        if not 0.0 < radius <= MAX_RADIUS_M:
            raise StoreError(400, f"radius must be in (0, {int(MAX_RADIUS_M)}] meters")
        rows = []
        for activity in self.store.public_activities():
            distance = haversine_m(lat, lon, activity.geo[0], activity.geo[1])
            if distance <= radius:
                rows.append((distance, activity))
        rows.sort(key=lambda pair: (pair[0], pair[1].activity_id))
        return 200, {"activities": [self._public_view(a, distance_m=d) for d, a in rows]}

    def _public_view(self, activity, distance_m=None):
        view = {
            "activity_id": activity.activity_id,
            "name": activity.name,
            "address": activity.address,
            "geo": {"lat": activity.geo[0], "lon": activity.geo[1]},
            "capacity": activity.capacity,
        }
        if distance_m is not None:
            view["distance_m"] = round(distance_m, 3)
        if activity.visibility.get("occupancy", True):
            occupancy, as_of = self.view.occupancy(activity.location_id)
            view["occupancy"] = occupancy
            view["as_of_ms"] = as_of
        return view

    def _owner_view(self, activity):
        view = self._public_view(activity)
        view.update(
            location_id=activity.location_id,
            visibility=activity.visibility,
            device_ids=list(activity.device_ids),
        )
        return view

    def _create_activity(self, body, token):
        user = self.store.require_business(token)
        name = body.get("name")
        address = body.get("address")
        capacity = body.get("capacity")
        if not name or not isinstance(name, str):
            raise StoreError(400, "name is required")
        if not address or not isinstance(address, str):
            raise StoreError(400, "address is required")
        if not isinstance(capacity, int) or isinstance(capacity, bool) or capacity <= 0:
            raise StoreError(400, "capacity must be a positive integer")
        geo = self.geocoder.resolve(address)
        activity = self.store.create_activity(user, name, address, capacity, geo)
        self.notifier.notify(
            "activity_created",
            activity_id=activity.activity_id,
            location_id=activity.location_id,
            name=activity.name,
        )
        return 200, self._owner_view(activity)

    def _activity_detail(self, activity_id, token):
        user = self._maybe_user(token)
        activity = self.store.visible_activity(activity_id, user)
        if user is not None and user.user_id == activity.owner_id:
            return 200, self._owner_view(activity)
        return 200, self._public_view(activity)

    def _patch_activity(self, activity_id, body, token):
        user = self.store.require_business(token)
        fields = dict(body)
        if "address" in fields:
            fields["geo"] = list(self.geocoder.resolve(fields["address"]))
        activity = self.store.patch_activity(user, activity_id, fields)
        self.notifier.notify(
            "activity_updated",
            activity_id=activity.activity_id,
            location_id=activity.location_id,
            name=activity.name,
        )
        return 200, self._owner_view(activity)

    def _issue_otp(self, activity_id, token):
        user = self.store.require_business(token)
        grant = self.store.issue_otp(user, activity_id)
        return 200, {
            "otp": grant.otp,
            "ttl_s": grant.ttl_s,
            "expires_ms": grant.issued_ms + grant.ttl_s * 1000,
        }

    def _device_known(self, device_id: str) -> bool:
        if self.whitelist_path is None or not self.whitelist_path.exists():
            return False
        return Whitelist.load(self.whitelist_path).lookup_id(device_id) is not None

    def _associate(self, body):
        device_id = body.get("device_id")
        otp = body.get("otp")
        if not device_id or not isinstance(device_id, str):
            raise StoreError(400, "device_id is required")
        if not otp or not isinstance(otp, str):
            raise StoreError(400, "otp is required")
        activity = self.store.associate_device(device_id, otp, self._device_known(device_id))
        self.notifier.notify(
            "device_associated",
            device_id=device_id,
            activity_id=activity.activity_id,
            location_id=activity.location_id,
            activity_name=activity.name,
        )
        return 200, {
            "device_id": device_id,
            "activity_id": activity.activity_id,
            "location_id": activity.location_id,
            "activity_name": activity.name,
        }

    def _dissociate(self, device_id, token):
        user = self.store.require_business(token)
        activity = self.store.dissociate_device(user, device_id)
        self.notifier.notify(
            "activity_updated",
            activity_id=activity.activity_id,
            location_id=activity.location_id,
            name=activity.name,
        )
        return 200, {"device_id": device_id, "activity_id": activity.activity_id}

    def _occupancy(self, activity_id, token):
        user = self._maybe_user(token)
        activity = self.store.visible_activity(activity_id, user)
        is_owner = user is not None and user.user_id == activity.owner_id
        if not activity.visibility.get("occupancy", True) and not is_owner:
            raise StoreError(404, "no such activity")
        occupancy, as_of = self.view.occupancy(activity.location_id)
        return 200, {"occupancy": occupancy, "capacity": activity.capacity, "as_of_ms": as_of}

    def _history(self, activity_id, query, token):
        user = self.store.require_business(token)
        activity = self.store.visible_activity(activity_id, user)
        if activity.owner_id != user.user_id:
            raise StoreError(403, "history is owner-only")
        try:
            from_ms = int(query.get("from", 0))
            to_ms = int(query.get("to", 2**62))
        except ValueError:
            raise StoreError(400, "from and to must be integer milliseconds")
        if from_ms > to_ms:
            raise StoreError(400, "from must not exceed to")
        points = self.view.history(activity.location_id, from_ms, to_ms)
        return 200, {"points": [{"timestamp_ms": ts, "occupancy": occ} for ts, occ in points]}

    def _devices(self, activity_id, token):
        user = self.store.require_business(token)
        activity = self.store.visible_activity(activity_id, user)
        if activity.owner_id != user.user_id:
            raise StoreError(403, "device list is owner-only")
        return 200, {"devices": [{"device_id": d} for d in activity.device_ids]}
