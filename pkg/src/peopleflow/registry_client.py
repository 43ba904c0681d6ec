"""Thin HTTP client for the registry API (stdlib only).

Used by the CLI and the test harnesses. Every call returns
``(status_code, parsed_json)`` without raising on HTTP error statuses, so
callers can assert on the API's documented status conventions.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request


class RegistryClient:
    def __init__(self, base_url: str, timeout_s: float = 10.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def request(
        self,
        method: str,
        path: str,
        body: dict | None = None,
        token: str | None = None,
    ) -> tuple[int, dict]:
        data = json.dumps(body).encode("utf-8") if body is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method)
        req.add_header("Content-Type", "application/json")
        if token:
            req.add_header("Authorization", f"Bearer {token}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                return resp.status, json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            raw = exc.read().decode("utf-8", errors="replace")
            try:
                payload = json.loads(raw)
            except json.JSONDecodeError:
                payload = {"error": raw}
            return exc.code, payload

    # convenience wrappers

    def register(self, email: str, password: str):
        return self.request("POST", "/auth/register", {"email": email, "password": password})

    def login(self, email: str, password: str):
        return self.request("POST", "/auth/login", {"email": email, "password": password})

    def create_activity(self, token: str, name: str, address: str, capacity: int):
        return self.request(
            "POST", "/activities",
            {"name": name, "address": address, "capacity": capacity}, token,
        )

    def patch_activity(self, token: str, activity_id: str, fields: dict):
        return self.request("PATCH", f"/activities/{activity_id}", fields, token)

    def issue_otp(self, token: str, activity_id: str):
        return self.request("POST", f"/activities/{activity_id}/otp", {}, token)

    def associate_device(self, device_id: str, otp: str):
        return self.request("POST", "/devices/associate", {"device_id": device_id, "otp": otp})

    def nearby(self, lat: float, lon: float, radius_m: float):
        return self.request("GET", f"/activities/nearby?lat={lat}&lon={lon}&radius={radius_m}")

    def occupancy(self, activity_id: str, token: str | None = None):
        return self.request("GET", f"/activities/{activity_id}/occupancy", token=token)

    def history(self, token: str, activity_id: str, from_ms: int, to_ms: int):
        return self.request(
            "GET", f"/activities/{activity_id}/history?from={from_ms}&to={to_ms}", token=token
        )

    def devices(self, token: str, activity_id: str):
        return self.request("GET", f"/activities/{activity_id}/devices", token=token)

    def activity(self, activity_id: str, token: str | None = None):
        return self.request("GET", f"/activities/{activity_id}", token=token)
