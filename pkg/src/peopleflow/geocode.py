"""Address resolution behind a function-shaped contract.

The registry only needs ``resolve(address) -> (lat, lon)``. The default
implementation is a fixed in-repo table so nothing in the stack touches
the network; swap in a real service by passing any object with the same
method.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .errors import GeocodeError

# Fixed test addresses. "1 Museum Square" and "2 Riverside Walk" sit about
# 100 m and 5 km from the (43.1100, 12.3900) reference point used in tests.
DEFAULT_TABLE = {
    "1 museum square, perugia": (43.110899, 12.3900),
    "2 theatre lane, perugia": (43.1107, 12.3968),
    "2 riverside walk, perugia": (43.065037, 12.3900),
    "9 gallery road, assisi": (43.0707, 12.6196),
    "5 station street, florence": (43.7764, 11.2481),
}


def normalize_address(address: str) -> str:
    return re.sub(r"\s+", " ", address.strip().casefold())


class StubGeocoder:
    def __init__(self, table: dict | None = None) -> None:
        self.table = {normalize_address(k): tuple(v) for k, v in (table or DEFAULT_TABLE).items()}

    def resolve(self, address: str) -> tuple[float, float]:
        key = normalize_address(address)
        if key not in self.table:
            raise GeocodeError(f"unknown address {address!r}")
        return self.table[key]

    @classmethod
    def from_file(cls, path: str | Path) -> "StubGeocoder":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))
