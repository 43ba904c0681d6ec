"""Time sources.

Components that stamp or expire things take a ``clock`` callable returning
milliseconds, so tests and the simulation harness can drive time explicitly
instead of sleeping through TTLs and grace periods.
"""

from __future__ import annotations

import time
from typing import Callable

Clock = Callable[[], int]


def system_clock() -> int:
    """Wall-clock time in milliseconds since the Unix epoch."""
    return int(time.time() * 1000)


class ManualClock:
    """A clock that only moves when told to. Callable like ``system_clock``."""

    def __init__(self, start_ms: int = 0) -> None:
        self._now_ms = int(start_ms)

    def __call__(self) -> int:
        return self._now_ms

    def advance(self, ms: int) -> None:
        self._now_ms += int(ms)

    def set(self, ms: int) -> None:
        self._now_ms = int(ms)
