"""Injectable clocks.

Everything time-dependent (mock transitions, operation deadlines, token
expiry) reads the clock through this interface so tests can run on a
virtual timeline and finish instantly.
"""

from __future__ import annotations

import time
from typing import Protocol


class Clock(Protocol):
    def now(self) -> float:
        """Seconds on this clock's timeline."""
        ...


class SystemClock:
    """Wall-clock seconds (epoch)."""

    def now(self) -> float:
        return time.time()


class VirtualClock:
    """Manually advanced clock starting at t=0. Never moves on its own."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("cannot advance clock backwards")
        self._now += dt
        return self._now
