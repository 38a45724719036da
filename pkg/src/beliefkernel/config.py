"""Enumeration caps, overridable through the ``BELIEFKERNEL_CAPS`` environment variable.

The variable holds comma-separated ``name=value`` pairs, e.g.
``BELIEFKERNEL_CAPS="composite_sets=8192,belief_nodes=500000"``.
"""
from __future__ import annotations

import os

DEFAULT_CAPS = {
    "composite_sets": 4096,
    "belief_nodes": 200_000,
}

DEFAULT_TOL = 1e-9


class CapExceeded(RuntimeError):
    """Raised when an enumeration would exceed a configured cap."""

    def __init__(self, name: str, cap: int, requested: int | None = None):
        self.name = name
        self.cap = cap
        self.requested = requested
        msg = f"{name} cap of {cap} exceeded"
        if requested is not None:
            msg += f" (requested {requested})"
        super().__init__(msg)


def get_cap(name: str) -> int:
    raw = os.environ.get("BELIEFKERNEL_CAPS", "")
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed BELIEFKERNEL_CAPS entry {item!r}")
        if key.strip() == name:
            return int(value)
    return DEFAULT_CAPS[name]
