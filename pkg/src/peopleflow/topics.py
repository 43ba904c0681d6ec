"""Topic names and subscription filters.

Topics are ``/``-separated levels of ``[A-Za-z0-9_-]+``. Filters may use
``+`` for exactly one level and a trailing ``#`` for any suffix (including
the empty one, so ``a/#`` also matches ``a``).
"""

from __future__ import annotations

import re

from .errors import ProtocolError

_LEVEL_RE = re.compile(r"[A-Za-z0-9_-]+\Z")


def split_levels(topic: str) -> list[str]:
    if not topic:
        raise ProtocolError("empty topic")
    levels = topic.split("/")
    if any(level == "" for level in levels):
        raise ProtocolError(f"empty level in {topic!r}")
    return levels


def validate_topic(topic: str) -> list[str]:
    levels = split_levels(topic)
    for level in levels:
        if not _LEVEL_RE.match(level):
            raise ProtocolError(f"invalid topic level {level!r}")
    return levels


def validate_filter(topic_filter: str) -> list[str]:
    levels = split_levels(topic_filter)
    for i, level in enumerate(levels):
        if level == "+":
            continue
        if level == "#":
            if i != len(levels) - 1:
                raise ProtocolError("# only allowed as the final level")
            continue
        if not _LEVEL_RE.match(level):
            raise ProtocolError(f"invalid filter level {level!r}")
    return levels


def topic_matches(topic_filter: str, topic: str) -> bool:
    """True when ``topic`` is selected by ``topic_filter``. Both must be
    syntactically valid; call the validators first on untrusted input."""
    flevels = topic_filter.split("/")
    tlevels = topic.split("/")
    i = 0
    for flevel in flevels:
        if flevel == "#":
            return True
        if i >= len(tlevels):
            return False
        if flevel != "+" and flevel != tlevels[i]:
            return False
        i += 1
    return i == len(tlevels)
