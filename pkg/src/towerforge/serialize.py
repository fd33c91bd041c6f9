"""Canonical JSON encoding used for every serialized artifact.

Sorted keys, no whitespace, and no NaN/Infinity, so equal values always
produce byte-identical text regardless of construction order or platform.
"""

from __future__ import annotations

import json


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def canonical_bytes(obj) -> bytes:
    return canonical_dumps(obj).encode("utf-8")
