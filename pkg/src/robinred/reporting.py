"""JSON-safe report plumbing."""

from __future__ import annotations

import json

import numpy as np


def plain(obj):
    """Recursively convert numpy scalars/arrays so json can emit them."""
    if isinstance(obj, dict):
        return {k: plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dump_report(report: dict) -> str:
    """Deterministic, full-precision JSON (repr floats round-trip exactly)."""
    return json.dumps(plain(report), indent=2)
