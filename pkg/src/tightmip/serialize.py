"""Helpers for the JSON file formats used across the package.

All real numbers are written as decimal strings (shortest repr that
round-trips the exact float64), never as JSON numbers, so files are
bit-stable across writers and parse back to identical floats.
"""

from __future__ import annotations

import json
import os


def fnum(x) -> str:
    """Encode a float64 as its shortest round-tripping decimal string."""
    return repr(float(x))


def pnum(s) -> float:
    """Decode a decimal string written by fnum. Accepts inf/-inf/nan."""
    return float(s)


def fvec(values) -> list:
    return [fnum(v) for v in values]


def pvec(strings) -> list:
    return [pnum(s) for s in strings]


def dump_json(obj, path) -> None:
    """Write JSON with a stable key order and a trailing newline."""
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
