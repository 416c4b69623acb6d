"""Canonical JSON/CSV emission and hashing.

Canonical JSON here means: sorted keys, two-space indent, UTF-8 without
escaping, no NaN/Infinity, LF line endings and a trailing newline. Floats
are printed with Python's shortest round-trip repr, which is stable across
platforms.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from typing import Any, Iterable, Sequence

NANO = 10**9


def q9(x: float) -> float:
    """Round to 9 decimal places, half-even on the exact binary value."""
    r = round(float(x), 9)
    return 0.0 if r == 0 else r


def to_nanos(x: float) -> int:
    """Integer count of 1e-9 units for a value already rounded by :func:`q9`."""
    return round(x * NANO)


def from_nanos(n: int) -> float:
    return n / NANO


def div_half_even(num: int, den: int) -> int:
    """``num / den`` rounded to the nearest integer, ties to even."""
    if den <= 0:
        raise ValueError("denominator must be positive")
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q % 2 == 1):
        q += 1
    return q


def _reject(obj: Any) -> Any:
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(
        obj,
        sort_keys=True,
        indent=2,
        ensure_ascii=False,
        allow_nan=False,
        default=_reject,
    ) + "\n"


def dump_bytes(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_hash(obj: Any) -> str:
    return sha256_hex(dump_bytes(obj))


def fmt_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")
