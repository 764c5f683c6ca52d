"""CSV ingestion for dividend and return histories."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .core import DividendSeries
from .errors import DuplicateDate, NonPositiveDividend, ParseError

log = logging.getLogger(__name__)

DIVIDEND_HEADER = ["date", "dividend"]
RETURN_HEADER = ["date", "return"]


def _read_rows(path, header: List[str]) -> List[Tuple[int, dt.date, float]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            raise ParseError(1, f"expected header {','.join(header)!r}")
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 2:
                raise ParseError(line, f"expected 2 fields, got {len(rec)}")
            try:
                date = dt.date.fromisoformat(rec[0].strip())
            except ValueError:
                raise ParseError(line, f"bad ISO-8601 date {rec[0]!r}") from None
            text = rec[1].strip()
            try:
                value = float(text)
            except ValueError:
                raise ParseError(line, f"bad number {text!r}") from None
            if not math.isfinite(value) or "_" in text:
                raise ParseError(line, f"bad number {text!r}")
            rows.append((line, date, value))
    return rows


def _sort_unique(rows, path):
    if any(b[1] < a[1] for a, b in zip(rows, rows[1:])):
        log.warning("%s: rows out of date order; sorting", path)
    rows = sorted(rows, key=lambda r: r[1])
    for a, b in zip(rows, rows[1:]):
        if a[1] == b[1]:
            raise DuplicateDate(b[0], f"duplicate date {b[1].isoformat()}")
    return rows


def ingest_dividends(path, ticker: str | None = None) -> DividendSeries:
    """Read a ``date,dividend`` CSV into a :class:`DividendSeries`.

    Rows are sorted by date (with a logged warning if they were not).
    """
    rows = _read_rows(path, DIVIDEND_HEADER)
    for line, _, value in rows:
        if value <= 0:
            raise NonPositiveDividend(line, f"dividend {value} is not positive")
    if not rows:
        raise ParseError(2, "no observations")
    rows = _sort_unique(rows, path)
    return DividendSeries(
        ticker or Path(path).stem,
        tuple(r[1] for r in rows),
        np.array([r[2] for r in rows]),
    )


def ingest_returns(path) -> Tuple[Tuple[dt.date, ...], np.ndarray]:
    """Read a ``date,return`` CSV; returns (dates, returns) sorted by date."""
    rows = _sort_unique(_read_rows(path, RETURN_HEADER), path)
    if not rows:
        raise ParseError(2, "no observations")
    return tuple(r[1] for r in rows), np.array([r[2] for r in rows])
