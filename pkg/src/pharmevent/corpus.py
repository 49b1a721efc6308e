"""Data model and ingestion: announcements, price/index series, fundamentals.

File formats
------------
announcements.jsonl   one JSON object per line: id, ticker, date, text,
                      optional icd10 (list), phase, polarity
prices/<TICKER>.csv   date,close,volume (ISO dates)
index.csv             date,close
fundamentals.csv      ticker,year,ipo_date,portfolio_size,employees,
                      shareholders,shares_outstanding,total_revenue,
                      cash_from_operating_activities,total_equity,
                      income:<item>,balance:<item>,cashflow:<item>,...

All loaded structures are immutable and safe to share across threads.
"""
from __future__ import annotations

import bisect
import csv
import json
import re
from dataclasses import dataclass, field, replace
from datetime import date as Date
from datetime import timedelta
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateId,
    EmptySeries,
    LeadingGap,
    NonPositivePrice,
    ParseError,
    ZeroDenominator,
)

ICD10_RE = re.compile(r"^[A-Z][0-9]{2}$")


class Polarity(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class Phase(Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class Announcement:
    """One clinical-trial result release."""

    id: str
    ticker: str
    date: Date
    text: str
    icd10: tuple[str, ...] = ()
    phase: Phase | None = None
    polarity: Polarity | None = None

    def with_polarity(self, polarity: Polarity) -> "Announcement":
        return replace(self, polarity=polarity)


@dataclass(frozen=True)
class PriceSeries:
    """Daily close and volume on strictly increasing trading dates."""

    ticker: str
    dates: tuple[Date, ...]
    close: tuple[float, ...]
    volume: tuple[float, ...]

    def __post_init__(self):
        n = len(self.dates)
        if n == 0:
            raise EmptySeries(f"empty series for {self.ticker}")
        if len(self.close) != n or len(self.volume) != n:
            raise ParseError(f"length mismatch in series {self.ticker}")
        for i in range(1, n):
            if self.dates[i] <= self.dates[i - 1]:
                raise ParseError(f"dates not strictly increasing at {self.dates[i]}")
        for d, c in zip(self.dates, self.close):
            if not c > 0:
                raise NonPositivePrice(d)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class IndexSeries:
    """Market index closes (no volume)."""

    name: str
    dates: tuple[Date, ...]
    close: tuple[float, ...]

    def __post_init__(self):
        n = len(self.dates)
        if n == 0:
            raise EmptySeries(f"empty index {self.name}")
        if len(self.close) != n:
            raise ParseError(f"length mismatch in index {self.name}")
        for i in range(1, n):
            if self.dates[i] <= self.dates[i - 1]:
                raise ParseError(f"dates not strictly increasing at {self.dates[i]}")
        for d, c in zip(self.dates, self.close):
            if not c > 0:
                raise NonPositivePrice(d)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class Fundamentals:
    """One company-year of report values.

    Income-statement items come normalized by total revenue, balance-sheet
    items by cash from operating activities, and cash-flow items by total
    equity. Shares outstanding, employees and shareholder counts stay raw.
    The original column values are kept in ``raw`` for lossless
    serialization.
    """

    ticker: str
    year: int
    ipo_date: Date
    portfolio_size: int
    employees: int | None = None
    shareholders: int | None = None
    shares_outstanding: float | None = None
    income_items: dict[str, float] = field(default_factory=dict)
    balance_items: dict[str, float] = field(default_factory=dict)
    cashflow_items: dict[str, float] = field(default_factory=dict)
    raw: dict[str, str] = field(default_factory=dict)


# --- announcements -----------------------------------------------------------

def _parse_date(s: str, line: int | None = None) -> Date:
    try:
        return Date.fromisoformat(s)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"bad date {s!r}: {exc}", line=line) from exc


def load_announcements(path: str | Path) -> list[Announcement]:
    """Parse an announcements JSONL file; ids must be unique."""
    out: list[Announcement] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=lineno) from exc
            for key in ("id", "ticker", "date", "text"):
                if key not in obj:
                    raise ParseError(f"missing field {key!r}", line=lineno)
            ann_id = str(obj["id"])
            if ann_id in seen:
                raise DuplicateId(ann_id)
            seen.add(ann_id)
            icd10 = tuple(str(c) for c in obj.get("icd10") or ())
            for code in icd10:
                if not ICD10_RE.match(code):
                    raise ParseError(f"bad ICD-10 code {code!r}", line=lineno)
            phase = None
            if obj.get("phase") is not None:
                try:
                    phase = Phase(obj["phase"])
                except ValueError as exc:
                    raise ParseError(f"bad phase {obj['phase']!r}", line=lineno) from exc
            polarity = None
            if obj.get("polarity") is not None:
                try:
                    polarity = Polarity(obj["polarity"])
                except ValueError as exc:
                    raise ParseError(f"bad polarity {obj['polarity']!r}", line=lineno) from exc
            out.append(
                Announcement(
                    id=ann_id,
                    ticker=str(obj["ticker"]),
                    date=_parse_date(obj["date"], lineno),
                    text=str(obj["text"]),
                    icd10=icd10,
                    phase=phase,
                    polarity=polarity,
                )
            )
    out.sort(key=lambda a: (a.date, a.id))
    return out


def save_announcements(path: str | Path, announcements: list[Announcement]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in sorted(announcements, key=lambda a: (a.date, a.id)):
            obj = {
                "id": a.id,
                "ticker": a.ticker,
                "date": a.date.isoformat(),
                "text": a.text,
            }
            if a.icd10:
                obj["icd10"] = list(a.icd10)
            if a.phase is not None:
                obj["phase"] = a.phase.value
            if a.polarity is not None:
                obj["polarity"] = a.polarity.value
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


# --- price and index series --------------------------------------------------

def load_price_series(path: str | Path, ticker: str) -> PriceSeries:
    """Read a date,close,volume CSV; rows are sorted by date on the way in."""
    rows: list[tuple[Date, float, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["date", "close", "volume"]:
            raise ParseError(f"expected header date,close,volume in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 3:
                raise ParseError("expected 3 columns", line=lineno)
            d = _parse_date(row[0].strip(), lineno)
            try:
                close = float(row[1])
                volume = float(row[2])
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", line=lineno) from exc
            if not close > 0:
                raise NonPositivePrice(d)
            if volume < 0:
                raise ParseError(f"negative volume on {d}", line=lineno)
            rows.append((d, close, volume))
    if not rows:
        raise EmptySeries(f"no rows in {path}")
    rows.sort(key=lambda r: r[0])
    for i in range(1, len(rows)):
        if rows[i][0] == rows[i - 1][0]:
            raise ParseError(f"duplicate date {rows[i][0]}")
    return PriceSeries(
        ticker=ticker,
        dates=tuple(r[0] for r in rows),
        close=tuple(r[1] for r in rows),
        volume=tuple(r[2] for r in rows),
    )


def save_price_series(path: str | Path, series: PriceSeries) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "close", "volume"])
        for d, c, v in zip(series.dates, series.close, series.volume):
            writer.writerow([d.isoformat(), repr(c), repr(v)])


def load_index_series(path: str | Path, name: str = "NBI") -> IndexSeries:
    rows: list[tuple[Date, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["date", "close"]:
            raise ParseError(f"expected header date,close in {path}")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            d = _parse_date(row[0].strip(), lineno)
            try:
                close = float(row[1])
            except ValueError as exc:
                raise ParseError(f"bad number: {exc}", line=lineno) from exc
            if not close > 0:
                raise NonPositivePrice(d)
            rows.append((d, close))
    if not rows:
        raise EmptySeries(f"no rows in {path}")
    rows.sort(key=lambda r: r[0])
    for i in range(1, len(rows)):
        if rows[i][0] == rows[i - 1][0]:
            raise ParseError(f"duplicate date {rows[i][0]}")
    return IndexSeries(name=name, dates=tuple(r[0] for r in rows), close=tuple(r[1] for r in rows))


def save_index_series(path: str | Path, series: IndexSeries) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "close"])
        for d, c in zip(series.dates, series.close):
            writer.writerow([d.isoformat(), repr(c)])


def align_to_calendar(series: PriceSeries, calendar: tuple[Date, ...] | list[Date]) -> PriceSeries:
    """Reindex a series onto a trading calendar.

    Missing dates are forward-filled from the last known close with volume 0
    (a halt keeps the last traded price tradable). A calendar that starts
    before the first observation has nothing to fill from and raises
    LeadingGap. Idempotent: aligning an aligned series is the identity.
    """
    calendar = tuple(calendar)
    for i in range(1, len(calendar)):
        if calendar[i] <= calendar[i - 1]:
            raise ParseError("calendar not strictly increasing")
    if not calendar:
        raise EmptySeries("empty calendar")
    if calendar[0] < series.dates[0]:
        raise LeadingGap(
            f"calendar starts {calendar[0]}, before first observation {series.dates[0]}"
        )
    if calendar == series.dates:
        return series
    known = dict(zip(series.dates, zip(series.close, series.volume)))
    src_dates = series.dates
    closes: list[float] = []
    volumes: list[float] = []
    for d in calendar:
        if d in known:
            c, v = known[d]
            closes.append(c)
            volumes.append(v)
        else:
            j = bisect.bisect_right(src_dates, d) - 1
            closes.append(series.close[j])
            volumes.append(0.0)
    return PriceSeries(ticker=series.ticker, dates=calendar, close=tuple(closes), volume=tuple(volumes))


def next_trading_index(calendar: tuple[Date, ...], event_date: Date) -> int | None:
    """Map an announcement date to its event day t=0.

    An announcement on a non-trading day maps to the next trading day (the
    market can only react at the next open). Returns None when the date
    falls after the calendar end.
    """
    i = bisect.bisect_left(calendar, event_date)
    return i if i < len(calendar) else None


# --- fundamentals --------------------------------------------------------------

_FUND_FIXED = [
    "ticker",
    "year",
    "ipo_date",
    "portfolio_size",
    "employees",
    "shareholders",
    "shares_outstanding",
    "total_revenue",
    "cash_from_operating_activities",
    "total_equity",
]


def load_fundamentals(path: str | Path) -> list[Fundamentals]:
    """Read company-year report rows and apply the normalization scheme.

    ``income:`` columns divide by total_revenue, ``balance:`` columns by
    cash_from_operating_activities, ``cashflow:`` columns by total_equity.
    A zero denominator rejects the row. Share counts, employees and
    shareholder numbers are kept unnormalized.
    """
    out: list[Fundamentals] = []
    seen: set[tuple[str, int]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"empty fundamentals file {path}")
        missing = [c for c in _FUND_FIXED[:4] if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"fundamentals missing columns {missing}")
        item_cols = [c for c in reader.fieldnames if c.partition(":")[0] in ("income", "balance", "cashflow")]
        for lineno, row in enumerate(reader, start=2):
            ticker = (row.get("ticker") or "").strip()
            if not ticker:
                raise ParseError("missing ticker", line=lineno)
            try:
                year = int(row["year"])
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad year: {exc}", line=lineno) from exc
            if (ticker, year) in seen:
                raise ParseError(f"duplicate fundamentals row for {ticker} {year}", line=lineno)
            seen.add((ticker, year))
            ipo = _parse_date((row.get("ipo_date") or "").strip(), lineno)
            try:
                portfolio_size = int(row["portfolio_size"])
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad portfolio_size: {exc}", line=lineno) from exc
            if portfolio_size < 0:
                raise ParseError("negative portfolio_size", line=lineno)

            def opt_num(col: str) -> float | None:
                v = (row.get(col) or "").strip()
                if not v:
                    return None
                try:
                    return float(v)
                except ValueError as exc:
                    raise ParseError(f"bad {col}: {exc}", line=lineno) from exc

            def denom(col: str) -> float | None:
                v = opt_num(col)
                return v

            denominators = {
                "income": denom("total_revenue"),
                "balance": denom("cash_from_operating_activities"),
                "cashflow": denom("total_equity"),
            }
            groups: dict[str, dict[str, float]] = {"income": {}, "balance": {}, "cashflow": {}}
            for col in item_cols:
                prefix, _, item = col.partition(":")
                v = (row.get(col) or "").strip()
                if not v:
                    continue
                try:
                    value = float(v)
                except ValueError as exc:
                    raise ParseError(f"bad {col}: {exc}", line=lineno) from exc
                den = denominators[prefix]
                if den is None or den == 0.0:
                    raise ZeroDenominator(ticker, year, which=prefix)
                groups[prefix][item] = value / den
            employees = opt_num("employees")
            shareholders = opt_num("shareholders")
            shares = opt_num("shares_outstanding")
            if shares is not None and shares <= 0:
                raise ParseError("shares_outstanding must be positive", line=lineno)
            out.append(
                Fundamentals(
                    ticker=ticker,
                    year=year,
                    ipo_date=ipo,
                    portfolio_size=portfolio_size,
                    employees=int(employees) if employees is not None else None,
                    shareholders=int(shareholders) if shareholders is not None else None,
                    shares_outstanding=shares,
                    income_items=groups["income"],
                    balance_items=groups["balance"],
                    cashflow_items=groups["cashflow"],
                    raw={k: (row.get(k) or "") for k in reader.fieldnames},
                )
            )
    out.sort(key=lambda f: (f.ticker, f.year))
    return out


def save_fundamentals(path: str | Path, rows: list[Fundamentals]) -> None:
    """Write fundamentals back out from the raw column values."""
    if not rows:
        raise EmptySeries("no fundamentals rows to save")
    fieldnames = list(rows[0].raw.keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for f in sorted(rows, key=lambda f: (f.ticker, f.year)):
            writer.writerow(f.raw)


def latest_fundamentals(
    rows: list[Fundamentals], ticker: str, event_date: Date
) -> Fundamentals | None:
    """Most recent fiscal year strictly before the event date (no lookahead)."""
    best: Fundamentals | None = None
    for f in rows:
        if f.ticker != ticker or f.year >= event_date.year:
            continue
        if best is None or f.year > best.year:
            best = f
    return best


def weekday_calendar(start: Date, n_days: int) -> tuple[Date, ...]:
    """A synthetic trading calendar of n_days consecutive weekdays."""
    out: list[Date] = []
    d = start
    while len(out) < n_days:
        if d.weekday() < 5:
            out.append(d)
        d = d + timedelta(days=1)
    return tuple(out)
