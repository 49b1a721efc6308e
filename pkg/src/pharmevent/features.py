"""Assembly of the classifier feature space from market, company and
announcement information.

Missing company fundamentals stay NaN (the boosted trees route missing
values by learned default directions). ICD-10 codes enter as one-hot
chapter indicators plus a nosology crowding count: the number of distinct
companies with an earlier announcement sharing an ICD-10 category.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boost import FeatureMatrix
from .corpus import Announcement, Fundamentals, Phase, Polarity
from .forecast import NormalizedPath
from .impact import PriceClass
from .market import MarketFeatures

_PHASES = (Phase.I, Phase.II, Phase.III, Phase.IV, Phase.UNKNOWN)
_POLARITIES = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)


@dataclass(frozen=True)
class EventRecord:
    """An announcement joined with everything the classifier sees."""

    announcement: Announcement
    event_index: int
    market: MarketFeatures
    fundamentals: Fundamentals | None
    expected: NormalizedPath
    actual: NormalizedPath
    ncar: float
    price_class: PriceClass


def nosology_crowding(announcements: list[Announcement]) -> dict[str, int]:
    """Distinct earlier-announcing companies sharing an ICD-10 category.

    Stands in for the number of existing drugs addressing the announced
    nosology; strictly-earlier counting avoids lookahead.
    """
    ordered = sorted(announcements, key=lambda a: (a.date, a.id))
    seen: dict[str, set[str]] = {}
    out: dict[str, int] = {}
    for ann in ordered:
        companies: set[str] = set()
        for code in ann.icd10:
            companies |= seen.get(code, set())
        companies.discard(ann.ticker)
        out[ann.id] = len(companies)
        for code in ann.icd10:
            seen.setdefault(code, set()).add(ann.ticker)
    return out


def build_feature_matrix(records: list[EventRecord]) -> FeatureMatrix:
    """Fixed-schema feature rows for a set of event records.

    Report-item columns are the union of item names across the dataset
    (absent items are NaN). Rows follow the record order.
    """
    income_names = sorted({k for r in records if r.fundamentals for k in r.fundamentals.income_items})
    balance_names = sorted({k for r in records if r.fundamentals for k in r.fundamentals.balance_items})
    cashflow_names = sorted({k for r in records if r.fundamentals for k in r.fundamentals.cashflow_items})
    chapters = sorted({code[0] for r in records for code in r.announcement.icd10})
    crowding = nosology_crowding([r.announcement for r in records])

    schema: list[str] = [
        "drug_portfolio_size",
        "company_age_years",
        "employees",
        "shareholders",
        "shares_outstanding",
    ]
    schema += [f"income:{n}" for n in income_names]
    schema += [f"balance:{n}" for n in balance_names]
    schema += [f"cashflow:{n}" for n in cashflow_names]
    schema += [
        "peaks_per_year",
        "last_peak_duration",
        "trend_30",
        "trend_prev_30",
        "index_trend_30",
        "volatility_200",
    ]
    schema += [f"polarity_{p.value}" for p in _POLARITIES]
    schema += [f"phase_{p.value}" for p in _PHASES]
    schema += [f"icd_chapter_{c}" for c in chapters]
    schema += ["nosology_drug_count"]

    rows = np.full((len(records), len(schema)), np.nan)
    col = {name: j for j, name in enumerate(schema)}
    for i, r in enumerate(records):
        ann = r.announcement
        f = r.fundamentals
        if f is not None:
            rows[i, col["drug_portfolio_size"]] = f.portfolio_size
            rows[i, col["company_age_years"]] = (ann.date - f.ipo_date).days / 365.25
            if f.employees is not None:
                rows[i, col["employees"]] = f.employees
            if f.shareholders is not None:
                rows[i, col["shareholders"]] = f.shareholders
            if f.shares_outstanding is not None:
                rows[i, col["shares_outstanding"]] = f.shares_outstanding
            for name, value in f.income_items.items():
                rows[i, col[f"income:{name}"]] = value
            for name, value in f.balance_items.items():
                rows[i, col[f"balance:{name}"]] = value
            for name, value in f.cashflow_items.items():
                rows[i, col[f"cashflow:{name}"]] = value
        m = r.market
        rows[i, col["peaks_per_year"]] = m.peaks_per_year
        rows[i, col["last_peak_duration"]] = m.last_peak_duration
        rows[i, col["trend_30"]] = m.trend_30
        rows[i, col["trend_prev_30"]] = m.trend_prev_30
        rows[i, col["index_trend_30"]] = m.index_trend_30
        rows[i, col["volatility_200"]] = m.volatility_200
        for p in _POLARITIES:
            rows[i, col[f"polarity_{p.value}"]] = 1.0 if ann.polarity == p else 0.0
        for p in _PHASES:
            rows[i, col[f"phase_{p.value}"]] = 1.0 if ann.phase == p else 0.0
        for c in chapters:
            rows[i, col[f"icd_chapter_{c}"]] = 1.0 if any(code[0] == c for code in ann.icd10) else 0.0
        rows[i, col["nosology_drug_count"]] = crowding[ann.id]
    return FeatureMatrix(schema=tuple(schema), values=rows)
