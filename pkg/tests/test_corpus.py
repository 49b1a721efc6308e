from datetime import date

import numpy as np
import pytest

from pharmevent import corpus
from pharmevent.errors import (
    DuplicateId,
    LeadingGap,
    NonPositivePrice,
    ParseError,
    ZeroDenominator,
)

from conftest import make_series, write_announcements


def _ann(i, ticker="AAA", d="2019-03-01", text="trial update", **kw):
    row = {"id": f"A{i}", "ticker": ticker, "date": d, "text": text}
    row.update(kw)
    return row


class TestLoadAnnouncements:
    def test_two_valid_lines(self, tmp_path):
        path = write_announcements(tmp_path / "a.jsonl", [_ann(1), _ann(2, d="2019-03-04")])
        anns = corpus.load_announcements(path)
        assert len(anns) == 2
        assert anns[0].id == "A1"

    def test_missing_date_reports_line(self, tmp_path):
        rows = [_ann(1)]
        path = tmp_path / "a.jsonl"
        with open(path, "w") as fh:
            import json

            fh.write(json.dumps(rows[0]) + "\n")
            fh.write(json.dumps({"id": "A2", "ticker": "AAA", "text": "x"}) + "\n")
        with pytest.raises(ParseError) as err:
            corpus.load_announcements(path)
        assert err.value.line == 2

    def test_duplicate_id(self, tmp_path):
        path = write_announcements(tmp_path / "a.jsonl", [_ann(1), _ann(1, d="2019-04-01")])
        with pytest.raises(DuplicateId, match="A1"):
            corpus.load_announcements(path)

    def test_bad_icd10_rejected(self, tmp_path):
        path = write_announcements(tmp_path / "a.jsonl", [_ann(1, icd10=["C5"])])
        with pytest.raises(ParseError):
            corpus.load_announcements(path)

    def test_optional_fields_parsed(self, tmp_path):
        path = write_announcements(
            tmp_path / "a.jsonl",
            [_ann(1, icd10=["C50"], phase="III", polarity="negative")],
        )
        (ann,) = corpus.load_announcements(path)
        assert ann.icd10 == ("C50",)
        assert ann.phase is corpus.Phase.III
        assert ann.polarity is corpus.Polarity.NEGATIVE

    def test_round_trip(self, tmp_path):
        path = write_announcements(
            tmp_path / "a.jsonl",
            [_ann(1, icd10=["C50"], phase="II"), _ann(2, d="2019-05-02", text="x, yé")],
        )
        anns = corpus.load_announcements(path)
        out = tmp_path / "b.jsonl"
        corpus.save_announcements(out, anns)
        assert corpus.load_announcements(out) == anns


class TestPriceSeries:
    def _write(self, path, rows, header="date,close,volume"):
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")
        return path

    def test_three_rows(self, tmp_path):
        path = self._write(
            tmp_path / "p.csv",
            [("2019-01-02", 10.0, 100), ("2019-01-03", 10.5, 110), ("2019-01-04", 10.2, 90)],
        )
        series = corpus.load_price_series(path, "AAA")
        assert len(series) == 3

    def test_zero_close_rejected(self, tmp_path):
        path = self._write(tmp_path / "p.csv", [("2019-01-02", 0.0, 100)])
        with pytest.raises(NonPositivePrice):
            corpus.load_price_series(path, "AAA")

    def test_unsorted_rows_sorted(self, tmp_path):
        path = self._write(
            tmp_path / "p.csv",
            [("2019-01-04", 10.2, 90), ("2019-01-02", 10.0, 100), ("2019-01-03", 10.5, 110)],
        )
        series = corpus.load_price_series(path, "AAA")
        assert series.dates[0] == date(2019, 1, 2)
        assert series.close == (10.0, 10.5, 10.2)

    def test_duplicate_dates_rejected(self, tmp_path):
        path = self._write(
            tmp_path / "p.csv", [("2019-01-02", 10.0, 100), ("2019-01-02", 10.5, 110)]
        )
        with pytest.raises(ParseError):
            corpus.load_price_series(path, "AAA")

    def test_round_trip(self, tmp_path):
        series = make_series(n=10, close=[100.0 + 0.1 * i for i in range(10)])
        out = tmp_path / "p.csv"
        corpus.save_price_series(out, series)
        assert corpus.load_price_series(out, "TST") == series


class TestAlignToCalendar:
    def test_identity_when_already_aligned(self):
        series = make_series(n=20)
        assert corpus.align_to_calendar(series, series.dates) == series

    def test_forward_fill_missing_day(self):
        series = make_series(n=5, close=[10, 11, 12, 13, 14])
        calendar = series.dates
        gappy = corpus.PriceSeries(
            ticker="TST",
            dates=calendar[:2] + calendar[3:],
            close=(10.0, 11.0, 13.0, 14.0),
            volume=(1.0, 1.0, 1.0, 1.0),
        )
        aligned = corpus.align_to_calendar(gappy, calendar)
        assert aligned.dates == calendar
        assert aligned.close[2] == 11.0  # carried forward
        assert aligned.volume[2] == 0.0

    def test_leading_gap(self):
        series = make_series(n=5, start=date(2019, 6, 3))
        early = corpus.weekday_calendar(date(2019, 5, 1), 30)
        with pytest.raises(LeadingGap):
            corpus.align_to_calendar(series, early)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        full = corpus.weekday_calendar(date(2019, 1, 1), 60)
        keep = sorted(rng.choice(60, size=35, replace=False))
        series = corpus.PriceSeries(
            ticker="TST",
            dates=tuple(full[i] for i in keep),
            close=tuple(float(v) for v in rng.uniform(5, 50, size=35)),
            volume=tuple(float(v) for v in rng.integers(0, 100, size=35)),
        )
        once = corpus.align_to_calendar(series, full[keep[0] :])
        twice = corpus.align_to_calendar(once, full[keep[0] :])
        assert once == twice


class TestNextTradingIndex:
    def test_trading_day_maps_to_itself(self):
        cal = corpus.weekday_calendar(date(2019, 1, 1), 10)
        assert corpus.next_trading_index(cal, cal[3]) == 3

    def test_weekend_maps_forward(self):
        cal = corpus.weekday_calendar(date(2019, 1, 1), 10)
        saturday = date(2019, 1, 5)
        idx = corpus.next_trading_index(cal, saturday)
        assert cal[idx] == date(2019, 1, 7)  # Monday

    def test_after_calendar_end(self):
        cal = corpus.weekday_calendar(date(2019, 1, 1), 5)
        assert corpus.next_trading_index(cal, date(2020, 1, 1)) is None


class TestFundamentals:
    HEADER = (
        "ticker,year,ipo_date,portfolio_size,employees,shareholders,shares_outstanding,"
        "total_revenue,cash_from_operating_activities,total_equity,income:COGS,balance:Total Assets"
    )

    def _write(self, path, rows):
        with open(path, "w") as fh:
            fh.write(self.HEADER + "\n")
            for row in rows:
                fh.write(",".join(str(v) for v in row) + "\n")
        return path

    def test_income_normalized_by_revenue(self, tmp_path):
        path = self._write(
            tmp_path / "f.csv",
            [("AAA", 2018, "2010-05-01", 3, 120, 900, 1e6, 100.0, 50.0, 200.0, 40.0, 75.0)],
        )
        (f,) = corpus.load_fundamentals(path)
        assert f.income_items["COGS"] == pytest.approx(0.4)
        assert f.balance_items["Total Assets"] == pytest.approx(1.5)

    def test_zero_revenue_rejected(self, tmp_path):
        path = self._write(
            tmp_path / "f.csv",
            [("AAA", 2018, "2010-05-01", 3, 120, 900, 1e6, 0.0, 50.0, 200.0, 40.0, 75.0)],
        )
        with pytest.raises(ZeroDenominator):
            corpus.load_fundamentals(path)

    def test_employees_kept_raw(self, tmp_path):
        path = self._write(
            tmp_path / "f.csv",
            [("AAA", 2018, "2010-05-01", 3, 120, 900, 5e6, 100.0, 50.0, 200.0, 40.0, 75.0)],
        )
        (f,) = corpus.load_fundamentals(path)
        assert f.employees == 120
        assert f.shareholders == 900
        assert f.shares_outstanding == 5e6

    def test_round_trip(self, tmp_path):
        path = self._write(
            tmp_path / "f.csv",
            [
                ("AAA", 2018, "2010-05-01", 3, 120, 900, 1e6, 100.0, 50.0, 200.0, 40.0, 75.0),
                ("AAA", 2019, "2010-05-01", 4, 130, 950, 1.1e6, 110.0, 55.0, 210.0, 42.0, 80.0),
            ],
        )
        loaded = corpus.load_fundamentals(path)
        out = tmp_path / "f2.csv"
        corpus.save_fundamentals(out, loaded)
        assert corpus.load_fundamentals(out) == loaded

    def test_latest_fundamentals_no_lookahead(self, tmp_path):
        path = self._write(
            tmp_path / "f.csv",
            [
                ("AAA", 2018, "2010-05-01", 3, "", "", "", 100.0, 50.0, 200.0, 40.0, 75.0),
                ("AAA", 2019, "2010-05-01", 4, "", "", "", 110.0, 55.0, 210.0, 42.0, 80.0),
            ],
        )
        rows = corpus.load_fundamentals(path)
        picked = corpus.latest_fundamentals(rows, "AAA", date(2019, 6, 1))
        assert picked.year == 2018  # the 2019 fiscal year is not yet closed
        assert corpus.latest_fundamentals(rows, "AAA", date(2018, 6, 1)) is None
