import json
from datetime import date, timedelta

import numpy as np
import pytest

from pharmevent.corpus import PriceSeries, weekday_calendar


@pytest.fixture
def calendar_500():
    return weekday_calendar(date(2018, 1, 1), 500)


def make_series(ticker="TST", n=300, start=date(2018, 1, 1), close=None, volume=None):
    cal = weekday_calendar(start, n)
    if close is None:
        close = [100.0] * n
    if volume is None:
        volume = [1e6] * n
    return PriceSeries(ticker=ticker, dates=cal, close=tuple(close), volume=tuple(volume))


def gbm_series(seed, n=400, s0=50.0, vol=0.02, drift=0.0, ticker="GBM", start=date(2017, 1, 2)):
    rng = np.random.default_rng(seed)
    rets = drift + vol * rng.standard_normal(n - 1)
    close = s0 * np.concatenate([[1.0], np.cumprod(1.0 + rets)])
    return make_series(ticker=ticker, n=n, start=start, close=[float(c) for c in close])


def write_announcements(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path
