"""Market-microstructure features: volume peaks, trends, volatility.

Volume peaks drive the choice of the post-announcement window: the window
length is the 90th-percentile peak duration (20 trading days on the
reference data). The peak rule itself is configurable because there is no
single canonical definition: a peak day is one whose volume exceeds
k times the trailing-window median volume, and a peak is a maximal run of
consecutive peak days.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import IndexSeries, PriceSeries
from .errors import InsufficientHistory, NoPeaks, OutOfHistory, SeriesTooShort

TRADING_DAYS_PER_YEAR = 252


@dataclass(frozen=True)
class VolumePeak:
    start_index: int
    end_index: int
    start_date: object
    end_date: object

    @property
    def duration(self) -> int:
        return self.end_index - self.start_index + 1


@dataclass(frozen=True)
class MarketFeatures:
    peaks_per_year: float
    last_peak_duration: int
    trend_30: float
    trend_prev_30: float
    index_trend_30: float
    volatility_200: float


@dataclass(frozen=True)
class MarketConfig:
    peak_k: float = 3.0
    peak_baseline: int = 90
    trend_window: int = 30
    volatility_window: int = 200


def detect_volume_peaks(
    series: PriceSeries, k_threshold: float = 3.0, baseline_window: int = 90
) -> list[VolumePeak]:
    """Maximal runs of days whose volume exceeds k x trailing median volume.

    The median is taken over the baseline_window days strictly before each
    day, so the first baseline_window days are never flagged. Returned
    peaks are disjoint, maximal, and in date order.
    """
    n = len(series)
    if n <= baseline_window:
        raise SeriesTooShort(f"need more than {baseline_window} days, got {n}")
    vol = np.asarray(series.volume, dtype=float)
    windows = np.lib.stride_tricks.sliding_window_view(vol, baseline_window)
    # windows[i] covers days [i, i+baseline_window); day i+baseline_window uses it
    medians = np.median(windows[:-1], axis=1)
    flags = vol[baseline_window:] > k_threshold * medians
    peaks: list[VolumePeak] = []
    run_start: int | None = None
    for offset, flagged in enumerate(flags):
        i = offset + baseline_window
        if flagged and run_start is None:
            run_start = i
        elif not flagged and run_start is not None:
            peaks.append(_make_peak(series, run_start, i - 1))
            run_start = None
    if run_start is not None:
        peaks.append(_make_peak(series, run_start, n - 1))
    return peaks


def _make_peak(series: PriceSeries, start: int, end: int) -> VolumePeak:
    return VolumePeak(
        start_index=start,
        end_index=end,
        start_date=series.dates[start],
        end_date=series.dates[end],
    )


def estimate_post_window(durations, quantile: float = 0.9) -> int:
    """Nearest-rank quantile of peak durations (no interpolation).

    Accepts either VolumePeak objects or plain integer durations. With the
    default quantile 0.9 this is the engine's post-event window T.
    """
    values = sorted(
        p.duration if isinstance(p, VolumePeak) else int(p) for p in durations
    )
    if not values:
        raise NoPeaks("no peak durations")
    if not 0.0 < quantile <= 1.0:
        raise OutOfHistory(f"quantile must be in (0, 1], got {quantile}")
    rank = math.ceil(quantile * len(values))  # 1-indexed nearest rank
    return values[rank - 1]


def price_trend(
    series: PriceSeries, window_start_offset: int, window_end_offset: int, event_index: int
) -> float:
    """Fractional close change between two offsets relative to the event day."""
    start = event_index + window_start_offset
    end = event_index + window_end_offset
    if start < 0 or end < 0 or start >= len(series) or end >= len(series):
        raise OutOfHistory(
            f"offsets [{window_start_offset}, {window_end_offset}] fall outside history"
        )
    return series.close[end] / series.close[start] - 1.0


def _index_trend(index: IndexSeries, start: int, end: int) -> float:
    if start < 0 or end >= len(index):
        raise OutOfHistory("index offsets outside history")
    return index.close[end] / index.close[start] - 1.0


def volatility(series: PriceSeries, event_index: int, window: int = 200) -> float:
    """Sample std of close over median close in the window before the event."""
    if event_index < window:
        raise InsufficientHistory(
            f"need {window} days before event, have {event_index}"
        )
    closes = np.asarray(series.close[event_index - window : event_index], dtype=float)
    return float(np.std(closes, ddof=1) / np.median(closes))


def market_features(
    series: PriceSeries,
    index: IndexSeries,
    event_index: int,
    config: MarketConfig | None = None,
) -> MarketFeatures:
    """Assemble the market feature block for one event.

    Both series must already sit on the same trading calendar. Peak
    detection only sees days before the event; peaks_per_year divides the
    pre-event peak count by pre-event years (252 trading days each).
    """
    config = config or MarketConfig()
    w = config.trend_window
    if event_index < 2 * w:
        raise InsufficientHistory(f"need {2 * w} days before event for trends")
    pre = PriceSeries(
        ticker=series.ticker,
        dates=series.dates[:event_index],
        close=series.close[:event_index],
        volume=series.volume[:event_index],
    )
    peaks = detect_volume_peaks(pre, config.peak_k, config.peak_baseline)
    years = event_index / TRADING_DAYS_PER_YEAR
    last_duration = peaks[-1].duration if peaks else 0
    return MarketFeatures(
        peaks_per_year=len(peaks) / years,
        last_peak_duration=last_duration,
        trend_30=price_trend(series, -w, -1, event_index),
        trend_prev_30=price_trend(series, -2 * w, -(w + 1), event_index),
        index_trend_30=_index_trend(index, event_index - w, event_index - 1),
        volatility_200=volatility(series, event_index, config.volatility_window),
    )
