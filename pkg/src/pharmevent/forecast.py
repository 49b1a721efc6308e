"""Expected-return paths for the post-event window.

The counterfactual path is produced by a pluggable forecaster. Two
built-ins are provided: a market model (OLS of stock returns on index
returns, compounded with the realized post-event index returns) and a
drift model (compounds the estimation-window mean return). Externally
produced paths can be imported from a CSV. All paths are price levels
normalized to 1.0 at the window start, so every downstream quantity is
invariant to the absolute price scale.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .corpus import IndexSeries, PriceSeries
from .errors import (
    DegenerateIndex,
    InsufficientHistory,
    InvariantViolation,
    MissingEvent,
    NonPositivePath,
    ParseError,
)


@dataclass(frozen=True)
class NormalizedPath:
    """Price path relative to the window start: values[0] is exactly 1."""

    values: tuple[float, ...]

    def __post_init__(self):
        if not self.values:
            raise InvariantViolation("empty path")
        if self.values[0] != 1.0:
            raise InvariantViolation(f"path must start at 1.0, got {self.values[0]}")
        arr = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvariantViolation("non-finite path value")
        if not np.all(arr > 0):
            raise InvariantViolation("non-positive path value")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def horizon(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True)
class MarketModel:
    """Daily-return market model: r_stock = alpha + beta * r_index."""

    alpha: float
    beta: float
    estimation_window: int
    r2: float


def _simple_returns(closes, start: int, end: int) -> np.ndarray:
    """Simple daily returns for days (start, end], using closes[start..end]."""
    c = np.asarray(closes[start : end + 1], dtype=float)
    return c[1:] / c[:-1] - 1.0


def fit_market_model(
    stock: PriceSeries, index: IndexSeries, event_index: int, window: int = 90
) -> MarketModel:
    """OLS of stock daily returns on index daily returns before the event.

    Uses the window return days ending the day before the event. Both
    series must share the trading calendar.
    """
    if window < 30:
        raise InsufficientHistory(f"estimation window must be >= 30, got {window}")
    if event_index < window + 1:
        raise InsufficientHistory(
            f"need {window + 1} days before event, have {event_index}"
        )
    if len(index) != len(stock):
        raise InsufficientHistory("stock and index are not on the same calendar")
    rs = _simple_returns(stock.close, event_index - window - 1, event_index - 1)
    ri = _simple_returns(index.close, event_index - window - 1, event_index - 1)
    mi = ri.mean()
    ms = rs.mean()
    var_i = float(np.sum((ri - mi) ** 2))
    if var_i == 0.0:
        raise DegenerateIndex("index returns have zero variance in the window")
    beta = float(np.sum((ri - mi) * (rs - ms)) / var_i)
    alpha = float(ms - beta * mi)
    resid = rs - (alpha + beta * ri)
    sst = float(np.sum((rs - ms) ** 2))
    r2 = 1.0 if sst == 0.0 else 1.0 - float(np.sum(resid**2)) / sst
    return MarketModel(alpha=alpha, beta=beta, estimation_window=window, r2=r2)


def expected_path(model: MarketModel, index_post_returns, T: int) -> NormalizedPath:
    """Compound the market model over realized post-event index returns."""
    if T < 1:
        raise InvariantViolation(f"T must be >= 1, got {T}")
    r = np.asarray(index_post_returns, dtype=float)
    if len(r) != T:
        raise InvariantViolation(f"need {T} index returns, got {len(r)}")
    factors = 1.0 + model.alpha + model.beta * r
    if np.any(factors <= 0):
        raise NonPositivePath("expected path factor <= 0")
    values = [1.0]
    for f in factors:
        values.append(values[-1] * float(f))
    return NormalizedPath(values=tuple(values))


def drift_forecaster(
    stock: PriceSeries, event_index: int, window: int, T: int
) -> NormalizedPath:
    """Compound the mean daily return of the estimation window."""
    if event_index < window + 1:
        raise InsufficientHistory(
            f"need {window + 1} days before event, have {event_index}"
        )
    rs = _simple_returns(stock.close, event_index - window - 1, event_index - 1)
    mu = float(rs.mean())
    if 1.0 + mu <= 0:
        raise NonPositivePath("mean daily return <= -100%")
    values = [1.0]
    for _ in range(T):
        values.append(values[-1] * (1.0 + mu))
    return NormalizedPath(values=tuple(values))


def import_forecast(path: str | Path, event_id: str) -> NormalizedPath:
    """Read an externally produced path for one event from forecasts.csv."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or row[0].strip() == "event_id":
                continue
            if row[0].strip() == event_id:
                try:
                    values = tuple(float(v) for v in row[1:] if v.strip() != "")
                except ValueError as exc:
                    raise ParseError(f"bad path value for {event_id}: {exc}") from exc
                return NormalizedPath(values=values)
    raise MissingEvent(f"no forecast row for event {event_id!r}")


def actual_path(stock: PriceSeries, anchor_index: int, T: int) -> NormalizedPath:
    """Realized normalized path: closes over days [anchor, anchor+T] / close[anchor]."""
    if anchor_index < 0 or anchor_index + T >= len(stock):
        raise InsufficientHistory(
            f"window [{anchor_index}, {anchor_index + T}] falls outside history"
        )
    base = stock.close[anchor_index]
    return NormalizedPath(
        values=tuple(stock.close[anchor_index + t] / base if t else 1.0 for t in range(T + 1))
    )


class Forecaster(Protocol):
    """Produces the expected normalized path for a window starting at an anchor day."""

    def path(
        self, stock: PriceSeries, index: IndexSeries | None, anchor_index: int, T: int
    ) -> NormalizedPath: ...


@dataclass(frozen=True)
class MarketModelForecaster:
    window: int = 90

    def path(self, stock, index, anchor_index: int, T: int) -> NormalizedPath:
        if index is None:
            raise DegenerateIndex("market-model forecaster requires an index series")
        model = fit_market_model(stock, index, anchor_index, self.window)
        if anchor_index + T >= len(index):
            raise InsufficientHistory("index history ends inside the forecast window")
        r_post = _simple_returns(index.close, anchor_index, anchor_index + T)
        return expected_path(model, r_post, T)


@dataclass(frozen=True)
class DriftForecaster:
    window: int = 90

    def path(self, stock, index, anchor_index: int, T: int) -> NormalizedPath:
        return drift_forecaster(stock, anchor_index, self.window, T)


@dataclass(frozen=True)
class EventWindow:
    """An event positioned on its (calendar-aligned) series."""

    event_id: str
    stock: PriceSeries
    index: IndexSeries | None
    event_index: int


@dataclass(frozen=True)
class BacktestResult:
    per_event: dict[str, float]
    mean_mape: float
    skipped: tuple[tuple[str, str], ...]


def sliding_backtest(
    forecaster: Forecaster, events: list[EventWindow], T: int, window: int = 90
) -> BacktestResult:
    """Pre-event holdout error of a forecaster.

    For each event the forecaster is anchored T+1 days before the event
    (fitting on the window before that anchor) and predicts the normalized
    path over the T days ending the day before the event. MAPE compares
    the predicted and realized normalized paths pointwise. Events without
    enough history are skipped and reported. The one-day window shifting
    used by iterative learners is a no-op for these closed-form
    forecasters.
    """
    per_event: dict[str, float] = {}
    skipped: list[tuple[str, str]] = []
    for ev in events:
        anchor = ev.event_index - (T + 1)
        try:
            predicted = forecaster.path(ev.stock, ev.index, anchor, T)
            realized = actual_path(ev.stock, anchor, T)
        except (InsufficientHistory, DegenerateIndex) as exc:
            skipped.append((ev.event_id, f"{type(exc).__name__}: {exc}"))
            continue
        p = np.asarray(predicted.values[1:])
        a = np.asarray(realized.values[1:])
        per_event[ev.event_id] = float(np.mean(np.abs(p - a) / a))
    if per_event:
        mean_mape = float(np.mean(list(per_event.values())))
    else:
        mean_mape = float("nan")
    return BacktestResult(per_event=per_event, mean_mape=mean_mape, skipped=tuple(skipped))
