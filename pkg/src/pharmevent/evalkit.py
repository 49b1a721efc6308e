"""Evaluation protocol and deterministic synthetic-market generation.

The evaluation protocol repeats a stratified 67/33 holdout ten times and
scores models with support-weighted one-vs-rest ROC AUC. The synthetic
generator produces a full desk-scale dataset (announcements, prices,
index, fundamentals) from a geometric random walk with planted
post-event abnormal drifts, planted volume peaks and keyword-bearing
texts, emitting its own ground truth so every downstream stage can be
checked end to end.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from pathlib import Path

import numpy as np

from .boost import FeatureMatrix
from .corpus import (
    Announcement,
    Fundamentals,
    IndexSeries,
    Phase,
    Polarity,
    PriceSeries,
    save_announcements,
    save_fundamentals,
    save_index_series,
    save_price_series,
    weekday_calendar,
)
from .errors import ClassTooSmall, InvalidConfig, LengthMismatch
from .graph import EventGraph, build_event_graph
from .impact import N_CLASSES, bin_class


# --- stratified splits ----------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    n_repeats: int
    train_fraction: float
    repeats: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]  # (train, test) per repeat
    seed: int


def stratified_splits(
    labels,
    seed: int,
    n_repeats: int = 10,
    train_fraction: float = 0.67,
) -> SplitPlan:
    """Repeated stratified holdout; per-class proportions hold within one sample."""
    labels = np.asarray(labels)
    n = len(labels)
    classes, counts = np.unique(labels, return_counts=True)
    for cls, count in zip(classes, counts):
        if count < 3:
            raise ClassTooSmall(cls, int(count))
    rng = np.random.default_rng(seed)
    repeats = []
    for _ in range(n_repeats):
        train_idx: list[int] = []
        test_idx: list[int] = []
        for cls in classes:
            members = np.flatnonzero(labels == cls)
            perm = members[rng.permutation(len(members))]
            n_train = int(round(train_fraction * len(members)))
            n_train = min(max(n_train, 1), len(members) - 1)
            train_idx.extend(perm[:n_train].tolist())
            test_idx.extend(perm[n_train:].tolist())
        repeats.append((tuple(sorted(train_idx)), tuple(sorted(test_idx))))
    return SplitPlan(
        n_repeats=n_repeats,
        train_fraction=train_fraction,
        repeats=tuple(repeats),
        seed=seed,
    )


# --- one-vs-rest ROC AUC -----------------------------------------------------------


@dataclass(frozen=True)
class AucReport:
    per_class: dict[int, float | None]
    supports: dict[int, int]
    weighted_mean: float
    skipped_classes: tuple[int, ...]


def _rank_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """AUC via the midrank statistic (equals pairwise counting with half ties)."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    r_pos = float(ranks[positives].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_auc_ovr(probs: np.ndarray, labels, n_classes: int = N_CLASSES) -> AucReport:
    """Per-class one-vs-rest AUC plus the support-weighted mean.

    Classes without both positives and negatives in the fold are excluded
    from the mean and reported in skipped_classes.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.intp)
    if probs.shape[0] != len(labels):
        raise LengthMismatch(f"{probs.shape[0]} prob rows vs {len(labels)} labels")
    per_class: dict[int, float | None] = {}
    supports: dict[int, int] = {}
    skipped: list[int] = []
    weighted_sum = 0.0
    weight_total = 0
    for k in range(n_classes):
        positives = labels == k
        n_pos = int(positives.sum())
        supports[k] = n_pos
        if n_pos == 0 or n_pos == len(labels):
            per_class[k] = None
            skipped.append(k)
            continue
        auc = _rank_auc(probs[:, k], positives)
        per_class[k] = auc
        weighted_sum += n_pos * auc
        weight_total += n_pos
    weighted_mean = weighted_sum / weight_total if weight_total else float("nan")
    return AucReport(
        per_class=per_class,
        supports=supports,
        weighted_mean=weighted_mean,
        skipped_classes=tuple(skipped),
    )


# --- synthetic market generator ------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_companies: int = 8
    years: float = 4.0
    events_per_company: int = 4
    seed: int = 0
    t_post: int = 20
    # planted mean/std of NCAR per polarity
    effect_negative: tuple[float, float] = (-0.18, 0.12)
    effect_positive: tuple[float, float] = (0.1, 0.12)
    effect_neutral: tuple[float, float] = (0.0, 0.1)
    neutral_fraction: float = 0.34
    positive_fraction: float = 0.33
    graph_signal: float = 0.0
    daily_vol: float = 0.02
    index_vol: float = 0.008
    index_drift: float = 0.0002
    beta_range: tuple[float, float] = (0.5, 1.5)
    peak_rate_per_year: float = 2.0
    start_date: Date = Date(2016, 1, 4)
    warmup_days: int = 240

    def validate(self) -> None:
        if self.n_companies < 1 or self.events_per_company < 0:
            raise InvalidConfig("counts must be positive")
        if self.years <= 0 or self.t_post < 1:
            raise InvalidConfig("years and t_post must be positive")
        if self.daily_vol < 0 or self.index_vol < 0:
            raise InvalidConfig("volatilities must be non-negative")
        if not 0 <= self.neutral_fraction + self.positive_fraction <= 1:
            raise InvalidConfig("polarity fractions must sum to at most 1")


@dataclass
class GroundTruth:
    event_id: str
    ticker: str
    date: Date
    polarity: Polarity
    planted_ncar: float


@dataclass
class SynthDataset:
    announcements: list[Announcement]
    prices: dict[str, PriceSeries]
    index: IndexSeries
    fundamentals: list[Fundamentals]
    truth: list[GroundTruth]
    calendar: tuple[Date, ...]


_POSITIVE_TEMPLATES = (
    "{ticker} announces trial of {drug} meets primary endpoint in {disease} study",
    "FDA grants approve decision for {drug}: {ticker} reports encouraging efficacy data",
    "{ticker} phase results demonstrate durable benefit of {drug} for {disease}",
)
_NEGATIVE_TEMPLATES = (
    "{ticker} says {drug} trial failed to improve outcomes in {disease}",
    "{ticker} announces {drug} study halted after interim review",
    "{drug} program discontinued: {ticker} reports endpoint did not reach significance",
)
_NEUTRAL_TEMPLATES = (
    "{ticker} provides enrollment update for {drug} study in {disease}",
    "{ticker} to present {drug} program details at investor day",
    "{ticker} schedules data readout for the {drug} {disease} trial",
)

_DISEASES = (
    ("C50", "breast cancer"),
    ("C61", "prostate cancer"),
    ("E11", "type 2 diabetes"),
    ("G30", "alzheimer disease"),
    ("J45", "asthma"),
    ("I50", "heart failure"),
    ("K50", "crohn disease"),
    ("M05", "rheumatoid arthritis"),
)


def _abnormal_factor(delta: float, t_post: int) -> float:
    # daily growth g with sum_t (1+g)^t - 1 ~= delta * T, i.e. NCAR ~= delta
    return 2.0 * delta / (t_post + 1)


def synth_generate(config: SynthConfig) -> SynthDataset:
    """Deterministic synthetic dataset with planted per-polarity NCAR effects."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_days = int(round(config.years * 252))
    calendar = weekday_calendar(config.start_date, n_days)

    # index random walk
    idx_returns = config.index_drift + config.index_vol * rng.standard_normal(n_days - 1)
    idx_close = 100.0 * np.concatenate([[1.0], np.cumprod(1.0 + idx_returns)])
    index = IndexSeries(name="NBI", dates=calendar, close=tuple(float(c) for c in idx_close))

    announcements: list[Announcement] = []
    prices: dict[str, PriceSeries] = {}
    fundamentals: list[Fundamentals] = []
    truth: list[GroundTruth] = []
    nosology_shift = {
        code: config.graph_signal * rng.normal(0.0, 0.1) for code, _ in _DISEASES
    }

    min_gap = 2 * config.t_post + 100 + 10  # event windows must not overlap controls
    for c in range(config.n_companies):
        ticker = f"SYN{c:03d}"
        beta = float(rng.uniform(*config.beta_range))
        idio = config.daily_vol * rng.standard_normal(n_days - 1)
        returns = beta * idx_returns + idio

        # event days, planted polarities and effects
        n_events = config.events_per_company
        event_days: list[int] = []
        day = config.warmup_days + int(rng.integers(0, 20))
        for _ in range(n_events):
            if day >= n_days - config.t_post - 1:
                break
            event_days.append(day)
            day += min_gap + int(rng.integers(0, 15))
        abnormal = np.zeros(n_days - 1)
        for e_i, e_day in enumerate(event_days):
            u = rng.random()
            if u < config.neutral_fraction:
                polarity = Polarity.NEUTRAL
                mean, std = config.effect_neutral
                templates = _NEUTRAL_TEMPLATES
            elif u < config.neutral_fraction + config.positive_fraction:
                polarity = Polarity.POSITIVE
                mean, std = config.effect_positive
                templates = _POSITIVE_TEMPLATES
            else:
                polarity = Polarity.NEGATIVE
                mean, std = config.effect_negative
                templates = _NEGATIVE_TEMPLATES
            code, disease = _DISEASES[int(rng.integers(0, len(_DISEASES)))]
            delta = float(mean + std * rng.standard_normal()) + nosology_shift[code]
            g = _abnormal_factor(delta, config.t_post)
            span = slice(e_day, min(e_day + config.t_post, n_days - 1))
            abnormal[span] += g
            event_id = f"E{c:03d}{e_i:02d}"
            drug = f"RX-{c:03d}{e_i:02d}"
            text = templates[int(rng.integers(0, len(templates)))].format(
                ticker=ticker, drug=drug, disease=disease
            )
            event_date = calendar[e_day]
            announcements.append(
                Announcement(
                    id=event_id,
                    ticker=ticker,
                    date=event_date,
                    text=text,
                    icd10=(code,),
                    phase=Phase(("I", "II", "III", "IV")[int(rng.integers(0, 4))]),
                )
            )
            truth.append(
                GroundTruth(
                    event_id=event_id,
                    ticker=ticker,
                    date=event_date,
                    polarity=polarity,
                    planted_ncar=delta,
                )
            )

        close = 20.0 * np.concatenate([[1.0], np.cumprod(1.0 + returns + abnormal)])
        volume = 1e6 * np.exp(0.3 * rng.standard_normal(n_days))
        # planted volume peaks at events and at random news-free days
        n_extra = int(round(config.peak_rate_per_year * config.years))
        peak_days = list(event_days) + [
            int(rng.integers(120, n_days)) for _ in range(n_extra)
        ]
        for p_day in peak_days:
            duration = int(rng.integers(1, 6))
            for t in range(p_day, min(p_day + duration, n_days)):
                volume[t] *= 8.0
        prices[ticker] = PriceSeries(
            ticker=ticker,
            dates=calendar,
            close=tuple(float(v) for v in close),
            volume=tuple(float(v) for v in volume),
        )

        portfolio = int(rng.integers(1, 30))
        ipo = config.start_date - timedelta(days=int(rng.integers(200, 4000)))
        for year in range(calendar[0].year - 1, calendar[-1].year + 1):
            revenue = float(rng.uniform(50, 500))
            cash_ops = float(rng.uniform(10, 100))
            equity = float(rng.uniform(100, 1000))
            row = {
                "ticker": ticker,
                "year": str(year),
                "ipo_date": ipo.isoformat(),
                "portfolio_size": str(portfolio),
                "employees": str(int(rng.integers(50, 5000))),
                "shareholders": str(int(rng.integers(100, 10000))),
                "shares_outstanding": repr(float(rng.uniform(1e6, 1e8))),
                "total_revenue": repr(revenue),
                "cash_from_operating_activities": repr(cash_ops),
                "total_equity": repr(equity),
                "income:COGS": repr(float(rng.uniform(5, revenue))),
                "income:R&D": repr(float(rng.uniform(5, revenue))),
                "balance:Total Assets": repr(float(rng.uniform(100, 2000))),
                "cashflow:Capital Expenditure": repr(float(rng.uniform(1, 50))),
            }
            fundamentals.append(
                Fundamentals(
                    ticker=ticker,
                    year=year,
                    ipo_date=ipo,
                    portfolio_size=portfolio,
                    employees=int(row["employees"]),
                    shareholders=int(row["shareholders"]),
                    shares_outstanding=float(row["shares_outstanding"]),
                    income_items={
                        "COGS": float(row["income:COGS"]) / revenue,
                        "R&D": float(row["income:R&D"]) / revenue,
                    },
                    balance_items={"Total Assets": float(row["balance:Total Assets"]) / cash_ops},
                    cashflow_items={
                        "Capital Expenditure": float(row["cashflow:Capital Expenditure"]) / equity
                    },
                    raw=row,
                )
            )

    announcements.sort(key=lambda a: (a.date, a.id))
    truth.sort(key=lambda t: (t.date, t.event_id))
    return SynthDataset(
        announcements=announcements,
        prices=prices,
        index=index,
        fundamentals=fundamentals,
        truth=truth,
        calendar=calendar,
    )


def write_dataset(dataset: SynthDataset, outdir: str | Path) -> None:
    """Write a dataset directory in the engine's external file formats."""
    outdir = Path(outdir)
    (outdir / "prices").mkdir(parents=True, exist_ok=True)
    save_announcements(outdir / "announcements.jsonl", dataset.announcements)
    save_index_series(outdir / "index.csv", dataset.index)
    for ticker in sorted(dataset.prices):
        save_price_series(outdir / "prices" / f"{ticker}.csv", dataset.prices[ticker])
    save_fundamentals(outdir / "fundamentals.csv", dataset.fundamentals)
    with open(outdir / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("event_id,ticker,date,polarity,planted_ncar\n")
        for t in dataset.truth:
            fh.write(
                f"{t.event_id},{t.ticker},{t.date.isoformat()},{t.polarity.value},{repr(t.planted_ncar)}\n"
            )


# --- planted neighbor-label-signal dataset ---------------------------------------------


@dataclass(frozen=True)
class GraphSynthConfig:
    n_events: int = 2000
    n_companies: int = 100
    n_nosologies: int = 30
    neighbor_coef: float = 0.5
    own_coef: float = 0.1
    noise: float = 0.05
    n_noise_features: int = 4
    seed: int = 0


@dataclass
class GraphSynthDataset:
    graph: EventGraph
    features: FeatureMatrix
    labels: np.ndarray
    target_values: np.ndarray


def synth_graph_dataset(config: GraphSynthConfig) -> GraphSynthDataset:
    """Events whose class depends mostly on earlier-neighbor emitted signals.

    Each event carries an emitted signal s in its features; an event's
    continuous target is neighbor_coef * mean(s of in-neighbors)
    + own_coef * u + noise, binned into the six price classes. A row-only
    model cannot see the neighbor signals, a graph model can.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_events

    @dataclass(frozen=True)
    class _Ev:
        id: str
        date: Date
        ticker: str
        icd10: tuple[str, ...]

    start = Date(2016, 1, 4)
    events = []
    for i in range(n):
        events.append(
            _Ev(
                id=f"G{i:05d}",
                date=start + timedelta(days=int(rng.integers(0, int(n * 0.9)))),
                ticker=f"C{int(rng.integers(0, config.n_companies)):03d}",
                icd10=(f"A{int(rng.integers(0, config.n_nosologies)):02d}",),
            )
        )
    graph = build_event_graph(events)
    n = graph.n

    # feature draws are indexed in graph-node (chronological) order
    s = rng.standard_normal(n)
    u = rng.standard_normal(n)
    noise_cols = rng.standard_normal((n, config.n_noise_features))
    in_lists: dict[int, list[int]] = {i: [] for i in range(n)}
    for e in graph.edges:
        in_lists[e.dst].append(e.src)
    neighbor_mean = np.zeros(n)
    for i, srcs in in_lists.items():
        if srcs:
            neighbor_mean[i] = float(np.mean(s[srcs]))
    target = (
        config.neighbor_coef * neighbor_mean
        + config.own_coef * u
        + config.noise * rng.standard_normal(n)
    )
    labels = np.array([bin_class(v).value for v in target], dtype=np.intp)
    features = FeatureMatrix(
        schema=("emitted_signal", "own_covariate")
        + tuple(f"noise_{j}" for j in range(config.n_noise_features)),
        values=np.column_stack([s, u, noise_cols]),
    )
    return GraphSynthDataset(
        graph=graph, features=features, labels=labels, target_values=target
    )
