"""Pipeline orchestration: staged runs with a reproducibility manifest.

A run executes ingest, label, windows, forecast, ncar, graph, train,
evaluate and explain in order. Every stage reads only its declared
inputs (raw data files plus earlier stages' outputs) and writes its
outputs into the run directory; manifest.json records the configuration,
the seed and a checksum per output file, so identical config and seed
reproduce byte-identical results.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import corpus, features, forecast, impact, market, sentiment, svgplot
from .boost import (
    FeatureMatrix,
    ForestConfig,
    GbdtConfig,
    ensemble_proba,
    forest_proba,
    permutation_importance,
    train_ensemble,
    train_random_forest,
)
from .errors import (
    DegenerateIndex,
    InvalidConfig,
    PharmEventError,
    StageError,
)
from .evalkit import roc_auc_ovr, stratified_splits
from .graph import GcnConfig, build_event_graph, save_gcn_model
from .impact import PriceClass

STAGES = (
    "ingest",
    "label",
    "windows",
    "forecast",
    "ncar",
    "graph",
    "train",
    "evaluate",
    "explain",
)


@dataclass
class RunConfig:
    """Plain-data run configuration; file format is key=value lines."""

    announcements: str = "announcements.jsonl"
    prices_dir: str = "prices"
    index: str = "index.csv"
    fundamentals: str = "fundamentals.csv"
    dictionaries: str = ""  # empty -> built-in keyword file
    out: str = "out"
    seed: int = 0
    t_post: int = 20
    t_mode: str = "fixed"  # fixed | auto (auto: quantile of peak durations)
    quantile: float = 0.9
    forecaster: str = "market"  # market | drift | import
    forecast_file: str = ""
    window: int = 90
    peak_k: float = 3.0
    peak_baseline: int = 90
    gcn_hidden: int = 64
    gcn_epochs: int = 300
    gcn_lr: float = 1e-3
    gcn_val_fraction: float = 0.15
    gbdt_rounds: int = 200
    gbdt_depth: int = 4
    gbdt_lr: float = 0.1
    gbdt_subsample: float = 0.8
    rf_trees: int = 100
    eval_repeats: int = 10
    train_fraction: float = 0.67
    explain_repeats: int = 5

    def validate(self) -> None:
        if self.seed is None:
            raise InvalidConfig("seed is mandatory")
        if self.t_post < 1:
            raise InvalidConfig("t_post must be >= 1")
        if self.t_mode not in ("fixed", "auto"):
            raise InvalidConfig(f"unknown t_mode {self.t_mode!r}")
        if self.forecaster not in ("market", "drift", "import"):
            raise InvalidConfig(f"unknown forecaster {self.forecaster!r}")
        if self.forecaster == "import" and not self.forecast_file:
            raise InvalidConfig("forecaster=import requires forecast_file")
        if not 0.0 < self.quantile <= 1.0:
            raise InvalidConfig("quantile must be in (0, 1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidConfig("train_fraction must be in (0, 1)")
        for path_field in ("announcements", "prices_dir", "fundamentals"):
            if not Path(getattr(self, path_field)).exists():
                raise InvalidConfig(f"missing input: {getattr(self, path_field)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        cfg = cls()
        cfg.apply_overrides(parse_config_file(path))
        return cfg

    def apply_overrides(self, overrides: dict[str, str]) -> None:
        types = {f.name: f.type for f in fields(self)}
        for key, value in overrides.items():
            if key not in types:
                raise InvalidConfig(f"unknown config key {key!r}")
            current = getattr(self, key)
            if isinstance(current, bool):
                setattr(self, key, value.lower() in ("1", "true", "yes"))
            elif isinstance(current, int):
                setattr(self, key, int(value))
            elif isinstance(current, float):
                setattr(self, key, float(value))
            else:
                setattr(self, key, value)


def parse_config_file(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidConfig(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


# --- shared loading helpers ---------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _load_corpus(cfg: RunConfig, labeled: bool = False):
    ann_path = Path(cfg.out) / "announcements_labeled.jsonl" if labeled else Path(cfg.announcements)
    announcements = corpus.load_announcements(ann_path)
    prices_dir = Path(cfg.prices_dir)
    prices = {}
    for path in sorted(prices_dir.glob("*.csv")):
        ticker = path.stem
        prices[ticker] = corpus.load_price_series(path, ticker)
    index = None
    if Path(cfg.index).exists():
        index = corpus.load_index_series(cfg.index)
    fundamentals = corpus.load_fundamentals(cfg.fundamentals) if Path(cfg.fundamentals).exists() else []
    return announcements, prices, index, fundamentals


@dataclass
class PositionedEvent:
    announcement: corpus.Announcement
    stock: corpus.PriceSeries
    index: corpus.IndexSeries | None
    event_index: int


def _position_events(announcements, prices, index) -> tuple[list[PositionedEvent], list[tuple[str, str]]]:
    """Align each event's stock (and index) to a shared calendar suffix.

    The canonical calendar is the index's when present, else the union of
    price dates. Each stock is forward-filled onto the calendar suffix
    that starts at its first observation; the event day is the next
    trading day at or after the announcement date.
    """
    if index is not None:
        calendar = index.dates
    else:
        all_dates = sorted({d for s in prices.values() for d in s.dates})
        calendar = tuple(all_dates)
    positioned: list[PositionedEvent] = []
    skipped: list[tuple[str, str]] = []
    aligned_cache: dict[str, tuple[corpus.PriceSeries, corpus.IndexSeries | None]] = {}
    for ann in announcements:
        stock_raw = prices.get(ann.ticker)
        if stock_raw is None:
            skipped.append((ann.id, "no price series"))
            continue
        if ann.ticker not in aligned_cache:
            start = 0
            while start < len(calendar) and calendar[start] < stock_raw.dates[0]:
                start += 1
            sub_cal = calendar[start:]
            if not sub_cal:
                aligned_cache[ann.ticker] = (None, None)
            else:
                aligned = corpus.align_to_calendar(stock_raw, sub_cal)
                sub_index = None
                if index is not None:
                    sub_index = corpus.IndexSeries(
                        name=index.name, dates=sub_cal, close=index.close[start:]
                    )
                aligned_cache[ann.ticker] = (aligned, sub_index)
        aligned, sub_index = aligned_cache[ann.ticker]
        if aligned is None:
            skipped.append((ann.id, "price history outside calendar"))
            continue
        pos = corpus.next_trading_index(aligned.dates, ann.date)
        if pos is None:
            skipped.append((ann.id, "event after calendar end"))
            continue
        positioned.append(
            PositionedEvent(announcement=ann, stock=aligned, index=sub_index, event_index=pos)
        )
    return positioned, skipped


def _make_forecaster(cfg: RunConfig):
    if cfg.forecaster == "market":
        return forecast.MarketModelForecaster(window=cfg.window)
    if cfg.forecaster == "drift":
        return forecast.DriftForecaster(window=cfg.window)
    return None  # import mode reads paths from the forecast file


def _effective_t(cfg: RunConfig) -> int:
    windows_path = Path(cfg.out) / "windows.csv"
    if windows_path.exists():
        with open(windows_path, "r", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                return int(row["chosen_t"])
    return cfg.t_post


# --- stages ----------------------------------------------------------------------


def stage_ingest(cfg: RunConfig) -> list[Path]:
    announcements, prices, index, fundamentals = _load_corpus(cfg)
    out = Path(cfg.out)
    rows = [
        [t, s.dates[0].isoformat(), s.dates[-1].isoformat(), len(s)]
        for t, s in sorted(prices.items())
    ]
    summary = out / "ingest_summary.csv"
    _write_csv(summary, ["ticker", "first_date", "last_date", "n_days"], rows)
    counts = out / "ingest_counts.csv"
    _write_csv(
        counts,
        ["announcements", "companies", "index_days", "fundamentals_rows"],
        [[len(announcements), len(prices), len(index) if index else 0, len(fundamentals)]],
    )
    return [summary, counts]


def stage_label(cfg: RunConfig) -> list[Path]:
    announcements = corpus.load_announcements(cfg.announcements)
    dicts = (
        sentiment.KeywordDictionaries.load(cfg.dictionaries)
        if cfg.dictionaries
        else sentiment.KeywordDictionaries.builtin()
    )
    labeled = sentiment.label_announcements(announcements, dicts)
    out = Path(cfg.out)
    labeled_path = out / "announcements_labeled.jsonl"
    corpus.save_announcements(labeled_path, labeled)
    counts = {p: 0 for p in corpus.Polarity}
    for a in labeled:
        counts[a.polarity] += 1
    summary = out / "label_summary.csv"
    _write_csv(
        summary,
        ["positive", "negative", "neutral", "dictionary_version"],
        [[counts[corpus.Polarity.POSITIVE], counts[corpus.Polarity.NEGATIVE],
          counts[corpus.Polarity.NEUTRAL], dicts.version]],
    )
    return [labeled_path, summary]


def stage_windows(cfg: RunConfig) -> list[Path]:
    _, prices, _, _ = _load_corpus(cfg)
    durations: list[list] = []
    all_peaks: list[int] = []
    for ticker in sorted(prices):
        try:
            peaks = market.detect_volume_peaks(prices[ticker], cfg.peak_k, cfg.peak_baseline)
        except PharmEventError:
            continue
        for p in peaks:
            durations.append([ticker, p.start_date.isoformat(), p.end_date.isoformat(), p.duration])
            all_peaks.append(p.duration)
    out = Path(cfg.out)
    duration_path = out / "peak_durations.csv"
    _write_csv(duration_path, ["ticker", "start", "end", "duration"], durations)
    if cfg.t_mode == "auto" and all_peaks:
        chosen = market.estimate_post_window(all_peaks, cfg.quantile)
    else:
        chosen = cfg.t_post
    windows_path = out / "windows.csv"
    _write_csv(
        windows_path,
        ["chosen_t", "t_mode", "quantile", "n_peaks"],
        [[chosen, cfg.t_mode, cfg.quantile, len(all_peaks)]],
    )
    return [duration_path, windows_path]


def _eligible_events(cfg: RunConfig, t_post: int):
    announcements, prices, index, _ = _load_corpus(cfg, labeled=True)
    positioned, skipped = _position_events(announcements, prices, index)
    # history requirements: estimation window, both trend windows, the
    # volatility lookback and the peak baseline before the event; T days after
    pre_needed = max(cfg.window + 1, 2 * 30, market.MarketConfig().volatility_window,
                     cfg.peak_baseline + 1)
    eligible: list[PositionedEvent] = []
    for ev in positioned:
        if ev.event_index < pre_needed:
            skipped.append((ev.announcement.id, "insufficient pre-event history"))
        elif ev.event_index + t_post >= len(ev.stock):
            skipped.append((ev.announcement.id, "insufficient post-event history"))
        else:
            eligible.append(ev)
    return eligible, skipped


def stage_forecast(cfg: RunConfig) -> list[Path]:
    t_post = _effective_t(cfg)
    eligible, skipped = _eligible_events(cfg, t_post)
    forecaster = _make_forecaster(cfg)
    if cfg.forecaster == "market" and (
        not Path(cfg.index).exists() or any(ev.index is None for ev in eligible)
    ):
        raise DegenerateIndex("market-model forecaster requires an index series")
    rows: list[list] = []
    mapes: list[float] = []
    for ev in eligible:
        if cfg.forecaster == "import":
            path = forecast.import_forecast(cfg.forecast_file, ev.announcement.id)
        else:
            path = forecaster.path(ev.stock, ev.index, ev.event_index, t_post)
        rows.append([ev.announcement.id] + [v for v in path.values])
        if cfg.forecaster != "import":
            bt = forecast.sliding_backtest(
                forecaster,
                [forecast.EventWindow(ev.announcement.id, ev.stock, ev.index, ev.event_index)],
                t_post,
                cfg.window,
            )
            if ev.announcement.id in bt.per_event:
                mapes.append(bt.per_event[ev.announcement.id])
    out = Path(cfg.out)
    forecasts_path = out / "forecasts.csv"
    _write_csv(forecasts_path, ["event_id"] + [f"v{t}" for t in range(t_post + 1)], rows)
    skipped_path = out / "skipped_events.csv"
    _write_csv(skipped_path, ["event_id", "reason"], [list(s) for s in skipped])
    summary_path = out / "forecast_summary.csv"
    mean_mape = float(np.mean(mapes)) if mapes else float("nan")
    _write_csv(
        summary_path,
        ["forecaster", "n_events", "n_skipped", "backtest_mape"],
        [[cfg.forecaster, len(rows), len(skipped), mean_mape]],
    )
    return [forecasts_path, skipped_path, summary_path]


def _load_forecasts(cfg: RunConfig) -> dict[str, forecast.NormalizedPath]:
    out: dict[str, forecast.NormalizedPath] = {}
    with open(Path(cfg.out) / "forecasts.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            values = tuple(float(v) for v in row[1:])
            out[row[0]] = forecast.NormalizedPath(values=values)
    return out


def stage_ncar(cfg: RunConfig) -> list[Path]:
    t_post = _effective_t(cfg)
    eligible, _ = _eligible_events(cfg, t_post)
    expected = _load_forecasts(cfg)
    rows: list[list] = []
    for ev in eligible:
        exp_path = expected.get(ev.announcement.id)
        if exp_path is None:
            continue
        actual = forecast.actual_path(ev.stock, ev.event_index, t_post)
        value = impact.ncar(actual, exp_path, t_post)
        cls = impact.bin_class(value)
        rows.append([ev.announcement.id, value, cls.value, cls.label])
    ncar_path = Path(cfg.out) / "ncar.csv"
    _write_csv(ncar_path, ["event_id", "ncar", "class_index", "class_label"], rows)
    return [ncar_path]


def _load_ncar(cfg: RunConfig) -> dict[str, tuple[float, int]]:
    out: dict[str, tuple[float, int]] = {}
    with open(Path(cfg.out) / "ncar.csv", "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out[row["event_id"]] = (float(row["ncar"]), int(row["class_index"]))
    return out


def stage_graph(cfg: RunConfig) -> list[Path]:
    announcements = corpus.load_announcements(Path(cfg.out) / "announcements_labeled.jsonl")
    with_ncar = set(_load_ncar(cfg))
    events = [a for a in announcements if a.id in with_ncar]
    graph = build_event_graph(events)
    id_of = {i: node.id for i, node in enumerate(graph.nodes)}
    rows = [[id_of[e.src], id_of[e.dst], e.reason, e.gap_days] for e in graph.edges]
    edges_path = Path(cfg.out) / "edges.csv"
    _write_csv(edges_path, ["src", "dst", "reason", "gap_days"], rows)
    summary_path = Path(cfg.out) / "graph_summary.csv"
    _write_csv(summary_path, ["nodes", "edges"], [[graph.n, len(graph.edges)]])
    return [edges_path, summary_path]


def _build_records(cfg: RunConfig, t_post: int) -> list[features.EventRecord]:
    eligible, _ = _eligible_events(cfg, t_post)
    expected = _load_forecasts(cfg)
    ncar_map = _load_ncar(cfg)
    _, _, _, fundamentals = _load_corpus(cfg)
    records: list[features.EventRecord] = []
    for ev in eligible:
        ann = ev.announcement
        if ann.id not in ncar_map or ann.id not in expected:
            continue
        mf = market.market_features(
            ev.stock,
            ev.index
            if ev.index is not None
            else corpus.IndexSeries(name="flat", dates=ev.stock.dates, close=(1.0,) * len(ev.stock)),
            ev.event_index,
            market.MarketConfig(peak_k=cfg.peak_k, peak_baseline=cfg.peak_baseline),
        )
        value, cls_idx = ncar_map[ann.id]
        records.append(
            features.EventRecord(
                announcement=ann,
                event_index=ev.event_index,
                market=mf,
                fundamentals=corpus.latest_fundamentals(fundamentals, ann.ticker, ann.date),
                expected=expected[ann.id],
                actual=forecast.actual_path(ev.stock, ev.event_index, t_post),
                ncar=value,
                price_class=PriceClass(cls_idx),
            )
        )
    records.sort(key=lambda r: (r.announcement.date, r.announcement.id))
    return records


def _write_features(path: Path, records: list[features.EventRecord], fm: FeatureMatrix) -> None:
    header = ["event_id"] + list(fm.schema)
    rows = []
    for record, row in zip(records, fm.values):
        rows.append(
            [record.announcement.id]
            + ["" if math.isnan(v) else repr(float(v)) for v in row]
        )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def load_feature_csv(path: str | Path) -> tuple[list[str], FeatureMatrix]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ids: list[str] = []
        rows: list[list[float]] = []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) if v != "" else float("nan") for v in row[1:]])
    return ids, FeatureMatrix(schema=tuple(header[1:]), values=np.asarray(rows))


def _derived_seeds(seed: int) -> dict[str, int]:
    state = np.random.SeedSequence(seed).generate_state(6)
    names = ("gcn", "gbdt", "rf", "evaluate", "explain", "spare")
    return {name: int(value) for name, value in zip(names, state)}


def _model_configs(cfg: RunConfig, seeds: dict[str, int]):
    gcn_cfg = GcnConfig(
        hidden=cfg.gcn_hidden,
        epochs=cfg.gcn_epochs,
        learning_rate=cfg.gcn_lr,
        val_fraction=cfg.gcn_val_fraction,
        seed=seeds["gcn"],
    )
    gbdt_cfg = GbdtConfig(
        n_rounds=cfg.gbdt_rounds,
        max_depth=cfg.gbdt_depth,
        learning_rate=cfg.gbdt_lr,
        subsample=cfg.gbdt_subsample,
        seed=seeds["gbdt"],
    )
    return gcn_cfg, gbdt_cfg


def stage_train(cfg: RunConfig) -> list[Path]:
    t_post = _effective_t(cfg)
    records = _build_records(cfg, t_post)
    fm = features.build_feature_matrix(records)
    labels = np.array([r.price_class.value for r in records], dtype=np.intp)
    graph = build_event_graph([r.announcement for r in records])
    seeds = _derived_seeds(cfg.seed)
    gcn_cfg, gbdt_cfg = _model_configs(cfg, seeds)
    model = train_ensemble(graph, fm, labels, np.ones(len(records), dtype=bool), gcn_cfg, gbdt_cfg)
    out = Path(cfg.out)
    features_path = out / "features.csv"
    _write_features(features_path, records, fm)
    gcn_path = out / "model_gcn.bin"
    save_gcn_model(gcn_path, model.gcn)
    gbdt_path = out / "model_gbdt.json"
    with open(gbdt_path, "w", encoding="utf-8") as fh:
        json.dump(model.gbdt.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    return [features_path, gcn_path, gbdt_path]


def stage_evaluate(cfg: RunConfig) -> list[Path]:
    ids, fm = load_feature_csv(Path(cfg.out) / "features.csv")
    ncar_map = _load_ncar(cfg)
    labels = np.array([ncar_map[i][1] for i in ids], dtype=np.intp)
    announcements = corpus.load_announcements(Path(cfg.out) / "announcements_labeled.jsonl")
    by_id = {a.id: a for a in announcements}
    graph = build_event_graph([by_id[i] for i in ids])
    order = {node.id: pos for pos, node in enumerate(graph.nodes)}
    perm = np.argsort([order[i] for i in ids])
    fm = fm.take(perm)
    labels = labels[perm]

    seeds = _derived_seeds(cfg.seed)
    plan = stratified_splits(labels, seeds["evaluate"], cfg.eval_repeats, cfg.train_fraction)
    gcn_cfg, gbdt_cfg = _model_configs(cfg, seeds)
    per_class: dict[str, dict[int, list[float]]] = {"gcn_gb": {}, "rf": {}}
    weighted: dict[str, list[float]] = {"gcn_gb": [], "rf": []}
    for rep, (train_ids, test_ids) in enumerate(plan.repeats):
        train_mask = np.zeros(fm.n, dtype=bool)
        train_mask[list(train_ids)] = True
        test_rows = np.array(test_ids, dtype=np.intp)
        rep_gcn = replace(gcn_cfg, seed=seeds["gcn"] + rep)
        rep_gbdt = replace(gbdt_cfg, seed=seeds["gbdt"] + rep)
        ensemble = train_ensemble(graph, fm, labels, train_mask, rep_gcn, rep_gbdt)
        probs = ensemble_proba(ensemble, graph, fm)[test_rows]
        report = roc_auc_ovr(probs, labels[test_rows])
        rf_cfg = ForestConfig(n_trees=cfg.rf_trees, seed=seeds["rf"] + rep)
        forest = train_random_forest(fm.take(np.flatnonzero(train_mask)), labels[train_mask], rf_cfg)
        rf_probs = forest_proba(forest, fm.take(test_rows))
        rf_report = roc_auc_ovr(rf_probs, labels[test_rows])
        for model_name, rpt in (("gcn_gb", report), ("rf", rf_report)):
            weighted[model_name].append(rpt.weighted_mean)
            for k, auc in rpt.per_class.items():
                if auc is not None:
                    per_class[model_name].setdefault(k, []).append(auc)

    rows: list[list] = []
    chart: dict[str, list[float]] = {"gcn_gb": [], "rf": []}
    chart_err: dict[str, list[float]] = {"gcn_gb": [], "rf": []}
    for model_name in ("gcn_gb", "rf"):
        for k in range(6):
            values = per_class[model_name].get(k, [])
            mean = float(np.mean(values)) if values else float("nan")
            std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
            rows.append([model_name, k, PriceClass(k).label, mean, std, len(values)])
            chart[model_name].append(0.0 if math.isnan(mean) else mean)
            chart_err[model_name].append(std)
        w = np.asarray(weighted[model_name], dtype=float)
        rows.append([
            model_name, "", "weighted", float(np.mean(w)),
            float(np.std(w, ddof=1)) if len(w) > 1 else 0.0, len(w),
        ])
    out = Path(cfg.out)
    auc_path = out / "auc.csv"
    _write_csv(auc_path, ["model", "class_index", "class_label", "mean_auc", "std_auc", "n_folds"], rows)
    svg_path = out / "auc_chart.svg"
    svg = svgplot.bar_chart_svg(
        [PriceClass(k).label for k in range(6)],
        chart,
        errors=chart_err,
        title="One-vs-rest ROC AUC by price-change class",
        y_max=1.0,
    )
    svg_path.write_text(svg, encoding="utf-8")
    return [auc_path, svg_path]


def stage_explain(cfg: RunConfig) -> list[Path]:
    ids, fm = load_feature_csv(Path(cfg.out) / "features.csv")
    ncar_map = _load_ncar(cfg)
    labels = np.array([ncar_map[i][1] for i in ids], dtype=np.intp)
    announcements = corpus.load_announcements(Path(cfg.out) / "announcements_labeled.jsonl")
    by_id = {a.id: a for a in announcements}
    graph = build_event_graph([by_id[i] for i in ids])
    order = {node.id: pos for pos, node in enumerate(graph.nodes)}
    perm = np.argsort([order[i] for i in ids])
    fm = fm.take(perm)
    labels = labels[perm]

    from .graph import gcn_probs, load_gcn_model
    from .boost import GCN_PROB_COLUMNS, GbdtModel

    gcn = load_gcn_model(Path(cfg.out) / "model_gcn.bin")
    with open(Path(cfg.out) / "model_gbdt.json", "r", encoding="utf-8") as fh:
        gbdt = GbdtModel.from_dict(json.load(fh))
    # the deliverable model was trained on all rows, so all-row means
    # reproduce its imputation exactly
    with np.errstate(invalid="ignore"):
        means = np.nanmean(fm.values, axis=0)
    means = np.where(np.isfinite(means), means, 0.0)
    filled = np.where(np.isnan(fm.values), means, fm.values)
    probs = gcn_probs(gcn, graph, filled)
    augmented = fm.with_columns(GCN_PROB_COLUMNS, probs)
    seeds = _derived_seeds(cfg.seed)
    importances = permutation_importance(
        gbdt, augmented, labels, n_repeats=cfg.explain_repeats, seed=seeds["explain"]
    )
    rows = [[fi.feature, fi.importance, fi.std] for fi in importances]
    out = Path(cfg.out)
    imp_path = out / "importance.csv"
    _write_csv(imp_path, ["feature", "importance", "std"], rows)
    top = importances[: min(20, len(importances))]
    svg_path = out / "importance_chart.svg"
    svg = svgplot.bar_chart_svg(
        [fi.feature for fi in top],
        {"importance": [max(fi.importance, 0.0) for fi in top]},
        errors={"importance": [fi.std for fi in top]},
        title="Permutation importance (metric drop)",
    )
    svg_path.write_text(svg, encoding="utf-8")
    return [imp_path, svg_path]


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "label": stage_label,
    "windows": stage_windows,
    "forecast": stage_forecast,
    "ncar": stage_ncar,
    "graph": stage_graph,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "explain": stage_explain,
}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute all stages in order and write manifest.json.

    Identical config and seed produce byte-identical outputs; the manifest
    carries a checksum per output file so reruns can be diffed cheaply.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_dict(), "seed": cfg.seed, "stages": []}
    for stage in STAGES:
        try:
            outputs = _STAGE_FUNCS[stage](cfg)
        except PharmEventError as exc:
            raise StageError(stage, exc) from exc
        manifest["stages"].append(
            {"name": stage, "outputs": {p.name: _sha256(p) for p in outputs}}
        )
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


# --- standalone reports (not pipeline stages) -----------------------------------


def run_stats(cfg: RunConfig) -> list[Path]:
    """Moment summaries, normality and rank tests, and the mismatch matrix."""
    t_post = _effective_t(cfg)
    announcements = corpus.load_announcements(Path(cfg.out) / "announcements_labeled.jsonl")
    polarity_of = {a.id: a.polarity for a in announcements}
    ncar_map = _load_ncar(cfg)
    groups: dict[corpus.Polarity, list[float]] = {p: [] for p in corpus.Polarity}
    for event_id, (value, _) in ncar_map.items():
        pol = polarity_of.get(event_id)
        if pol is not None:
            groups[pol].append(value)
    out = Path(cfg.out)
    outputs: list[Path] = []

    moment_rows: list[list] = []
    ks_rows: list[list] = []
    for pol in impact.POLARITY_ORDER:
        values = groups[pol]
        try:
            m = impact.moments(values)
            moment_rows.append([pol.value, m.n, m.mean, m.std, m.skewness, m.excess_kurtosis])
        except PharmEventError as exc:
            moment_rows.append([pol.value, len(values), "", "", "", f"{type(exc).__name__}"])
        try:
            ks = impact.ks_normality(values)
            ks_rows.append([pol.value, ks.statistic, ks.p_value])
        except PharmEventError as exc:
            ks_rows.append([pol.value, "", f"{type(exc).__name__}"])
        if len(values) >= 2:
            svg_path = out / f"ncar_hist_{pol.value}.svg"
            svg_path.write_text(
                svgplot.histogram_svg(values, bins=25, title=f"NCAR distribution: {pol.value}"),
                encoding="utf-8",
            )
            outputs.append(svg_path)
    moments_path = out / "stats_moments.csv"
    _write_csv(moments_path, ["polarity", "n", "mean", "std", "skewness", "excess_kurtosis"], moment_rows)
    ks_path = out / "stats_ks.csv"
    _write_csv(ks_path, ["polarity", "statistic", "p_value"], ks_rows)
    outputs.extend([moments_path, ks_path])

    eligible, _ = _eligible_events(cfg, t_post)
    windows = [
        forecast.EventWindow(ev.announcement.id, ev.stock, ev.index, ev.event_index)
        for ev in eligible
    ]
    forecaster = _make_forecaster(cfg) or forecast.DriftForecaster(window=cfg.window)
    control = impact.non_announcement_sample(windows, forecaster, t_post)
    u_rows: list[list] = []
    for pol in (corpus.Polarity.POSITIVE, corpus.Polarity.NEGATIVE):
        if groups[pol] and control.values:
            res = impact.mann_whitney_u(groups[pol], control.values)
            u_rows.append([pol.value, len(groups[pol]), len(control.values), res.u_a, res.p_value, res.method])
    u_path = out / "stats_utest.csv"
    _write_csv(u_path, ["polarity", "n_events", "n_control", "u", "p_value", "method"], u_rows)
    outputs.append(u_path)

    if len(groups[corpus.Polarity.NEUTRAL]) >= 2:
        sigma_neutral = float(np.std(groups[corpus.Polarity.NEUTRAL], ddof=1))
    else:
        sigma_neutral = 0.23  # fall back to the reference value when no neutral sample
    pairs = [
        (polarity_of[event_id], value)
        for event_id, (value, _) in ncar_map.items()
        if polarity_of.get(event_id) is not None
    ]
    if pairs and sigma_neutral > 0:
        matrix = impact.mismatch_matrix(pairs, sigma_neutral)
        rows = []
        for i, announced in enumerate(impact.POLARITY_ORDER):
            for j, derived in enumerate(impact.POLARITY_ORDER):
                rows.append([
                    announced.value, derived.value, matrix.counts[i][j], matrix.rates[i][j],
                ])
        mm_path = out / "stats_mismatch.csv"
        _write_csv(mm_path, ["announced", "derived", "count", "rate"], rows)
        outputs.append(mm_path)
    return outputs


def run_report(cfg: RunConfig) -> list[Path]:
    """Announcements-per-year table."""
    source = Path(cfg.out) / "announcements_labeled.jsonl"
    if not source.exists():
        source = Path(cfg.announcements)
    announcements = corpus.load_announcements(source)
    counts: dict[int, int] = {}
    for a in announcements:
        counts[a.date.year] = counts.get(a.date.year, 0) + 1
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "announcements_per_year.csv"
    _write_csv(path, ["year", "count"], [[y, counts[y]] for y in sorted(counts)])
    return [path]
