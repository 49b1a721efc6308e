"""Event-study engine for pharma stock reactions to clinical-trial announcements."""

from .corpus import (
    Announcement,
    Fundamentals,
    IndexSeries,
    Phase,
    Polarity,
    PriceSeries,
    align_to_calendar,
    load_announcements,
    load_fundamentals,
    load_index_series,
    load_price_series,
)
from .forecast import (
    DriftForecaster,
    EventWindow,
    MarketModel,
    MarketModelForecaster,
    NormalizedPath,
    expected_path,
    fit_market_model,
    import_forecast,
    sliding_backtest,
)
from .impact import (
    PriceClass,
    bin_class,
    ks_normality,
    mann_whitney_u,
    mismatch_matrix,
    moments,
    ncar,
    polarity_from_ncar,
)
from .market import detect_volume_peaks, estimate_post_window, market_features, volatility
from .sentiment import KeywordDictionaries, label_rule_based, train_bow_classifier
from .graph import EventGraph, GcnConfig, build_event_graph, gcn_probs, train_gcn
from .boost import (
    FeatureMatrix,
    GbdtConfig,
    predict_proba,
    shapley_brute,
    train_ensemble,
    train_gbdt,
    train_random_forest,
)
from .evalkit import SynthConfig, roc_auc_ovr, stratified_splits, synth_generate
from .pipeline import RunConfig, run_pipeline

__version__ = "0.1.0"
