"""Reference results measured on the original full-scale announcement corpus.

These values are labeled benchmarks for orientation only: they come from a
proprietary dataset and are not reproducible from synthetic desk-scale
data. Nothing in the engine asserts them.
"""

# Rule-based vs learned-assistant labeling agreement, before and after the
# keyword update (divergences; coinciding positive/negative/neutral).
LABELING_INITIAL = {"divergences": 207, "positive": 1447, "negative": 445, "neutral": 3337}
LABELING_UPDATED = {"divergences": 66, "positive": 1562, "negative": 765, "neutral": 3043}

# Public-company corpus composition after labeling.
N_POSITIVE_EVENTS = 1105
N_NEGATIVE_EVENTS = 549

# Normality test p-values of the NCAR distributions per polarity group.
KS_P_NEGATIVE = 7e-9
KS_P_POSITIVE = 1e-34
KS_P_NEUTRAL = 3e-16

# Rank-test p-values against the non-announcement control sample.
U_P_POSITIVE_VS_CONTROL = 0.34  # not rejected
U_P_NEGATIVE_VS_CONTROL = 2e-13  # rejected

# Forecaster pre-event backtest error.
BACKTEST_MAPE = 0.07

# Post-announcement window: 90% of volume-peak durations fit in 20 days.
POST_WINDOW_DAYS = 20

# Price-change polarity threshold: half the neutral-group NCAR std.
SIGMA_NEUTRAL_HALF = 0.115

# Highest mismatch-matrix rates (negative news with negative/neutral moves).
MISMATCH_TOP_RATES = (0.237, 0.241)

# Per-class one-vs-rest ROC AUC (mean, std over 10 stratified repeats),
# ordered from Extremely Negative to Extremely Positive.
AUC_GCN_GB = ((0.87, 0.02), (0.77, 0.03), (0.63, 0.02), (0.71, 0.01), (0.70, 0.02), (0.75, 0.04))
AUC_RF = ((0.82, 0.02), (0.70, 0.02), (0.62, 0.01), (0.71, 0.01), (0.68, 0.05), (0.75, 0.02))
AUC_WEIGHTED_GCN_GB = 0.71
AUC_WEIGHTED_RF = 0.69

# Class supports on the reference corpus, same order.
CLASS_COUNTS = (211, 189, 599, 478, 110, 67)
