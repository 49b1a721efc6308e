"""Event impact measurement and the statistical battery.

The target variable is the normalized cumulative abnormal return: the sum
of daily differences between the realized and expected normalized paths
over the post-event window, divided by the sum of the expected path over
the same days. NCAR values are binned into six price-change classes and
compared across announcement polarities with a fitted-parameter
Kolmogorov-Smirnov normality test and a Mann-Whitney U test.
"""
from __future__ import annotations

import itertools
import math
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .corpus import Polarity
from .errors import (
    EmptySample,
    InsufficientHistory,
    InvariantViolation,
    LengthMismatch,
    MissingLabel,
    NonFinite,
    TooFew,
    TooFewForGroups,
    ZeroVariance,
)
from .forecast import EventWindow, Forecaster, NormalizedPath, actual_path


class PriceClass(Enum):
    EXTREMELY_NEGATIVE = 0
    MODERATELY_NEGATIVE = 1
    NEGATIVE = 2
    POSITIVE = 3
    MODERATELY_POSITIVE = 4
    EXTREMELY_POSITIVE = 5

    @property
    def label(self) -> str:
        return _CLASS_LABELS[self.value]


_CLASS_LABELS = (
    "Extremely Negative",
    "Moderately Negative",
    "Negative",
    "Positive",
    "Moderately Positive",
    "Extremely Positive",
)

# Half-open class boundaries: value <= -0.28 is Extremely Negative,
# (-0.28, -0.14] Moderately Negative, (-0.14, 0] Negative, (0, 0.14]
# Positive, (0.14, 0.28] Moderately Positive, above 0.28 Extremely Positive.
CLASS_BOUNDARIES = (-0.28, -0.14, 0.0, 0.14, 0.28)
N_CLASSES = 6


def bin_class(ncar_value: float) -> PriceClass:
    """Map an NCAR value into its price-change class."""
    if not math.isfinite(ncar_value):
        raise NonFinite(f"cannot bin {ncar_value}")
    return PriceClass(bisect_left(CLASS_BOUNDARIES, ncar_value))


def ncar(actual: NormalizedPath, expected: NormalizedPath, T: int) -> float:
    """Normalized cumulative abnormal return over days 1..T.

    Discrete sums over trading days stand in for the integral: daily data
    make the integral notational.
    """
    if len(actual) != T + 1 or len(expected) != T + 1:
        raise LengthMismatch(
            f"paths must have length {T + 1}, got {len(actual)} and {len(expected)}"
        )
    a = np.asarray(actual.values[1:], dtype=float)
    e = np.asarray(expected.values[1:], dtype=float)
    denom = float(np.sum(e))
    assert denom > 0.0, "expected path sums must be positive for a valid NormalizedPath"
    return float(np.sum(a - e) / denom)


@dataclass(frozen=True)
class ImpactResult:
    event_id: str
    actual: NormalizedPath
    expected: NormalizedPath
    ar: tuple[float, ...]
    ncar: float
    price_class: PriceClass


def impact_result(event_id: str, actual: NormalizedPath, expected: NormalizedPath, T: int) -> ImpactResult:
    value = ncar(actual, expected, T)
    ar = tuple(a - e for a, e in zip(actual.values[1:], expected.values[1:]))
    return ImpactResult(
        event_id=event_id,
        actual=actual,
        expected=expected,
        ar=ar,
        ncar=value,
        price_class=bin_class(value),
    )


# --- distribution summaries -------------------------------------------------


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float


def moments(sample) -> MomentSummary:
    """Sample mean, std (divisor n-1), skewness and excess kurtosis."""
    x = np.asarray(list(sample), dtype=float)
    if len(x) < 2:
        raise TooFew(f"need at least 2 values, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise NonFinite("sample contains non-finite values")
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d**2))
    if m2 == 0.0:
        raise ZeroVariance("constant sample")
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return MomentSummary(
        n=len(x),
        mean=mean,
        std=float(np.std(x, ddof=1)),
        skewness=m3 / m2**1.5,
        excess_kurtosis=m4 / m2**2 - 3.0,
    )


def _normal_cdf(z: np.ndarray | float):
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(z) / math.sqrt(2.0)))


def _kolmogorov_sf(x: float, terms: int = 100) -> float:
    """Asymptotic Kolmogorov survival function, series truncated at `terms`."""
    if x <= 0.02:
        return 1.0
    j = np.arange(1, terms + 1, dtype=float)
    s = 2.0 * float(np.sum((-1.0) ** (j - 1) * np.exp(-2.0 * j**2 * x**2)))
    return min(1.0, max(0.0, s))


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def ks_normality(sample, mean: float | None = None, std: float | None = None) -> KsResult:
    """Kolmogorov-Smirnov distance of the sample from a normal distribution.

    By default the normal's parameters are the sample mean and std (note:
    estimating them makes the asymptotic p conservative; pass fixed mean
    and std when the null parameters are known). The p-value comes from
    the asymptotic Kolmogorov distribution applied to sqrt(n) * D.
    """
    x = np.sort(np.asarray(list(sample), dtype=float))
    n = len(x)
    if n < 8:
        raise TooFew(f"need at least 8 values, got {n}")
    if mean is None:
        mean = float(x.mean())
    if std is None:
        std = float(np.std(x, ddof=1))
    if std <= 0.0:
        raise ZeroVariance("zero std")
    cdf = _normal_cdf((x - mean) / std)
    i = np.arange(1, n + 1, dtype=float)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1.0) / n))
    d = max(d_plus, d_minus)
    return KsResult(statistic=d, p_value=_kolmogorov_sf(math.sqrt(n) * d))


# --- Mann-Whitney U ----------------------------------------------------------


@dataclass(frozen=True)
class MannWhitneyResult:
    u_a: float
    p_value: float
    method: str


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled), dtype=float)
    i = 0
    sorted_vals = pooled[order]
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r_a = float(ranks[: len(a)].sum())
    return r_a - len(a) * (len(a) + 1) / 2.0


def mann_whitney_u(a, b, method: str = "auto") -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test with midrank tie handling.

    method="exact" enumerates all group assignments of the pooled values
    (used automatically when n_a + n_b <= 12); method="normal" uses the
    normal approximation with tie-corrected variance and continuity
    correction.
    """
    a = np.asarray(list(a), dtype=float)
    b = np.asarray(list(b), dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("both samples must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise InvariantViolation(f"unknown method {method!r}")
    na, nb = len(a), len(b)
    u = _u_statistic(a, b)
    if method == "auto":
        method = "exact" if na + nb <= 12 else "normal"
    if method == "exact":
        return MannWhitneyResult(u_a=u, p_value=_exact_p(a, b, u), method="exact")
    return MannWhitneyResult(u_a=u, p_value=_normal_p(a, b, u), method="normal")


def _normal_p(a: np.ndarray, b: np.ndarray, u: float) -> float:
    na, nb = len(a), len(b)
    n = na + nb
    pooled = np.concatenate([a, b])
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts)) / (n * (n - 1))
    var = na * nb / 12.0 * ((n + 1) - tie_term)
    if var <= 0.0:
        return 1.0  # all pooled values identical
    mu = na * nb / 2.0
    z = max(0.0, abs(u - mu) - 0.5) / math.sqrt(var)
    return min(1.0, 2.0 * (1.0 - float(_normal_cdf(z))))


def _exact_p(a: np.ndarray, b: np.ndarray, u_obs: float) -> float:
    """Exact two-sided p by enumerating group assignments of the pooled values."""
    na, nb = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    mu = na * nb / 2.0
    threshold = abs(u_obs - mu) - 1e-12
    count = 0
    total = 0
    offset = na * (na + 1) / 2.0
    for combo in itertools.combinations(range(na + nb), na):
        u = float(ranks[list(combo)].sum()) - offset
        if abs(u - mu) >= threshold:
            count += 1
        total += 1
    return count / total


# --- non-announcement control sample -----------------------------------------


@dataclass(frozen=True)
class ControlSample:
    values: tuple[float, ...]
    skipped: tuple[tuple[str, str], ...]


def non_announcement_sample(
    events: list[EventWindow], forecaster: Forecaster, T: int
) -> ControlSample:
    """NCARs of the T-day windows ending the day before each event.

    Each window is anchored T+1 days before its event and uses the same
    forecaster, fitted on the history preceding the anchor, so the control
    values are produced exactly like the event values but on
    announcement-free days. Events without enough history are skipped and
    reported.
    """
    values: list[float] = []
    skipped: list[tuple[str, str]] = []
    for ev in events:
        anchor = ev.event_index - (T + 1)
        try:
            expected = forecaster.path(ev.stock, ev.index, anchor, T)
            realized = actual_path(ev.stock, anchor, T)
        except Exception as exc:  # skipped events are reported, not fatal
            skipped.append((ev.event_id, f"{type(exc).__name__}: {exc}"))
            continue
        values.append(ncar(realized, expected, T))
    if not values and not skipped:
        raise InsufficientHistory("no events supplied")
    return ControlSample(values=tuple(values), skipped=tuple(skipped))


# --- polarity mismatch --------------------------------------------------------


def polarity_from_ncar(ncar_value: float, sigma_neutral: float) -> Polarity:
    """Price-change polarity: beyond +-sigma_neutral/2 is positive/negative.

    Boundary values are inclusive to neutral for deterministic tie
    handling.
    """
    if not math.isfinite(ncar_value):
        raise NonFinite(f"cannot classify {ncar_value}")
    if sigma_neutral <= 0:
        raise ZeroVariance("sigma_neutral must be positive")
    half = sigma_neutral / 2.0
    if ncar_value > half:
        return Polarity.POSITIVE
    if ncar_value < -half:
        return Polarity.NEGATIVE
    return Polarity.NEUTRAL


POLARITY_ORDER = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)


@dataclass(frozen=True)
class MismatchMatrix:
    """3x3 counts: rows announcement polarity, columns NCAR polarity.

    Row and column order is (positive, negative, neutral).
    """

    counts: tuple[tuple[int, int, int], ...]
    total: int

    @property
    def rates(self) -> tuple[tuple[float, float, float], ...]:
        return tuple(tuple(c / self.total for c in row) for row in self.counts)


def mismatch_matrix(
    events: list[tuple[Polarity | None, float]], sigma_neutral: float
) -> MismatchMatrix:
    """Cross-tabulate announced polarity against NCAR-derived polarity."""
    if not events:
        raise EmptySample("no events")
    idx = {p: i for i, p in enumerate(POLARITY_ORDER)}
    counts = [[0, 0, 0] for _ in range(3)]
    for announced, value in events:
        if announced is None:
            raise MissingLabel("event lacks announcement polarity")
        derived = polarity_from_ncar(value, sigma_neutral)
        counts[idx[announced]][idx[derived]] += 1
    return MismatchMatrix(counts=tuple(tuple(row) for row in counts), total=len(events))


# --- covariate group analysis ---------------------------------------------------


@dataclass(frozen=True)
class GroupStat:
    covariate_lo: float
    covariate_hi: float
    median_value: float
    count: int


def equal_group_analysis(values, covariate, n_groups: int) -> list[GroupStat]:
    """Split events into equal-count groups by covariate; median NCAR per group.

    Events are sorted by covariate; when the count does not divide evenly
    the remainder goes to the lowest-covariate groups first, so sizes
    differ by at most one.
    """
    values = list(values)
    covariate = list(covariate)
    if len(values) != len(covariate):
        raise LengthMismatch(f"{len(values)} values vs {len(covariate)} covariates")
    n = len(values)
    if n_groups < 1 or n < n_groups:
        raise TooFewForGroups(f"cannot split {n} items into {n_groups} groups")
    order = sorted(range(n), key=lambda i: (covariate[i], i))
    base, rem = divmod(n, n_groups)
    out: list[GroupStat] = []
    start = 0
    for g in range(n_groups):
        size = base + (1 if g < rem else 0)
        members = order[start : start + size]
        start += size
        vals = [values[i] for i in members]
        covs = [covariate[i] for i in members]
        out.append(
            GroupStat(
                covariate_lo=min(covs),
                covariate_hi=max(covs),
                median_value=float(np.median(vals)),
                count=size,
            )
        )
    return out
