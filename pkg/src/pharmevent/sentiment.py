"""Rule-based polarity labeling with a learned-classifier bootstrap.

The primary labeler is a keyword rule: negative keywords dominate (negative
news moves prices harder), then positive, else neutral. A bag-of-ngrams
logistic regression is trained on the rule labels and used to surface
announcements where the two disagree; divergent texts feed a keyword
suggester whose output a human merges back into the dictionaries.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Announcement, Polarity
from .errors import DegenerateLabels, EmptyInput, EmptyText, IdMismatch, ParseError

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)?")

# Canonical class order used by the bag-of-words model.
CLASS_ORDER = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens with punctuation stripped."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class KeywordDictionaries:
    """Versioned positive/negative keyword phrase sets (lowercase, trimmed)."""

    positive: frozenset[str]
    negative: frozenset[str]
    version: int = 1

    def __post_init__(self):
        overlap = self.positive & self.negative
        if overlap:
            raise ParseError(f"phrases in both dictionaries: {sorted(overlap)}")
        for phrase in self.positive | self.negative:
            if not phrase or phrase != phrase.strip().lower():
                raise ParseError(f"phrase not trimmed lowercase: {phrase!r}")

    @classmethod
    def from_lists(cls, positive, negative, version: int = 1) -> "KeywordDictionaries":
        return cls(
            positive=frozenset(p.strip().lower() for p in positive),
            negative=frozenset(p.strip().lower() for p in negative),
            version=version,
        )

    @classmethod
    def load(cls, path: str | Path) -> "KeywordDictionaries":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls.from_lists(obj["positive"], obj["negative"], int(obj.get("version", 1)))

    @classmethod
    def builtin(cls) -> "KeywordDictionaries":
        """The dictionaries shipped with the package."""
        data = resources.files("pharmevent.data").joinpath("keywords.json").read_text("utf-8")
        obj = json.loads(data)
        return cls.from_lists(obj["positive"], obj["negative"], int(obj.get("version", 1)))

    def save(self, path: str | Path) -> None:
        obj = {
            "positive": sorted(self.positive),
            "negative": sorted(self.negative),
            "version": self.version,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def with_added(self, positive=(), negative=()) -> "KeywordDictionaries":
        """New dictionaries with extra phrases merged and the version bumped."""
        return KeywordDictionaries(
            positive=self.positive | frozenset(p.strip().lower() for p in positive),
            negative=self.negative | frozenset(p.strip().lower() for p in negative),
            version=self.version + 1,
        )


def _phrase_matches(phrase_tokens: tuple[str, ...], tokens: list[str]) -> bool:
    k = len(phrase_tokens)
    if k == 0 or k > len(tokens):
        return False
    if k == 1:
        return phrase_tokens[0] in tokens
    for i in range(len(tokens) - k + 1):
        if tuple(tokens[i : i + k]) == phrase_tokens:
            return True
    return False


def label_rule_based(text: str, dicts: KeywordDictionaries) -> Polarity:
    """Keyword polarity of a text.

    Whole-word case-insensitive matching after punctuation stripping;
    multiword phrases match as consecutive token runs. Negative keywords
    take precedence over positive ones.
    """
    if not text or not text.strip():
        raise EmptyText("cannot label empty text")
    tokens = tokenize(text)
    for phrase in sorted(dicts.negative):
        if _phrase_matches(tuple(phrase.split()), tokens):
            return Polarity.NEGATIVE
    for phrase in sorted(dicts.positive):
        if _phrase_matches(tuple(phrase.split()), tokens):
            return Polarity.POSITIVE
    return Polarity.NEUTRAL


def label_announcements(
    announcements: list[Announcement], dicts: KeywordDictionaries
) -> list[Announcement]:
    return [a.with_polarity(label_rule_based(a.text, dicts)) for a in announcements]


# --- bag-of-ngrams assistant ---------------------------------------------------


def _ngrams(tokens: list[str]) -> list[str]:
    grams = list(tokens)
    grams.extend(" ".join(pair) for pair in zip(tokens, tokens[1:]))
    return grams


@dataclass
class BowConfig:
    learning_rate: float = 0.5
    max_epochs: int = 500
    l2: float = 1e-4
    tol: float = 1e-6
    seed: int = 0


@dataclass
class BowModel:
    """Multinomial logistic regression over unigram+bigram counts."""

    vocabulary: dict[str, int]
    weights: np.ndarray  # (V, 3)
    bias: np.ndarray  # (3,)
    training_meta: dict = field(default_factory=dict)

    def _vectorize(self, texts: list[str]):
        rows, cols, vals = [], [], []
        for i, text in enumerate(texts):
            counts: dict[int, int] = {}
            for g in _ngrams(tokenize(text)):
                j = self.vocabulary.get(g)
                if j is not None:
                    counts[j] = counts.get(j, 0) + 1
            for j, c in sorted(counts.items()):
                rows.append(i)
                cols.append(j)
                vals.append(float(c))
        X = np.zeros((len(texts), len(self.vocabulary)))
        if rows:
            X[rows, cols] = vals
        return X

    def predict_proba(self, texts: list[str]) -> np.ndarray:
        X = self._vectorize(texts)
        logits = X @ self.weights + self.bias
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, texts: list[str]) -> list[Polarity]:
        probs = self.predict_proba(texts)
        return [CLASS_ORDER[i] for i in probs.argmax(axis=1)]


def train_bow_classifier(
    corpus: list[tuple[str, Polarity]], config: BowConfig | None = None
) -> BowModel:
    """Fit the assistant classifier on rule-labeled texts.

    Full-batch gradient descent on the softmax cross-entropy with L2;
    deterministic given the seed recorded in training_meta.
    """
    config = config or BowConfig()
    if not corpus:
        raise EmptyInput("empty training corpus")
    labels = {pol for _, pol in corpus}
    if len(labels) < 2:
        raise DegenerateLabels(f"single class in corpus: {labels}")

    vocab: dict[str, int] = {}
    for text, _ in corpus:
        for g in _ngrams(tokenize(text)):
            if g not in vocab:
                vocab[g] = len(vocab)
    if not vocab:
        raise EmptyInput("no tokens in corpus")

    n, v = len(corpus), len(vocab)
    X = np.zeros((n, v))
    y = np.zeros(n, dtype=np.intp)
    class_index = {pol: k for k, pol in enumerate(CLASS_ORDER)}
    for i, (text, pol) in enumerate(corpus):
        y[i] = class_index[pol]
        for g in _ngrams(tokenize(text)):
            X[i, vocab[g]] += 1.0

    W = np.zeros((v, 3))
    b = np.zeros(3)
    Y = np.zeros((n, 3))
    Y[np.arange(n), y] = 1.0
    epochs_run = 0
    for epoch in range(config.max_epochs):
        logits = X @ W + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs = e / e.sum(axis=1, keepdims=True)
        G = (probs - Y) / n
        gW = X.T @ G + config.l2 * W
        gb = G.sum(axis=0)
        W -= config.learning_rate * gW
        b -= config.learning_rate * gb
        epochs_run = epoch + 1
        if max(np.abs(gW).max(), np.abs(gb).max()) < config.tol:
            break
    return BowModel(
        vocabulary=vocab,
        weights=W,
        bias=b,
        training_meta={"epochs": epochs_run, "seed": config.seed},
    )


# --- divergence analysis ---------------------------------------------------------


@dataclass(frozen=True)
class DivergenceReport:
    n_divergences: int
    n_coinciding_positive: int
    n_coinciding_negative: int
    n_coinciding_neutral: int
    divergent_ids: tuple[str, ...]

    @property
    def total(self) -> int:
        return (
            self.n_divergences
            + self.n_coinciding_positive
            + self.n_coinciding_negative
            + self.n_coinciding_neutral
        )


def divergence_report(
    labels_a: dict[str, Polarity], labels_b: dict[str, Polarity]
) -> DivergenceReport:
    """Count agreements and disagreements of two labelings of one corpus."""
    if set(labels_a) != set(labels_b):
        raise IdMismatch("labelings cover different id sets")
    divergent: list[str] = []
    coinciding = {Polarity.POSITIVE: 0, Polarity.NEGATIVE: 0, Polarity.NEUTRAL: 0}
    for ann_id in sorted(labels_a):
        a, b = labels_a[ann_id], labels_b[ann_id]
        if a == b:
            coinciding[a] += 1
        else:
            divergent.append(ann_id)
    return DivergenceReport(
        n_divergences=len(divergent),
        n_coinciding_positive=coinciding[Polarity.POSITIVE],
        n_coinciding_negative=coinciding[Polarity.NEGATIVE],
        n_coinciding_neutral=coinciding[Polarity.NEUTRAL],
        divergent_ids=tuple(divergent),
    )


@dataclass(frozen=True)
class KeywordSuggestion:
    phrase: str
    polarity: Polarity
    score: float


def suggest_keywords(
    divergent: list[tuple[str, Polarity, Polarity]],
    k: int,
    dicts: KeywordDictionaries | None = None,
) -> list[KeywordSuggestion]:
    """Candidate keywords mined from divergent texts.

    Ranks unigrams and bigrams by class-conditional log-odds of document
    frequency within the divergent set, grouping documents by the model's
    label. Phrases already in the dictionaries are excluded. The output is
    advisory: a human merges accepted phrases via
    KeywordDictionaries.with_added.
    """
    if not divergent:
        raise EmptyInput("empty divergent set")
    if k <= 0:
        return []
    known = (dicts.positive | dicts.negative) if dicts is not None else frozenset()

    by_class: dict[Polarity, list[set[str]]] = {p: [] for p in CLASS_ORDER}
    for text, _rule_label, model_label in divergent:
        by_class[model_label].append(set(_ngrams(tokenize(text))))

    all_phrases = sorted(set().union(*(g for docs in by_class.values() for g in docs)) - known)
    suggestions: list[KeywordSuggestion] = []
    n_total = len(divergent)
    for polarity in (Polarity.POSITIVE, Polarity.NEGATIVE):
        docs_c = by_class[polarity]
        n_c = len(docs_c)
        n_other = n_total - n_c
        if n_c == 0:
            continue
        for phrase in all_phrases:
            df_c = sum(1 for doc in docs_c if phrase in doc)
            if df_c == 0:
                continue
            df_other = sum(
                1
                for pol, docs in by_class.items()
                if pol != polarity
                for doc in docs
                if phrase in doc
            )
            score = math.log((df_c + 0.5) / (n_c - df_c + 0.5)) - math.log(
                (df_other + 0.5) / (n_other - df_other + 0.5)
            )
            suggestions.append(KeywordSuggestion(phrase=phrase, polarity=polarity, score=score))
    suggestions.sort(key=lambda s: (-s.score, s.phrase, s.polarity.value))
    return suggestions[:k]


@dataclass(frozen=True)
class BootstrapResult:
    report: DivergenceReport
    suggestions: tuple[KeywordSuggestion, ...]
    model: BowModel


def bootstrap_round(
    announcements: list[Announcement],
    dicts: KeywordDictionaries,
    k: int = 10,
    config: BowConfig | None = None,
) -> BootstrapResult:
    """One labeling round: rule labels, assistant fit, divergences, candidates."""
    texts = [a.text for a in announcements]
    rule = {a.id: label_rule_based(a.text, dicts) for a in announcements}
    model = train_bow_classifier([(a.text, rule[a.id]) for a in announcements], config)
    predicted = dict(zip((a.id for a in announcements), model.predict(texts)))
    report = divergence_report(rule, predicted)
    divergent = [
        (a.text, rule[a.id], predicted[a.id]) for a in announcements if a.id in set(report.divergent_ids)
    ]
    suggestions = suggest_keywords(divergent, k, dicts) if divergent else []
    return BootstrapResult(report=report, suggestions=tuple(suggestions), model=model)
