import math
from datetime import date

import numpy as np
import pytest

from pharmevent.corpus import Announcement, Polarity
from pharmevent.errors import DegenerateLabels, EmptyInput, EmptyText, IdMismatch
from pharmevent import sentiment
from pharmevent.sentiment import (
    BowConfig,
    KeywordDictionaries,
    bootstrap_round,
    divergence_report,
    label_rule_based,
    suggest_keywords,
    train_bow_classifier,
)

DICTS = KeywordDictionaries.builtin()


class TestRuleBased:
    def test_failed_is_negative(self):
        assert label_rule_based("trial failed to meet endpoint", DICTS) is Polarity.NEGATIVE

    def test_approve_is_positive(self):
        assert label_rule_based("FDA approve of TAVNEOS", DICTS) is Polarity.POSITIVE

    def test_no_keywords_is_neutral(self):
        assert label_rule_based("company relocates headquarters", DICTS) is Polarity.NEUTRAL

    def test_negative_precedence_on_conflict(self):
        text = "study meets secondary endpoint but was halted"
        assert label_rule_based(text, DICTS) is Polarity.NEGATIVE

    def test_multiword_phrase_matches_token_run(self):
        text = "Drug showed no differentiation from placebo, in the study."
        assert label_rule_based(text, DICTS) is Polarity.NEGATIVE

    def test_whole_word_only(self):
        # "showing" must not match the keyword "show"
        assert label_rule_based("company showing new offices", DICTS) is Polarity.NEUTRAL

    def test_case_insensitive_with_punctuation(self):
        assert label_rule_based("TRIAL HALTED!", DICTS) is Polarity.NEGATIVE

    def test_empty_text(self):
        with pytest.raises(EmptyText):
            label_rule_based("   ", DICTS)

    def test_pure_function(self):
        text = "results are encouraging"
        assert label_rule_based(text, DICTS) is label_rule_based(text, DICTS)

    def test_adding_keyword_never_changes_other_texts(self):
        rng = np.random.default_rng(11)
        words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "theta"]
        texts = [
            " ".join(rng.choice(words, size=5).tolist()) + " update" for _ in range(40)
        ]
        before = [label_rule_based(t, DICTS) for t in texts]
        bigger = DICTS.with_added(negative=["flibbergast"])
        after = [label_rule_based(t, bigger) for t in texts]
        assert before == after
        assert bigger.version == DICTS.version + 1


class TestDictionaries:
    def test_disjoint_enforced(self):
        with pytest.raises(Exception):
            KeywordDictionaries.from_lists(["good"], ["good"])

    def test_save_load_round_trip(self, tmp_path):
        path = tmp_path / "kw.json"
        DICTS.save(path)
        assert KeywordDictionaries.load(path) == DICTS


class TestBowClassifier:
    def _separable_corpus(self):
        corpus = []
        for i in range(10):
            corpus.append((f"great durable benefit case{i}", Polarity.POSITIVE))
            corpus.append((f"severe toxicity problem case{i}", Polarity.NEGATIVE))
        return corpus

    def test_separable_reaches_full_accuracy(self):
        corpus = self._separable_corpus()
        model = train_bow_classifier(corpus)
        predicted = model.predict([t for t, _ in corpus])
        assert predicted == [p for _, p in corpus]

    def test_single_class_rejected(self):
        corpus = [(f"text {i}", Polarity.NEUTRAL) for i in range(5)]
        with pytest.raises(DegenerateLabels):
            train_bow_classifier(corpus)

    def test_deterministic(self):
        corpus = self._separable_corpus()
        a = train_bow_classifier(corpus, BowConfig(seed=7))
        b = train_bow_classifier(corpus, BowConfig(seed=7))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)
        assert a.vocabulary == b.vocabulary


class TestDivergenceReport:
    def test_identical_labelings(self):
        labels = {f"A{i}": Polarity.POSITIVE for i in range(10)}
        report = divergence_report(labels, dict(labels))
        assert report.n_divergences == 0
        assert report.n_coinciding_positive == 10
        assert report.total == 10

    def test_one_flipped_of_five(self):
        a = {f"A{i}": Polarity.NEUTRAL for i in range(5)}
        b = dict(a)
        b["A3"] = Polarity.NEGATIVE
        report = divergence_report(a, b)
        assert report.n_divergences == 1
        assert report.divergent_ids == ("A3",)
        assert report.total == 5

    def test_id_mismatch(self):
        with pytest.raises(IdMismatch):
            divergence_report({"A1": Polarity.NEUTRAL}, {"A2": Polarity.NEUTRAL})

    def test_counts_partition_corpus(self):
        rng = np.random.default_rng(5)
        pols = list(Polarity)
        a = {f"A{i}": pols[rng.integers(0, 3)] for i in range(60)}
        b = {k: pols[rng.integers(0, 3)] for k in a}
        report = divergence_report(a, b)
        assert report.total == 60


class TestSuggestKeywords:
    def test_terminated_ranked_first_with_hand_log_odds(self):
        divergent = [
            ("study terminated early", Polarity.NEUTRAL, Polarity.NEGATIVE),
            ("program terminated after review", Polarity.NEUTRAL, Polarity.NEGATIVE),
            ("enrollment terminated by sponsor", Polarity.NEUTRAL, Polarity.NEGATIVE),
            ("company hosts investor day", Polarity.NEUTRAL, Polarity.POSITIVE),
            ("analysts attend briefing session", Polarity.NEUTRAL, Polarity.POSITIVE),
        ]
        dicts = KeywordDictionaries.from_lists(["meets"], ["halted"])
        out = suggest_keywords(divergent, k=5, dicts=dicts)
        top = out[0]
        assert top.phrase == "terminated"
        assert top.polarity is Polarity.NEGATIVE
        # hand computation: log((3+.5)/(0+.5)) - log((0+.5)/(2+.5)) = log 7 + log 5
        assert top.score == pytest.approx(math.log(7.0) + math.log(5.0), abs=1e-12)

    def test_k_zero(self):
        divergent = [("terminated", Polarity.NEUTRAL, Polarity.NEGATIVE)]
        assert suggest_keywords(divergent, k=0) == []

    def test_existing_phrases_excluded(self):
        divergent = [
            ("halted and terminated", Polarity.NEUTRAL, Polarity.NEGATIVE),
            ("other text", Polarity.NEUTRAL, Polarity.POSITIVE),
        ]
        dicts = KeywordDictionaries.from_lists(["meets"], ["halted"])
        phrases = {s.phrase for s in suggest_keywords(divergent, k=50, dicts=dicts)}
        assert "halted" not in phrases
        assert "terminated" in phrases

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            suggest_keywords([], k=3)


class TestBootstrap:
    def _planted_corpus(self):
        anns = []
        k = 0

        def add(text):
            nonlocal k
            anns.append(
                Announcement(id=f"B{k:03d}", ticker="AAA", date=date(2020, 1, 1), text=text)
            )
            k += 1

        for i in range(12):
            add(f"trial halted after major setback case{i}")
        for i in range(8):
            add(f"trial halted immediately case{i}")
        for i in range(6):
            add(f"program faces major setback case{i}")  # planted: no dictionary word
        for i in range(10):
            add(f"study meets primary endpoint case{i}")
        for i in range(10):
            add(f"company schedules conference call case{i}")
        return anns

    def test_bootstrap_round_divergences_non_increasing(self):
        anns = self._planted_corpus()
        dicts = KeywordDictionaries.from_lists(["meets"], ["halted"])
        first = bootstrap_round(anns, dicts, k=3)
        assert first.report.n_divergences > 0
        negatives = [s.phrase for s in first.suggestions if s.polarity is Polarity.NEGATIVE]
        assert "setback" in negatives
        updated = dicts.with_added(negative=["setback"])
        second = bootstrap_round(anns, updated, k=3)
        assert second.report.n_divergences <= first.report.n_divergences
