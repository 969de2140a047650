import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lta.metrics import (MetricsReport, accuracy_by_intention_correctness,
                         damerau_levenshtein, ed_at_z, ed_result,
                         evaluate_predictions, out_of_context_rates,
                         per_horizon_ed)
from lta.taxonomy import ContextBags

from helpers import all_sequences, osa_script_search, seq, unrestricted_dl_bfs

symbols = st.lists(st.integers(0, 2), max_size=6)


class TestDamerauLevenshtein:
    def test_identity(self):
        assert damerau_levenshtein("abc", "abc") == 0

    def test_transposition(self):
        assert damerau_levenshtein("ab", "ba") == 1

    def test_restricted_variant_pinned(self):
        # optimal string alignment: "ca" -> "abc" costs 3, while the
        # unrestricted distance (re-editing allowed) costs 2
        assert damerau_levenshtein("ca", "abc") == 3
        assert unrestricted_dl_bfs("ca", "abc", alphabet="abc") == 2
        assert osa_script_search("ca", "abc") == 3

    def test_classic_cases(self):
        assert damerau_levenshtein("kitten", "sitting") == 3
        assert damerau_levenshtein("", "abc") == 3
        assert damerau_levenshtein("abc", "") == 3

    @given(symbols, symbols)
    def test_symmetry(self, a, b):
        assert damerau_levenshtein(a, b) == damerau_levenshtein(b, a)

    @given(symbols, symbols)
    def test_bounds(self, a, b):
        d = damerau_levenshtein(a, b)
        assert 0 <= d <= max(len(a), len(b))
        assert (d == 0) == (a == b)

    @settings(max_examples=60, deadline=None)
    @given(symbols, symbols)
    def test_matches_script_search(self, a, b):
        assert damerau_levenshtein(a, b) == osa_script_search(a, b)

    def test_exhaustive_small_alphabet(self):
        # all pairs over {0,1,2} with lengths <= 3 against the script-search
        # oracle (lengths <= 4 exhaustively in the acceptance suite)
        seqs = list(all_sequences((0, 1, 2), 3))
        for a in seqs:
            for b in seqs:
                assert damerau_levenshtein(a, b) == osa_script_search(a, b)


class TestEdAtZ:
    def test_perfect_candidate_among_k(self):
        truth = seq([(0, 0), (1, 1), (2, 2)])
        wrong = seq([(3, 3), (4, 4), (5, 5)])
        val, k = ed_at_z([wrong, truth, wrong, wrong, wrong], truth, "action")
        assert val == 0.0
        assert k == 1

    def test_fully_disjoint_candidate(self):
        truth = seq([(0, 0), (1, 1), (2, 2)])
        cand = seq([(3, 3), (4, 4), (5, 5)])
        for mode in ("verb", "noun", "action"):
            val, _ = ed_at_z([cand], truth, mode)
            assert val == 1.0

    def test_verbs_right_nouns_wrong(self):
        truth = seq([(0, 0), (1, 1)])
        cand = seq([(0, 9), (1, 8)])
        assert ed_at_z([cand], truth, "verb")[0] == 0.0
        assert ed_at_z([cand], truth, "noun")[0] == 1.0
        assert ed_at_z([cand], truth, "action")[0] == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            ed_at_z([seq([(0, 0)])], seq([(0, 0), (1, 1)]), "verb")

    def test_best_of_k_monotone(self):
        rng = np.random.default_rng(0)
        truth = seq([(int(v), int(n)) for v, n in rng.integers(0, 4, (8, 2))])
        cands = [seq([(int(v), int(n)) for v, n in rng.integers(0, 4, (8, 2))])
                 for _ in range(6)]
        prev = None
        for k in range(1, len(cands) + 1):
            val, _ = ed_at_z(cands[:k], truth, "action")
            if prev is not None:
                assert val <= prev
            prev = val

    def test_action_dominates_components(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            truth = seq([(int(v), int(n))
                         for v, n in rng.integers(0, 3, (6, 2))])
            cand = seq([(int(v), int(n))
                        for v, n in rng.integers(0, 3, (6, 2))])
            r = ed_result([cand], truth)
            assert r.ed_action >= max(r.ed_verb, r.ed_noun)


class TestPerHorizonEd:
    def test_perfect_candidate_zero_curve(self):
        truth = seq([(0, 0), (1, 1), (2, 2)])
        assert np.all(per_horizon_ed([truth], truth, "action") == 0)

    def test_first_wrong_rest_right(self):
        truth = seq([(i, i) for i in range(5)])
        cand = seq([(9, 9)] + [(i, i) for i in range(1, 5)])
        curve = per_horizon_ed([cand], truth, "action")
        assert np.allclose(curve, [1 / (t + 1) for t in range(5)])

    def test_curve_in_unit_interval(self):
        rng = np.random.default_rng(2)
        truth = seq([(int(v), int(n)) for v, n in rng.integers(0, 3, (7, 2))])
        cands = [seq([(int(v), int(n)) for v, n in rng.integers(0, 3, (7, 2))])
                 for _ in range(3)]
        for mode in ("verb", "noun", "action"):
            curve = per_horizon_ed(cands, truth, mode)
            assert np.all(curve >= 0) and np.all(curve <= 1)

    def test_last_point_equals_ed_at_z_for_k1(self):
        rng = np.random.default_rng(3)
        truth = seq([(int(v), int(n)) for v, n in rng.integers(0, 3, (6, 2))])
        cand = seq([(int(v), int(n)) for v, n in rng.integers(0, 3, (6, 2))])
        for mode in ("verb", "noun", "action"):
            curve = per_horizon_ed([cand], truth, mode)
            assert curve[-1] == ed_at_z([cand], truth, mode)[0]


class TestOutOfContext:
    bags = ContextBags(verb_bags=(frozenset({0, 1}),),
                       noun_bags=(frozenset({0, 1}),))

    def test_all_in_bags(self):
        preds = [seq([(0, 0), (1, 1)])]
        assert out_of_context_rates(preds, [0], self.bags) == (0.0, 0.0)

    def test_all_outside(self):
        preds = [seq([(5, 5), (6, 6)])]
        assert out_of_context_rates(preds, [0], self.bags) == (1.0, 1.0)

    def test_counting(self):
        preds = [seq([(0, 9)] * 3 + [(0, 0)] * 17)]
        _, noun_rate = out_of_context_rates(preds, [0], self.bags)
        assert noun_rate == pytest.approx(0.15)


class TestAccuracySplits:
    def test_all_intentions_correct_omits_error_split(self):
        table = accuracy_by_intention_correctness(
            [[0, 1, 2, 3, 4]], [[0, 1, 2, 3, 4]], [1], [0], [0], [1])
        assert "error" not in table
        assert table["correct"]["verb_top1"] == 1.0

    def test_single_example_top1(self):
        table = accuracy_by_intention_correctness(
            [[3, 0, 1, 2, 4]], [[2, 0, 1, 3, 4]], [0], [3], [2], [0])
        assert table["correct"]["verb_top1"] == 1.0
        assert table["correct"]["noun_top1"] == 1.0

    def test_top5_not_top1(self):
        table = accuracy_by_intention_correctness(
            [[9, 8, 7, 6, 3]], [[9, 3, 0, 1, 2]], [0], [3], [3], [0])
        assert table["correct"]["verb_top1"] == 0.0
        assert table["correct"]["verb_top5"] == 1.0


class TestReport:
    def test_json_roundtrip(self):
        truth = seq([(0, 0), (1, 1)])
        report = evaluate_predictions([[truth]], [truth], [0],
                                      config={"k": 1})
        again = MetricsReport.from_json(report.to_json())
        assert again.ed20 == report.ed20
        assert again.n_examples == 1

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            evaluate_predictions([], [], [])
