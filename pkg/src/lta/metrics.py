"""Edit-distance evaluation: best-of-K ED@Z, per-horizon curves, out-of-context
rates, and accuracy splits by intention correctness."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lta.taxonomy import ActionSequence, ContextBags, is_out_of_context


def damerau_levenshtein(a: Sequence, b: Sequence) -> int:
    """Optimal string alignment distance (restricted Damerau-Levenshtein).

    Insertions, deletions, substitutions, and adjacent transpositions, with no
    substring edited more than once.
    """
    la, lb = len(a), len(b)
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev2 = None
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            cur[j] = min(prev[j] + 1,        # deletion
                         cur[j - 1] + 1,     # insertion
                         prev[j - 1] + cost)  # substitution
            if (i > 1 and j > 1 and a[i - 1] == b[j - 2]
                    and a[i - 2] == b[j - 1]):
                cur[j] = min(cur[j], prev2[j - 2] + 1)  # transposition
        prev2, prev = prev, cur
    return prev[lb]


def _project(seq: ActionSequence | Sequence, mode: str) -> list:
    items = list(seq)
    if mode == "verb":
        return [a.verb_id for a in items]
    if mode == "noun":
        return [a.noun_id for a in items]
    if mode == "action":
        return [(a.verb_id, a.noun_id) for a in items]
    raise ValueError(f"invalid mode {mode!r}")


MODES = ("verb", "noun", "action")


def ed_at_z(candidates: Sequence[ActionSequence], truth: ActionSequence,
            mode: str) -> tuple[float, int]:
    """Best-of-K normalized edit distance; returns (value, winning index)."""
    if len(candidates) < 1:
        raise ValueError("need at least one candidate")
    Z = len(truth)
    t = _project(truth, mode)
    best_val, best_k = None, -1
    for k, cand in enumerate(candidates):
        if len(cand) != Z:
            raise ValueError(f"candidate {k} has length {len(cand)}, want {Z}")
        val = damerau_levenshtein(_project(cand, mode), t) / Z
        if best_val is None or val < best_val:
            best_val, best_k = val, k
    return best_val, best_k


@dataclass(frozen=True)
class EDResult:
    ed_verb: float
    ed_noun: float
    ed_action: float
    best_k: dict = field(default_factory=dict)


def ed_result(candidates: Sequence[ActionSequence],
              truth: ActionSequence) -> EDResult:
    values, best = {}, {}
    for mode in MODES:
        values[mode], best[mode] = ed_at_z(candidates, truth, mode)
    return EDResult(ed_verb=values["verb"], ed_noun=values["noun"],
                    ed_action=values["action"], best_k=best)


def per_horizon_ed(candidates: Sequence[ActionSequence], truth: ActionSequence,
                   mode: str) -> np.ndarray:
    """curve[t] = best-of-K normalized ED over prefixes of length t+1."""
    Z = len(truth)
    t_sym = _project(truth, mode)
    cand_syms = []
    for k, cand in enumerate(candidates):
        if len(cand) != Z:
            raise ValueError(f"candidate {k} has length {len(cand)}, want {Z}")
        cand_syms.append(_project(cand, mode))
    curve = np.empty(Z)
    for t in range(Z):
        curve[t] = min(
            damerau_levenshtein(c[:t + 1], t_sym[:t + 1]) for c in cand_syms
        ) / (t + 1)
    return curve


def out_of_context_rates(predictions: Sequence[ActionSequence],
                         intentions: Sequence[int],
                         bags: ContextBags) -> tuple[float, float]:
    """Fraction of predicted verb / noun tokens absent from the intention's bag."""
    total = 0
    verb_ooc = 0
    noun_ooc = 0
    for seq, intention in zip(predictions, intentions):
        for label in seq:
            total += 1
            verb_ooc += is_out_of_context(label, intention, bags, "verb")
            noun_ooc += is_out_of_context(label, intention, bags, "noun")
    if total == 0:
        raise ValueError("no predictions")
    return verb_ooc / total, noun_ooc / total


def _topk_accuracy(rankings: Sequence[Sequence[int]], truths: Sequence[int],
                   k: int) -> float:
    hits = sum(t in r[:k] for r, t in zip(rankings, truths))
    return hits / len(truths)


def accuracy_by_intention_correctness(verb_rankings: Sequence[Sequence[int]],
                                      noun_rankings: Sequence[Sequence[int]],
                                      intention_preds: Sequence[int],
                                      verb_truth: Sequence[int],
                                      noun_truth: Sequence[int],
                                      intention_truth: Sequence[int]) -> dict:
    """Top-1/Top-5 verb and noun accuracy, split by intention correctness.

    Rankings are class ids in descending score order. An empty split is
    omitted rather than reported as zero.
    """
    n = len(intention_preds)
    if not (len(verb_rankings) == len(noun_rankings) == len(verb_truth)
            == len(noun_truth) == len(intention_truth) == n):
        raise ValueError("misaligned inputs")
    table = {}
    for name, keep in (("correct", True), ("error", False)):
        idx = [i for i in range(n)
               if (intention_preds[i] == intention_truth[i]) == keep]
        if not idx:
            continue
        table[name] = {
            "n": len(idx),
            "verb_top1": _topk_accuracy([verb_rankings[i] for i in idx],
                                        [verb_truth[i] for i in idx], 1),
            "verb_top5": _topk_accuracy([verb_rankings[i] for i in idx],
                                        [verb_truth[i] for i in idx], 5),
            "noun_top1": _topk_accuracy([noun_rankings[i] for i in idx],
                                        [noun_truth[i] for i in idx], 1),
            "noun_top5": _topk_accuracy([noun_rankings[i] for i in idx],
                                        [noun_truth[i] for i in idx], 5),
        }
    return table


@dataclass
class MetricsReport:
    ed20: dict                  # {"verb": f, "noun": f, "action": f}
    curves: dict                # mode -> length-Z list
    ooc: dict                   # {"verb": f, "noun": f}
    accuracy: dict | None
    n_examples: int
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"ed20": self.ed20, "curves": self.curves, "ooc": self.ooc,
               "accuracy": self.accuracy, "n_examples": self.n_examples,
               "config": self.config}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        doc = json.loads(text)
        return cls(ed20=doc["ed20"], curves=doc["curves"], ooc=doc["ooc"],
                   accuracy=doc["accuracy"], n_examples=doc["n_examples"],
                   config=doc.get("config", {}))


def evaluate_predictions(candidates_per_example: Sequence[Sequence[ActionSequence]],
                         truths: Sequence[ActionSequence],
                         intentions: Sequence[int],
                         bags: ContextBags | None = None,
                         accuracy: dict | None = None,
                         config: dict | None = None) -> MetricsReport:
    """Aggregate best-of-K ED, mean per-horizon curves, and out-of-context
    rates (over every candidate token, against the true intention's bag)."""
    if len(truths) == 0:
        raise ValueError("empty evaluation set")
    Z = len(truths[0])
    sums = {m: 0.0 for m in MODES}
    curve_sums = {m: np.zeros(Z) for m in MODES}
    for cands, truth in zip(candidates_per_example, truths):
        for m in MODES:
            val, _ = ed_at_z(cands, truth, m)
            sums[m] += val
            curve_sums[m] += per_horizon_ed(cands, truth, m)

    n = len(truths)
    ooc = {"verb": None, "noun": None}
    if bags is not None:
        flat_preds, flat_intents = [], []
        for cands, intention in zip(candidates_per_example, intentions):
            for cand in cands:
                flat_preds.append(cand)
                flat_intents.append(intention)
        vr, nr = out_of_context_rates(flat_preds, flat_intents, bags)
        ooc = {"verb": vr, "noun": nr}

    return MetricsReport(
        ed20={m: sums[m] / n for m in MODES},
        curves={m: (curve_sums[m] / n).tolist() for m in MODES},
        ooc=ooc,
        accuracy=accuracy,
        n_examples=n,
        config=config or {},
    )
