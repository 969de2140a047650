"""Label vocabularies, action/intention types, and per-intention context bags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence


class TaxonomyError(ValueError):
    """Raised for invalid vocabulary or label inputs; carries a short code."""

    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code)
        self.code = code


class ActionLabel(NamedTuple):
    verb_id: int
    noun_id: int


@dataclass(frozen=True)
class Vocabulary:
    """Ordered verb/noun/intention name lists; index = id."""

    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    intentions: tuple[str, ...]

    def __post_init__(self):
        for kind, names in (("verbs", self.verbs), ("nouns", self.nouns),
                            ("intentions", self.intentions)):
            if len(names) == 0:
                raise TaxonomyError("empty_vocabulary", f"no {kind}")
            if len(set(names)) != len(names):
                raise TaxonomyError("duplicate_name", f"duplicate {kind}")

    def verb_id(self, name: str) -> int:
        return _index_of(self.verbs, name, "verb")

    def noun_id(self, name: str) -> int:
        return _index_of(self.nouns, name, "noun")

    def intention_id(self, name: str) -> int:
        return _index_of(self.intentions, name, "intention")

    def validate_label(self, label: ActionLabel) -> None:
        if not (0 <= label.verb_id < len(self.verbs)):
            raise TaxonomyError("bad_verb_id", f"verb_id {label.verb_id}")
        if not (0 <= label.noun_id < len(self.nouns)):
            raise TaxonomyError("bad_noun_id", f"noun_id {label.noun_id}")

    def to_json(self) -> str:
        return json.dumps(
            {"verbs": list(self.verbs), "nouns": list(self.nouns),
             "intentions": list(self.intentions)},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        doc = json.loads(text)
        return cls(tuple(doc["verbs"]), tuple(doc["nouns"]), tuple(doc["intentions"]))


def _index_of(names: tuple[str, ...], name: str, kind: str) -> int:
    try:
        return names.index(name)
    except ValueError:
        raise TaxonomyError("unknown_label", f"unknown {kind} {name!r}") from None


@dataclass(frozen=True)
class ActionSequence:
    """Ordered action labels with their role in an anticipation window."""

    items: tuple[ActionLabel, ...]
    role: str = "observed"  # "observed" or "future"

    def __post_init__(self):
        if self.role not in ("observed", "future"):
            raise TaxonomyError("bad_role", self.role)
        object.__setattr__(
            self, "items", tuple(ActionLabel(*a) for a in self.items)
        )

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    @property
    def verbs(self) -> tuple[int, ...]:
        return tuple(a.verb_id for a in self.items)

    @property
    def nouns(self) -> tuple[int, ...]:
        return tuple(a.noun_id for a in self.items)


@dataclass(frozen=True)
class ContextBags:
    """Per-intention sets of verb and noun ids seen in the source data."""

    verb_bags: tuple[frozenset[int], ...]
    noun_bags: tuple[frozenset[int], ...] = field(default=())

    def __post_init__(self):
        if len(self.verb_bags) != len(self.noun_bags):
            raise TaxonomyError("bag_mismatch", "verb/noun bag counts differ")

    @property
    def num_intentions(self) -> int:
        return len(self.verb_bags)


def build_vocabulary(records: Sequence[Mapping[str, str]]) -> Vocabulary:
    """Build a vocabulary from annotation rows with "verb"/"noun"/"intention" names.

    Names are deduplicated and sorted lexicographically so ids are
    deterministic regardless of record order.
    """
    if len(records) == 0:
        raise TaxonomyError("empty_dataset", "empty dataset")
    verbs = sorted({r["verb"] for r in records})
    nouns = sorted({r["noun"] for r in records})
    intentions = sorted({r["intention"] for r in records})
    return Vocabulary(tuple(verbs), tuple(nouns), tuple(intentions))


def build_context_bags(dataset: Iterable, num_intentions: int) -> ContextBags:
    """Union observed (intention, label) pairs into per-intention bags.

    Accepts clip records (``verb_id``/``noun_id``/``intention_id`` attributes)
    or anticipation examples (``observed_actions``/``future_actions``).
    """
    verb_bags = [set() for _ in range(num_intentions)]
    noun_bags = [set() for _ in range(num_intentions)]

    def add(intention_id: int, verb_id: int, noun_id: int) -> None:
        if not (0 <= intention_id < num_intentions):
            raise TaxonomyError("bad_intention_id", f"intention {intention_id}")
        verb_bags[intention_id].add(verb_id)
        noun_bags[intention_id].add(noun_id)

    for item in dataset:
        if hasattr(item, "observed_actions"):
            for a in item.observed_actions:
                add(item.intention_id, a.verb_id, a.noun_id)
            for a in item.future_actions:
                add(item.intention_id, a.verb_id, a.noun_id)
        else:
            add(item.intention_id, item.verb_id, item.noun_id)

    return ContextBags(
        tuple(frozenset(b) for b in verb_bags),
        tuple(frozenset(b) for b in noun_bags),
    )


def is_out_of_context(label: ActionLabel, intention_id: int,
                      bags: ContextBags, mode: str) -> bool:
    """True iff the verb (or noun) of ``label`` is unseen under ``intention_id``."""
    if not (0 <= intention_id < bags.num_intentions):
        raise TaxonomyError("bad_intention_id", f"intention {intention_id}")
    if mode == "verb":
        return label.verb_id not in bags.verb_bags[intention_id]
    if mode == "noun":
        return label.noun_id not in bags.noun_bags[intention_id]
    raise TaxonomyError("bad_mode", mode)
