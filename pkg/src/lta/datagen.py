"""Dataset loading, anticipation windows, and synthetic intention-grammar generation.

On-disk format (real or synthetic, indistinguishable downstream):
  - ``annotations.json``: array of {"video_id", "clip_index", "verb", "noun",
    "intention", "feature_file"}.
  - ``features/<file>``: raw little-endian float32, row-major T x D.
  - ``manifest.json``: {"T": int, "D": int, "valid_rows": {feature_file: int}}.
  - ``vocab.json``: bundled vocabulary (verbs/nouns/intentions arrays).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from lta.seeding import substream
from lta.taxonomy import ActionLabel, ActionSequence, Vocabulary, build_vocabulary


class DatasetError(ValueError):
    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class ClipRecord:
    video_id: str
    clip_index: int
    verb_id: int
    noun_id: int
    intention_id: int
    feature_file: str

    @property
    def label(self) -> ActionLabel:
        return ActionLabel(self.verb_id, self.noun_id)


@dataclass(frozen=True)
class ClipFeature:
    """T x D float matrix; rows at index >= valid_rows are exactly zero."""

    matrix: np.ndarray
    valid_rows: int

    def __post_init__(self):
        t = self.matrix.shape[0]
        if not (0 <= self.valid_rows <= t):
            raise DatasetError("bad_valid_rows", f"valid_rows={self.valid_rows}")
        if self.valid_rows < t and np.any(self.matrix[self.valid_rows:]):
            raise DatasetError("padding_nonzero", "padded rows must be zero")


@dataclass(frozen=True)
class AnticipationExample:
    example_id: str
    observed_features: tuple[ClipFeature, ...] | None
    observed_actions: ActionSequence
    intention_id: int
    future_actions: ActionSequence


@dataclass(frozen=True)
class GrammarConfig:
    """Procedural grammar: per-intention noun bags and cyclic verb motifs.

    Each synthetic video picks an intention, one of its verb motifs, and a
    starting phase, then walks the motif cyclically. Nouns follow the
    intention's noun cycle: one block of ``noun_block_len`` clips per common
    noun (identical blocks for every intention), then one block of
    ``rare_block_len`` clips per intention-distinctive rare noun. A window
    observed inside the common region is therefore intention-ambiguous at the
    label level while its future continues deterministically into the
    intention's rares. With ``noun_cycle=False`` nouns are instead resampled
    from the bag with geometric persistence (mean ``noun_persistence_mean``)
    favouring common nouns with probability ``noun_common_prob``.

    Each (verb, noun) pair has a fixed feature prototype; clip features are
    the prototype, plus an additive per-intention signature vector scaled by
    ``intention_gain``, plus Gaussian noise, zero-padded. With
    ``motifs_shared`` (the default) all intentions draw from one global motif
    pool, so the intention is carried by the feature signature and the
    distinctive nouns, not by the verb stream.
    """

    num_intentions: int = 8
    num_verbs: int = 12
    num_nouns: int = 40
    noun_bag_size: int = 4
    noun_shared: int = 3          # bag nouns common to every intention
    noun_cycle: bool = True       # deterministic block cycle over the bag
    noun_block_len: int = 4       # clips per common-noun block in the cycle
    rare_block_len: int = 3       # clips per rare-noun block in the cycle
    noun_common_prob: float = 0.75  # stochastic mode: mass on common nouns
    motifs_per_intention: int = 2
    motifs_shared: bool = True    # one global motif pool for all intentions
    intention_gain: float = 1.0   # scale of the per-intention feature signature
    motif_len_min: int = 3
    motif_len_max: int = 6
    noun_persistence_mean: float = 3.0
    video_len_min: int = 30
    video_len_max: int = 40
    num_videos: int = 300
    feature_dim: int = 64
    num_frames: int = 14  # T
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (3 <= self.motif_len_min <= self.motif_len_max <= 6):
            raise DatasetError("bad_motif_len", "motif lengths must be in [3, 6]")
        if self.noun_bag_size < 1 or self.noun_bag_size > self.num_nouns:
            raise DatasetError("bad_bag_size")
        if not (0 <= self.noun_shared <= self.noun_bag_size):
            raise DatasetError("bad_bag_size", "noun_shared exceeds bag size")
        if not (0.0 <= self.noun_common_prob <= 1.0):
            raise DatasetError("bad_common_prob")
        if self.noun_block_len < 1 or self.rare_block_len < 1:
            raise DatasetError("bad_block_len")
        if self.noise_sigma < 0:
            raise DatasetError("bad_noise_sigma")
        if self.motif_len_max > self.num_verbs:
            raise DatasetError("bad_motif_len", "motif longer than verb vocabulary")


@dataclass(frozen=True)
class SynthDataset:
    """Generated records plus the grammar ground truth used as a test oracle."""

    config: GrammarConfig
    vocabulary: Vocabulary
    records: tuple[ClipRecord, ...]
    noun_bags: tuple[frozenset[int], ...]   # configured bag per intention
    common_nouns: frozenset[int]            # shared across every bag
    motifs: tuple[tuple[tuple[int, ...], ...], ...]  # per intention, per motif
    motif_choice: dict = field(default_factory=dict)  # video_id -> motif index

    @property
    def verb_bags(self) -> tuple[frozenset[int], ...]:
        return tuple(frozenset(v for m in ms for v in m) for ms in self.motifs)

    def prototype(self, label: ActionLabel) -> np.ndarray:
        return prototype_vector(self.config.seed, label, self.config.feature_dim)

    def feature_for(self, record: ClipRecord) -> ClipFeature:
        rng = substream(self.config.seed, "feat", record.video_id, record.clip_index)
        offset = self.config.intention_gain * intention_vector(
            self.config.seed, record.intention_id, self.config.feature_dim)
        return synth_features(
            record.label, self.config.seed, self.config.noise_sigma, rng,
            T=self.config.num_frames, D=self.config.feature_dim, offset=offset,
        )


def prototype_vector(seed: int, label: ActionLabel, dim: int) -> np.ndarray:
    """Fixed unit-variance spherical prototype for one (verb, noun) pair."""
    rng = substream(seed, "proto", label.verb_id, label.noun_id)
    return rng.standard_normal(dim).astype(np.float32)


def intention_vector(seed: int, intention_id: int, dim: int) -> np.ndarray:
    """Fixed unit-variance signature vector for one intention."""
    rng = substream(seed, "iproto", intention_id)
    return rng.standard_normal(dim).astype(np.float32)


def synth_features(label: ActionLabel, proto_seed: int, noise_sigma: float,
                   rng: np.random.Generator, T: int, D: int,
                   offset: np.ndarray | None = None) -> ClipFeature:
    """Prototype (+ optional offset) + per-row Gaussian noise, padded to T rows."""
    proto = prototype_vector(proto_seed, label, D)
    if offset is not None:
        proto = proto + offset.astype(np.float32)
    valid_rows = int(rng.integers(T // 2, T + 1))
    matrix = np.zeros((T, D), dtype=np.float32)
    noise = rng.normal(0.0, noise_sigma, size=(valid_rows, D)) if noise_sigma > 0 \
        else np.zeros((valid_rows, D))
    matrix[:valid_rows] = proto + noise.astype(np.float32)
    return ClipFeature(matrix=matrix, valid_rows=valid_rows)


def noun_cycle(bag_common: Sequence[int], bag_rare: Sequence[int],
               common_block: int, rare_block: int) -> list[int]:
    """Deterministic per-intention noun cycle: common blocks, then rare blocks.

    The common region is identical for every intention (same nouns, same
    order), so a window confined to it does not identify the intention.
    """
    cycle: list[int] = []
    for c in bag_common:
        cycle.extend([int(c)] * common_block)
    for r in bag_rare:
        cycle.extend([int(r)] * rare_block)
    if not cycle:
        raise DatasetError("bad_bag_size", "empty noun bag")
    return cycle


def _grammar_structure(config: GrammarConfig):
    """Noun bags, shared-noun pool, and verb motifs; depends only on config.seed.

    Every bag contains the same ``noun_shared`` common nouns plus distinctive
    nouns drawn disjointly across intentions while the pool lasts.
    """
    rng = substream(config.seed, "grammar")
    commons = frozenset(
        int(n) for n in rng.choice(config.num_nouns, size=config.noun_shared,
                                   replace=False))
    pool = [n for n in rng.permutation(config.num_nouns) if n not in commons]
    rare_per = config.noun_bag_size - config.noun_shared

    def draw_motifs():
        out = []
        for _ in range(config.motifs_per_intention):
            m = int(rng.integers(config.motif_len_min, config.motif_len_max + 1))
            verbs = rng.choice(config.num_verbs, size=m, replace=False)
            out.append(tuple(int(v) for v in verbs))
        return tuple(out)

    shared_motifs = draw_motifs() if config.motifs_shared else None
    noun_bags = []
    motifs = []
    for i in range(config.num_intentions):
        rares = []
        while len(rares) < rare_per:
            if not pool:
                pool = [n for n in rng.permutation(config.num_nouns)
                        if n not in commons and n not in rares]
            rares.append(int(pool.pop()))
        noun_bags.append(commons | frozenset(rares))
        motifs.append(shared_motifs if config.motifs_shared else draw_motifs())
    return tuple(noun_bags), commons, tuple(motifs)


def synth_generate(config: GrammarConfig, split: str = "train",
                   num_videos: int | None = None) -> SynthDataset:
    """Generate a synthetic dataset; pure function of (config, split).

    The grammar structure (bags, motifs, prototypes) depends only on
    ``config.seed``, so different splits share one grammar while their video
    trajectories come from independent substreams.
    """
    noun_bags, commons, motifs = _grammar_structure(config)
    rng = substream(config.seed, "videos", split)
    n_videos = config.num_videos if num_videos is None else num_videos

    records: list[ClipRecord] = []
    motif_choice: dict[str, int] = {}
    for vi in range(n_videos):
        video_id = f"{split}_video_{vi:05d}"
        intention = int(rng.integers(config.num_intentions))
        length = int(rng.integers(config.video_len_min, config.video_len_max + 1))
        motif_idx = int(rng.integers(len(motifs[intention])))
        motif = motifs[intention][motif_idx]
        motif_choice[video_id] = motif_idx
        bag_common = sorted(noun_bags[intention] & commons)
        bag_rare = sorted(noun_bags[intention] - commons)

        if config.noun_cycle:
            cycle = noun_cycle(bag_common, bag_rare,
                               config.noun_block_len, config.rare_block_len)
            phase = int(rng.integers(len(cycle)))
            nouns = [cycle[(phase + t) % len(cycle)] for t in range(length)]
        else:
            def draw_noun() -> int:
                if bag_common and (not bag_rare
                                   or rng.random() < config.noun_common_prob):
                    return int(bag_common[rng.integers(len(bag_common))])
                return int(bag_rare[rng.integers(len(bag_rare))])

            p_switch = 1.0 / max(config.noun_persistence_mean, 1.0)
            nouns = []
            noun = draw_noun()
            for _ in range(length):
                nouns.append(noun)
                if rng.random() < p_switch:
                    noun = draw_noun()

        for t in range(length):
            records.append(ClipRecord(
                video_id=video_id,
                clip_index=t,
                verb_id=motif[t % len(motif)],
                noun_id=nouns[t],
                intention_id=intention,
                feature_file=f"{video_id}_{t:03d}.bin",
            ))

    vocabulary = Vocabulary(
        verbs=tuple(f"verb{v:03d}" for v in range(config.num_verbs)),
        nouns=tuple(f"noun{n:03d}" for n in range(config.num_nouns)),
        intentions=tuple(f"intention{i:03d}" for i in range(config.num_intentions)),
    )
    return SynthDataset(
        config=config, vocabulary=vocabulary, records=tuple(records),
        noun_bags=noun_bags, common_nouns=commons, motifs=motifs,
        motif_choice=motif_choice,
    )


def make_windows(records: Sequence[ClipRecord], N: int, Z: int, stride: int = 1,
                 feature_loader: Callable[[ClipRecord], ClipFeature] | None = None,
                 ) -> list[AnticipationExample]:
    """Slide a length-(N+Z) window over each video at the given stride.

    A video shorter than N+Z contributes zero windows. The example id encodes
    the first future clip index, so truth lookup is independent of N.
    """
    if N < 1 or Z < 1:
        raise DatasetError("bad_window", f"N={N}, Z={Z}")
    by_video: dict[str, list[ClipRecord]] = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)

    examples = []
    for video_id in sorted(by_video):
        clips = sorted(by_video[video_id], key=lambda r: r.clip_index)
        for i in range(0, len(clips) - N - Z + 1, stride):
            observed = clips[i:i + N]
            future = clips[i + N:i + N + Z]
            features = None
            if feature_loader is not None:
                features = tuple(feature_loader(r) for r in observed)
            examples.append(AnticipationExample(
                example_id=f"{video_id}:{i + N}",
                observed_features=features,
                observed_actions=ActionSequence(
                    tuple(r.label for r in observed), role="observed"),
                intention_id=observed[0].intention_id,
                future_actions=ActionSequence(
                    tuple(r.label for r in future), role="future"),
            ))
    return examples


def write_dataset(ds: SynthDataset, out_dir: str) -> None:
    """Write annotations, per-clip feature files, manifest, and vocabulary."""
    feat_dir = os.path.join(out_dir, "features")
    os.makedirs(feat_dir, exist_ok=True)
    vocab = ds.vocabulary

    annotations = []
    valid_rows = {}
    for r in ds.records:
        feature = ds.feature_for(r)
        feature.matrix.astype("<f4").tofile(os.path.join(feat_dir, r.feature_file))
        valid_rows[r.feature_file] = feature.valid_rows
        annotations.append({
            "video_id": r.video_id,
            "clip_index": r.clip_index,
            "verb": vocab.verbs[r.verb_id],
            "noun": vocab.nouns[r.noun_id],
            "intention": vocab.intentions[r.intention_id],
            "feature_file": r.feature_file,
        })

    with open(os.path.join(out_dir, "annotations.json"), "w") as f:
        json.dump(annotations, f, sort_keys=True)
    manifest = {"T": ds.config.num_frames, "D": ds.config.feature_dim,
                "valid_rows": valid_rows}
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, sort_keys=True)
    with open(os.path.join(out_dir, "vocab.json"), "w") as f:
        f.write(vocab.to_json())


def load_annotations(path: str, vocabulary: Vocabulary | None = None,
                     ) -> tuple[list[ClipRecord], Vocabulary]:
    """Parse an annotation file into clip records, sorted per video.

    If no vocabulary is given, a bundled ``vocab.json`` next to the file is
    used when present, otherwise the vocabulary is built from the file itself.
    """
    try:
        with open(path) as f:
            rows = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError("malformed_json", str(e)) from e
    if not isinstance(rows, list) or not rows:
        raise DatasetError("empty_dataset", "empty dataset")

    if vocabulary is None:
        sibling = os.path.join(os.path.dirname(path), "vocab.json")
        if os.path.exists(sibling):
            with open(sibling) as f:
                vocabulary = Vocabulary.from_json(f.read())
        else:
            vocabulary = build_vocabulary(rows)

    records = []
    for row in rows:
        records.append(ClipRecord(
            video_id=row["video_id"],
            clip_index=int(row["clip_index"]),
            verb_id=vocabulary.verb_id(row["verb"]),
            noun_id=vocabulary.noun_id(row["noun"]),
            intention_id=vocabulary.intention_id(row["intention"]),
            feature_file=row["feature_file"],
        ))

    by_video: dict[str, list[ClipRecord]] = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    out = []
    for video_id in sorted(by_video):
        clips = sorted(by_video[video_id], key=lambda r: r.clip_index)
        if [c.clip_index for c in clips] != list(range(len(clips))):
            raise DatasetError("noncontiguous_clips", f"video {video_id}")
        out.extend(clips)
    return out, vocabulary


def load_manifest(data_dir: str) -> dict:
    with open(os.path.join(data_dir, "manifest.json")) as f:
        return json.load(f)


def load_feature(record: ClipRecord, data_dir: str, manifest: dict) -> ClipFeature:
    """Read one clip's raw float32 feature file; enforce the padding contract."""
    T, D = int(manifest["T"]), int(manifest["D"])
    path = os.path.join(data_dir, "features", record.feature_file)
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != T * D:
        raise DatasetError("feature_shape",
                           f"{record.feature_file}: got {raw.size}, want {T * D}")
    matrix = raw.reshape(T, D)
    valid_rows = int(manifest["valid_rows"][record.feature_file])
    matrix[valid_rows:] = 0.0
    return ClipFeature(matrix=matrix, valid_rows=valid_rows)


def load_dataset(data_dir: str, vocabulary: Vocabulary | None = None):
    """Load records plus a feature loader bound to the directory's manifest."""
    records, vocab = load_annotations(
        os.path.join(data_dir, "annotations.json"), vocabulary)
    manifest = load_manifest(data_dir)

    def loader(record: ClipRecord) -> ClipFeature:
        return load_feature(record, data_dir, manifest)

    return records, vocab, loader
