"""Experiment drivers: config, checkpoints, end-to-end pipeline, ablations."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import torch

from lta import datagen
from lta.datagen import AnticipationExample, GrammarConfig, SynthDataset
from lta.h3m import H3M, H3MConfig, h3m_infer_batch, h3m_scores, h3m_train
from lta.icvae import ICVAE, ICVAEConfig, generate_batch, icvae_train
from lta.metrics import MetricsReport, accuracy_by_intention_correctness, \
    evaluate_predictions
from lta.seeding import substream_seed
from lta.taxonomy import ContextBags, build_context_bags


class HarnessError(ValueError):
    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code)
        self.code = code


# Published Ego4D-scale reference values; shown for comparison only, never
# asserted (not reproducible at desk scale).
EGO4D_REFERENCE_N_SWEEP = {
    1: {"verb": 0.7246, "noun": 0.7509},
    2: {"verb": 0.7105, "noun": 0.6432},
    4: {"verb": 0.7011, "noun": 0.5920},
    6: {"verb": 0.7035, "noun": 0.5899},
    8: {"verb": 0.7147, "noun": 0.6588},
}
EGO4D_REFERENCE_INTENTION_N6 = {
    "conditioned": {"verb": 0.741, "noun": 0.740, "action": 0.930},
    "unconditioned": {"verb": 0.748, "noun": 0.753, "action": 0.938},
}


@dataclass(frozen=True)
class ExperimentConfig:
    grammar: GrammarConfig = GrammarConfig()
    n: int = 6
    z: int = 20
    k: int = 5
    seed: int = 0
    train_windows: int = 3000
    eval_windows: int = 500
    h3m: H3MConfig = H3MConfig()
    icvae: ICVAEConfig = ICVAEConfig()

    def __post_init__(self):
        if self.n < 1 or self.z < 1 or self.k < 1:
            raise HarnessError("bad_config", "n, z, k must be >= 1")


def _from_dict(cls, doc: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise HarnessError("unknown_config_key",
                           f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Strict parse: any unknown key (at any level) is an error."""
    doc = dict(doc)
    sub = {}
    if "grammar" in doc:
        sub["grammar"] = _from_dict(GrammarConfig, doc.pop("grammar"))
    if "h3m" in doc:
        sub["h3m"] = _from_dict(H3MConfig, doc.pop("h3m"))
    if "icvae" in doc:
        sub["icvae"] = _from_dict(ICVAEConfig, doc.pop("icvae"))
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - names
    if unknown:
        raise HarnessError("unknown_config_key",
                           f"unknown keys: {sorted(unknown)}")
    return ExperimentConfig(**doc, **sub)


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str) -> ExperimentConfig:
    with open(path) as f:
        return config_from_dict(json.load(f))


# ---------------------------------------------------------------- checkpoints

class CheckpointError(ValueError):
    def __init__(self, code: str, message: str | None = None):
        super().__init__(message or code)
        self.code = code


def save_checkpoint(model: torch.nn.Module, header: dict, path: str) -> None:
    torch.save({"header": header, "state": model.state_dict()}, path)


def _load_blob(path: str, expect_model: str) -> dict:
    try:
        blob = torch.load(path, weights_only=False)
    except Exception as e:
        raise CheckpointError("corrupt", f"{path}: {e}") from e
    if not isinstance(blob, dict) or "header" not in blob or "state" not in blob:
        raise CheckpointError("corrupt", f"{path}: missing header/state")
    if blob["header"].get("model") != expect_model:
        raise CheckpointError(
            "model_mismatch",
            f"expected {expect_model!r}, got {blob['header'].get('model')!r}")
    return blob


def save_h3m(model: H3M, config: ExperimentConfig, path: str) -> None:
    header = {
        "model": "h3m",
        "vocab_sizes": [model.verb_head.out_features,
                        model.noun_head.out_features,
                        model.intention_head.out_features],
        "T": model.T, "D": model.D, "N": model.N,
        "config": dataclasses.asdict(model.config),
        "config_hash": config_hash(config),
        "seed": config.seed,
    }
    save_checkpoint(model, header, path)


def load_h3m(path: str) -> tuple[H3M, dict]:
    blob = _load_blob(path, "h3m")
    h = blob["header"]
    model = H3M(h["T"], h["D"], h["N"], *h["vocab_sizes"],
                config=_from_dict(H3MConfig, h["config"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, h


def save_icvae(model: ICVAE, config: ExperimentConfig, path: str) -> None:
    c = model.config
    header = {
        "model": "icvae",
        "d": c.d, "N": config.n, "Z": config.z,
        "vocab_sizes": [model.verb_head.out_features,
                        model.noun_head.out_features,
                        model.num_intentions],
        "lambda": {"rec": c.lambda_rec, "ce": c.lambda_ce, "kl": c.lambda_kl},
        "no_intention": c.no_intention,
        "config": dataclasses.asdict(c),
        "config_hash": config_hash(config),
        "seed": config.seed,
    }
    save_checkpoint(model, header, path)


def load_icvae(path: str) -> tuple[ICVAE, dict]:
    blob = _load_blob(path, "icvae")
    h = blob["header"]
    model = ICVAE(h["vocab_sizes"][0], h["vocab_sizes"][1], h["vocab_sizes"][2],
                  config=_from_dict(ICVAEConfig, h["config"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model, h


# ------------------------------------------------------------ data preparation

def prepare_windows(config: ExperimentConfig, split: str, target: int,
                    with_features: bool, n: int | None = None,
                    ) -> tuple[list[AnticipationExample], SynthDataset]:
    """Generate synthetic videos until the split holds >= target windows.

    Video generation is prefix-stable in the video count, so growing the pool
    never changes already-generated videos.
    """
    N = config.n if n is None else n
    n_videos = max(8, target // max(1, config.grammar.video_len_min
                                    - N - config.z + 1))
    while True:
        ds = datagen.synth_generate(config.grammar, split=split,
                                    num_videos=n_videos)
        loader = ds.feature_for if with_features else None
        windows = datagen.make_windows(ds.records, N, config.z,
                                       feature_loader=loader)
        if len(windows) >= target:
            return windows[:target], ds
        n_videos *= 2


def train_models(config: ExperimentConfig,
                 train_examples: Sequence[AnticipationExample],
                 ds: SynthDataset, no_intention: bool | None = None):
    """Train H3M and I-CVAE independently on the same windows."""
    sizes = (len(ds.vocabulary.verbs), len(ds.vocabulary.nouns),
             len(ds.vocabulary.intentions))
    h3m_model, h3m_log = h3m_train(train_examples, *sizes, config=config.h3m,
                                   seed=config.seed)
    icvae_cfg = config.icvae
    if no_intention is not None:
        icvae_cfg = dataclasses.replace(icvae_cfg, no_intention=no_intention)
    icvae_model, icvae_log = icvae_train(train_examples, *sizes,
                                         config=icvae_cfg, seed=config.seed)
    return h3m_model, icvae_model, {"h3m": h3m_log, "icvae": icvae_log}


# ----------------------------------------------------------------- evaluation

def run_pipeline(examples: Sequence[AnticipationExample], icvae_model: ICVAE,
                 config: ExperimentConfig, h3m_model: H3M | None = None,
                 oracle_obs: bool = False, bags: ContextBags | None = None,
                 ) -> MetricsReport:
    """End-to-end evaluation: observed labels + intention (from H3M or the
    ground truth with ``oracle_obs``) condition K generated futures, scored
    against the true future sequences."""
    if len(examples) == 0:
        raise HarnessError("empty_eval", "empty evaluation set")

    truths = [ex.future_actions for ex in examples]
    true_intentions = [ex.intention_id for ex in examples]
    accuracy = None

    if oracle_obs:
        observed = [ex.observed_actions for ex in examples]
        cond_intentions = true_intentions
    else:
        if h3m_model is None:
            raise HarnessError("missing_model", "h3m checkpoint required")
        if h3m_model.N != config.n:
            raise HarnessError("n_mismatch",
                               f"h3m N={h3m_model.N}, config n={config.n}")
        inferred = h3m_infer_batch(h3m_model, examples)
        observed = [obs for obs, _ in inferred]
        cond_intentions = [i for _, i in inferred]
        accuracy = _h3m_accuracy_table(h3m_model, examples)

    candidates = generate_batch(
        icvae_model, observed, cond_intentions, config.z, config.k,
        seed=substream_seed(config.seed, "generate"))

    echo = {"n": config.n, "z": config.z, "k": config.k, "seed": config.seed,
            "oracle_obs": oracle_obs,
            "no_intention": icvae_model.config.no_intention,
            "config_hash": config_hash(config)}
    return evaluate_predictions(candidates, truths, true_intentions,
                                bags=bags, accuracy=accuracy, config=echo)


def _h3m_accuracy_table(h3m_model: H3M,
                        examples: Sequence[AnticipationExample]) -> dict:
    vl, nl, il = h3m_scores(h3m_model, examples)
    verb_rank, noun_rank = [], []
    int_pred, verb_truth, noun_truth, int_truth = [], [], [], []
    for b, ex in enumerate(examples):
        pred_i = int(il[b].argmax())
        for t, a in enumerate(ex.observed_actions):
            verb_rank.append(list((-vl[b, t]).argsort(kind="stable")))
            noun_rank.append(list((-nl[b, t]).argsort(kind="stable")))
            int_pred.append(pred_i)
            verb_truth.append(a.verb_id)
            noun_truth.append(a.noun_id)
            int_truth.append(ex.intention_id)
    return accuracy_by_intention_correctness(
        verb_rank, noun_rank, int_pred, verb_truth, noun_truth, int_truth)


def run_experiment(config: ExperimentConfig, oracle_obs: bool = False,
                   no_intention: bool | None = None) -> dict:
    """Generate data, train both models, evaluate end-to-end."""
    train, ds = prepare_windows(config, "train", config.train_windows,
                                with_features=True)
    eval_ex, _ = prepare_windows(config, "eval", config.eval_windows,
                                 with_features=not oracle_obs)
    bags = build_context_bags(
        [r for r in ds.records], num_intentions=config.grammar.num_intentions)
    h3m_model, icvae_model, logs = train_models(config, train, ds,
                                                no_intention=no_intention)
    report = run_pipeline(eval_ex, icvae_model, config,
                          h3m_model=None if oracle_obs else h3m_model,
                          oracle_obs=oracle_obs, bags=bags)
    return {"report": report, "h3m": h3m_model, "icvae": icvae_model,
            "bags": bags, "train": train, "eval": eval_ex, "dataset": ds,
            "logs": logs}


def ablate_n(config: ExperimentConfig, n_values: Sequence[int]) -> dict:
    """Train/evaluate one I-CVAE per N with oracle observed labels."""
    table = {}
    for n in n_values:
        cfg = dataclasses.replace(config, n=n)
        try:
            train, ds = prepare_windows(cfg, "train", cfg.train_windows,
                                        with_features=False, n=n)
            eval_ex, _ = prepare_windows(cfg, "eval", cfg.eval_windows,
                                         with_features=False, n=n)
            sizes = (len(ds.vocabulary.verbs), len(ds.vocabulary.nouns),
                     len(ds.vocabulary.intentions))
            bags = build_context_bags(
                ds.records, num_intentions=cfg.grammar.num_intentions)
            model, _ = icvae_train(train, *sizes, config=cfg.icvae,
                                   seed=cfg.seed)
            report = run_pipeline(eval_ex, model, cfg, oracle_obs=True,
                                  bags=bags)
        except Exception as e:
            raise HarnessError("ablate_n_failed", f"N={n}: {e}") from e
        table[n] = report
    return {"results": table,
            "reference": {n: EGO4D_REFERENCE_N_SWEEP[n]
                          for n in n_values if n in EGO4D_REFERENCE_N_SWEEP}}


def ablate_intention(config: ExperimentConfig) -> dict:
    """Seed-paired conditioned vs no-intention arms, evaluated end-to-end."""
    train, ds = prepare_windows(config, "train", config.train_windows,
                                with_features=True)
    eval_ex, _ = prepare_windows(config, "eval", config.eval_windows,
                                 with_features=True)
    bags = build_context_bags(
        ds.records, num_intentions=config.grammar.num_intentions)
    sizes = (len(ds.vocabulary.verbs), len(ds.vocabulary.nouns),
             len(ds.vocabulary.intentions))
    h3m_model, _ = h3m_train(train, *sizes, config=config.h3m,
                             seed=config.seed)
    arms = {}
    for name, flag in (("conditioned", False), ("no_intention", True)):
        cfg_arm = dataclasses.replace(config.icvae, no_intention=flag)
        model, _ = icvae_train(train, *sizes, config=cfg_arm, seed=config.seed)
        arms[name] = run_pipeline(eval_ex, model, config, h3m_model=h3m_model,
                                  bags=bags)
    delta = {m: arms["no_intention"].ed20[m] - arms["conditioned"].ed20[m]
             for m in ("verb", "noun", "action")}
    return {"conditioned": arms["conditioned"],
            "no_intention": arms["no_intention"],
            "delta": delta,
            "reference": EGO4D_REFERENCE_INTENTION_N6}


# ------------------------------------------------------------------ manifests

def ensure_outdir(path: str, overwrite: bool) -> None:
    if os.path.exists(path) and os.listdir(path) and not overwrite:
        raise HarnessError("outdir_exists",
                           f"{path} exists; pass --overwrite to reuse")
    os.makedirs(path, exist_ok=True)


def write_manifest(out_dir: str, config: ExperimentConfig,
                   artifacts: dict, elapsed: float) -> None:
    from lta import __version__
    manifest = {
        "config_hash": config_hash(config),
        "seed": config.seed,
        "version": __version__,
        "artifacts": artifacts,
        "wall_clock_s": round(elapsed, 3),
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)


class Timer:
    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.start
