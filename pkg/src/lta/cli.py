"""Command-line entry point.

Subcommands: synth-gen, train-h3m, train-icvae, predict, evaluate,
ablate-n, ablate-intention.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from lta import datagen, harness
from lta.datagen import DatasetError, GrammarConfig
from lta.harness import CheckpointError, ExperimentConfig, HarnessError, Timer
from lta.icvae import generate_batch, icvae_train
from lta.metrics import evaluate_predictions
from lta.seeding import substream_seed
from lta.taxonomy import ActionLabel, ActionSequence, TaxonomyError, \
    build_context_bags


def _load_experiment_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = harness.load_config(args.config)
    else:
        config = ExperimentConfig()
    overrides = {}
    for flag, name in (("n", "n"), ("z", "z"), ("k", "k"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config


def cmd_synth_gen(args) -> int:
    if args.config:
        with open(args.config) as f:
            grammar = harness._from_dict(GrammarConfig, json.load(f))
    else:
        grammar = GrammarConfig()
    if args.seed is not None:
        grammar = dataclasses.replace(grammar, seed=args.seed)
    if args.videos is not None:
        grammar = dataclasses.replace(grammar, num_videos=args.videos)
    harness.ensure_outdir(args.out, args.overwrite)
    with Timer() as t:
        ds = datagen.synth_generate(grammar, split=args.split)
        datagen.write_dataset(ds, args.out)
    harness.write_manifest(
        args.out, ExperimentConfig(grammar=grammar, seed=grammar.seed),
        {"annotations": "annotations.json", "manifest": "manifest.json",
         "vocab": "vocab.json"}, t.elapsed)
    print(f"wrote {len(ds.records)} clips to {args.out}")
    return 0


def _load_windows(data_dir: str, N: int, Z: int, with_features: bool):
    records, vocab, loader = datagen.load_dataset(data_dir)
    windows = datagen.make_windows(
        records, N, Z, feature_loader=loader if with_features else None)
    return records, vocab, windows


def cmd_train_h3m(args) -> int:
    from lta.h3m import h3m_train
    config = _load_experiment_config(args)
    harness.ensure_outdir(args.out, args.overwrite)
    records, vocab, windows = _load_windows(args.data, config.n, config.z, True)
    sizes = (len(vocab.verbs), len(vocab.nouns), len(vocab.intentions))
    with Timer() as t:
        model, _log = h3m_train(windows, *sizes, config=config.h3m,
                                seed=config.seed)
    path = os.path.join(args.out, "h3m.pt")
    harness.save_h3m(model, config, path)
    harness.write_manifest(args.out, config, {"checkpoint": "h3m.pt"}, t.elapsed)
    print(f"trained h3m on {len(windows)} windows -> {path}")
    return 0


def cmd_train_icvae(args) -> int:
    config = _load_experiment_config(args)
    if args.no_intention:
        config = dataclasses.replace(
            config, icvae=dataclasses.replace(config.icvae, no_intention=True))
    harness.ensure_outdir(args.out, args.overwrite)
    records, vocab, windows = _load_windows(args.data, config.n, config.z, False)
    sizes = (len(vocab.verbs), len(vocab.nouns), len(vocab.intentions))
    with Timer() as t:
        model, _log = icvae_train(windows, *sizes, config=config.icvae,
                                  seed=config.seed)
    path = os.path.join(args.out, "icvae.pt")
    harness.save_icvae(model, config, path)
    harness.write_manifest(args.out, config, {"checkpoint": "icvae.pt"},
                           t.elapsed)
    print(f"trained icvae on {len(windows)} windows -> {path}")
    return 0


def cmd_predict(args) -> int:
    from lta.h3m import h3m_infer_batch
    icvae_model, icvae_header = harness.load_icvae(args.icvae)
    Z = args.z if args.z is not None else icvae_header["Z"]
    K = args.k if args.k is not None else 5
    seed = args.seed if args.seed is not None else icvae_header["seed"]

    h3m_model = None
    if not args.oracle_obs:
        if not args.h3m:
            raise HarnessError("missing_model",
                               "--h3m required unless --oracle-obs")
        h3m_model, _ = harness.load_h3m(args.h3m)
    N = h3m_model.N if h3m_model is not None else icvae_header["N"]

    records, vocab, windows = _load_windows(args.data, N, Z,
                                            not args.oracle_obs)
    if args.oracle_obs:
        observed = [ex.observed_actions for ex in windows]
        intentions = [ex.intention_id for ex in windows]
    else:
        inferred = h3m_infer_batch(h3m_model, windows)
        observed = [o for o, _ in inferred]
        intentions = [i for _, i in inferred]

    candidates = generate_batch(icvae_model, observed, intentions, Z, K,
                                seed=substream_seed(seed, "generate"))
    with open(args.out, "w") as f:
        for ex, intention, cands in zip(windows, intentions, candidates):
            f.write(json.dumps({
                "example_id": ex.example_id,
                "intention": intention,
                "candidates": [[[a.verb_id, a.noun_id] for a in c]
                               for c in cands],
            }, sort_keys=True) + "\n")
    print(f"wrote {len(windows)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    with open(args.pred) as f:
        rows = [json.loads(line) for line in f if line.strip()]
    if not rows:
        raise HarnessError("empty_eval", "empty evaluation set")

    records, vocab, _loader = datagen.load_dataset(args.truth)
    by_video = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    for v in by_video.values():
        v.sort(key=lambda r: r.clip_index)

    candidates_all, truths, intentions = [], [], []
    for row in rows:
        video_id, start = row["example_id"].rsplit(":", 1)
        start = int(start)
        cands = [ActionSequence(tuple(ActionLabel(v, n) for v, n in cand),
                                role="future")
                 for cand in row["candidates"]]
        Z = len(cands[0])
        clips = by_video[video_id][start:start + Z]
        if len(clips) != Z:
            raise HarnessError("truth_mismatch",
                               f"{row['example_id']}: not enough future clips")
        truths.append(ActionSequence(tuple(r.label for r in clips),
                                     role="future"))
        intentions.append(clips[0].intention_id)
        candidates_all.append(cands)

    bags = build_context_bags(records, num_intentions=len(vocab.intentions))
    report = evaluate_predictions(candidates_all, truths, intentions,
                                  bags=bags)
    with open(args.report, "w") as f:
        f.write(report.to_json())
    print(f"report -> {args.report}")
    return 0


def cmd_ablate_n(args) -> int:
    config = _load_experiment_config(args)
    n_values = [int(x) for x in args.n_values.split(",")]
    harness.ensure_outdir(args.out, args.overwrite)
    with Timer() as t:
        result = harness.ablate_n(config, n_values)
    doc = {"results": {str(n): json.loads(r.to_json())
                       for n, r in result["results"].items()},
           "reference": {str(n): v for n, v in result["reference"].items()}}
    path = os.path.join(args.out, "ablate_n.json")
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
    harness.write_manifest(args.out, config, {"report": "ablate_n.json"},
                           t.elapsed)
    print(f"report -> {path}")
    return 0


def cmd_ablate_intention(args) -> int:
    config = _load_experiment_config(args)
    harness.ensure_outdir(args.out, args.overwrite)
    with Timer() as t:
        result = harness.ablate_intention(config)
    doc = {"conditioned": json.loads(result["conditioned"].to_json()),
           "no_intention": json.loads(result["no_intention"].to_json()),
           "delta": result["delta"],
           "reference": result["reference"]}
    path = os.path.join(args.out, "ablate_intention.json")
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
    harness.write_manifest(args.out, config,
                           {"report": "ablate_intention.json"}, t.elapsed)
    print(f"report -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lta",
        description="Intention-conditioned long-term action anticipation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic dataset")
    p.add_argument("--config", help="grammar config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", default="train")
    p.add_argument("--videos", type=int)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_synth_gen)

    for name, func in (("train-h3m", cmd_train_h3m),
                       ("train-icvae", cmd_train_icvae)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a dataset")
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--z", type=int)
        p.add_argument("--overwrite", action="store_true")
        if name == "train-icvae":
            p.add_argument("--no-intention", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="generate future-action candidates")
    p.add_argument("--h3m")
    p.add_argument("--icvae", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--z", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle-obs", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against a dataset")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate-n", help="sweep the observed-window length")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--n-values", default="1,2,4")
    p.add_argument("--seed", type=int)
    p.add_argument("--z", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_ablate_n)

    p = sub.add_parser("ablate-intention",
                       help="conditioned vs no-intention comparison")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--z", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_ablate_intention)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        return args.func(args)
    except (HarnessError, CheckpointError, DatasetError, TaxonomyError) as e:
        code = getattr(e, "code", "error")
        print(f"error: {code}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
