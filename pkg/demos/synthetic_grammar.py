"""A look inside the synthetic intention grammar.

Each intention owns a noun bag (3 shared commons + distinctive rares) while
all intentions share one verb-motif pool; the intention identity is carried by
a signature vector mixed into the clip features. This keeps the video-level
intention recoverable from features (what a visual backbone would see) but
ambiguous from most observed label windows.
"""

from collections import Counter

from lta.datagen import GrammarConfig, synth_generate


def main():
    ds = synth_generate(GrammarConfig(num_videos=100, seed=0))
    config = ds.config

    print(f"{config.num_intentions} intentions, {config.num_verbs} verbs, "
          f"{config.num_nouns} nouns, {len(ds.records)} clips")
    print(f"common nouns: {sorted(ds.common_nouns)}")
    for i, bag in enumerate(ds.noun_bags):
        rares = sorted(bag - ds.common_nouns)
        print(f"  intention {i}: rares {rares}")

    print(f"\nshared motif pool: {ds.motifs[0]}")

    counts = Counter(r.noun_id for r in ds.records)
    common_mass = sum(counts[n] for n in ds.common_nouns) / len(ds.records)
    cycle = (config.noun_shared * config.noun_block_len
             + (config.noun_bag_size - config.noun_shared)
             * config.rare_block_len)
    expected = config.noun_shared * config.noun_block_len / cycle
    print(f"\nfraction of clips on common nouns: {common_mass:.3f} "
          f"(cycle predicts {expected:.3f})")

    video = [r for r in ds.records if r.video_id == ds.records[0].video_id]
    print(f"\nfirst video ({video[0].video_id}, "
          f"intention {video[0].intention_id}):")
    print("  verbs:", [r.verb_id for r in video[:16]], "...")
    print("  nouns:", [r.noun_id for r in video[:16]], "...")


if __name__ == "__main__":
    main()
