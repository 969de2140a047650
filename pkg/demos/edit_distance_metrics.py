"""Tour of the sequence metrics: the OSA edit-distance variant, normalized
ED@Z with best-of-K selection, and per-horizon curves.
"""

from lta.metrics import damerau_levenshtein, ed_at_z, per_horizon_ed
from lta.taxonomy import ActionLabel, ActionSequence


def seq(pairs):
    return ActionSequence(tuple(ActionLabel(v, n) for v, n in pairs),
                          role="future")


def main():
    print("Damerau-Levenshtein, optimal string alignment variant")
    for a, b in (("kitten", "sitting"), ("ab", "ba"), ("ca", "abc")):
        print(f"  DL({a!r}, {b!r}) = {damerau_levenshtein(a, b)}")
    print("  note: ('ca','abc') is 3 under OSA; the unrestricted variant "
          "would give 2\n")

    truth = seq([(0, 0), (1, 1), (2, 2), (3, 3)])
    near = seq([(0, 0), (1, 9), (2, 2), (3, 3)])   # one noun wrong
    far = seq([(9, 9)] * 4)
    for mode in ("verb", "noun", "action"):
        value, best_k = ed_at_z([far, near], truth, mode)
        print(f"best-of-2 ED@4 [{mode}]: {value:.2f} (candidate {best_k})")

    print("\nper-horizon curve (first future step wrong, rest right):")
    cand = seq([(9, 9), (1, 1), (2, 2), (3, 3)])
    curve = per_horizon_ed([cand], truth, "action")
    for t, value in enumerate(curve, start=1):
        print(f"  horizon {t}: {value:.3f}")


if __name__ == "__main__":
    main()
