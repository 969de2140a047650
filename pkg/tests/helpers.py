"""Shared test oracles and utilities."""

from __future__ import annotations

from collections import deque
from itertools import product

from lta.taxonomy import ActionLabel, ActionSequence


def osa_script_search(a, b) -> int:
    """Exhaustive search over restricted edit scripts (no memoization).

    Enumerates every script of copies, substitutions, deletions, insertions,
    and adjacent transpositions applied left to right, where no symbol is
    edited twice, and returns the cheapest cost. Independent of the DP
    implementation under test.
    """
    def rec(i: int, j: int) -> int:
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        costs = [rec(i + 1, j + 1) + (a[i] != b[j]),  # copy or substitute
                 rec(i + 1, j) + 1,                   # delete a[i]
                 rec(i, j + 1) + 1]                   # insert b[j]
        if (i + 1 < len(a) and j + 1 < len(b)
                and a[i] == b[j + 1] and a[i + 1] == b[j]):
            costs.append(rec(i + 2, j + 2) + 1)       # transpose a[i], a[i+1]
        return min(costs)

    return rec(0, 0)


def unrestricted_dl_bfs(a, b, alphabet) -> int:
    """Unrestricted Damerau-Levenshtein via BFS over edited strings.

    Allows re-editing substrings, so it can undercut the restricted variant
    (e.g. "ca" -> "abc" costs 2 here, 3 restricted).
    """
    a, b = tuple(a), tuple(b)
    max_len = max(len(a), len(b)) + max(len(a), len(b))
    seen = {a}
    queue = deque([(a, 0)])
    while queue:
        s, d = queue.popleft()
        if s == b:
            return d
        for nxt in _dl_neighbors(s, alphabet, max_len):
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, d + 1))
    raise RuntimeError("unreachable: target not found")


def _dl_neighbors(s, alphabet, max_len):
    for i in range(len(s)):
        yield s[:i] + s[i + 1:]                       # deletion
        for c in alphabet:
            if c != s[i]:
                yield s[:i] + (c,) + s[i + 1:]        # substitution
    if len(s) < max_len:
        for i in range(len(s) + 1):
            for c in alphabet:
                yield s[:i] + (c,) + s[i:]            # insertion
    for i in range(len(s) - 1):
        if s[i] != s[i + 1]:
            yield s[:i] + (s[i + 1], s[i]) + s[i + 2:]  # transposition


def all_sequences(alphabet, max_len):
    for length in range(max_len + 1):
        yield from product(alphabet, repeat=length)


def seq(pairs, role="future") -> ActionSequence:
    return ActionSequence(tuple(ActionLabel(v, n) for v, n in pairs), role=role)
