"""Character-level Levenshtein distance and nearest-unit matching."""

from __future__ import annotations

from typing import Sequence


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nearest_unit(unit: str, candidates: Sequence[str]) -> int:
    """Index of the candidate minimizing edit distance; ties go to the smallest index."""
    if not candidates:
        raise ValueError("no candidates to match against")
    best_idx = 0
    best = levenshtein(unit, candidates[0])
    for idx in range(1, len(candidates)):
        if best == 0:
            break
        dist = levenshtein(unit, candidates[idx])
        if dist < best:
            best, best_idx = dist, idx
    return best_idx
