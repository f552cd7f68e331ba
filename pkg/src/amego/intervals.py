"""Inclusive integer frame intervals ``(start, end)`` and temporal IoU."""

from __future__ import annotations

from typing import Iterable, Sequence

Interval = tuple[int, int]


def validate_intervals(intervals: Sequence[Sequence[int]], name: str = "intervals") -> list[Interval]:
    """Return intervals as tuples; they must be well-formed, sorted and disjoint."""
    out: list[Interval] = []
    prev_end = None
    for iv in intervals:
        if len(iv) != 2:
            raise ValueError(f"{name}: interval must have 2 endpoints, got {iv!r}")
        a, b = int(iv[0]), int(iv[1])
        if a != iv[0] or b != iv[1]:
            raise ValueError(f"{name}: endpoints must be integers, got {iv!r}")
        if a < 0 or a > b:
            raise ValueError(f"{name}: malformed interval {iv!r}")
        if prev_end is not None and a <= prev_end:
            raise ValueError(f"{name}: intervals must be sorted and non-overlapping at {iv!r}")
        out.append((a, b))
        prev_end = b
    return out


def merge_intervals(intervals: Iterable[Sequence[int]]) -> list[Interval]:
    """Union of possibly overlapping intervals as a sorted disjoint list.

    Touching intervals (``b + 1 == c``) stay separate.
    """
    merged: list[list[int]] = []
    for a, b in sorted((int(a), int(b)) for a, b in intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def overlaps(a: Sequence[int], b: Sequence[int]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def interval_iou(a: Sequence[int], b: Sequence[int]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def directed_aiou(src: Sequence[Sequence[int]], dst: Sequence[Sequence[int]]) -> float:
    """Mean over ``src`` of the best single-interval IoU against ``dst`` (0 if either is empty)."""
    if not src or not dst:
        return 0.0
    total = 0.0
    for s in src:
        total += max(interval_iou(s, d) for d in dst)
    return total / len(src)


def temporal_iou_score(candidate: Sequence[Sequence[int]], reference: Sequence[Sequence[int]]) -> float:
    """Symmetric average of the two directed best-match AIoUs."""
    cand = validate_intervals(candidate, "candidate")
    ref = validate_intervals(reference, "reference")
    if not cand or not ref:
        raise ValueError("temporal_iou_score needs non-empty interval lists")
    return 0.5 * (directed_aiou(cand, ref) + directed_aiou(ref, cand))
