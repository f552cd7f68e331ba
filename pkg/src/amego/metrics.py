"""Standalone temporal metrics (AIoU P / AIoU GT / delta-N / ID-switch) and QA accuracy."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .intervals import Interval, directed_aiou, interval_iou, validate_intervals

KINDS = ("object", "location")
TEMPLATES = tuple(f"Q{i}" for i in range(1, 9))


@dataclass(frozen=True)
class GroundTruthTrack:
    kind: str
    identity: str
    intervals: tuple[Interval, ...]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"ground-truth kind must be one of {KINDS}, got {self.kind!r}")
        if not self.intervals:
            raise ValueError(f"ground-truth track {self.identity!r} has no intervals")
        validate_intervals(self.intervals, f"ground truth {self.identity}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "identity": self.identity, "intervals": [list(iv) for iv in self.intervals]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundTruthTrack":
        return cls(d["kind"], str(d["identity"]), tuple((int(a), int(b)) for a, b in d["intervals"]))


def load_ground_truth(path: str | Path) -> list[GroundTruthTrack]:
    tracks = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                tracks.append(GroundTruthTrack.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad ground-truth record: {exc}") from None
    return tracks


def save_ground_truth(tracks: Iterable[GroundTruthTrack], path: str | Path) -> None:
    with open(path, "w") as fh:
        for t in tracks:
            fh.write(json.dumps(t.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")


@dataclass
class MetricsReport:
    aiou_p: float
    aiou_gt: float
    delta_n: int
    id_switch: float
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def delta_n(pred_count: int, gt_count: int) -> int:
    return pred_count - gt_count


@dataclass(frozen=True)
class IdSwitchResult:
    rate: float
    switches: int
    pairs: int


def id_switch(
    predictions: Sequence[tuple[Sequence[int], int]],
    gt_tracks: Sequence[GroundTruthTrack],
) -> IdSwitchResult:
    """Rate of instance-id changes between consecutive predictions of one gt identity.

    ``predictions`` are ``(interval, instance_id)``. Each prediction maps to
    the gt identity holding its best-IoU interval (first identity wins ties);
    zero-IoU predictions are dropped. Within each identity, predictions are
    ordered by start frame and every consecutive pair with different ids
    counts as a switch. The rate divides by the number of such pairs.
    """
    by_identity: dict[str, list[tuple[tuple[int, int], int]]] = defaultdict(list)
    for iv, iid in predictions:
        best_gid, best = None, 0.0
        for gt in gt_tracks:
            score = max(interval_iou(iv, g) for g in gt.intervals)
            if score > best:
                best_gid, best = gt.identity, score
        if best_gid is not None:
            by_identity[best_gid].append(((int(iv[0]), int(iv[1])), iid))
    switches = pairs = 0
    for preds in by_identity.values():
        preds.sort(key=lambda p: p[0])
        for (_, a), (_, b) in zip(preds, preds[1:]):
            pairs += 1
            switches += a != b
    return IdSwitchResult(switches / pairs if pairs else 0.0, switches, pairs)


def standalone_report(
    predictions: Sequence[tuple[Sequence[int], int]],
    gt_tracks: Sequence[GroundTruthTrack],
) -> MetricsReport:
    pred_iv = [tuple(p[0]) for p in predictions]
    gt_iv = [iv for t in gt_tracks for iv in t.intervals]
    ids = id_switch(predictions, gt_tracks)
    return MetricsReport(
        aiou_p=directed_aiou(pred_iv, gt_iv),
        aiou_gt=directed_aiou(gt_iv, pred_iv),
        delta_n=delta_n(len(pred_iv), len(gt_iv)),
        id_switch=ids.rate,
        counts={
            "pred": len(pred_iv),
            "gt": len(gt_iv),
            "gt_identities": len(gt_tracks),
            "id_switches": ids.switches,
            "id_pairs": ids.pairs,
        },
    )


def evaluate_memory(memory, gt_tracks: Sequence[GroundTruthTrack]) -> dict[str, MetricsReport]:
    """Object and location reports of a Memory against ground-truth tracks."""
    objects = [t for t in gt_tracks if t.kind == "object"]
    locations = [t for t in gt_tracks if t.kind == "location"]
    return {
        "object": standalone_report([(t.interval, t.instance_id) for t in memory.tracklets], objects),
        "location": standalone_report([(s.interval, s.instance_id) for s in memory.segments], locations),
    }


def qa_accuracy(verdicts: Iterable, questions: Iterable) -> dict[str, float | int | dict]:
    """Per-template and overall accuracy (fraction over questions)."""
    by_qid = {q.qid: q for q in questions}
    correct: dict[str, int] = defaultdict(int)
    total: dict[str, int] = defaultdict(int)
    for v in verdicts:
        q = by_qid.get(v.qid)
        if q is None:
            raise KeyError(f"verdict for unknown question {v.qid!r}")
        if q.correct_index is None:
            raise ValueError(f"question {v.qid!r} has no correct_index")
        total[q.template] += 1
        correct[q.template] += int(v.chosen_index == q.correct_index)
    n = sum(total.values())
    per = {t: correct[t] / total[t] for t in TEMPLATES if total[t]}
    return {
        "overall": sum(correct.values()) / n if n else 0.0,
        "per_template": per,
        "n": n,
        "n_per_template": {t: total[t] for t in TEMPLATES if total[t]},
    }
