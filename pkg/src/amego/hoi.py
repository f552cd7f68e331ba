"""Online hand-object interaction tracklets.

Per frame the engine extends every active candidate (detector association on
the candidate's hand side, otherwise the reference tracker), counts
hand-visible misses towards termination, confirms and clusters finished
candidates, and finally looks for new interactions among the detections no
candidate claimed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .clustering import InstanceRegistry, mean_feature
from .config import EngineConfig
from .stream import SIDES, BoundingBox, FrameRecord, ObjectObservation, cosine, iou

TRACKER_MIN_SIM = 0.3
TRACKER_DECAY = 0.9

DETECTOR = "detector"
TRACKER = "tracker"


@dataclass
class TrackerState:
    last_box: BoundingBox
    template_embedding: np.ndarray
    confidence: float = 1.0


def tracker_step(state: TrackerState, frame: FrameRecord) -> tuple[BoundingBox, float]:
    """Greedy appearance+overlap tracker standing in for a learned SOT.

    Candidates are observations of either hand whose embedding is at least
    ``TRACKER_MIN_SIM`` similar to the template and that touch the last box.
    The best by ``cosine * (1 + iou)`` wins with confidence = its cosine;
    with no candidate the last box is held and confidence decays.
    """
    best_box = None
    best_cos = 0.0
    best_score = float("-inf")
    for obs in frame.objects:
        c = cosine(state.template_embedding, obs.embedding)
        if c < TRACKER_MIN_SIM:
            continue
        ov = iou(state.last_box, obs.box)
        if ov <= 0.0:
            continue
        score = c * (1.0 + ov)
        if score > best_score:
            best_box, best_cos, best_score = obs.box, c, score
    if best_box is None:
        return state.last_box, state.confidence * TRACKER_DECAY
    return best_box, min(1.0, best_cos)


@dataclass(eq=False)
class WindowObs:
    """An unclaimed object observation waiting in a hand side's init window."""

    frame: int
    pos: int
    box: BoundingBox
    embedding: np.ndarray
    claimed: bool = False


@dataclass(eq=False)
class CandidateTracklet:
    uid: int
    hand_side: str
    start: int
    boxes: list[BoundingBox]
    provenance: list[str]
    det_embeddings: list[np.ndarray]
    det_keys: list[tuple[int, int]]
    tracker: TrackerState
    provisional_instance: int | None = None
    miss_run: int = 0
    _emb_sum: np.ndarray | None = field(default=None, repr=False)

    @property
    def end(self) -> int:
        return self.start + len(self.boxes) - 1

    @property
    def last_box(self) -> BoundingBox:
        return self.boxes[-1]

    def box_at(self, frame: int) -> BoundingBox:
        return self.boxes[frame - self.start]

    def template(self) -> np.ndarray:
        if self._emb_sum is None:
            self._emb_sum = np.sum(self.det_embeddings, axis=0)
        return self._emb_sum / np.linalg.norm(self._emb_sum)

    def append_detection(self, frame: int, pos: int, obs: ObjectObservation) -> None:
        confidence = cosine(self.tracker.template_embedding, obs.embedding)
        self.boxes.append(obs.box)
        self.provenance.append(DETECTOR)
        self.det_embeddings.append(obs.embedding)
        self.det_keys.append((frame, pos))
        if self._emb_sum is None:
            self._emb_sum = np.sum(self.det_embeddings, axis=0)
        else:
            self._emb_sum = self._emb_sum + obs.embedding
        self.tracker = TrackerState(obs.box, self.template(), min(1.0, max(0.0, confidence)))

    def append_tracked(self, box: BoundingBox, confidence: float) -> None:
        self.boxes.append(box)
        self.provenance.append(TRACKER)
        self.tracker.last_box = box
        self.tracker.confidence = confidence


@dataclass(frozen=True, eq=False)
class HOITracklet:
    t_s: int
    t_e: int
    boxes: tuple[BoundingBox, ...]
    hand_side: str
    instance_id: int
    feature: np.ndarray
    support_count: int
    confirmed_at: int
    detections: tuple[tuple[int, int], ...] = ()

    @property
    def interval(self) -> tuple[int, int]:
        return (self.t_s, self.t_e)

    def to_dict(self) -> dict:
        return {
            "t_s": self.t_s,
            "t_e": self.t_e,
            "boxes": [list(b) for b in self.boxes],
            "hand_side": self.hand_side,
            "instance_id": self.instance_id,
            "feature": [float(x) for x in self.feature],
            "support_count": self.support_count,
            "confirmed_at": self.confirmed_at,
            "detections": [list(k) for k in self.detections],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HOITracklet":
        return cls(
            t_s=int(d["t_s"]),
            t_e=int(d["t_e"]),
            boxes=tuple(BoundingBox(*b) for b in d["boxes"]),
            hand_side=d["hand_side"],
            instance_id=int(d["instance_id"]),
            feature=np.asarray(d["feature"], dtype=np.float64),
            support_count=int(d["support_count"]),
            confirmed_at=int(d["confirmed_at"]),
            detections=tuple((int(a), int(b)) for a, b in d.get("detections", [])),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HOITracklet):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# ---------------------------------------------------------------- operations


def find_chain(window: Sequence[WindowObs], cfg: EngineConfig) -> list[WindowObs] | None:
    """Earliest chain of >= s_o unclaimed observations linked by IoU >= iou_match.

    Chain members sit on strictly increasing frames. Observations are visited
    in (frame, position) order and the first one whose longest chain reaches
    ``s_o`` is backtracked; ties on chain length keep the earliest predecessor.
    """
    obs = sorted((o for o in window if not o.claimed), key=lambda o: (o.frame, o.pos))
    if len(obs) < cfg.s_o:
        return None
    length = [1] * len(obs)
    parent: list[int | None] = [None] * len(obs)
    for i, oi in enumerate(obs):
        best = 0
        for j in range(i):
            oj = obs[j]
            if oj.frame >= oi.frame:
                break
            if length[j] > best and iou(oj.box, oi.box) >= cfg.iou_match:
                best = length[j]
                parent[i] = j
        length[i] = best + 1
        if length[i] >= cfg.s_o:
            chain = []
            k: int | None = i
            while k is not None:
                chain.append(obs[k])
                k = parent[k]
            return chain[::-1]
    return None


def try_initialise(
    window: Sequence[WindowObs],
    cfg: EngineConfig,
    hand_side: str,
    now: int | None = None,
    uid: int = 0,
) -> CandidateTracklet | None:
    """Start a candidate from the earliest qualifying chain in ``window``.

    Chain members become detector entries and are marked claimed; frames
    between chain members (and up to ``now``) hold the previous box.
    """
    chain = find_chain(window, cfg)
    if chain is None:
        return None
    for o in chain:
        o.claimed = True
    start = chain[0].frame
    boxes: list[BoundingBox] = []
    provenance: list[str] = []
    for o in chain:
        while boxes and start + len(boxes) < o.frame:
            boxes.append(boxes[-1])
            provenance.append(TRACKER)
        boxes.append(o.box)
        provenance.append(DETECTOR)
    if now is not None:
        while start + len(boxes) <= now:
            boxes.append(boxes[-1])
            provenance.append(TRACKER)
    embs = [o.embedding for o in chain]
    template = mean_feature(embs)
    tracker = TrackerState(boxes[-1], template, min(1.0, max(0.0, cosine(template, embs[-1]))))
    cand = CandidateTracklet(
        uid=uid,
        hand_side=hand_side,
        start=start,
        boxes=boxes,
        provenance=provenance,
        det_embeddings=embs,
        det_keys=[(o.frame, o.pos) for o in chain],
        tracker=tracker,
    )
    cand._emb_sum = np.sum(embs, axis=0)
    return cand


def associate_detections(
    candidate: CandidateTracklet,
    frame: FrameRecord,
    cfg: EngineConfig,
    exclude: Iterable[int] = (),
) -> tuple[int, ObjectObservation] | None:
    """Best same-side observation by IoU with the candidate's last box, if >= iou_match.

    Returns ``(position, observation)`` or ``None`` for a miss. ``exclude``
    holds positions already claimed on this side in this frame.
    """
    excluded = set(exclude)
    best = None
    best_iou = -1.0
    last = candidate.last_box
    for pos, obs in enumerate(frame.objects):
        if pos in excluded or obs.contact_side not in (candidate.hand_side, "both"):
            continue
        ov = iou(last, obs.box)
        if ov > best_iou:
            best, best_iou = (pos, obs), ov
    if best is not None and best_iou >= cfg.iou_match:
        return best
    return None


def check_termination(candidate: CandidateTracklet, frame: FrameRecord, matched: bool, cfg: EngineConfig) -> bool:
    """Update the miss run; True when the candidate is complete.

    Misses only count while the candidate's hand is visible (unless hand
    gating is disabled); with the hand out of view the run is frozen.
    """
    if matched:
        candidate.miss_run = 0
    elif not cfg.hand_gated_termination or frame.hand_visible(candidate.hand_side):
        candidate.miss_run += 1
    return candidate.miss_run >= cfg.e_o


def tracklet_features(embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Mean appearance feature over detector-associated crops, unit length."""
    return mean_feature(embeddings)


def _mean_overlap(t_s: int, boxes: Sequence[BoundingBox], cand: CandidateTracklet) -> float | None:
    lo = max(t_s, cand.start)
    hi = min(t_s + len(boxes) - 1, cand.end)
    if lo > hi:
        return None
    total = 0.0
    for f in range(lo, hi + 1):
        total += iou(boxes[f - t_s], cand.box_at(f))
    return total / (hi - lo + 1)


def assign_instance(
    feature: np.ndarray,
    t_s: int,
    boxes: Sequence[BoundingBox],
    registry: InstanceRegistry,
    running: Sequence[CandidateTracklet],
    cfg: EngineConfig,
) -> int:
    """Pick (and record) the object instance of a finished tracklet.

    A running tracker that overlaps the tracklet and is more confident than
    the best instance similarity hands over its provisional instance;
    otherwise the best instance is used when it reaches ``sim_assign_obj``,
    else a new instance is allocated.
    """
    best_id, best_sim = registry.best(feature)
    override = None
    override_conf = float("-inf")
    for cand in running:
        if cand.provisional_instance is None:
            continue
        ov = _mean_overlap(t_s, boxes, cand)
        if ov is None or ov < cfg.iou_match:
            continue
        conf = cand.tracker.confidence
        if conf > best_sim and conf > override_conf:
            override, override_conf = cand.provisional_instance, conf
    if override is not None:
        return registry.add(override, feature)
    if best_id is not None and best_sim >= cfg.sim_assign_obj:
        return registry.add(best_id, feature)
    return registry.add(None, feature)


class HOIEngine:
    def __init__(self, cfg: EngineConfig, embed_dim: int):
        self.cfg = cfg
        self.registry = InstanceRegistry(embed_dim)
        self.active: list[CandidateTracklet] = []
        self.windows: dict[str, deque[WindowObs]] = {s: deque() for s in SIDES}
        self.tracklets: list[HOITracklet] = []
        self.last_frame = -1
        self._next_uid = 0

    def process_frame(self, frame: FrameRecord) -> list[HOITracklet]:
        """Advance one frame; return the tracklets confirmed at this frame."""
        if frame.frame <= self.last_frame:
            raise ValueError(f"frame {frame.frame} out of order (last {self.last_frame})")
        cfg = self.cfg
        t = frame.frame
        self.last_frame = t
        claimed: dict[str, set[int]] = {s: set() for s in SIDES}

        completed = []
        for cand in self.active:
            # frames skipped by the stream are held at the last box
            while cand.end < t - 1:
                cand.append_tracked(cand.last_box, cand.tracker.confidence)
            hit = associate_detections(cand, frame, cfg, claimed[cand.hand_side])
            if hit is not None:
                pos, obs = hit
                claimed[cand.hand_side].add(pos)
                cand.append_detection(t, pos, obs)
            elif cfg.use_tracker:
                cand.append_tracked(*tracker_step(cand.tracker, frame))
            else:
                cand.append_tracked(cand.last_box, cand.tracker.confidence * TRACKER_DECAY)
            if check_termination(cand, frame, hit is not None, cfg):
                completed.append(cand)

        if completed:
            done = set(id(c) for c in completed)
            self.active = [c for c in self.active if id(c) not in done]
        confirmed = [self._confirm(c, t) for c in completed]

        for side in SIDES:
            window = self.windows[side]
            while window and window[0].frame <= t - cfg.w_s:
                window.popleft()
            added = False
            for pos, obs in enumerate(frame.objects):
                if pos in claimed[side] or obs.contact_side not in (side, "both"):
                    continue
                window.append(WindowObs(t, pos, obs.box, obs.embedding))
                added = True
            if added:
                self._initialise(side, t)
        return confirmed

    def _initialise(self, side: str, t: int) -> None:
        window = self.windows[side]
        while True:
            cand = try_initialise(window, self.cfg, side, now=t, uid=self._next_uid)
            if cand is None:
                break
            self._next_uid += 1
            best_id, best_sim = self.registry.best(cand.tracker.template_embedding)
            if best_id is not None and best_sim >= self.cfg.sim_assign_obj:
                cand.provisional_instance = best_id
            self.active.append(cand)
        if any(o.claimed for o in window):
            self.windows[side] = deque(o for o in window if not o.claimed)

    def _confirm(self, cand: CandidateTracklet, t: int) -> HOITracklet:
        last_det = len(cand.provenance) - 1 - cand.provenance[::-1].index(DETECTOR)
        boxes = tuple(cand.boxes[: last_det + 1])
        feature = tracklet_features(cand.det_embeddings)
        iid = assign_instance(feature, cand.start, boxes, self.registry, self.active, self.cfg)
        tr = HOITracklet(
            t_s=cand.start,
            t_e=cand.start + last_det,
            boxes=boxes,
            hand_side=cand.hand_side,
            instance_id=iid,
            feature=feature,
            support_count=len(cand.det_embeddings),
            confirmed_at=t,
            detections=tuple(cand.det_keys),
        )
        self.tracklets.append(tr)
        return tr

    def finalize(self) -> list[HOITracklet]:
        """Confirm every still-active candidate at end of stream."""
        out = []
        while self.active:
            cand = self.active.pop(0)
            out.append(self._confirm(cand, self.last_frame))
        return out
