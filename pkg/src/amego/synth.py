"""Synthetic activity scripts, noisy perception-stream rendering, question
generation with brute-force oracle answers, and script-vs-memory metrics.

A script is a timeline of location visits separated by gaps (walking or
standing still), with hand-object events nested inside the visits. Objects
and locations are represented by unit prototype embeddings whose pairwise
cosine is bounded by ``separation_max``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterator, Sequence

import numpy as np

from .config import EngineConfig
from .intervals import Interval, interval_iou, merge_intervals, overlaps, temporal_iou_score
from .metrics import TEMPLATES, GroundTruthTrack, MetricsReport, evaluate_memory
from .query import N_OPTIONS, AnswerOption, Question, lcs_length
from .stream import SIDES, BoundingBox, StreamHeader, dumps_record, iou

WALK = "walk"
STAND = "stand"
EMB_DIGITS = 6
Q1_MAX_LEN = 24


class ScenarioError(ValueError):
    """Scenario parameters that cannot produce a valid script."""


def _check(ok: bool, message: str) -> None:
    if not ok:
        raise ScenarioError(message)


@dataclass(frozen=True)
class ScenarioConfig:
    n_objects: int = 10
    n_locations: int = 4
    total_frames: int = 30000
    fps: float = 30.0
    embed_dim_obj: int = 16
    embed_dim_loc: int = 16
    separation_max: float = 0.2
    min_visit_len: int = 900
    max_visit_len: int = 2400
    min_gap_len: int = 60
    max_gap_len: int = 240
    min_event_len: int = 200
    max_event_len: int = 600
    min_event_gap: int = 30
    max_event_gap: int = 150
    max_events: int = 0  # 0 = unlimited
    walking_hands: bool = False  # hands in view while walking between visits
    stand_gap_prob: float = 0.0  # fraction of gaps spent standing still, hands out of view
    hand_exit_prob: float = 0.0  # chance an event has one hand-out-of-view stretch
    occlusion_prob: float = 0.0  # chance an event has one occluded stretch in which the object is moved
    image_width: int = 1920
    image_height: int = 1080
    flow_threshold: float = 2000.0

    def validate(self) -> None:
        if self.n_objects < 1 or self.n_locations < 1:
            raise ScenarioError("need at least one object and one location")
        for lo, hi in (
            ("min_visit_len", "max_visit_len"),
            ("min_gap_len", "max_gap_len"),
            ("min_event_len", "max_event_len"),
            ("min_event_gap", "max_event_gap"),
        ):
            if getattr(self, lo) > getattr(self, hi):
                raise ScenarioError(f"{lo} must not exceed {hi}")
        if self.min_event_len < 2 or self.min_gap_len < 1 or self.min_event_gap < 1:
            raise ScenarioError("event, gap and event-gap lengths must be positive")
        if self.min_visit_len < self.min_event_len:
            raise ScenarioError("visits must be able to hold at least one event")
        if self.total_frames < 2 * self.min_gap_len + self.min_visit_len:
            raise ScenarioError("total_frames too short for a single visit")
        if not all(0.0 <= p <= 1.0 for p in (self.stand_gap_prob, self.hand_exit_prob, self.occlusion_prob)):
            raise ScenarioError("probabilities must be in [0, 1]")
        if not -1.0 < self.separation_max < 1.0:
            raise ScenarioError("separation_max must be in (-1, 1)")
        if self.image_width < 1000 or self.image_height < 500:
            raise ScenarioError("image must be at least 1000x500 to hold both hand regions")


@dataclass(frozen=True)
class NoiseConfig:
    detection_drop_prob: float = 0.0
    spurious_rate: float = 0.0
    box_jitter_px: float = 0.0
    embedding_noise_sigma: float = 0.0
    flow_noise_sigma: float = 0.0
    hand_miss_prob: float = 0.0
    bursty_spurious: bool = False
    crop_noise_sigma: float = 0.05

    def validate(self) -> None:
        for name, value in asdict(self).items():
            if isinstance(value, bool):
                continue
            if value < 0:
                raise ScenarioError(f"{name} must be >= 0")
        if self.detection_drop_prob > 1 or self.hand_miss_prob > 1:
            raise ScenarioError("probabilities must be <= 1")

    @classmethod
    def moderate(cls) -> "NoiseConfig":
        return cls(
            detection_drop_prob=0.2,
            box_jitter_px=5.0,
            embedding_noise_sigma=0.2,
            spurious_rate=0.05,
            hand_miss_prob=0.05,
            flow_noise_sigma=300.0,
            crop_noise_sigma=0.2,
        )


@dataclass(frozen=True)
class ScriptEvent:
    object_label: str
    hand_side: str
    t_s: int
    t_e: int
    location_label: str
    start_box: tuple[float, float, float, float]
    velocity: tuple[float, float]
    exits: tuple[Interval, ...] = ()
    # (t_a, t_b, dx, dy): the detector misses the object during [t_a, t_b]
    # while the hand moves it by (dx, dy)
    moves: tuple[tuple[int, int, float, float], ...] = ()

    @property
    def interval(self) -> Interval:
        return (self.t_s, self.t_e)

    def box_at(self, t: int) -> tuple[float, float, float, float]:
        dt = t - self.t_s
        vx, vy = self.velocity
        ox, oy = vx * dt, vy * dt
        for a, b, dx, dy in self.moves:
            frac = min(1.0, max(0.0, (t - a + 1) / (b - a + 1)))
            ox, oy = ox + frac * dx, oy + frac * dy
        x1, y1, x2, y2 = self.start_box
        return (x1 + ox, y1 + oy, x2 + ox, y2 + oy)

    def hand_out(self, t: int) -> bool:
        return any(a <= t <= b for a, b in self.exits)

    def occluded(self, t: int) -> bool:
        return any(a <= t <= b for a, b, _, _ in self.moves)


@dataclass(frozen=True)
class Visit:
    location_label: str
    t_s: int
    t_e: int

    @property
    def interval(self) -> Interval:
        return (self.t_s, self.t_e)


@dataclass(frozen=True)
class Gap:
    kind: str
    t_s: int
    t_e: int


@dataclass(eq=False)
class GroundTruthScript:
    events: list[ScriptEvent]
    visits: list[Visit]
    gaps: list[Gap]
    object_prototypes: dict[str, np.ndarray]
    location_prototypes: dict[str, np.ndarray]
    transit_prototype: np.ndarray
    total_frames: int
    fps: float
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)

    @property
    def header(self) -> StreamHeader:
        return StreamHeader(
            embed_dim_obj=self.scenario.embed_dim_obj,
            embed_dim_loc=self.scenario.embed_dim_loc,
            fps=float(self.fps),
        )

    def sorted_events(self) -> list[ScriptEvent]:
        return sorted(self.events, key=lambda e: (e.t_s, SIDES.index(e.hand_side)))

    def events_of(self, label: str) -> list[ScriptEvent]:
        return [e for e in self.sorted_events() if e.object_label == label]

    def visit_containing(self, t: int) -> Visit | None:
        for v in self.visits:
            if v.t_s <= t <= v.t_e:
                return v
        return None

    def ground_truth_tracks(self) -> list[GroundTruthTrack]:
        tracks = []
        for label in sorted(self.object_prototypes):
            ivs = [e.interval for e in self.events if e.object_label == label]
            if ivs:
                tracks.append(GroundTruthTrack("object", label, tuple(sorted(ivs))))
        for label in sorted(self.location_prototypes):
            ivs = [v.interval for v in self.visits if v.location_label == label]
            if ivs:
                tracks.append(GroundTruthTrack("location", label, tuple(sorted(ivs))))
        return tracks

    def check_invariants(self) -> None:
        """Raise ScenarioError when a structural invariant is violated."""
        sc = self.scenario
        prev = -1
        for v in self.visits:
            _check(v.t_s <= v.t_e, f"bad visit {v}")
            _check(v.t_s > prev, "visits must be disjoint and ordered")
            prev = v.t_e
        _check(prev < self.total_frames, "visit runs past the last frame")
        for side in SIDES:
            evs = sorted((e for e in self.events if e.hand_side == side), key=lambda e: e.t_s)
            for a, b in zip(evs, evs[1:]):
                _check(a.t_e < b.t_s, f"overlapping events on {side} hand")
        for e in self.events:
            _check(e.t_s < e.t_e, f"event must satisfy t_s < t_e: {e}")
            v = self.visit_containing(e.t_s)
            _check(v is not None and v.t_s <= e.t_s and e.t_e <= v.t_e, f"event not nested in a visit: {e}")
            _check(v.location_label == e.location_label, f"event location label disagrees with its visit: {e}")
        for a, b in itertools.combinations(self.events, 2):
            if a.object_label == b.object_label:
                _check(not overlaps(a.interval, b.interval), "one object used by two hands at once")
        for protos in (self.object_prototypes, {**self.location_prototypes, "_transit": self.transit_prototype}):
            labels = sorted(protos)
            for x, y in itertools.combinations(labels, 2):
                c = float(np.dot(protos[x], protos[y]))
                _check(c <= sc.separation_max + 1e-9, f"prototypes {x},{y} too similar: {c}")

    def to_dict(self) -> dict:
        return {
            "scenario": asdict(self.scenario),
            "total_frames": self.total_frames,
            "fps": self.fps,
            "events": [
                {
                    **asdict(e),
                    "start_box": list(e.start_box),
                    "velocity": list(e.velocity),
                    "exits": [list(x) for x in e.exits],
                    "moves": [list(x) for x in e.moves],
                }
                for e in self.events
            ],
            "visits": [asdict(v) for v in self.visits],
            "gaps": [asdict(g) for g in self.gaps],
            "object_prototypes": {k: v.tolist() for k, v in self.object_prototypes.items()},
            "location_prototypes": {k: v.tolist() for k, v in self.location_prototypes.items()},
            "transit_prototype": self.transit_prototype.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruthScript":
        return cls(
            events=[
                ScriptEvent(
                    e["object_label"], e["hand_side"], e["t_s"], e["t_e"], e["location_label"],
                    tuple(e["start_box"]), tuple(e["velocity"]), tuple(tuple(x) for x in e["exits"]),
                    tuple((int(a), int(b), float(dx), float(dy)) for a, b, dx, dy in e.get("moves", [])),
                )
                for e in d["events"]
            ],
            visits=[Visit(**v) for v in d["visits"]],
            gaps=[Gap(**g) for g in d["gaps"]],
            object_prototypes={k: np.asarray(v) for k, v in d["object_prototypes"].items()},
            location_prototypes={k: np.asarray(v) for k, v in d["location_prototypes"].items()},
            transit_prototype=np.asarray(d["transit_prototype"]),
            total_frames=d["total_frames"],
            fps=d["fps"],
            scenario=ScenarioConfig(**d["scenario"]),
        )


# ---------------------------------------------------------------- scripts


def make_prototypes(n: int, dim: int, separation_max: float, rng: np.random.Generator) -> np.ndarray:
    """Random unit vectors pushed apart until all pairwise cosines <= separation_max.

    Each step removes part of the most similar pair's mutual projection
    (a partial Gram-Schmidt step); a full orthonormalisation is the fallback.
    """
    v = rng.normal(size=(n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if n == 1:
        return v
    target = separation_max - 0.02
    for _ in range(2000):
        g = v @ v.T
        np.fill_diagonal(g, -np.inf)
        i, j = np.unravel_index(int(np.argmax(g)), g.shape)
        if g[i, j] <= separation_max:
            return v
        v[i] = v[i] - (g[i, j] - target) * v[j]
        v[i] /= np.linalg.norm(v[i])
    if n <= dim and separation_max >= 0:
        q, _ = np.linalg.qr(v.T)
        return q.T[:n].copy()
    raise ScenarioError(f"cannot place {n} prototypes in {dim} dims with separation {separation_max}")


def _region(sc: ScenarioConfig, side: str) -> tuple[float, float, float, float]:
    w, h = sc.image_width, sc.image_height
    margin = 0.05 * w
    if side == "left":
        return (margin, 0.15 * h, 0.45 * w, 0.9 * h)
    return (0.55 * w, 0.15 * h, w - margin, 0.9 * h)


def _sample_box(rng, sc: ScenarioConfig, side: str, length: int, avoid: tuple | None):
    rx1, ry1, rx2, ry2 = _region(sc, side)
    for _ in range(200):
        bw, bh = rng.uniform(80, 160, size=2)
        x1 = rng.uniform(rx1, rx2 - bw)
        y1 = rng.uniform(ry1, ry2 - bh)
        box = (float(x1), float(y1), float(x1 + bw), float(y1 + bh))
        if avoid is not None and iou(BoundingBox(*box), BoundingBox(*avoid)) > 0:
            continue
        vx, vy = (float(x) for x in rng.uniform(-0.25, 0.25, size=2))
        # keep the whole trajectory inside the hand's region
        if not (rx1 <= x1 + vx * length and x1 + bw + vx * length <= rx2):
            vx = 0.0
        if not (ry1 <= y1 + vy * length and y1 + bh + vy * length <= ry2):
            vy = 0.0
        return box, (vx, vy)
    raise ScenarioError("could not place a non-overlapping object box")


def _sample_move(rng, sc: ScenarioConfig, side: str, t_s: int, t_e: int, box, vel, exits) -> tuple:
    """One short occluded stretch with a sideways move of half to most of the
    box width: far enough that plain overlap association fails, near enough
    that the moved box still touches the old one. Empty if it would leave the
    hand's region or clash with a hand exit."""
    length = int(rng.integers(8, 17))
    a = int(rng.integers(t_s + 60, t_e - 60 - length + 1))
    b = a + length - 1
    frac = float(rng.uniform(0.5, 0.8))
    if any(overlaps((a, b), x) for x in exits):
        return ()
    rx1, _, rx2, _ = _region(sc, side)
    x1, _, x2, _ = box
    w = x2 - x1
    centre = 0.5 * (x1 + x2) + vel[0] * (a - t_s)
    dx = frac * w if centre < 0.5 * (rx1 + rx2) else -frac * w
    end_shift = vel[0] * (t_e - t_s) + dx
    if not (rx1 <= x1 + end_shift and x2 + end_shift <= rx2):
        return ()
    return ((a, b, dx, 0.0),)


def generate_script(sc: ScenarioConfig, seed: int) -> GroundTruthScript:
    sc.validate()
    rng = np.random.default_rng(seed)
    obj_labels = [f"obj-{i}" for i in range(sc.n_objects)]
    loc_labels = [f"loc-{i}" for i in range(sc.n_locations)]
    obj_protos = make_prototypes(sc.n_objects, sc.embed_dim_obj, sc.separation_max, rng)
    loc_protos = make_prototypes(sc.n_locations + 1, sc.embed_dim_loc, sc.separation_max, rng)

    # visits and gaps
    visits: list[Visit] = []
    gaps: list[Gap] = []
    t = int(rng.integers(sc.min_gap_len, sc.max_gap_len + 1))
    gaps.append(Gap(WALK, 0, t - 1))
    order = list(rng.permutation(sc.n_locations))
    prev_loc = None
    while True:
        vlen = int(rng.integers(sc.min_visit_len, sc.max_visit_len + 1))
        room = sc.total_frames - sc.min_gap_len - t
        if room < sc.min_visit_len:
            break
        vlen = min(vlen, room)
        if order:
            loc = int(order.pop(0))
        else:
            choices = [i for i in range(sc.n_locations) if i != prev_loc] or [prev_loc]
            loc = int(rng.choice(choices))
        visits.append(Visit(loc_labels[loc], t, t + vlen - 1))
        prev_loc = loc
        t += vlen
        glen = int(rng.integers(sc.min_gap_len, sc.max_gap_len + 1))
        glen = min(glen, sc.total_frames - t) if sc.total_frames - t - glen < sc.min_visit_len + sc.min_gap_len else glen
        kind = STAND if rng.random() < sc.stand_gap_prob else WALK
        gaps.append(Gap(kind, t, t + glen - 1))
        t += glen
    if not visits:
        raise ScenarioError("no visit fits in total_frames")
    if t < sc.total_frames:
        gaps.append(Gap(WALK, t, sc.total_frames - 1))

    # events, left hand then right hand within each visit
    events: list[ScriptEvent] = []
    last_box: dict[str, tuple | None] = {s: None for s in SIDES}
    budget = sc.max_events if sc.max_events > 0 else None
    for v in visits:
        for side in SIDES:
            cursor = v.t_s + int(rng.integers(0, sc.max_event_gap + 1))
            while cursor + sc.min_event_len - 1 <= v.t_e:
                if budget is not None and len(events) >= budget:
                    break
                elen = int(rng.integers(sc.min_event_len, sc.max_event_len + 1))
                t_e = min(cursor + elen - 1, v.t_e)
                if t_e - cursor + 1 < sc.min_event_len:
                    break
                others = [e for e in events if e.hand_side != side and overlaps(e.interval, (cursor, t_e))]
                if any(e.t_s == cursor for e in others):
                    cursor += 1
                    continue
                busy = {e.object_label for e in others}
                free = [lab for lab in obj_labels if lab not in busy]
                if not free:
                    cursor = max(e.t_e for e in others) + 1 + sc.min_event_gap
                    continue
                label = free[int(rng.integers(len(free)))]
                box, vel = _sample_box(rng, sc, side, t_e - cursor, last_box[side])
                exits: tuple[Interval, ...] = ()
                if sc.hand_exit_prob > 0 and rng.random() < sc.hand_exit_prob and t_e - cursor >= 200:
                    xlen = int(rng.integers(20, 81))
                    xs = int(rng.integers(cursor + 60, t_e - 60 - xlen + 1))
                    exits = ((xs, xs + xlen - 1),)
                moves = ()
                if sc.occlusion_prob > 0 and rng.random() < sc.occlusion_prob and t_e - cursor >= 200:
                    moves = _sample_move(rng, sc, side, cursor, t_e, box, vel, exits)
                ev = ScriptEvent(label, side, cursor, t_e, v.location_label, box, vel, exits, moves)
                events.append(ev)
                last_box[side] = ev.box_at(t_e)
                cursor = t_e + 1 + int(rng.integers(sc.min_event_gap, sc.max_event_gap + 1))
    script = GroundTruthScript(
        events=sorted(events, key=lambda e: (e.t_s, SIDES.index(e.hand_side))),
        visits=visits,
        gaps=gaps,
        object_prototypes={lab: obj_protos[i] for i, lab in enumerate(obj_labels)},
        location_prototypes={lab: loc_protos[i] for i, lab in enumerate(loc_labels)},
        transit_prototype=loc_protos[-1],
        total_frames=sc.total_frames,
        fps=sc.fps,
        scenario=sc,
    )
    script.check_invariants()
    return script


# ---------------------------------------------------------------- rendering

_HAND_BOXES = {"left": [300.0, 750.0, 500.0, 950.0], "right": [1420.0, 750.0, 1620.0, 950.0]}
_BURST_LEN = (3, 12)


def _noisy_unit(proto: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if sigma <= 0:
        return proto
    v = proto + rng.normal(0.0, sigma, size=proto.shape)
    return v / np.linalg.norm(v)


def _emb_list(v: np.ndarray) -> list[float]:
    return np.round(v, EMB_DIGITS).tolist()


def _jitter_box(box, jitter: float, rng: np.random.Generator, w: float, h: float) -> list[float]:
    x1, y1, x2, y2 = box
    if jitter > 0:
        dx1, dy1, dx2, dy2 = rng.normal(0.0, jitter, size=4)
        x1, y1, x2, y2 = x1 + dx1, y1 + dy1, x2 + dx2, y2 + dy2
    x1, y1 = min(max(0.0, x1), w - 2), min(max(0.0, y1), h - 2)
    x2, y2 = max(x2, x1 + 1.0), max(y2, y1 + 1.0)
    return [round(float(x1), 2), round(float(y1), 2), round(float(x2), 2), round(float(y2), 2)]


def render_frames(script: GroundTruthScript, noise: NoiseConfig, seed: int) -> Iterator[dict]:
    """Frame records (as dicts) of the script under ``noise``; deterministic given seed."""
    noise.validate()
    sc = script.scenario
    rng = np.random.default_rng(seed)
    n = script.total_frames
    visit_at = np.full(n, -1, dtype=np.int64)
    for i, v in enumerate(script.visits):
        visit_at[v.t_s : v.t_e + 1] = i
    standing = np.zeros(n, dtype=bool)
    for g in script.gaps:
        if g.kind == STAND:
            standing[g.t_s : g.t_e + 1] = True
    event_at = {s: np.full(n, -1, dtype=np.int64) for s in SIDES}
    for i, e in enumerate(script.events):
        event_at[e.hand_side][e.t_s : e.t_e + 1] = i
    w, h = float(sc.image_width), float(sc.image_height)
    low = 0.25 * sc.flow_threshold
    high = 3.0 * sc.flow_threshold
    obj_protos = script.object_prototypes
    loc_protos = [script.location_prototypes[v.location_label] for v in script.visits]
    clean_obj = {k: _emb_list(p) for k, p in obj_protos.items()}
    clean_loc = [_emb_list(p) for p in loc_protos]
    clean_transit = _emb_list(script.transit_prototype)
    dim_obj = script.header.embed_dim_obj
    bursts: list[list] = []

    for t in range(n):
        vi = int(visit_at[t])
        hands = []
        objects = []
        for side in SIDES:
            ei = int(event_at[side][t])
            ev = script.events[ei] if ei >= 0 else None
            out = ev is not None and ev.hand_out(t)
            if vi >= 0:
                visible = not out
            elif standing[t]:
                visible = False
            else:
                visible = sc.walking_hands and not out
            if visible and noise.hand_miss_prob > 0 and rng.random() < noise.hand_miss_prob:
                visible = False
            if visible:
                hands.append({"side": side, "box": _HAND_BOXES[side], "score": 1.0})
            if ev is None or out or ev.occluded(t):
                continue
            if noise.detection_drop_prob > 0 and rng.random() < noise.detection_drop_prob:
                continue
            if noise.embedding_noise_sigma > 0:
                emb = _emb_list(_noisy_unit(obj_protos[ev.object_label], noise.embedding_noise_sigma, rng))
            else:
                emb = clean_obj[ev.object_label]
            objects.append(
                {
                    "box": _jitter_box(ev.box_at(t), noise.box_jitter_px, rng, w, h),
                    "score": 1.0,
                    "contact_side": side,
                    "embedding": emb,
                }
            )
        if noise.spurious_rate > 0:
            if noise.bursty_spurious:
                mean_len = 0.5 * (_BURST_LEN[0] + _BURST_LEN[1])
                for _ in range(int(rng.poisson(noise.spurious_rate / mean_len))):
                    bw, bh = rng.uniform(40, 200, size=2)
                    x1, y1 = rng.uniform(0, w - bw), rng.uniform(0, h - bh)
                    length = int(rng.integers(_BURST_LEN[0], _BURST_LEN[1] + 1))
                    bursts.append([length, (x1, y1, x1 + bw, y1 + bh), SIDES[int(rng.integers(2))]])
                for b in bursts:
                    objects.append(
                        {
                            "box": _jitter_box(b[1], 2.0, rng, w, h),
                            "score": 0.5,
                            "contact_side": b[2],
                            "embedding": _emb_list(_noisy_unit(np.zeros(dim_obj), 1.0, rng)),
                        }
                    )
                    b[0] -= 1
                bursts = [b for b in bursts if b[0] > 0]
            else:
                for _ in range(int(rng.poisson(noise.spurious_rate))):
                    bw, bh = rng.uniform(40, 200, size=2)
                    x1, y1 = rng.uniform(0, w - bw), rng.uniform(0, h - bh)
                    objects.append(
                        {
                            "box": _jitter_box((x1, y1, x1 + bw, y1 + bh), 0.0, rng, w, h),
                            "score": 0.5,
                            "contact_side": SIDES[int(rng.integers(2))],
                            "embedding": _emb_list(_noisy_unit(np.zeros(dim_obj), 1.0, rng)),
                        }
                    )
        if t == 0:
            flow = 0.0
        else:
            flow = low if (vi >= 0 or standing[t]) else high
            if noise.flow_noise_sigma > 0:
                flow = max(0.0, flow + float(rng.normal(0.0, noise.flow_noise_sigma)))
            flow = round(flow, 3)
        if vi >= 0:
            proto = loc_protos[vi]
            femb = clean_loc[vi] if noise.embedding_noise_sigma <= 0 else _emb_list(_noisy_unit(proto, noise.embedding_noise_sigma, rng))
        else:
            femb = (
                clean_transit
                if noise.embedding_noise_sigma <= 0
                else _emb_list(_noisy_unit(script.transit_prototype, noise.embedding_noise_sigma, rng))
            )
        yield {
            "type": "frame",
            "frame": t,
            "hands": hands,
            "objects": objects,
            "flow_norm": flow,
            "frame_embedding": femb,
        }


def render_stream(script: GroundTruthScript, noise: NoiseConfig, seed: int, out: str | Path | IO[str]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w") as fh:
            render_stream(script, noise, seed, fh)
        return
    out.write(dumps_record(script.header.to_dict()) + "\n")
    for rec in render_frames(script, noise, seed):
        out.write(dumps_record(rec) + "\n")


def render_records(script: GroundTruthScript, noise: NoiseConfig, seed: int):
    """``(header, frames)`` parsed in-process, without touching disk."""
    from .stream import iter_stream_lines

    lines = (dumps_record(r) for r in itertools.chain([script.header.to_dict()], render_frames(script, noise, seed)))
    return iter_stream_lines(lines)


# ---------------------------------------------------------------- oracle A: interval search


def _distance(t: int, iv: Interval) -> int:
    if iv[0] <= t <= iv[1]:
        return 0
    return iv[0] - t if t < iv[0] else t - iv[1]


def script_label_sequence(script: GroundTruthScript) -> list[str]:
    return [e.object_label for e in script.sorted_events()]


def script_neighbor(script: GroundTruthScript, label: str, hand: str, t: int, after: bool) -> str | None:
    side = [e for e in script.sorted_events() if e.hand_side == hand]
    cands = [(i, e) for i, e in enumerate(side) if e.object_label == label]
    if not cands:
        return None
    pos = min(cands, key=lambda c: (_distance(t, c[1].interval), c[1].t_s))[0]
    npos = pos + 1 if after else pos - 1
    if not 0 <= npos < len(side):
        return None
    return side[npos].object_label


def script_take_leave(script: GroundTruthScript, label: str, variant: str) -> str | None:
    evs = script.events_of(label)
    if not evs:
        return None
    ev = evs[0] if variant == "take" else max(evs, key=lambda e: (e.t_e, e.t_s))
    return ev.location_label


def script_concurrent_objects(script: GroundTruthScript, label: str) -> set[str]:
    mine = [e.interval for e in script.events if e.object_label == label]
    return {
        e.object_label
        for e in script.events
        if e.object_label != label and any(overlaps(e.interval, iv) for iv in mine)
    }


def script_concurrent_locations(script: GroundTruthScript, label: str) -> set[str]:
    mine = [e.interval for e in script.events if e.object_label == label]
    return {v.location_label for v in script.visits if any(overlaps(v.interval, iv) for iv in mine)}


def script_object_intervals(script: GroundTruthScript, label: str) -> list[Interval]:
    return merge_intervals(e.interval for e in script.events if e.object_label == label)


def script_location_intervals(script: GroundTruthScript, label: str) -> list[Interval]:
    return [v.interval for v in script.visits if v.location_label == label]


def oracle_scores(script: GroundTruthScript, template: str, params: dict, options: Sequence) -> list[float]:
    """Score semantic options (labels, label sets/sequences, interval lists) from the script."""
    if template == "Q1":
        seq = script_label_sequence(script)
        return [float(lcs_length(seq, list(o))) for o in options]
    if template in ("Q2", "Q3"):
        target = script_neighbor(script, params["label"], params["hand_side"], params["t"], template == "Q2")
        return [float(o == target) for o in options]
    if template == "Q4":
        target = script_take_leave(script, params["label"], params["variant"])
        return [float(o == target) for o in options]
    if template == "Q5":
        conc = script_concurrent_objects(script, params["label"])
        return [float(len(set(o) & conc)) for o in options]
    if template == "Q6":
        conc = script_concurrent_locations(script, params["label"])
        return [float(len(set(o) & conc)) for o in options]
    if template == "Q7":
        ref = script_object_intervals(script, params["label"])
        return [temporal_iou_score(o, ref) for o in options]
    if template == "Q8":
        ref = script_location_intervals(script, params["label"])
        return [temporal_iou_score(o, ref) for o in options]
    raise ValueError(f"unknown template {template!r}")


def _is_subsequence(needle: Sequence, haystack: Sequence) -> bool:
    it = iter(haystack)
    return all(any(x == y for y in it) for x in needle)


def _unique_argmax(scores: Sequence[float], tol: float = 1e-9) -> int | None:
    best = max(scores)
    winners = [i for i, s in enumerate(scores) if s >= best - tol]
    return winners[0] if len(winners) == 1 else None


# ---------------------------------------------------------------- question generation


def _shift(ivs: Sequence[Interval], delta: int, total: int) -> list[Interval]:
    out = [(max(0, a + delta), min(total - 1, b + delta)) for a, b in ivs]
    return merge_intervals(iv for iv in out if iv[0] <= iv[1])


def _scale(ivs: Sequence[Interval], factor: float, total: int) -> list[Interval]:
    out = []
    for a, b in ivs:
        c = 0.5 * (a + b)
        half = max(1.0, 0.5 * (b - a) * factor)
        out.append((max(0, int(round(c - half))), min(total - 1, int(round(c + half)))))
    return merge_intervals(iv for iv in out if iv[0] <= iv[1])


class QuestionFactory:
    """Draws template instances from a script; ``make`` returns a Question or None."""

    def __init__(self, script: GroundTruthScript, rng: np.random.Generator, crop_sigma: float):
        self.script = script
        self.rng = rng
        self.crop_sigma = crop_sigma
        self.events = script.sorted_events()
        self.obj_labels = sorted(script.object_prototypes)
        self.used_labels = sorted({e.object_label for e in self.events})
        self.loc_labels = sorted(script.location_prototypes)

    # crops
    def _obj_crop(self, label: str) -> np.ndarray:
        return _noisy_unit(self.script.object_prototypes[label], self.crop_sigma, self.rng)

    def _loc_crop(self, label: str) -> np.ndarray:
        return _noisy_unit(self.script.location_prototypes[label], self.crop_sigma, self.rng)

    def _views(self, fn, label: str) -> tuple[np.ndarray, ...]:
        return tuple(fn(label) for _ in range(int(self.rng.integers(1, 4))))

    def _pick(self, pool: Sequence, k: int) -> list:
        idx = self.rng.permutation(len(pool))[:k]
        return [pool[i] for i in idx]

    def _label_options(self, correct: str, preferred: Sequence[str], universe: Sequence[str]) -> list[str] | None:
        opts = [correct]
        for lab in list(dict.fromkeys(preferred)) + list(self._pick(list(universe), len(universe))):
            if lab not in opts:
                opts.append(lab)
            if len(opts) == N_OPTIONS:
                return opts
        return None

    def _set_options(self, correct: frozenset, conc: set, universe: Sequence[str], hard: set) -> list[frozenset] | None:
        cands = []
        weights = []
        for k in (1, 2, 3):
            for combo in itertools.combinations(universe, k):
                s = frozenset(combo)
                if s != correct and len(s & conc) < len(correct):
                    cands.append(s)
                    weights.append(3.0 if s & hard else 1.0)
        if len(cands) < N_OPTIONS - 1:
            return None
        p = np.asarray(weights) / sum(weights)
        picks = self.rng.choice(len(cands), size=N_OPTIONS - 1, replace=False, p=p)
        return [correct] + [cands[int(i)] for i in picks]

    # templates: each returns (params, semantic options, extra question fields)
    def _q1(self):
        seq = [e.object_label for e in self.events]
        k = int(self.rng.integers(5, 9))
        # in long scripts most short reorderings are still subsequences of the
        # full order, so the window grows until enough distractors exist
        while k <= min(len(seq), Q1_MAX_LEN):
            opts = self._q1_options(seq, k)
            if opts is not None:
                return {}, opts, {}
            k += 4
        return None

    def _q1_options(self, seq, k):
        start = int(self.rng.integers(0, len(seq) - k + 1))
        correct = tuple(seq[start : start + k])
        opts = [correct]
        for _ in range(400):
            if len(opts) == N_OPTIONS:
                break
            d = list(correct)
            if self.rng.random() < 0.5:
                self.rng.shuffle(d)
            else:
                for _ in range(int(self.rng.integers(1, 3))):
                    i, j = self.rng.choice(k, size=2, replace=False)
                    d[i], d[j] = d[j], d[i]
            d = tuple(d)
            # lcs(d, seq) < k exactly when d is not a subsequence of seq
            if d not in opts and not _is_subsequence(d, seq):
                opts.append(d)
        return opts if len(opts) == N_OPTIONS else None

    def _q2_q3(self, after: bool):
        hand = SIDES[int(self.rng.integers(2))]
        side = [e for e in self.events if e.hand_side == hand]
        idx = list(range(len(side) - 1)) if after else list(range(1, len(side)))
        if not idx:
            return None
        i = idx[int(self.rng.integers(len(idx)))]
        anchor = side[i]
        t = max(0, anchor.t_s - int(self.rng.integers(1, 61)))
        target = script_neighbor(self.script, anchor.object_label, hand, t, after)
        if target is None:
            return None
        other = "right" if hand == "left" else "left"
        lo, hi = anchor.t_s - 600, anchor.t_e + 600
        hard = [e.object_label for e in self.events if e.hand_side == other and overlaps(e.interval, (lo, hi))]
        hard.append(anchor.object_label)
        opts = self._label_options(target, hard, self.obj_labels)
        if opts is None:
            return None
        params = {"label": anchor.object_label, "hand_side": hand, "t": t}
        return params, opts, {"hand_side": hand, "t": t, "variant": "after" if after else "before"}

    def _q4(self):
        if len(self.loc_labels) < N_OPTIONS or not self.used_labels:
            return None
        label = self.used_labels[int(self.rng.integers(len(self.used_labels)))]
        variant = "take" if self.rng.random() < 0.5 else "leave"
        target = script_take_leave(self.script, label, variant)
        other = script_take_leave(self.script, label, "leave" if variant == "take" else "take")
        opts = self._label_options(target, [other], self.loc_labels)
        if opts is None:
            return None
        return {"label": label, "variant": variant}, opts, {"variant": variant}

    def _q5(self):
        labels = [lab for lab in self.used_labels if script_concurrent_objects(self.script, lab)]
        if not labels:
            return None
        label = labels[int(self.rng.integers(len(labels)))]
        conc = script_concurrent_objects(self.script, label)
        k = int(self.rng.integers(1, min(3, len(conc)) + 1))
        correct = frozenset(self._pick(sorted(conc), k))
        mine = [e.interval for e in self.events if e.object_label == label]
        near = {
            e.object_label
            for e in self.events
            if e.object_label not in conc and any(0 < _distance(e.t_s, iv) < 900 for iv in mine)
        }
        opts = self._set_options(correct, conc, self.obj_labels, near)
        if opts is None:
            return None
        return {"label": label}, opts, {}

    def _q6(self):
        if not self.used_labels:
            return None
        label = self.used_labels[int(self.rng.integers(len(self.used_labels)))]
        conc = script_concurrent_locations(self.script, label)
        k = int(self.rng.integers(1, min(3, len(conc)) + 1))
        correct = frozenset(self._pick(sorted(conc), k))
        # hard negatives: locations visited right after a visit where the object was used
        after = set()
        for i, v in enumerate(self.script.visits[:-1]):
            if v.location_label in conc:
                after.add(self.script.visits[i + 1].location_label)
        opts = self._set_options(correct, conc, self.loc_labels, after - conc)
        if opts is None:
            return None
        return {"label": label}, opts, {}

    def _interval_options(self, ref: list[Interval], others: list[list[Interval]]):
        total = self.script.total_frames
        mean_len = float(np.mean([b - a + 1 for a, b in ref]))
        cands: list[list[Interval]] = []
        for frac in (0.3, 0.6, 1.2):
            for sign in (-1, 1):
                cands.append(_shift(ref, int(sign * frac * mean_len), total))
        for factor in (0.4, 0.6, 1.8, 2.5):
            cands.append(_scale(ref, factor, total))
        if len(ref) > 1:
            drop = int(self.rng.integers(len(ref)))
            cands.append([iv for i, iv in enumerate(ref) if i != drop])
        cands.extend(others)
        uniq: list[list[Interval]] = []
        for c in self._pick(cands, len(cands)):
            if c and c != ref and c not in uniq:
                uniq.append(c)
        if len(uniq) < N_OPTIONS - 1:
            return None
        return [ref] + uniq[: N_OPTIONS - 1]

    def _q7(self):
        if not self.used_labels:
            return None
        label = self.used_labels[int(self.rng.integers(len(self.used_labels)))]
        ref = script_object_intervals(self.script, label)
        others = [script_object_intervals(self.script, lab) for lab in self.used_labels if lab != label]
        opts = self._interval_options(ref, self._pick(others, 2))
        if opts is None:
            return None
        return {"label": label}, opts, {}

    def _q8(self):
        visited = sorted({v.location_label for v in self.script.visits})
        label = visited[int(self.rng.integers(len(visited)))]
        ref = script_location_intervals(self.script, label)
        others = [script_location_intervals(self.script, lab) for lab in visited if lab != label]
        opts = self._interval_options(ref, self._pick(others, 2))
        if opts is None:
            return None
        return {"label": label}, opts, {}

    def make(self, template: str, qid: str) -> Question | None:
        drawn = {
            "Q1": self._q1,
            "Q2": lambda: self._q2_q3(True),
            "Q3": lambda: self._q2_q3(False),
            "Q4": self._q4,
            "Q5": self._q5,
            "Q6": self._q6,
            "Q7": self._q7,
            "Q8": self._q8,
        }[template]()
        if drawn is None:
            return None
        params, options, extra = drawn
        perm = [int(i) for i in self.rng.permutation(len(options))]
        options = [options[i] for i in perm]
        scores = oracle_scores(self.script, template, params, options)
        correct = _unique_argmax(scores)
        if correct is None:
            return None
        if template == "Q8":
            query = self._views(self._loc_crop, params["label"])
        elif template == "Q1":
            query = ()
        else:
            query = self._views(self._obj_crop, params["label"])
        answers = []
        for opt in options:
            if template in ("Q7", "Q8"):
                answers.append(AnswerOption(intervals=tuple(opt)))
            elif template == "Q1":
                answers.append(AnswerOption(crops=tuple(self._obj_crop(lab) for lab in opt)))
            elif template in ("Q2", "Q3"):
                answers.append(AnswerOption(crops=self._views(self._obj_crop, opt)))
            elif template == "Q4":
                answers.append(AnswerOption(crops=self._views(self._loc_crop, opt)))
            elif template == "Q5":
                answers.append(AnswerOption(crops=tuple(self._obj_crop(lab) for lab in self._pick(sorted(opt), len(opt)))))
            else:
                answers.append(AnswerOption(crops=tuple(self._loc_crop(lab) for lab in self._pick(sorted(opt), len(opt)))))
        return Question(
            qid=qid,
            template=template,
            answers=tuple(answers),
            query_embeddings=tuple(query),
            hand_side=extra.get("hand_side"),
            t=extra.get("t"),
            variant=extra.get("variant"),
            correct_index=correct,
        )


def generate_questions(
    script: GroundTruthScript,
    templates: Sequence[str] | None = None,
    n: int = 100,
    seed: int = 0,
    crop_sigma: float = 0.05,
    qid_prefix: str = "",
    max_attempts: int = 50,
) -> tuple[list[Question], list[str]]:
    """``n`` questions spread round-robin over ``templates``.

    A template that fails ``max_attempts`` draws in a row is dropped and a
    note explains why. Returns ``(questions, notes)``.
    """
    templates = list(templates or TEMPLATES)
    for t in templates:
        if t not in TEMPLATES:
            raise ValueError(f"unknown template {t!r}")
    factory = QuestionFactory(script, np.random.default_rng(seed), crop_sigma)
    questions: list[Question] = []
    notes: list[str] = []
    alive = list(templates)
    counter = 0
    while len(questions) < n and alive:
        for template in list(alive):
            if len(questions) >= n:
                break
            q = None
            for _ in range(max_attempts):
                q = factory.make(template, f"{qid_prefix}{template}-{counter:05d}")
                if q is not None:
                    break
            if q is None:
                alive.remove(template)
                notes.append(f"{template}: skipped, no valid instance in this script after {max_attempts} draws")
                continue
            questions.append(q)
            counter += 1
    return questions, notes


# ---------------------------------------------------------------- oracle B: frame arrays


class TimelineOracle:
    """Independent re-check of question answers from per-frame label arrays.

    Option crops are decoded to labels by nearest prototype, and every
    answer is recomputed by scanning frames rather than intervals.
    """

    def __init__(self, script: GroundTruthScript):
        self.script = script
        n = script.total_frames
        self.obj_names = sorted(script.object_prototypes)
        self.loc_names = sorted(script.location_prototypes)
        self.obj_at = {s: np.full(n, -1, dtype=np.int64) for s in SIDES}
        for e in script.events:
            self.obj_at[e.hand_side][e.t_s : e.t_e + 1] = self.obj_names.index(e.object_label)
        self.loc_at = np.full(n, -1, dtype=np.int64)
        for v in script.visits:
            self.loc_at[v.t_s : v.t_e + 1] = self.loc_names.index(v.location_label)
        self.obj_mat = np.stack([script.object_prototypes[k] for k in self.obj_names])
        self.loc_mat = np.stack([script.location_prototypes[k] for k in self.loc_names])

    def _decode(self, mat: np.ndarray, crops: Sequence[np.ndarray]) -> int:
        pooled = np.sum(crops, axis=0)
        return int(np.argmax(mat @ pooled))

    def _runs(self, arr: np.ndarray) -> list[tuple[int, int, int]]:
        """(label, start, end) for maximal runs of equal non-negative labels."""
        runs = []
        n = len(arr)
        t = 0
        while t < n:
            if arr[t] < 0:
                t += 1
                continue
            s = t
            while t + 1 < n and arr[t + 1] == arr[s]:
                t += 1
            runs.append((int(arr[s]), s, t))
            t += 1
        return runs

    def _frame_aiou(self, src: Sequence[Interval], dst: Sequence[Interval]) -> float:
        total = 0.0
        for a, b in src:
            best = 0.0
            for c, d in dst:
                sa = set(range(a, b + 1))
                sd = set(range(c, d + 1))
                best = max(best, len(sa & sd) / len(sa | sd))
            total += best
        return total / len(src)

    def answer(self, q: Question) -> int | None:
        tpl = q.template
        if tpl == "Q1":
            starts = []
            for side in SIDES:
                starts += [(s, SIDES.index(side), lab) for lab, s, _ in self._runs(self.obj_at[side])]
            seq = [lab for _, _, lab in sorted(starts)]
            scores = []
            for a in q.answers:
                want = [self._decode(self.obj_mat, [c]) for c in a.crops]
                it = iter(seq)
                scores.append(float(all(any(x == y for y in it) for x in want)))
        elif tpl in ("Q2", "Q3"):
            lab = self._decode(self.obj_mat, q.query_embeddings)
            runs = self._runs(self.obj_at[q.hand_side])
            mine = [i for i, r in enumerate(runs) if r[0] == lab]
            if not mine:
                return None

            def dist(r):
                if r[1] <= q.t <= r[2]:
                    return 0
                return abs(r[1] - q.t) if q.t < r[1] else q.t - r[2]

            pos = min(mine, key=lambda i: (dist(runs[i]), runs[i][1]))
            npos = pos + 1 if tpl == "Q2" else pos - 1
            if not 0 <= npos < len(runs):
                return None
            target = runs[npos][0]
            scores = [float(self._decode(self.obj_mat, a.crops) == target) for a in q.answers]
        elif tpl == "Q4":
            lab = self._decode(self.obj_mat, q.query_embeddings)
            frames = np.flatnonzero((self.obj_at["left"] == lab) | (self.obj_at["right"] == lab))
            if len(frames) == 0:
                return None
            target = int(self.loc_at[frames[0] if q.variant == "take" else frames[-1]])
            scores = [float(self._decode(self.loc_mat, a.crops) == target) for a in q.answers]
        elif tpl in ("Q5", "Q6"):
            lab = self._decode(self.obj_mat, q.query_embeddings)
            conc: set[int] = set()
            if tpl == "Q5":
                for side, other in (("left", "right"), ("right", "left")):
                    mask = self.obj_at[side] == lab
                    conc |= set(int(x) for x in np.unique(self.obj_at[other][mask]))
                conc -= {-1, lab}
                mat = self.obj_mat
            else:
                mask = (self.obj_at["left"] == lab) | (self.obj_at["right"] == lab)
                conc = set(int(x) for x in np.unique(self.loc_at[mask])) - {-1}
                mat = self.loc_mat
            scores = [float(len({self._decode(mat, [c]) for c in a.crops} & conc)) for a in q.answers]
        elif tpl in ("Q7", "Q8"):
            if tpl == "Q7":
                lab = self._decode(self.obj_mat, q.query_embeddings)
                mask = (self.obj_at["left"] == lab) | (self.obj_at["right"] == lab)
            else:
                lab = self._decode(self.loc_mat, q.query_embeddings)
                mask = self.loc_at == lab
            arr = np.where(mask, 0, -1)
            ref = [(s, e) for _, s, e in self._runs(arr)]
            if not ref:
                return None
            scores = [
                0.5 * (self._frame_aiou(a.intervals, ref) + self._frame_aiou(ref, a.intervals)) for a in q.answers
            ]
        else:
            raise ValueError(f"unknown template {tpl!r}")
        return _unique_argmax(scores)


def recheck_questions(script: GroundTruthScript, questions: Sequence[Question]) -> list[bool]:
    oracle = TimelineOracle(script)
    return [oracle.answer(q) == q.correct_index for q in questions]


# ---------------------------------------------------------------- metrics


def oracle_metrics(script: GroundTruthScript, memory) -> dict[str, MetricsReport]:
    """Standalone metrics of a Memory with the script as ground truth."""
    return evaluate_memory(memory, script.ground_truth_tracks())


def save_script(script: GroundTruthScript, path: str | Path) -> None:
    Path(path).write_text(json.dumps(script.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")


def load_script(path: str | Path) -> GroundTruthScript:
    return GroundTruthScript.from_dict(json.loads(Path(path).read_text()))
