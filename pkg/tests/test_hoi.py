import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amego.clustering import InstanceRegistry
from amego.config import EngineConfig
from amego.hoi import (
    DETECTOR,
    TRACKER_DECAY,
    CandidateTracklet,
    HOIEngine,
    HOITracklet,
    TrackerState,
    WindowObs,
    assign_instance,
    associate_detections,
    check_termination,
    tracker_step,
    try_initialise,
)
from amego.stream import BoundingBox, iou

from conftest import DIM, basis, frame, obj, run_prefix, unit

BOX = BoundingBox(100.0, 100.0, 200.0, 200.0)


def window(n, start=0, box=BOX, step=(0.0, 0.0), emb=None):
    emb = basis(0) if emb is None else emb
    out = []
    for k in range(n):
        dx, dy = step[0] * k, step[1] * k
        out.append(WindowObs(start + k, 0, BoundingBox(box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy), emb))
    return out


def raster_iou(a, b, size=300):
    ma = np.zeros((size, size), dtype=bool)
    mb = np.zeros((size, size), dtype=bool)
    ma[int(a.y1) : int(a.y2), int(a.x1) : int(a.x2)] = True
    mb[int(b.y1) : int(b.y2), int(b.x1) : int(b.x2)] = True
    return np.count_nonzero(ma & mb) / np.count_nonzero(ma | mb)


# ---------------------------------------------------------------- initialisation


def test_init_twenty_identical_boxes():
    cand = try_initialise(window(20, start=7), EngineConfig(), "right")
    assert cand is not None and cand.start == 7 and cand.end == 26
    assert cand.provenance == [DETECTOR] * 20


def test_init_threshold_boundary():
    assert try_initialise(window(19), EngineConfig(), "right") is None
    cand = try_initialise(window(19), EngineConfig(s_o=19), "right")
    assert cand is not None and cand.start == 0


def test_init_drifting_chain():
    w = window(20, step=(2.0, 2.0))
    # neighbours share a 98x98 square: 9604 / (2 * 10000 - 9604)
    expected = 9604 / 10396
    for a, b in zip(w, w[1:]):
        assert iou(a.box, b.box) == pytest.approx(expected, abs=1e-12)
        assert abs(iou(a.box, b.box) - raster_iou(a.box, b.box)) <= 1e-9
    assert expected == pytest.approx(0.92, abs=0.01)
    assert try_initialise(w, EngineConfig(), "right") is not None


def test_init_ignores_claimed_and_low_overlap():
    w = window(20)
    for o in w[:2]:
        o.claimed = True
    assert try_initialise(w, EngineConfig(), "right") is None
    # alternating jumps break the IoU chain
    far = BoundingBox(600.0, 600.0, 700.0, 700.0)
    mixed = [WindowObs(k, 0, BOX if k % 2 else far, basis(0)) for k in range(30)]
    assert try_initialise(mixed, EngineConfig(), "right") is None


def test_init_fills_gaps_with_held_boxes():
    w = [o for o in window(25) if o.frame not in (3, 4, 10)]
    cand = try_initialise(w, EngineConfig(s_o=20), "right", now=26)
    assert cand.start == 0 and cand.end == 26
    assert len(cand.det_embeddings) == 20
    assert cand.provenance[3] != DETECTOR and cand.boxes[3] == cand.boxes[2]
    assert all(o.claimed for o in w[:20]) and not any(o.claimed for o in w[20:])


# ---------------------------------------------------------------- association


def candidate(box=BOX, side="right"):
    return CandidateTracklet(0, side, 0, [box], [DETECTOR], [basis(0)], [(0, 0)], TrackerState(box, basis(0)))


def test_associate_examples():
    cfg = EngineConfig()
    # iou 0.8: width 100 shifted by 100/9
    shifted = (100 + 100 / 9, 100.0, 200 + 100 / 9, 200.0)
    assert iou(BOX, BoundingBox(*shifted)) == pytest.approx(0.8)
    hit = associate_detections(candidate(), frame(1, [obj(shifted)]), cfg)
    assert hit is not None and hit[0] == 0
    assert associate_detections(candidate(), frame(1, [obj(BOX, side="left")]), cfg) is None
    c06, c07 = (100.0, 100.0, 200.0, 160.0), (100.0, 100.0, 200.0, 170.0)
    assert iou(BOX, BoundingBox(*c06)) == pytest.approx(0.6) and iou(BOX, BoundingBox(*c07)) == pytest.approx(0.7)
    hit = associate_detections(candidate(), frame(1, [obj(c06), obj(c07)]), cfg)
    assert hit[0] == 1


def test_associate_both_side_and_exclusion():
    cfg = EngineConfig()
    f = frame(1, [obj(BOX, side="both"), obj(BOX)])
    assert associate_detections(candidate(), f, cfg)[0] == 0
    assert associate_detections(candidate(), f, cfg, exclude={0})[0] == 1
    assert associate_detections(candidate(), f, cfg, exclude={0, 1}) is None


# ---------------------------------------------------------------- tracker


def test_tracker_examples():
    state = TrackerState(BOX, basis(0), 0.8)
    assert tracker_step(state, frame(1, [obj(BOX)])) == (BOX, 1.0)
    assert tracker_step(state, frame(1, [])) == (BOX, pytest.approx(0.8 * TRACKER_DECAY))
    # cosines 0.9 (overlapping) and 0.4 (not overlapping)
    e9 = unit(0.9, np.sqrt(1 - 0.81), 0, 0)
    e4 = unit(0.4, 0, np.sqrt(1 - 0.16), 0)
    near = (120.0, 100.0, 220.0, 200.0)
    far = (400.0, 400.0, 500.0, 500.0)
    box, conf = tracker_step(state, frame(1, [obj(far, emb=e4), obj(near, emb=e9)]))
    assert box == BoundingBox(*near) and conf == pytest.approx(0.9)


def test_tracker_ignores_dissimilar_candidates():
    state = TrackerState(BOX, basis(0), 1.0)
    box, conf = tracker_step(state, frame(1, [obj(BOX, emb=basis(1))]))
    assert box == BOX and conf == pytest.approx(TRACKER_DECAY)


# ---------------------------------------------------------------- termination


def test_termination_after_e_o_visible_misses():
    cfg = EngineConfig()
    c = candidate()
    results = [check_termination(c, frame(t), False, cfg) for t in range(20)]
    assert results == [False] * 19 + [True]


def test_termination_frozen_while_hand_out_of_view():
    cfg = EngineConfig()
    c = candidate()
    for t in range(19):
        assert not check_termination(c, frame(t), False, cfg)
    for t in range(19, 119):
        assert not check_termination(c, frame(t, hands=()), False, cfg)
    assert c.miss_run == 19
    assert not check_termination(c, frame(119), True, cfg)
    assert c.miss_run == 0
    # other hand visible does not count either
    assert not check_termination(c, frame(120, hands=("left",)), False, cfg) and c.miss_run == 0


def test_termination_alternating_never_completes():
    cfg = EngineConfig()
    c = candidate()
    assert not any(check_termination(c, frame(t), t % 2 == 0, cfg) for t in range(500))


def test_termination_without_hand_gating():
    cfg = EngineConfig(hand_gated_termination=False, e_o=3)
    c = candidate()
    assert [check_termination(c, frame(t, hands=()), False, cfg) for t in range(3)] == [False, False, True]


# ---------------------------------------------------------------- instance assignment


def test_assign_instance_examples():
    cfg = EngineConfig()
    v = basis(0)
    reg = InstanceRegistry(DIM)
    assert assign_instance(v, 0, [BOX], reg, [], cfg) == 0
    reg = InstanceRegistry.from_members(DIM, [[v]])
    assert assign_instance(v, 0, [BOX], reg, [], cfg) == 0
    reg = InstanceRegistry.from_members(DIM, [[v]])
    w = unit(0.5, np.sqrt(0.75), 0, 0)
    assert assign_instance(w, 0, [BOX], reg, [], cfg) == 1


def test_tracker_override_hands_over_provisional_instance():
    cfg = EngineConfig()
    reg = InstanceRegistry.from_members(DIM, [[basis(0)], [basis(1)]])
    runner = candidate()
    runner.boxes = [BOX] * 10
    runner.provenance = [DETECTOR] * 10
    runner.provisional_instance = 0
    runner.tracker.confidence = 0.95
    w = basis(2)  # similar to neither instance
    assert assign_instance(w, 2, [BOX] * 5, reg, [runner], cfg) == 0
    # no spatial overlap: no override
    reg = InstanceRegistry.from_members(DIM, [[basis(0)], [basis(1)]])
    far = BoundingBox(500.0, 500.0, 600.0, 600.0)
    assert assign_instance(w, 2, [far] * 5, reg, [runner], cfg) == 2
    # confidence below the best similarity: no override
    reg = InstanceRegistry.from_members(DIM, [[basis(0)], [basis(1)]])
    runner.tracker.confidence = 0.5
    assert assign_instance(basis(1), 2, [BOX] * 5, reg, [runner], cfg) == 1


# ---------------------------------------------------------------- engine


def interaction_frames(n_frames, spans, tail=25):
    """spans: list of (side, t_s, t_e, box, emb); hands visible throughout."""
    out = []
    for t in range(n_frames + tail):
        objects = [obj(box, side=side, emb=emb) for side, a, b, box, emb in spans if a <= t <= b]
        out.append(frame(t, objects, hands=("left", "right")))
    return out


def run(frames, cfg=None):
    eng = HOIEngine(cfg or EngineConfig(), DIM)
    confirmed = []
    for f in frames:
        confirmed += eng.process_frame(f)
    return eng, confirmed


def test_empty_frames_give_nothing():
    eng, confirmed = run([frame(t) for t in range(300)])
    assert confirmed == [] and eng.finalize() == []


def test_single_clean_interaction():
    frames = interaction_frames(140, [("right", 40, 139, BOX, basis(0))])
    _, confirmed = run(frames)
    assert len(confirmed) == 1
    tr = confirmed[0]
    assert tr.interval == (40, 139) and tr.hand_side == "right" and tr.instance_id == 0
    assert tr.support_count == 100 >= 20
    assert tr.confirmed_at == 139 + 20
    assert np.allclose(tr.feature, basis(0))


def test_simultaneous_interactions_on_both_hands():
    left_box = BoundingBox(10.0, 10.0, 90.0, 90.0)
    frames = interaction_frames(
        200, [("left", 10, 150, left_box, basis(1)), ("right", 30, 199, BOX, basis(0))]
    )
    _, confirmed = run(frames)
    assert sorted((t.hand_side, t.interval) for t in confirmed) == [("left", (10, 150)), ("right", (30, 199))]
    assert len({t.instance_id for t in confirmed}) == 2


def test_same_object_again_reuses_instance():
    frames = interaction_frames(
        400, [("right", 0, 99, BOX, basis(0)), ("right", 200, 299, BoundingBox(500.0, 500.0, 600.0, 600.0), basis(0))]
    )
    _, confirmed = run(frames)
    assert [t.instance_id for t in confirmed] == [0, 0]


def test_short_burst_is_filtered():
    frames = interaction_frames(100, [("right", 10, 25, BOX, basis(0))])
    eng, confirmed = run(frames)
    assert confirmed == [] and eng.finalize() == []
    _, confirmed = run(frames, EngineConfig(s_o=1))
    assert len(confirmed) == 1


def test_finalize_flushes_open_candidates():
    frames = interaction_frames(100, [("right", 0, 99, BOX, basis(0))], tail=0)
    eng, confirmed = run(frames)
    assert confirmed == []
    flushed = eng.finalize()
    assert len(flushed) == 1 and flushed[0].interval == (0, 99)


def test_out_of_order_frame_rejected():
    eng = HOIEngine(EngineConfig(), DIM)
    eng.process_frame(frame(5))
    with pytest.raises(ValueError):
        eng.process_frame(frame(5))


def test_tracklet_dict_round_trip():
    frames = interaction_frames(60, [("right", 0, 59, BOX, basis(0))])
    _, confirmed = run(frames)
    tr = confirmed[0]
    assert HOITracklet.from_dict(tr.to_dict()) == tr


# ---------------------------------------------------------------- invariants on synthetic streams


def check_tracklet_invariants(tracklets, cfg):
    claimed = {}
    for tr in tracklets:
        assert tr.support_count >= cfg.s_o
        assert len(tr.boxes) == tr.t_e - tr.t_s + 1
        assert len(tr.detections) == tr.support_count
        for key in tr.detections:
            assert (tr.hand_side, key) not in claimed, "observation claimed twice"
            claimed[(tr.hand_side, key)] = tr
    # dense ids in order of first confirmation
    seen = []
    for tr in sorted(tracklets, key=lambda t: t.confirmed_at):
        if tr.instance_id not in seen:
            assert tr.instance_id == len(seen)
            seen.append(tr.instance_id)


def test_invariants_on_noisy_stream(small_script):
    from amego.memory import build_memory
    from amego.synth import NoiseConfig, render_records

    noise = NoiseConfig.moderate()
    cfg = EngineConfig()
    m = build_memory(render_records(small_script, noise, 3), cfg)
    assert m.tracklets
    check_tracklet_invariants(m.tracklets, cfg)


def test_prefix_property(small_script, small_frames):
    header = small_script.header
    full = run_prefix(small_frames, header)
    rng = np.random.default_rng(0)
    for cut in rng.integers(0, len(small_frames), size=8):
        part = run_prefix(small_frames[: cut + 1], header)
        expected = [t for t in full.tracklets if t.confirmed_at <= cut]
        assert part.tracklets == expected


def test_determinism(small_frames, small_script):
    a = run_prefix(small_frames, small_script.header)
    b = run_prefix(small_frames, small_script.header)
    assert [t.to_dict() for t in a.tracklets] == [t.to_dict() for t in b.tracklets]


@settings(max_examples=25)
@given(st.lists(st.tuples(st.sampled_from(["left", "right"]), st.integers(0, 300), st.integers(5, 120), st.integers(0, 3)), max_size=6))
def test_invariants_on_random_interactions(specs):
    spans = []
    for side, start, length, e in specs:
        off = 250.0 * e
        box = BoundingBox(off, off, off + 100.0, off + 100.0)
        spans.append((side, start, start + length, box, basis(e)))
    frames = interaction_frames(450, spans)
    cfg = EngineConfig()
    eng, confirmed = run(frames, cfg)
    confirmed += eng.finalize()
    check_tracklet_invariants(confirmed, cfg)
