import pytest
from hypothesis import given
from hypothesis import strategies as st

from amego.intervals import directed_aiou, interval_iou, merge_intervals, overlaps, temporal_iou_score, validate_intervals


def frames_of(iv):
    return set(range(iv[0], iv[1] + 1))


def frame_iou(a, b):
    fa, fb = frames_of(a), frames_of(b)
    return len(fa & fb) / len(fa | fb)


def frame_directed(src, dst):
    return sum(max(frame_iou(s, d) for d in dst) for s in src) / len(src)


def frame_score(cand, ref):
    return 0.5 * (frame_directed(cand, ref) + frame_directed(ref, cand))


@st.composite
def interval_lists(draw, horizon=10_000, max_size=6):
    cuts = sorted(draw(st.sets(st.integers(0, horizon - 1), min_size=2, max_size=2 * max_size)))
    if len(cuts) % 2:
        cuts = cuts[:-1]
    return [(cuts[i], cuts[i + 1]) for i in range(0, len(cuts), 2)]


def test_examples():
    assert temporal_iou_score([(3, 40)], [(3, 40)]) == 1.0
    assert temporal_iou_score([(0, 9)], [(20, 29)]) == 0.0
    assert temporal_iou_score([(0, 9)], [(5, 14)]) == pytest.approx(5 / 15)
    assert directed_aiou([(0, 9), (20, 29)], [(0, 9)]) == 0.5
    assert directed_aiou([(0, 9)], [(100, 109)]) == 0.0
    assert directed_aiou([], [(0, 1)]) == 0.0


def test_single_frame_intervals():
    assert interval_iou((4, 4), (4, 4)) == 1.0
    assert interval_iou((4, 4), (5, 5)) == 0.0
    assert interval_iou((0, 9), (9, 12)) == pytest.approx(1 / 13)


@given(interval_lists(max_size=4), interval_lists(max_size=4))
def test_temporal_iou_matches_frame_counting(a, b):
    assert abs(temporal_iou_score(a, b) - frame_score(a, b)) <= 1e-9
    assert abs(directed_aiou(a, b) - frame_directed(a, b)) <= 1e-9
    assert 0.0 <= directed_aiou(a, b) <= 1.0
    assert (directed_aiou(a, b) == 1.0 and directed_aiou(b, a) == 1.0) == (a == b)


def test_validation():
    assert validate_intervals([[0, 3], [5, 9]]) == [(0, 3), (5, 9)]
    for bad in ([(3, 1)], [(-1, 2)], [(0, 5), (5, 9)], [(5, 9), (0, 3)], [(0.5, 2)], [(1, 2, 3)]):
        with pytest.raises(ValueError):
            validate_intervals(bad)
    with pytest.raises(ValueError):
        temporal_iou_score([], [(0, 1)])


def test_merge_and_overlap():
    assert merge_intervals([(5, 9), (0, 3), (2, 6), (11, 12)]) == [(0, 9), (11, 12)]
    assert merge_intervals([(0, 3), (4, 5)]) == [(0, 3), (4, 5)]
    assert overlaps((0, 3), (3, 9)) and not overlaps((0, 3), (4, 9))


@given(st.lists(st.tuples(st.integers(0, 500), st.integers(0, 60)).map(lambda p: (p[0], p[0] + p[1])), max_size=8))
def test_merge_preserves_frame_set(ivs):
    merged = merge_intervals(ivs)
    validate_intervals(merged)
    covered = set().union(*(frames_of(iv) for iv in ivs))
    assert set().union(*(frames_of(iv) for iv in merged)) == covered
