import json
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from amego.config import EngineConfig
from amego.hoi import HOITracklet
from amego.location import LocationSegment
from amego.memory import Memory
from amego.query import (
    AnswerOption,
    Question,
    QuestionError,
    Verdict,
    answer_batch,
    answer_question,
    lcs_length,
    load_questions,
    load_verdicts,
    question_from_dict,
    save_questions,
    save_verdicts,
)
from amego.stream import BoundingBox

from conftest import HEADER, basis, unit

A, B, C, D = (basis(i) for i in range(4))
L1, L2 = basis(0), basis(1)
BOX = BoundingBox(0.0, 0.0, 10.0, 10.0)


def make_memory(tracks, segs):
    """tracks: (t_s, t_e, side, feature, iid); segs: (t_s, t_e, feature, iid)."""
    tracklets = [HOITracklet(a, b, (BOX,) * (b - a + 1), side, iid, f, 20, b + 20) for a, b, side, f, iid in tracks]
    segments = [LocationSegment(a, b, iid, f, b + 5) for a, b, f, iid in segs]
    obj = [[] for _ in range(1 + max([t[4] for t in tracks], default=-1))]
    for t in tracks:
        obj[t[4]].append(t[3])
    loc = [[] for _ in range(1 + max([s[3] for s in segs], default=-1))]
    for s in segs:
        loc[s[3]].append(s[2])
    return Memory(HEADER, EngineConfig(), tracklets, segments, obj, loc)


# A right [10,50], B right [100,150], C left [30,120]; L1 [0,80], L2 [90,200]
MEM = make_memory(
    [(10, 50, "right", A, 0), (100, 150, "right", B, 1), (30, 120, "left", C, 2)],
    [(0, 80, L1, 0), (90, 200, L2, 1)],
)
FILLER = [basis(3)]


def crops(*vs):
    return AnswerOption(crops=tuple(vs))


def q(template, answers, query=(), **kw):
    return Question(f"t-{template}", template, tuple(answers), tuple(query), **kw)


def answer(question, memory=MEM, seed=0):
    return answer_question(question, memory, memory.config, seed)


def lcs_oracle(a, b):
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=int)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i, j] = table[i - 1, j - 1] + 1 if a[i - 1] == b[j - 1] else max(table[i - 1, j], table[i, j - 1])
    return int(table[-1, -1])


def test_lcs_examples():
    assert lcs_length([1, 2, 3], [1, 2, 3]) == 3
    assert lcs_length([], [4, 5]) == 0
    assert lcs_length([1, 2, 3, 2, 4, 1, 2], [2, 4, 3, 1, 2, 1]) == 4


@given(st.lists(st.integers(0, 5), max_size=50), st.lists(st.integers(0, 5), max_size=50))
def test_lcs_matches_dp_oracle(a, b):
    assert lcs_length(a, b) == lcs_oracle(a, b) == lcs_length(b, a)


# ---------------------------------------------------------------- Q1


def test_q1_exact_sequence_wins():
    # memory order by start: A(10), C(30), B(100)
    qq = q("Q1", [crops(C, A, B), crops(A, C, B), crops(B, C, A), crops(B, A, C), crops(C, B, A)])
    v = answer(qq)
    assert v.chosen_index == 1 and v.matched and v.score == 3


def test_q1_empty_memory_is_random():
    qq = q("Q1", [crops(A)] * 5)
    v = answer(qq, make_memory([], []))
    assert not v.matched and v.rng_draws == 1 and 0 <= v.chosen_index < 5


# ---------------------------------------------------------------- Q2 / Q3


def test_q2_next_on_same_hand():
    opts = [crops(C), crops(D), crops(B), crops(A), crops(unit(1, 1, 1, 1))]
    v = answer(q("Q2", opts, [A], hand_side="right", t=5, variant="after"))
    assert v.chosen_index == 2 and v.matched
    v = answer(q("Q3", opts, [B], hand_side="right", t=160, variant="before"))
    assert v.chosen_index == 3 and v.matched


def test_q2_fallbacks():
    single = make_memory([(10, 50, "right", A, 0)], [])
    opts = [crops(A), crops(B), crops(C), crops(D), crops(unit(1, 1, 0, 0))]
    assert not answer(q("Q2", opts, [A], hand_side="right", t=0), single).matched
    # no right-hand tracklet similar enough to the query
    assert not answer(q("Q2", opts, [D], hand_side="right", t=0)).matched
    # C is only used with the left hand
    assert not answer(q("Q2", opts, [C], hand_side="right", t=0)).matched


# ---------------------------------------------------------------- Q4


def test_q4_take_and_leave():
    opts = [crops(L2), crops(basis(2)), crops(L1), crops(basis(3)), crops(unit(0, 0, 1, 1))]
    assert answer(q("Q4", opts, [C], variant="take")).chosen_index == 2
    assert answer(q("Q4", opts, [C], variant="leave")).chosen_index == 0
    assert answer(q("Q4", opts, [A], variant="take")).chosen_index == 2
    assert answer(q("Q4", opts, [A], variant="leave")).chosen_index == 2
    no_segments = make_memory([(10, 50, "right", A, 0)], [])
    assert not answer(q("Q4", opts, [A], variant="take"), no_segments).matched


# ---------------------------------------------------------------- Q5 / Q6


def test_q5_concurrency():
    # objects concurrent with A: only C
    opts = [crops(B), crops(D), crops(C, D), crops(B, D), crops(A)]
    v = answer(q("Q5", opts, [A]))
    assert v.chosen_index == 2 and v.matched and v.score == 1
    # C overlaps A and B
    opts = [crops(A), crops(B), crops(A, B), crops(D), crops(A, D)]
    assert answer(q("Q5", opts, [C])).chosen_index == 2


def test_q5_no_concurrent_answers_random_and_dedup():
    opts = [crops(B), crops(D), crops(B, D), crops(A), crops(D, D)]
    v = answer(q("Q5", opts, [A]))
    assert not v.matched and v.score == 0
    # duplicate crops of the concurrent instance count once, so this is a tie
    opts = [crops(C, C, C), crops(C), crops(D), crops(B), crops(A)]
    v = answer(q("Q5", opts, [A]))
    assert not v.matched and v.chosen_index in (0, 1) and v.score == 1


def test_q6_locations():
    opts = [crops(L1), crops(L2), crops(L1, L2), crops(basis(3)), crops(basis(2))]
    assert answer(q("Q6", opts, [C])).chosen_index == 2
    opts = [crops(L1), crops(L2), crops(L1, basis(3)), crops(basis(3)), crops(basis(2))]
    assert answer(q("Q6", opts, [B])).chosen_index == 1
    opts = [crops(basis(3)), crops(basis(2)), crops(basis(2), basis(3)), crops(basis(3)), crops(basis(2))]
    assert not answer(q("Q6", opts, [B])).matched


# ---------------------------------------------------------------- Q7 / Q8


def ivs(*pairs):
    return AnswerOption(intervals=tuple(pairs))


def test_q7_q8_reference_wins():
    opts = [ivs((0, 20)), ivs((10, 50)), ivs((20, 60)), ivs((200, 300)), ivs((10, 50), (100, 150))]
    v = answer(q("Q7", opts, [A]))
    assert v.chosen_index == 1 and v.score == 1.0
    v = answer(q("Q8", [ivs((0, 80)), ivs((0, 40)), ivs((90, 200)), ivs((0, 200)), ivs((500, 600))], [L2]))
    assert v.chosen_index == 2 and v.score == 1.0
    assert not answer(q("Q7", opts, [D])).matched


# ---------------------------------------------------------------- batch behaviour


def verdict_map(vs):
    return {v.qid: v for v in vs}


def mixed_questions():
    opts = [crops(C), crops(D), crops(B), crops(A), crops(unit(1, 1, 1, 1))]
    out = []
    for k in range(30):
        out.append(Question(f"q{k}", "Q2", tuple(opts), (A if k % 2 else D,), hand_side="right", t=k, variant="after"))
    return out


def test_batch_order_invariant_and_seeded():
    qs = mixed_questions()
    a = answer_batch(qs, MEM, seed=3)
    shuffled = list(qs)
    random.Random(1).shuffle(shuffled)
    b = answer_batch(shuffled, MEM, seed=3)
    assert verdict_map(a) == verdict_map(b)
    assert answer_batch(qs, MEM, seed=3) == a
    for v in a:
        assert 0 <= v.chosen_index < 5
        assert v.matched or v.rng_draws >= 1


def test_crop_order_invariance():
    base = q("Q5", [crops(A, B), crops(D, C), crops(B), crops(D), crops(A, D)], [C, A])
    v = answer(base)
    flipped = q("Q5", [crops(B, A), crops(C, D), crops(B), crops(D), crops(D, A)], [A, C])
    assert answer(flipped) == v


def test_empty_question_file(tmp_path):
    path = tmp_path / "q.jsonl"
    path.write_text("")
    assert answer_batch(path, MEM) == []


def test_question_and_verdict_files_round_trip(tmp_path):
    qs = mixed_questions()
    save_questions(qs, tmp_path / "q.jsonl")
    loaded = load_questions(tmp_path / "q.jsonl")
    assert loaded == qs
    vs = answer_batch(loaded, MEM, seed=1)
    save_verdicts(vs, tmp_path / "v.jsonl")
    assert load_verdicts(tmp_path / "v.jsonl") == vs
    save_verdicts(load_verdicts(tmp_path / "v.jsonl"), tmp_path / "v2.jsonl")
    assert (tmp_path / "v2.jsonl").read_bytes() == (tmp_path / "v.jsonl").read_bytes()


GOOD = {
    "qid": "x",
    "template": "Q2",
    "query_embeddings": [[1, 0, 0, 0]],
    "answers": [{"crops": [[0, 1, 0, 0]]}] * 5,
    "hand_side": "left",
    "t": 4,
}


@pytest.mark.parametrize(
    "change",
    [
        {"template": "Q9"},
        {"answers": [{"crops": [[0, 1, 0, 0]]}] * 4},
        {"hand_side": "middle"},
        {"t": -1},
        {"variant": "before"},
        {"query_embeddings": []},
        {"query_embeddings": [[1, 0, 0, 0]] * 4},
        {"answers": [{"intervals": [[0, 1]]}] * 5},
        {"correct_index": 5},
        {"qid": ""},
    ],
)
def test_question_schema_errors(change):
    with pytest.raises(QuestionError):
        question_from_dict({**GOOD, **change})


def test_question_parsing_defaults():
    parsed = question_from_dict(GOOD)
    assert parsed.variant == "after" and parsed.correct_index is None
    with pytest.raises(QuestionError, match="take"):
        question_from_dict({**GOOD, "template": "Q4", "variant": "after"})
    with pytest.raises(QuestionError, match="dimension"):
        answer_question(question_from_dict({**GOOD, "query_embeddings": [[1, 0, 0]]}), MEM, MEM.config, 0)


def test_bad_question_file(tmp_path):
    (tmp_path / "q.jsonl").write_text(json.dumps(GOOD) + "\n{oops\n")
    with pytest.raises(QuestionError, match="q.jsonl:2"):
        load_questions(tmp_path / "q.jsonl")
