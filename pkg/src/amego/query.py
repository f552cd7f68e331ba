"""Answering multiple-choice questions (templates Q1-Q8) against a Memory.

Every answer function returns a Verdict. Whenever the memory gives no usable
evidence, or several options tie for the best score, the choice is drawn from
a per-question seeded generator and the verdict is marked ``matched=False``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import EngineConfig
from .intervals import Interval, merge_intervals, overlaps, temporal_iou_score, validate_intervals
from .memory import (
    Memory,
    intervals_of_location,
    intervals_of_object,
    match_location_query,
    match_object_query,
    pooled_query,
)
from .metrics import TEMPLATES

N_OPTIONS = 5
# float scores closer than this are ties
SCORE_TIE_TOL = 1e-9

OBJECT_QUERY = {"Q2", "Q3", "Q4", "Q5", "Q6", "Q7"}
LOCATION_QUERY = {"Q8"}
OBJECT_ANSWERS = {"Q1", "Q2", "Q3", "Q5"}
LOCATION_ANSWERS = {"Q4", "Q6"}
INTERVAL_ANSWERS = {"Q7", "Q8"}


class QuestionError(ValueError):
    """Schema violation in a question record."""


@dataclass(frozen=True, eq=False)
class AnswerOption:
    crops: tuple[np.ndarray, ...] | None = None
    intervals: tuple[Interval, ...] | None = None

    def to_dict(self) -> dict:
        if self.intervals is not None:
            return {"intervals": [list(iv) for iv in self.intervals]}
        return {"crops": [[float(x) for x in c] for c in self.crops or ()]}


@dataclass(frozen=True, eq=False)
class Question:
    qid: str
    template: str
    answers: tuple[AnswerOption, ...]
    query_embeddings: tuple[np.ndarray, ...] = ()
    hand_side: str | None = None
    t: int | None = None
    variant: str | None = None
    correct_index: int | None = None

    def to_dict(self) -> dict:
        d: dict = {
            "qid": self.qid,
            "template": self.template,
            "query_embeddings": [[float(x) for x in c] for c in self.query_embeddings],
            "answers": [a.to_dict() for a in self.answers],
        }
        for key in ("hand_side", "t", "variant", "correct_index"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Question):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class Verdict:
    qid: str
    chosen_index: int
    matched: bool
    score: float
    rng_draws: int = 0

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "chosen_index": self.chosen_index,
            "matched": self.matched,
            "score": self.score,
            "rng_draws": self.rng_draws,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Verdict":
        return cls(str(d["qid"]), int(d["chosen_index"]), bool(d["matched"]), float(d["score"]), int(d.get("rng_draws", 0)))


# ---------------------------------------------------------------- parsing


def _crop_list(raw, what: str) -> tuple[np.ndarray, ...]:
    if not isinstance(raw, list):
        raise QuestionError(f"{what} must be a list of embeddings")
    out = []
    for c in raw:
        if not isinstance(c, list) or not c:
            raise QuestionError(f"{what} entries must be non-empty lists of numbers")
        arr = np.asarray(c, dtype=np.float64)
        n = float(np.linalg.norm(arr))
        if not np.isfinite(n) or n == 0:
            raise QuestionError(f"{what} contains a zero or non-finite embedding")
        out.append(arr if abs(n - 1.0) <= 1e-12 else arr / n)
    return tuple(out)


def question_from_dict(d: dict) -> Question:
    qid = d.get("qid")
    if not isinstance(qid, str) or not qid:
        raise QuestionError("question record needs a non-empty string qid")
    try:
        template = d["template"]
        if template not in TEMPLATES:
            raise QuestionError(f"unknown template {template!r}")
        query = _crop_list(d.get("query_embeddings", []), "query_embeddings")
        if len(query) > 3:
            raise QuestionError("at most 3 query crops are allowed")
        if template != "Q1" and not query:
            raise QuestionError(f"{template} needs at least one query crop")
        raw_answers = d["answers"]
        if not isinstance(raw_answers, list) or len(raw_answers) != N_OPTIONS:
            raise QuestionError(f"exactly {N_OPTIONS} answers are required")
        answers = []
        for i, a in enumerate(raw_answers):
            if template in INTERVAL_ANSWERS:
                if "intervals" not in a:
                    raise QuestionError(f"answer {i}: {template} answers are interval lists")
                ivs = validate_intervals(a["intervals"], f"answer {i}")
                if not ivs:
                    raise QuestionError(f"answer {i}: empty interval list")
                answers.append(AnswerOption(intervals=tuple(ivs)))
            else:
                if "crops" not in a:
                    raise QuestionError(f"answer {i}: {template} answers are crop lists")
                crops = _crop_list(a["crops"], f"answer {i} crops")
                if not crops:
                    raise QuestionError(f"answer {i}: empty crop list")
                answers.append(AnswerOption(crops=crops))
        hand_side = d.get("hand_side")
        t = d.get("t")
        variant = d.get("variant")
        if template in ("Q2", "Q3"):
            if hand_side not in ("left", "right"):
                raise QuestionError(f"{template} needs hand_side left|right")
            if isinstance(t, bool) or not isinstance(t, int) or t < 0:
                raise QuestionError(f"{template} needs a non-negative integer t")
            expected = "after" if template == "Q2" else "before"
            if variant is None:
                variant = expected
            elif variant != expected:
                raise QuestionError(f"{template} variant must be {expected!r}, got {variant!r}")
        if template == "Q4" and variant not in ("take", "leave"):
            raise QuestionError("Q4 needs variant take|leave")
        correct = d.get("correct_index")
        if correct is not None and (isinstance(correct, bool) or not isinstance(correct, int) or not 0 <= correct < N_OPTIONS):
            raise QuestionError(f"correct_index must be in [0, {N_OPTIONS})")
    except QuestionError as exc:
        raise QuestionError(f"question {qid}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise QuestionError(f"question {qid}: {exc!r}") from None
    return Question(qid, template, tuple(answers), query, hand_side, t, variant, correct)


def load_questions(path: str | Path) -> list[Question]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise QuestionError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(d, dict):
                raise QuestionError(f"{path}:{lineno}: record must be an object")
            out.append(question_from_dict(d))
    return out


def _dumps(d: dict) -> str:
    return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_questions(questions: Iterable[Question], path: str | Path) -> None:
    with open(path, "w") as fh:
        for q in questions:
            fh.write(_dumps(q.to_dict()) + "\n")


def save_verdicts(verdicts: Iterable[Verdict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for v in verdicts:
            fh.write(_dumps(v.to_dict()) + "\n")


def load_verdicts(path: str | Path) -> list[Verdict]:
    with open(path) as fh:
        return [Verdict.from_dict(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------- primitives


def lcs_length(a: Sequence, b: Sequence) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def question_rng(seed: int, qid: str) -> np.random.Generator:
    digest = int.from_bytes(hashlib.sha256(qid.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), digest]))


def _random(q: Question, rng: np.random.Generator, pool: Sequence[int] | None = None, score: float = 0.0) -> Verdict:
    pool = list(range(len(q.answers))) if pool is None else list(pool)
    pick = pool[int(rng.integers(len(pool)))]
    return Verdict(q.qid, pick, False, float(score), 1)


def choose(q: Question, scores: Sequence[float], rng: np.random.Generator, tol: float = SCORE_TIE_TOL) -> Verdict:
    """Argmax over option scores; ties are broken by a recorded random draw."""
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if s >= best - tol]
    if len(tied) == 1:
        return Verdict(q.qid, tied[0], True, float(best), 0)
    return _random(q, rng, tied, best)


def _cosine_scores(q: Question, feature: np.ndarray) -> list[float]:
    return [float(np.dot(pooled_query(a.crops), feature)) for a in q.answers]


def _expect(q: Question, *templates: str) -> None:
    if q.template not in templates:
        raise QuestionError(f"question {q.qid}: template {q.template} not handled here")


def _ordered_tracklets(m: Memory):
    return sorted(range(len(m.tracklets)), key=lambda i: (m.tracklets[i].t_s, i))


# ---------------------------------------------------------------- templates


def answer_q1(q: Question, m: Memory, cfg: EngineConfig, rng: np.random.Generator) -> Verdict:
    _expect(q, "Q1")
    if not m.tracklets:
        return _random(q, rng)
    seq = [m.tracklets[i].instance_id for i in _ordered_tracklets(m)]
    scores = []
    sentinel = -1
    for a in q.answers:
        ids = []
        for crop in a.crops:
            hit = match_object_query([crop], m, cfg.query_sim_min)
            if hit is None:
                ids.append(sentinel)
                sentinel -= 1
            else:
                ids.append(hit[0])
        scores.append(lcs_length(seq, ids))
    return choose(q, scores, rng)


def _distance(t: int, iv: tuple[int, int]) -> int:
    if iv[0] <= t <= iv[1]:
        return 0
    return iv[0] - t if t < iv[0] else t - iv[1]


def answer_q2_q3(q: Question, m: Memory, cfg: EngineConfig, rng: np.random.Generator) -> Verdict:
    _expect(q, "Q2", "Q3")
    if q.hand_side is None or q.t is None:
        raise QuestionError(f"question {q.qid}: hand_side and t are required")
    qf = pooled_query(q.query_embeddings)
    side = [i for i in _ordered_tracklets(m) if m.tracklets[i].hand_side == q.hand_side]
    anchor_pos = None
    anchor_key = None
    for pos, i in enumerate(side):
        tr = m.tracklets[i]
        if float(np.dot(qf, tr.feature)) < cfg.query_sim_min:
            continue
        key = (_distance(q.t, tr.interval), tr.t_s, i)
        if anchor_key is None or key < anchor_key:
            anchor_pos, anchor_key = pos, key
    if anchor_pos is None:
        return _random(q, rng)
    npos = anchor_pos + 1 if q.template == "Q2" else anchor_pos - 1
    if not 0 <= npos < len(side):
        return _random(q, rng)
    return choose(q, _cosine_scores(q, m.tracklets[side[npos]].feature), rng)


def answer_q4(q: Question, m: Memory, cfg: EngineConfig, rng: np.random.Generator) -> Verdict:
    _expect(q, "Q4")
    if q.variant not in ("take", "leave"):
        raise QuestionError(f"question {q.qid}: variant take|leave is required")
    hit = match_object_query(q.query_embeddings, m, cfg.query_sim_min)
    if hit is None or not m.segments:
        return _random(q, rng)
    used = [t.interval for t in m.tracklets if t.instance_id == hit[0]]
    segs = sorted(m.segments, key=lambda s: s.interval)
    touching = [s for s in segs if any(overlaps(s.interval, iv) for iv in used)]
    if touching:
        seg = touching[0] if q.variant == "take" else touching[-1]
    else:
        ref = min(iv[0] for iv in used) if q.variant == "take" else max(iv[1] for iv in used)
        seg = min(segs, key=lambda s: (_distance(ref, s.interval), s.t_s))
    return choose(q, _cosine_scores(q, seg.feature), rng)


def _concurrent(items, query_intervals: Sequence[Interval], exclude: int | None = None) -> set[int]:
    out = set()
    for it in items:
        if it.instance_id == exclude or it.instance_id in out:
            continue
        if any(overlaps(it.interval, iv) for iv in query_intervals):
            out.add(it.instance_id)
    return out


def answer_q5(q: Question, m: Memory, cfg: EngineConfig, rng: np.random.Generator) -> Verdict:
    _expect(q, "Q5")
    hit = match_object_query(q.query_embeddings, m, cfg.query_sim_min)
    if hit is None:
        return _random(q, rng)
    qiv = intervals_of_object(m, hit[0])
    concurrent = _concurrent(m.tracklets, qiv, exclude=hit[0])
    scores = []
    for a in q.answers:
        ids = {h[0] for h in (match_object_query([c], m, cfg.query_sim_min) for c in a.crops) if h is not None}
        scores.append(len(ids & concurrent))
    return choose(q, scores, rng)


def answer_q6(q: Question, m: Memory, cfg: EngineConfig, rng: np.random.Generator) -> Verdict:
    _expect(q, "Q6")
    hit = match_object_query(q.query_embeddings, m, cfg.query_sim_min)
    if hit is None:
        return _random(q, rng)
    qiv = intervals_of_object(m, hit[0])
    concurrent = _concurrent(m.segments, qiv)
    scores = []
    for a in q.answers:
        ids = {h[0] for h in (match_location_query([c], m, cfg.query_sim_min) for c in a.crops) if h is not None}
        scores.append(len(ids & concurrent))
    return choose(q, scores, rng)


def answer_q7_q8(q: Question, m: Memory, cfg: EngineConfig, rng: np.random.Generator) -> Verdict:
    _expect(q, "Q7", "Q8")
    if q.template == "Q7":
        hit = match_object_query(q.query_embeddings, m, cfg.query_sim_min)
        ref = None if hit is None else intervals_of_object(m, hit[0])
    else:
        hit = match_location_query(q.query_embeddings, m, cfg.query_sim_min)
        ref = None if hit is None else intervals_of_location(m, hit[0])
    if not ref:
        return _random(q, rng)
    ref = merge_intervals(ref)
    return choose(q, [temporal_iou_score(a.intervals, ref) for a in q.answers], rng)


ANSWERERS: dict[str, Callable[[Question, Memory, EngineConfig, np.random.Generator], Verdict]] = {
    "Q1": answer_q1,
    "Q2": answer_q2_q3,
    "Q3": answer_q2_q3,
    "Q4": answer_q4,
    "Q5": answer_q5,
    "Q6": answer_q6,
    "Q7": answer_q7_q8,
    "Q8": answer_q7_q8,
}


def check_dimensions(q: Question, m: Memory) -> None:
    d_obj, d_loc = m.header.embed_dim_obj, m.header.embed_dim_loc
    qdim = d_loc if q.template in LOCATION_QUERY else d_obj
    for c in q.query_embeddings:
        if len(c) != qdim:
            raise QuestionError(f"question {q.qid}: query crop has dimension {len(c)}, expected {qdim}")
    if q.template in INTERVAL_ANSWERS:
        return
    adim = d_loc if q.template in LOCATION_ANSWERS else d_obj
    for i, a in enumerate(q.answers):
        for c in a.crops:
            if len(c) != adim:
                raise QuestionError(f"question {q.qid}: answer {i} crop has dimension {len(c)}, expected {adim}")


def answer_question(q: Question, m: Memory, cfg: EngineConfig, seed: int) -> Verdict:
    check_dimensions(q, m)
    return ANSWERERS[q.template](q, m, cfg, question_rng(seed, q.qid))


def answer_batch(
    questions: str | Path | Iterable[Question],
    m: Memory,
    cfg: EngineConfig | None = None,
    seed: int = 0,
) -> list[Verdict]:
    """Answer every question; each draws from its own (seed, qid) generator."""
    cfg = cfg or m.config
    qs = load_questions(questions) if isinstance(questions, (str, Path)) else list(questions)
    return [answer_question(q, m, cfg, seed) for q in qs]
