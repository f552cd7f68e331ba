"""Perception-stream records, the line-delimited stream format, and box/vector math.

A stream file is one JSON object per line. The first line is a header::

    {"type":"header","version":1,"embed_dim_obj":D,"embed_dim_loc":E,"fps":F}

followed by one ``"type":"frame"`` record per frame, in strictly increasing
frame order. Embeddings are L2-normalised on ingest so downstream code can
treat cosine similarity as a plain dot product.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

STREAM_VERSION = 1
SIDES = ("left", "right")
CONTACT_SIDES = ("left", "right", "both")

# vectors already this close to unit norm are left untouched, so that
# parse -> write -> parse is an exact fixed point
_UNIT_TOL = 1e-12


class StreamError(ValueError):
    """Malformed stream content. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class BoundingBox(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def validate(self) -> None:
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"box coordinates must be finite and >= 0: {vals}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"box must satisfy x1<x2 and y1<y2: {vals}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    if iw <= 0:
        return 0.0
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    n = float(np.sqrt(arr @ arr))
    if not math.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalise a zero or non-finite vector")
    if abs(n - 1.0) <= _UNIT_TOL:
        return arr
    return arr / n


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of two unit vectors (their dot product)."""
    if len(u) != len(v):
        raise ValueError(f"dimension mismatch: {len(u)} vs {len(v)}")
    return float(np.dot(u, v))


@dataclass(frozen=True)
class HandObservation:
    side: str
    box: BoundingBox
    score: float = 1.0


@dataclass(frozen=True, eq=False)
class ObjectObservation:
    box: BoundingBox
    contact_side: str
    embedding: np.ndarray
    score: float = 1.0


@dataclass(frozen=True, eq=False)
class FrameRecord:
    frame: int
    hands: tuple[HandObservation, ...]
    objects: tuple[ObjectObservation, ...]
    flow_norm: float
    frame_embedding: np.ndarray
    _sides: frozenset = field(default=frozenset(), repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_sides", frozenset(h.side for h in self.hands))

    def hand_visible(self, side: str) -> bool:
        return side in self._sides

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrameRecord):
            return NotImplemented
        return frame_to_dict(self) == frame_to_dict(other)


@dataclass(frozen=True)
class StreamHeader:
    embed_dim_obj: int
    embed_dim_loc: int
    fps: float
    version: int = STREAM_VERSION

    def to_dict(self) -> dict:
        return {
            "type": "header",
            "version": self.version,
            "embed_dim_obj": self.embed_dim_obj,
            "embed_dim_loc": self.embed_dim_loc,
            "fps": self.fps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StreamHeader":
        return cls(
            embed_dim_obj=int(d["embed_dim_obj"]),
            embed_dim_loc=int(d["embed_dim_loc"]),
            fps=float(d["fps"]),
            version=int(d["version"]),
        )


# ---------------------------------------------------------------- decoding


def _box(raw, what: str) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise ValueError(f"{what} box must be a list of 4 numbers")
    box = BoundingBox(*(float(x) for x in raw))
    box.validate()
    return box


def _score(raw) -> float:
    s = float(raw)
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"score must be in [0, 1], got {s}")
    return s


def _embedding(raw, dim: int, what: str) -> np.ndarray:
    if not isinstance(raw, list):
        raise ValueError(f"{what} must be a list")
    if len(raw) != dim:
        raise ValueError(f"{what} dimension mismatch: expected {dim}, got {len(raw)}")
    return normalize(raw)


def _parse_header(rec: dict) -> StreamHeader:
    if rec.get("type") != "header":
        raise ValueError("first record must be a header")
    header = StreamHeader.from_dict(rec)
    if header.version != STREAM_VERSION:
        raise ValueError(f"unsupported stream version {header.version}")
    if header.embed_dim_obj < 1 or header.embed_dim_loc < 1:
        raise ValueError("embedding dimensions must be positive")
    if not header.fps > 0:
        raise ValueError("fps must be positive")
    return header


def frame_from_dict(rec: dict, header: StreamHeader) -> FrameRecord:
    if rec.get("type") != "frame":
        raise ValueError(f"expected a frame record, got type={rec.get('type')!r}")
    t = rec["frame"]
    if isinstance(t, bool) or not isinstance(t, int) or t < 0:
        raise ValueError(f"frame index must be a non-negative integer, got {t!r}")
    hands = []
    for h in rec["hands"]:
        if h["side"] not in SIDES:
            raise ValueError(f"hand side must be one of {SIDES}, got {h['side']!r}")
        hands.append(HandObservation(h["side"], _box(h["box"], "hand"), _score(h.get("score", 1.0))))
    objects = []
    for o in rec["objects"]:
        if o["contact_side"] not in CONTACT_SIDES:
            raise ValueError(f"contact_side must be one of {CONTACT_SIDES}, got {o['contact_side']!r}")
        objects.append(
            ObjectObservation(
                box=_box(o["box"], "object"),
                contact_side=o["contact_side"],
                embedding=_embedding(o["embedding"], header.embed_dim_obj, "object embedding"),
                score=_score(o.get("score", 1.0)),
            )
        )
    flow = float(rec["flow_norm"])
    if not (math.isfinite(flow) and flow >= 0):
        raise ValueError(f"flow_norm must be finite and >= 0, got {flow}")
    emb = _embedding(rec["frame_embedding"], header.embed_dim_loc, "frame_embedding")
    return FrameRecord(t, tuple(hands), tuple(objects), flow, emb)


def iter_stream_lines(lines: Iterable[str], path: str | None = None) -> tuple[StreamHeader, Iterator[FrameRecord]]:
    """Parse an iterable of text lines. The header is read eagerly, frames lazily."""
    it = iter(enumerate(lines, 1))
    for lineno, line in it:
        if line.strip():
            break
    else:
        raise StreamError("missing header", path=path)
    try:
        header = _parse_header(json.loads(line))
    except (ValueError, KeyError, TypeError) as exc:
        raise StreamError(f"bad header: {exc}", lineno, path) from None

    def frames() -> Iterator[FrameRecord]:
        last = -1
        for lineno, line in it:
            if not line.strip():
                continue
            try:
                rec = frame_from_dict(json.loads(line), header)
            except KeyError as exc:
                raise StreamError(f"missing field {exc}", lineno, path) from None
            except (ValueError, TypeError) as exc:
                raise StreamError(str(exc), lineno, path) from None
            if rec.frame <= last:
                raise StreamError(
                    f"frame index {rec.frame} not strictly increasing (previous {last})", lineno, path
                )
            last = rec.frame
            yield rec

    return header, frames()


def parse_stream(path: str | Path) -> tuple[StreamHeader, Iterator[FrameRecord]]:
    """Open a stream file. Frames are yielded lazily; the file closes when exhausted."""
    path = Path(path)
    try:
        fh = path.open("r")
    except OSError as exc:
        raise StreamError(f"cannot open stream: {exc.strerror}", path=str(path)) from None

    def lines() -> Iterator[str]:
        with fh:
            yield from fh

    return iter_stream_lines(lines(), str(path))


# ---------------------------------------------------------------- encoding


def _floats(v, ndigits: int | None) -> list[float]:
    if ndigits is None:
        return [float(x) for x in v]
    return [round(float(x), ndigits) for x in v]


def frame_to_dict(rec: FrameRecord, ndigits: int | None = None) -> dict:
    return {
        "type": "frame",
        "frame": rec.frame,
        "hands": [{"side": h.side, "box": list(h.box), "score": h.score} for h in rec.hands],
        "objects": [
            {
                "box": list(o.box),
                "score": o.score,
                "contact_side": o.contact_side,
                "embedding": _floats(o.embedding, ndigits),
            }
            for o in rec.objects
        ],
        "flow_norm": rec.flow_norm,
        "frame_embedding": _floats(rec.frame_embedding, ndigits),
    }


def dumps_record(d: dict) -> str:
    return json.dumps(d, separators=(",", ":"), allow_nan=False)


def write_stream(
    out: str | Path | IO[str],
    header: StreamHeader,
    frames: Iterable[FrameRecord | dict],
    ndigits: int | None = None,
) -> None:
    """Write a stream file. ``frames`` may hold FrameRecords or pre-built frame dicts."""
    if isinstance(out, (str, Path)):
        with open(out, "w") as fh:
            write_stream(fh, header, frames, ndigits)
        return
    out.write(dumps_record(header.to_dict()) + "\n")
    for f in frames:
        d = f if isinstance(f, dict) else frame_to_dict(f, ndigits)
        out.write(dumps_record(d) + "\n")
