"""The active memory: confirmed tracklets and location segments, their instance
registries, canonical persistence and semantic-free retrieval."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clustering import InstanceRegistry, mean_feature
from .config import EngineConfig
from .hoi import HOIEngine, HOITracklet
from .location import LocationEngine, LocationSegment
from .stream import FrameRecord, StreamHeader, parse_stream

MEMORY_VERSION = 1


class MemoryFormatError(ValueError):
    """Unreadable, corrupt or wrong-version memory file."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(eq=False)
class Memory:
    header: StreamHeader
    config: EngineConfig
    tracklets: list[HOITracklet] = field(default_factory=list)
    segments: list[LocationSegment] = field(default_factory=list)
    object_instances: list[list[np.ndarray]] = field(default_factory=list)
    location_instances: list[list[np.ndarray]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._obj_reg: InstanceRegistry | None = None
        self._loc_reg: InstanceRegistry | None = None

    @property
    def object_registry(self) -> InstanceRegistry:
        if self._obj_reg is None:
            self._obj_reg = InstanceRegistry.from_members(self.header.embed_dim_obj, self.object_instances)
        return self._obj_reg

    @property
    def location_registry(self) -> InstanceRegistry:
        if self._loc_reg is None:
            self._loc_reg = InstanceRegistry.from_members(self.header.embed_dim_loc, self.location_instances)
        return self._loc_reg

    def to_dict(self) -> dict:
        return {
            "version": MEMORY_VERSION,
            "header": self.header.to_dict(),
            "config": self.config.to_dict(),
            "tracklets": [t.to_dict() for t in self.tracklets],
            "segments": [s.to_dict() for s in self.segments],
            "object_instances": [[[float(x) for x in f] for f in inst] for inst in self.object_instances],
            "location_instances": [[[float(x) for x in f] for f in inst] for inst in self.location_instances],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Memory":
        if d.get("version") != MEMORY_VERSION:
            raise MemoryFormatError(f"unsupported memory version {d.get('version')!r}")
        try:
            m = cls(
                header=StreamHeader.from_dict(d["header"]),
                config=EngineConfig.from_dict(d["config"]),
                tracklets=[HOITracklet.from_dict(t) for t in d["tracklets"]],
                segments=[LocationSegment.from_dict(s) for s in d["segments"]],
                object_instances=[[np.asarray(f, dtype=np.float64) for f in inst] for inst in d["object_instances"]],
                location_instances=[
                    [np.asarray(f, dtype=np.float64) for f in inst] for inst in d["location_instances"]
                ],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MemoryFormatError(f"corrupt memory: {exc!r}") from None
        m.validate()
        return m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Memory):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def validate(self) -> None:
        for kind, items, insts in (
            ("tracklet", self.tracklets, self.object_instances),
            ("segment", self.segments, self.location_instances),
        ):
            counts = [0] * len(insts)
            for it in items:
                if not 0 <= it.instance_id < len(insts):
                    raise MemoryFormatError(f"{kind} instance id {it.instance_id} out of range")
                counts[it.instance_id] += 1
            if counts != [len(m) for m in insts]:
                raise MemoryFormatError(f"{kind} member counts do not match instance registry")

    @property
    def last_frame(self) -> int:
        ends = [t.t_e for t in self.tracklets] + [s.t_e for s in self.segments]
        return max(ends, default=0)


# ---------------------------------------------------------------- building


class MemoryBuilder:
    """Drives both engines frame by frame."""

    def __init__(self, header: StreamHeader, cfg: EngineConfig):
        self.header = header
        self.cfg = cfg
        self.hoi = HOIEngine(cfg, header.embed_dim_obj)
        self.loc = LocationEngine(cfg, header.embed_dim_loc)

    def process_frame(self, frame: FrameRecord) -> tuple[list[HOITracklet], list[LocationSegment]]:
        return self.hoi.process_frame(frame), self.loc.process_frame(frame)

    def finish(self) -> Memory:
        self.hoi.finalize()
        self.loc.finalize()
        return self.snapshot()

    def snapshot(self) -> Memory:
        return Memory(
            header=self.header,
            config=self.cfg,
            tracklets=list(self.hoi.tracklets),
            segments=list(self.loc.segments),
            object_instances=[list(m) for m in self.hoi.registry.members],
            location_instances=[list(m) for m in self.loc.registry.members],
        )


def build_memory(
    stream: str | Path | tuple[StreamHeader, Iterable[FrameRecord]],
    cfg: EngineConfig | None = None,
) -> Memory:
    """Single pass over a stream (path or ``(header, frames)``) into a Memory."""
    cfg = cfg or EngineConfig()
    header, frames = parse_stream(stream) if isinstance(stream, (str, Path)) else stream
    builder = MemoryBuilder(header, cfg)
    for frame in frames:
        builder.process_frame(frame)
    return builder.finish()


def dumps_memory(m: Memory) -> str:
    return canonical_json(m.to_dict()) + "\n"


def save_memory(m: Memory, path: str | Path) -> None:
    Path(path).write_text(dumps_memory(m))


def loads_memory(text: str) -> Memory:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MemoryFormatError(f"corrupt memory file: {exc}") from None
    if not isinstance(d, dict):
        raise MemoryFormatError("memory file must hold a JSON object")
    return Memory.from_dict(d)


def load_memory(path: str | Path) -> Memory:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MemoryFormatError(f"cannot read memory {path}: {exc.strerror}") from None
    return loads_memory(text)


# ---------------------------------------------------------------- retrieval


def pooled_query(crop_embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Mean-pooled unit query feature; crops are summed in a canonical order so
    permuting them cannot change the result."""
    crops = sorted((np.asarray(c, dtype=np.float64) for c in crop_embeddings), key=lambda c: c.tolist())
    return mean_feature(crops)


def _match(registry: InstanceRegistry, crops: Sequence[np.ndarray], min_sim: float) -> tuple[int, float] | None:
    if len(registry) == 0 or len(crops) == 0:
        return None
    iid, score = registry.best(pooled_query(crops))
    if iid is None or score < min_sim:
        return None
    return iid, score


def match_object_query(crop_embeddings: Sequence[np.ndarray], m: Memory, min_sim: float) -> tuple[int, float] | None:
    """Instance whose members' mean cosine to the pooled crops is highest, if >= min_sim."""
    return _match(m.object_registry, crop_embeddings, min_sim)


def match_location_query(crop_embeddings: Sequence[np.ndarray], m: Memory, min_sim: float) -> tuple[int, float] | None:
    return _match(m.location_registry, crop_embeddings, min_sim)


def _intervals(items, n_instances: int, instance_id: int, kind: str) -> list[tuple[int, int]]:
    if not 0 <= instance_id < n_instances:
        raise KeyError(f"unknown {kind} instance {instance_id}")
    return sorted(it.interval for it in items if it.instance_id == instance_id)


def intervals_of_object(m: Memory, instance_id: int) -> list[tuple[int, int]]:
    return _intervals(m.tracklets, len(m.object_instances), instance_id, "object")


def intervals_of_location(m: Memory, instance_id: int) -> list[tuple[int, int]]:
    return _intervals(m.segments, len(m.location_instances), instance_id, "location")
