"""Online location segments: a hysteresis state machine over a per-frame
"paused and interacting" signal, plus mean-cosine instance assignment."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .clustering import InstanceRegistry
from .config import EngineConfig
from .stream import FrameRecord, normalize


def interaction_signal(frame: FrameRecord, cfg: EngineConfig) -> bool:
    """Low optical flow and at least one visible hand (each filter switchable)."""
    if cfg.use_flow_filter and not frame.flow_norm < cfg.flow_threshold:
        return False
    if cfg.use_hand_filter and not frame.hands:
        return False
    return True


class Mode(str, Enum):
    IDLE = "idle"
    ARMING = "arming"
    ACTIVE = "active"
    DISARMING = "disarming"


@dataclass(frozen=True)
class RawSegment:
    t_s: int
    t_e: int
    feature: np.ndarray


@dataclass(frozen=True, eq=False)
class LocationSegment:
    t_s: int
    t_e: int
    instance_id: int
    feature: np.ndarray
    confirmed_at: int

    @property
    def interval(self) -> tuple[int, int]:
        return (self.t_s, self.t_e)

    def to_dict(self) -> dict:
        return {
            "t_s": self.t_s,
            "t_e": self.t_e,
            "instance_id": self.instance_id,
            "feature": [float(x) for x in self.feature],
            "confirmed_at": self.confirmed_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LocationSegment":
        return cls(
            t_s=int(d["t_s"]),
            t_e=int(d["t_e"]),
            instance_id=int(d["instance_id"]),
            feature=np.asarray(d["feature"], dtype=np.float64),
            confirmed_at=int(d["confirmed_at"]),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LocationSegment):
            return NotImplemented
        return self.to_dict() == other.to_dict()


class LocationStateMachine:
    """idle -> arming(s_l trues) -> active -> disarming(e_l falses) -> idle.

    The segment feature averages the frame embeddings of every frame in
    [t_s, t_e]: frames seen while disarming are held aside and folded in if
    the signal returns, dropped if the segment ends.
    """

    def __init__(self, cfg: EngineConfig, dim: int):
        self.cfg = cfg
        self.dim = dim
        self.mode = Mode.IDLE
        self.count = 0
        self._reset()

    def _reset(self) -> None:
        self.t_s = -1
        self.last_true = -1
        self._sum = np.zeros(self.dim)
        self._n = 0
        self._pending = np.zeros(self.dim)
        self._pending_n = 0

    def _emit(self) -> RawSegment:
        seg = RawSegment(self.t_s, self.last_true, normalize(self._sum / self._n))
        self.mode = Mode.IDLE
        self.count = 0
        self._reset()
        return seg

    def step(self, frame: FrameRecord, signal: bool) -> RawSegment | None:
        cfg = self.cfg
        emb = frame.frame_embedding
        if self.mode is Mode.IDLE:
            if signal:
                self.t_s = self.last_true = frame.frame
                self._sum = self._sum + emb
                self._n = 1
                self.count = 1
                self.mode = Mode.ACTIVE if cfg.s_l <= 1 else Mode.ARMING
            return None
        if self.mode is Mode.ARMING:
            if signal:
                self.count += 1
                self.last_true = frame.frame
                self._sum = self._sum + emb
                self._n += 1
                if self.count >= cfg.s_l:
                    self.mode = Mode.ACTIVE
            else:
                self.mode = Mode.IDLE
                self.count = 0
                self._reset()
            return None
        if self.mode is Mode.ACTIVE:
            if signal:
                self.last_true = frame.frame
                self._sum = self._sum + emb
                self._n += 1
                return None
            self.mode = Mode.DISARMING
            self.count = 1
            self._pending = emb.copy()
            self._pending_n = 1
            if self.count >= cfg.e_l:
                return self._emit()
            return None
        # disarming
        if signal:
            self.mode = Mode.ACTIVE
            self.count = 0
            self.last_true = frame.frame
            self._sum = self._sum + self._pending + emb
            self._n += self._pending_n + 1
            self._pending = np.zeros(self.dim)
            self._pending_n = 0
            return None
        self.count += 1
        self._pending = self._pending + emb
        self._pending_n += 1
        if self.count >= cfg.e_l:
            return self._emit()
        return None

    def flush(self) -> RawSegment | None:
        """End of stream: emit an active or disarming segment (always >= s_l long)."""
        if self.mode in (Mode.ACTIVE, Mode.DISARMING):
            return self._emit()
        self.mode = Mode.IDLE
        self.count = 0
        self._reset()
        return None


def step_location(sm: LocationStateMachine, frame: FrameRecord, cfg: EngineConfig) -> RawSegment | None:
    return sm.step(frame, interaction_signal(frame, cfg))


def assign_location_instance(feature: np.ndarray, registry: InstanceRegistry, cfg: EngineConfig) -> int:
    return registry.assign(feature, cfg.sim_assign_loc)


class LocationEngine:
    def __init__(self, cfg: EngineConfig, embed_dim: int):
        self.cfg = cfg
        self.sm = LocationStateMachine(cfg, embed_dim)
        self.registry = InstanceRegistry(embed_dim)
        self.segments: list[LocationSegment] = []
        self.last_frame = -1

    def _store(self, raw: RawSegment, t: int) -> LocationSegment:
        iid = assign_location_instance(raw.feature, self.registry, self.cfg)
        seg = LocationSegment(raw.t_s, raw.t_e, iid, raw.feature, t)
        self.segments.append(seg)
        return seg

    def process_frame(self, frame: FrameRecord) -> list[LocationSegment]:
        if frame.frame <= self.last_frame:
            raise ValueError(f"frame {frame.frame} out of order (last {self.last_frame})")
        self.last_frame = frame.frame
        raw = step_location(self.sm, frame, self.cfg)
        return [] if raw is None else [self._store(raw, frame.frame)]

    def finalize(self) -> list[LocationSegment]:
        raw = self.sm.flush()
        return [] if raw is None else [self._store(raw, self.last_frame)]
