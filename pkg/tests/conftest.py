import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from amego.config import EngineConfig
from amego.memory import MemoryBuilder, build_memory
from amego.stream import BoundingBox, FrameRecord, HandObservation, ObjectObservation, StreamHeader
from amego.synth import NoiseConfig, ScenarioConfig, generate_script, render_records

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DIM = 4


def unit(*xs):
    v = np.asarray(xs, dtype=np.float64)
    return v / np.linalg.norm(v)


def basis(i, dim=DIM):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def hand(side="right"):
    return HandObservation(side, BoundingBox(0.0, 0.0, 10.0, 10.0))


def obj(box, side="right", emb=None):
    return ObjectObservation(BoundingBox(*map(float, box)), side, basis(0) if emb is None else emb)


def frame(t, objects=(), hands=("right",), flow=0.0, emb=None):
    return FrameRecord(t, tuple(hand(s) for s in hands), tuple(objects), float(flow), basis(0) if emb is None else emb)


HEADER = StreamHeader(embed_dim_obj=DIM, embed_dim_loc=DIM, fps=30.0)

# a short scenario with enough locations for every template
SMALL = ScenarioConfig(
    n_objects=6,
    n_locations=5,
    total_frames=9000,
    min_visit_len=700,
    max_visit_len=1300,
    max_event_len=400,
)


@pytest.fixture(scope="session")
def small_script():
    return generate_script(SMALL, 7)


@pytest.fixture(scope="session")
def small_memory(small_script):
    return build_memory(render_records(small_script, NoiseConfig(), 8))


@pytest.fixture(scope="session")
def small_frames(small_script):
    _, frames = render_records(small_script, NoiseConfig(), 8)
    return list(frames)


def run_prefix(frames, header, cfg=None):
    """Memory snapshot after process_frame over ``frames`` (no end-of-stream flush)."""
    builder = MemoryBuilder(header, cfg or EngineConfig())
    for f in frames:
        builder.process_frame(f)
    return builder.snapshot()


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
