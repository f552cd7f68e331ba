"""Streaming active-memory construction and semantic-free querying over
egocentric perception streams."""

from .config import ConfigError, EngineConfig
from .memory import Memory, build_memory, load_memory, save_memory
from .query import Question, Verdict, answer_batch, answer_question, load_questions
from .stream import StreamError, StreamHeader, parse_stream

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EngineConfig",
    "Memory",
    "Question",
    "StreamError",
    "StreamHeader",
    "Verdict",
    "answer_batch",
    "answer_question",
    "build_memory",
    "load_memory",
    "load_questions",
    "parse_stream",
    "save_memory",
]
