"""``amego`` command line: build, query, eval, eval-standalone, synth, timeline.

Every command writes a ``<output>.manifest.json`` run record next to its
output. Exit codes: 0 success, 2 unreadable or malformed input, 3 invalid
configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, EngineConfig, from_mapping, load_kv_file, parse_overrides
from .memory import MemoryFormatError, build_memory, canonical_json, load_memory, save_memory
from .metrics import evaluate_memory, load_ground_truth, qa_accuracy, save_ground_truth
from .query import QuestionError, answer_batch, load_questions, load_verdicts, save_questions, save_verdicts
from .stream import StreamError
from .synth import (
    NoiseConfig,
    ScenarioConfig,
    ScenarioError,
    generate_questions,
    generate_script,
    render_stream,
    save_script,
)
from .timeline import build_timeline, render_svg

EXIT_PARSE = 2
EXIT_CONFIG = 3


class InputError(Exception):
    """Missing or unreadable input file."""


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return h.hexdigest()


def _require(path: str | Path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"input file not found: {p}")
    return p


def resolve_seed(flag: int | None, cfg_seed: int | None = None, cfg_seed_explicit: bool = False) -> int:
    """Seed precedence: flag, then an explicit config value, then AMEGO_SEED, then 0."""
    if flag is not None:
        return flag
    if cfg_seed_explicit and cfg_seed is not None:
        return cfg_seed
    env = os.environ.get("AMEGO_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"AMEGO_SEED must be an integer, got {env!r}") from None
    return 0


def load_engine_config(config_path: str | None, overrides: list[str] | None) -> tuple[EngineConfig, bool]:
    """Flag > file > default; also reports whether rng_seed was set explicitly."""
    values: dict[str, str] = {}
    if config_path:
        values.update(load_kv_file(config_path))
    values.update(parse_overrides(overrides))
    return from_mapping(EngineConfig, values), "rng_seed" in values


def write_manifest(out: Path, command: str, config: dict, inputs: Sequence[str | Path], seed: int, start: float, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "tool_version": __version__,
        "wall_time_s": round(time.perf_counter() - start, 6),
    }
    if extra:
        manifest.update(extra)
    path = out if out.name == "manifest.json" else out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


# ---------------------------------------------------------------- commands


def cmd_build(args) -> int:
    start = time.perf_counter()
    stream = _require(args.stream)
    cfg, explicit = load_engine_config(args.config, args.set)
    seed = resolve_seed(args.seed, cfg.rng_seed, explicit)
    cfg = cfg.replace(rng_seed=seed)
    memory = build_memory(stream, cfg)
    out = Path(args.out)
    save_memory(memory, out)
    write_manifest(out, "build", cfg.to_dict(), [stream], seed, start)
    print(f"memory: {len(memory.tracklets)} tracklets / {len(memory.object_instances)} objects, "
          f"{len(memory.segments)} segments / {len(memory.location_instances)} locations -> {out}")
    return 0


def cmd_query(args) -> int:
    start = time.perf_counter()
    mem_path = _require(args.memory)
    q_path = _require(args.questions)
    memory = load_memory(mem_path)
    values = parse_overrides(args.set)
    cfg = from_mapping(EngineConfig, values, base=memory.config)
    seed = resolve_seed(args.seed, cfg.rng_seed, "rng_seed" in values)
    verdicts = answer_batch(q_path, memory, cfg, seed)
    out = Path(args.out)
    save_verdicts(verdicts, out)
    unmatched = sum(not v.matched for v in verdicts)
    write_manifest(out, "query", cfg.to_dict(), [mem_path, q_path], seed, start, {"unmatched": unmatched})
    print(f"{len(verdicts)} verdicts ({unmatched} unmatched) -> {out}")
    return 0


def _emit(result: dict, out: str | None, command: str, inputs, start: float) -> None:
    text = json.dumps(result, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if out:
        path = Path(out)
        path.write_text(text)
        write_manifest(path, command, {}, inputs, 0, start)


def cmd_eval(args) -> int:
    start = time.perf_counter()
    pred = _require(args.pred)
    q_path = _require(args.questions)
    try:
        verdicts = load_verdicts(pred)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise QuestionError(f"{pred}: bad verdict record: {exc!r}") from None
    try:
        result = qa_accuracy(verdicts, load_questions(q_path))
    except (KeyError, ValueError) as exc:
        raise QuestionError(f"{pred}: {exc.args[0] if exc.args else exc}") from None
    result["unmatched"] = sum(not v.matched for v in verdicts)
    _emit(result, args.out, "eval", [pred, q_path], start)
    return 0


def cmd_eval_standalone(args) -> int:
    start = time.perf_counter()
    mem_path = _require(args.memory)
    gt_path = _require(args.gt)
    memory = load_memory(mem_path)
    try:
        gt = load_ground_truth(gt_path)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    reports = evaluate_memory(memory, gt)
    _emit({k: r.to_dict() for k, r in reports.items()}, args.out, "eval-standalone", [mem_path, gt_path], start)
    return 0


def _noise_from_arg(spec: str | None) -> NoiseConfig:
    if spec is None or spec == "noiseless":
        return NoiseConfig()
    if spec == "moderate":
        return NoiseConfig.moderate()
    return from_mapping(NoiseConfig, load_kv_file(spec))


def synth_one(scenario: ScenarioConfig, noise: NoiseConfig, seed: int, outdir: Path, n_questions: int, templates) -> dict:
    outdir.mkdir(parents=True, exist_ok=True)
    script = generate_script(scenario, seed)
    render_stream(script, noise, seed + 1, outdir / "stream.jsonl")
    questions, notes = generate_questions(script, templates, n_questions, seed + 2, crop_sigma=noise.crop_noise_sigma)
    save_questions(questions, outdir / "questions.jsonl")
    save_ground_truth(script.ground_truth_tracks(), outdir / "gt.jsonl")
    save_script(script, outdir / "script.json")
    return {
        "events": len(script.events),
        "visits": len(script.visits),
        "questions": len(questions),
        "notes": notes,
    }


def _synth_job(job) -> dict:
    return synth_one(*job)


def cmd_synth(args) -> int:
    start = time.perf_counter()
    values: dict[str, str] = {}
    inputs = []
    if args.scenario:
        values.update(load_kv_file(args.scenario))
        inputs.append(args.scenario)
    values.update(parse_overrides(args.set))
    scenario = from_mapping(ScenarioConfig, values)
    scenario.validate()
    noise = _noise_from_arg(args.noise)
    noise.validate()
    if args.noise not in (None, "noiseless", "moderate"):
        inputs.append(args.noise)
    seed = resolve_seed(args.seed)
    outdir = Path(args.outdir)
    templates = args.templates.split(",") if args.templates else None
    if args.count == 1:
        jobs = [(scenario, noise, seed, outdir, args.questions, templates)]
    else:
        jobs = [(scenario, noise, seed + k, outdir / f"scenario-{k:03d}", args.questions, templates) for k in range(args.count)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_synth_job, jobs))
    else:
        summaries = [_synth_job(j) for j in jobs]
    config = {"scenario": scenario.__dict__, "noise": noise.__dict__}
    for job, summary in zip(jobs, summaries):
        write_manifest(job[3] / "manifest.json", "synth", config, inputs, job[2], start, {"summary": summary})
        for note in summary["notes"]:
            print(f"note: {note}", file=sys.stderr)
    print(f"wrote {len(jobs)} scenario(s) under {outdir}")
    return 0


def cmd_timeline(args) -> int:
    start = time.perf_counter()
    mem_path = _require(args.memory)
    timeline = build_timeline(load_memory(mem_path))
    out = Path(args.out)
    out.write_text(canonical_json(timeline) + "\n")
    if args.svg:
        Path(args.svg).write_text(render_svg(timeline))
    write_manifest(out, "timeline", {}, [mem_path], 0, start)
    print(f"timeline: {timeline['n_spans']} spans in {len(timeline['rows'])} rows -> {out}")
    return 0


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amego", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"amego {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a memory from a perception stream")
    b.add_argument("--stream", required=True)
    b.add_argument("--config")
    b.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="answer a question file against a memory")
    q.add_argument("--memory", required=True)
    q.add_argument("--questions", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--seed", type=int)
    q.add_argument("--set", action="append", metavar="KEY=VALUE")
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("eval", help="QA accuracy of a verdict file")
    e.add_argument("--pred", required=True)
    e.add_argument("--questions", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    es = sub.add_parser("eval-standalone", help="temporal metrics of a memory against ground truth")
    es.add_argument("--memory", required=True)
    es.add_argument("--gt", required=True)
    es.add_argument("--out")
    es.set_defaults(func=cmd_eval_standalone)

    s = sub.add_parser("synth", help="generate script, stream, questions and ground truth")
    s.add_argument("--scenario", help="flat key=value scenario file")
    s.add_argument("--noise", help="noiseless | moderate | key=value noise file")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario field")
    s.add_argument("--seed", type=int)
    s.add_argument("--outdir", required=True)
    s.add_argument("--questions", type=int, default=100, help="questions per scenario")
    s.add_argument("--templates", help="comma-separated subset, e.g. Q1,Q7")
    s.add_argument("--count", type=int, default=1, help="number of scenarios (seeds seed..seed+count-1)")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("timeline", help="export a memory timeline")
    t.add_argument("--memory", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--svg")
    t.set_defaults(func=cmd_timeline)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"amego: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, StreamError, QuestionError, MemoryFormatError) as exc:
        print(f"amego: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
