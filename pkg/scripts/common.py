"""Shared helpers for the experiment scripts."""

from __future__ import annotations

import argparse

from amego.config import EngineConfig
from amego.memory import build_memory
from amego.metrics import evaluate_memory
from amego.synth import NoiseConfig, generate_script, render_records


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--frames", type=int, default=30_000)
    return p


def run_variants(scenario, noise: NoiseConfig, variants: dict[str, EngineConfig], seeds, kind: str) -> dict[str, list]:
    """Standalone metrics and instance count of every config variant on every seeded scenario."""
    out: dict[str, list] = {name: [] for name in variants}
    for seed in seeds:
        script = generate_script(scenario, seed)
        gt = script.ground_truth_tracks()
        for name, cfg in variants.items():
            memory = build_memory(render_records(script, noise, seed + 1), cfg)
            instances = memory.object_instances if kind == "object" else memory.location_instances
            out[name].append((evaluate_memory(memory, gt)[kind], len(instances)))
    return out


def print_table(results: dict[str, list]) -> None:
    print(f"{'variant':<28}{'AIoU P':>8}{'AIoU GT':>9}{'dN':>8}{'ID-sw':>8}{'inst':>7}{'gt ids':>8}")
    for name, rows in results.items():
        reports = [r for r, _ in rows]
        n = len(rows)
        p = sum(r.aiou_p for r in reports) / n
        g = sum(r.aiou_gt for r in reports) / n
        dn = sum(r.delta_n for r in reports) / n
        ids = sum(r.id_switch for r in reports) / n
        inst = sum(k for _, k in rows) / n
        gt_ids = sum(r.counts["gt_identities"] for r in reports) / n
        print(f"{name:<28}{p:>8.3f}{g:>9.3f}{dn:>8.1f}{ids:>8.3f}{inst:>7.1f}{gt_ids:>8.1f}")
