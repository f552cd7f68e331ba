"""Question-answering accuracy per template on synthetic scenarios, noiseless and noisy."""

import numpy as np

from amego.config import EngineConfig
from amego.memory import build_memory
from amego.metrics import qa_accuracy
from amego.query import TEMPLATES, answer_batch
from amego.synth import NoiseConfig, ScenarioConfig, generate_questions, generate_script, render_records

from common import base_parser


def run(scenario, noise, seeds, n_questions):
    questions, verdicts = [], []
    for seed in seeds:
        script = generate_script(scenario, seed)
        memory = build_memory(render_records(script, noise, seed + 1), EngineConfig())
        qs, notes = generate_questions(script, None, n_questions, seed + 2, crop_sigma=noise.crop_noise_sigma, qid_prefix=f"{seed}-")
        for note in notes:
            print(f"  note (seed {seed}): {note}")
        questions += qs
        verdicts += answer_batch(qs, memory, seed=0)
    acc = qa_accuracy(verdicts, questions)
    acc["unmatched"] = sum(not v.matched for v in verdicts)
    return acc


def main() -> None:
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--questions", type=int, default=250, help="questions per scenario")
    p.add_argument("--locations", type=int, default=6)
    args = p.parse_args()
    scenario = ScenarioConfig(total_frames=args.frames, n_locations=args.locations)
    settings = {"noiseless": NoiseConfig(crop_noise_sigma=0.05), "moderate": NoiseConfig.moderate()}
    print(f"{'setting':<12}" + "".join(f"{t:>7}" for t in TEMPLATES) + f"{'all':>7}{'unmatched':>11}")
    for name, noise in settings.items():
        acc = run(scenario, noise, args.seeds, args.questions)
        cells = "".join(f"{acc['per_template'].get(t, np.nan):>7.2f}" for t in TEMPLATES)
        print(f"{name:<12}{cells}{acc['overall']:>7.3f}{acc['unmatched']:>11}")
    print(f"{'random':<12}" + "".join(f"{0.2:>7.2f}" for _ in TEMPLATES) + f"{0.2:>7.3f}")


if __name__ == "__main__":
    main()
