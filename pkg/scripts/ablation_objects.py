"""Object-tracklet ablations: start/end filters, hand-gated termination and the tracker.

Runs on scenarios with bursty spurious detections, hands that leave the view
mid-interaction and short occlusions during which the hand moves the object,
so every component has something to do.
"""

from amego.config import EngineConfig
from amego.synth import NoiseConfig, ScenarioConfig

from common import base_parser, print_table, run_variants


def main() -> None:
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--spurious", type=float, default=0.1, help="spurious detections per frame")
    p.add_argument("--hand-exit", type=float, default=0.3, help="probability an event has the hand leave the view")
    p.add_argument("--occlusion", type=float, default=0.3, help="probability an event has an occluded move")
    args = p.parse_args()
    scenario = ScenarioConfig(total_frames=args.frames, hand_exit_prob=args.hand_exit, occlusion_prob=args.occlusion)
    noise = NoiseConfig(spurious_rate=args.spurious, bursty_spurious=True, detection_drop_prob=0.2, hand_miss_prob=0.05)
    variants = {
        "s_o = 1": EngineConfig(s_o=1),
        "e_o = 1": EngineConfig(e_o=1),
        "no hand-gated termination": EngineConfig(hand_gated_termination=False),
        "no tracker": EngineConfig(use_tracker=False),
        "full": EngineConfig(),
    }
    print_table(run_variants(scenario, noise, variants, args.seeds, "object"))


if __name__ == "__main__":
    main()
