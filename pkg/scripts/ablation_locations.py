"""Location-segment ablations: hysteresis length and the flow and hand filters.

Scenarios walk between visits with hands visible and sometimes stand still
without hands, so each filter is the only thing separating some visits.
"""

from amego.config import EngineConfig
from amego.synth import NoiseConfig, ScenarioConfig

from common import base_parser, print_table, run_variants


def main() -> None:
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--stand-prob", type=float, default=0.5, help="fraction of gaps spent standing still")
    args = p.parse_args()
    scenario = ScenarioConfig(total_frames=args.frames, walking_hands=True, stand_gap_prob=args.stand_prob)
    variants = {
        "s_l = e_l = 1": EngineConfig(s_l=1, e_l=1),
        "no flow filter": EngineConfig(use_flow_filter=False),
        "no hand filter": EngineConfig(use_hand_filter=False),
        "full": EngineConfig(),
    }
    print_table(run_variants(scenario, NoiseConfig.moderate(), variants, args.seeds, "location"))


if __name__ == "__main__":
    main()
