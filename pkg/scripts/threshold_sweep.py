"""Sweeps of the instance-assignment thresholds and the chain IoU under moderate noise.

Prototypes are allowed to be fairly similar (pairwise cosine up to
--separation), so low thresholds merge distinct objects or places and high
thresholds split one into several instances.
"""

import numpy as np

from amego.config import EngineConfig
from amego.synth import NoiseConfig, ScenarioConfig

from common import base_parser, print_table, run_variants


def main() -> None:
    p = base_parser(__doc__.splitlines()[0])
    p.add_argument("--sigma", type=float, default=0.3, help="embedding noise per component")
    p.add_argument("--separation", type=float, default=0.75, help="largest cosine between prototypes")
    args = p.parse_args()
    scenario = ScenarioConfig(total_frames=args.frames, separation_max=args.separation)
    noise = NoiseConfig.moderate()
    noise = NoiseConfig(**{**noise.__dict__, "embedding_noise_sigma": args.sigma})
    grids = {
        "object": ("sim_assign_obj", np.round(np.arange(0.3, 0.95, 0.1), 2)),
        "location": ("sim_assign_loc", np.round(np.arange(0.2, 0.95, 0.1), 2)),
    }
    for kind, (field, values) in grids.items():
        print(f"\n{kind} instances, {field}")
        variants = {f"{field} = {v}": EngineConfig(**{field: float(v)}) for v in values}
        print_table(run_variants(scenario, noise, variants, args.seeds, kind))
    print("\nobject tracklets, iou_match")
    variants = {f"iou_match = {v}": EngineConfig(iou_match=v) for v in (0.1, 0.3, 0.5, 0.7, 0.9)}
    print_table(run_variants(scenario, noise, variants, args.seeds, "object"))


if __name__ == "__main__":
    main()
