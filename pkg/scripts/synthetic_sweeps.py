"""Risk-vs-penalty curves for k = 0..4 on the two rank-4 synthetic instances.

``distinct``: s = (1, 1/2, 1/3, 1/4); the 4-step curve should sit on the lower bound.
``repeated``: s = (1, 1, 1/2, 1/3); two equal values leave a gap above it.
"""

import argparse
import json
from pathlib import Path

from selfdistill.experiments import RANK4_DISTINCT, ExperimentConfig, InstanceSpec, run

INSTANCES = {
    "distinct": RANK4_DISTINCT,
    "repeated": InstanceSpec(singular_values=[1.0, 1.0, 1 / 2, 1 / 3], theta="u1", gamma=0.125),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results/sweeps")
    args = parser.parse_args()
    for name, spec in INSTANCES.items():
        cfg = ExperimentConfig(kind="synth-sweep", instance=spec, out_dir=str(Path(args.out_dir) / name))
        summary = run(cfg)
        best = {k: v["min_excess_risk"] for k, v in summary["per_k"].items()}
        print(name, "lower bound", summary["lower_bound"], json.dumps(best))


if __name__ == "__main__":
    main()
