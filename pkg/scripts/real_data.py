"""Ridge vs 1-step vs 2-step test MSE on the UCI regression sets found in --data-dir."""

import argparse
from pathlib import Path

from selfdistill.data import PRESETS
from selfdistill.experiments import ExperimentConfig, run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="data")
    parser.add_argument("--out-dir", default="results/real_data")
    args = parser.parse_args()
    for name, spec in PRESETS.items():
        if not (Path(args.data_dir) / spec.filename).is_file():
            print(f"{name}: {spec.filename} not in {args.data_dir}, skipped")
            continue
        cfg = ExperimentConfig(kind="real-data", dataset=name, data_path=args.data_dir, k_list=[0, 1, 2], out_dir=args.out_dir)
        for row in run(cfg)["rows"]:
            print(f"{name:12s} {row['estimator']:10s} lambda {row['lambda']:<10.4g} test MSE {row['test_mse']:.4f}")


if __name__ == "__main__":
    main()
