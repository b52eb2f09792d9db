"""Ratio of tuned ridge risk to tuned r-step risk as the rank r grows (d = 100)."""

import argparse

from selfdistill.experiments import ExperimentConfig, run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results/separation")
    args = parser.parse_args()
    summary = run(ExperimentConfig(kind="separation", out_dir=args.out_dir))
    for s_last, fit in summary["fits"].items():
        print(f"s_r = {s_last}: slope {fit['slope']:.4f}, intercept {fit['intercept']:.4f}, R^2 {fit['r_squared']:.4f}")


if __name__ == "__main__":
    main()
