"""Size of the optimal imitation parameters as neighbouring singular values merge."""

import argparse

from selfdistill.experiments import ExperimentConfig, run


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results/gap_study")
    args = parser.parse_args()
    summary = run(ExperimentConfig(kind="gap-study", k_list=[1, 2, 3, 4], out_dir=args.out_dir))
    for row in summary["rows"]:
        mag = "n/a" if row["max_abs_xi"] is None else f"{row['max_abs_xi']:.4g}"
        print(f"eps {row['eps']:<5} k {row['k']}  max|xi| {mag:>10}  cond(A) {row['condition_number']:.3g}")


if __name__ == "__main__":
    main()
