"""Mean absolute p-value error of the K-NN estimate as n grows (2-D standard normal)."""

import argparse

from rankad.experiments import consistency_errors


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="200,800,3200,12800")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--stat-mode", default="mean_first_k", choices=["mean_first_k", "kth_distance"])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sizes = tuple(int(s) for s in args.sizes.split(","))
    errors = consistency_errors(sizes, repeats=args.repeats, seed=args.seed, statistic_mode=args.stat_mode)
    for n, err in errors.items():
        print(f"n={n} mean_abs_error={err:.4f}")


if __name__ == "__main__":
    main()
