"""Iterate the cycle-to-cycle profile map from e^{-x} and watch the shape approach psi."""
import argparse

import numpy as np

from bimono import semigroup as sg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sigma2", type=float, default=1e-3)
    ap.add_argument("--x-max", type=float, default=24.0)
    ap.add_argument("--max-iter", type=int, default=4000)
    ap.add_argument("--every", type=int, default=100)
    args = ap.parse_args()
    prof = sg.ClusterProfile.from_function(lambda x: np.exp(-x), grid=sg.grid_for(args.sigma2, args.x_max))
    print(f"{'n':>5} {'shape L1':>10} {'raw L1':>10} {'m':>9} {'L':>10}")
    for n in range(1, args.max_iter + 1):
        prof = sg.iterate_profile(prof, args.sigma2)
        if n % args.every == 0:
            shape = sg.shape_distance(prof)
            print(f"{n:5d} {shape:10.5f} {sg.l1_distance(prof):10.5f} {prof.m:9.5f} {prof.L:10.4f}")
            if shape < 1e-2:
                break


if __name__ == "__main__":
    main()
