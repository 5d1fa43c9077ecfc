"""Compare the ESD of a sparse Wigner matrix with its UGW limit estimate.

The entries are Bernoulli(d/n) times marks drawn from gamma, so the local
limit is a Poisson(d) UGW tree with iid gamma marks.  Prints the first even
moments of both measures and the distances between them.

    python scripts/esd_vs_limit.py --n 2000 --d 2 --samples 400 --h 8
"""

import argparse

from heavytail.limits import DegreeLaw
from heavytail.models import EnsembleConfig, sample_sparse_wigner
from heavytail.spectral import (
    esd,
    kolmogorov_distance,
    limit_esd_estimate,
    mixture,
    moments,
    surrogate_bl,
    w1_distance,
)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=float, default=2.0)
    p.add_argument("--reps", type=int, default=3, help="independent matrices to average")
    p.add_argument("--samples", type=int, default=400, help="UGW trees in the limit estimate")
    p.add_argument("--h", type=int, default=8)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    gamma = {"point_masses": [[-1.0, 0.5], [1.0, 0.5]]}
    E = mixture([esd(sample_sparse_wigner(EnsembleConfig("sparse_wigner", args.n, d=args.d, gamma=gamma,
                                                          seed=args.seed + r)), check=False)
                 for r in range(args.reps)])
    L = limit_esd_estimate("ugw", {"gamma": gamma, "pi": DegreeLaw.poisson(args.d)}, args.h, None,
                           args.samples, seed=args.seed, jobs=args.jobs)
    print(f"{'k':>3} {'esd':>12} {'limit':>12}")
    for k in (2, 4, 6):
        print(f"{k:>3} {moments(E, k):12.5f} {moments(L, k):12.5f}")
    print(f"kolmogorov {kolmogorov_distance(E, L):.4f}  w1 {w1_distance(E, L):.4f}  "
          f"surrogate_bl {surrogate_bl(E, L):.4f}")


if __name__ == "__main__":
    main()
