"""Discretized KL divergence between two mark laws as the mesh shrinks.

    python scripts/kl_sweep.py --p '{"gaussian": [0, 1]}' --q '{"gaussian": [1, 1]}'

For these two Gaussians the values approach the continuous KL of 1/2.
"""

import argparse
import json

from heavytail.entropy import discretized_kl_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--p", default='{"gaussian": [0, 1]}', help="mark law spec as JSON")
    p.add_argument("--q", default='{"gaussian": [1, 1]}', help="mark law spec as JSON")
    p.add_argument("--kappa", type=float, default=8.0, help="quantizer range")
    p.add_argument("--levels", type=int, default=8, help="use delta = 2^-1 .. 2^-levels")
    args = p.parse_args()
    deltas = [2.0 ** -j for j in range(1, args.levels + 1)]
    for delta, kl in discretized_kl_sweep(json.loads(args.p), json.loads(args.q), args.kappa, deltas):
        print(f"delta={delta:<10.6g} kl={kl:.10f}")


if __name__ == "__main__":
    main()
