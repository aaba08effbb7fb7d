"""Tabulate m(xi) / |xi|^(2b) for the three difference kernels, optionally weighted."""

import argparse

import numpy as np

from muskatlab import diagnostics as dg
from muskatlab.weights import Weight


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--b", type=float, nargs="*", default=[0.25, 0.5, 0.75, 1.25, 1.5, 1.75])
    p.add_argument("--lo", type=float, default=0.05)
    p.add_argument("--hi", type=float, default=50.0)
    p.add_argument("-n", type=int, default=7)
    p.add_argument("--weighted", action="store_true", help="use kappa = log(4+r)^(3/8), squared")
    args = p.parse_args()
    w, gk = (Weight.log_pow(0.375), 2) if args.weighted else (Weight.unit(), 0)
    xs = np.geomspace(args.lo, args.hi, args.n)
    for order in (dg.ORDER_DELTA, dg.ORDER_SECOND, dg.ORDER_TAYLOR):
        for b in args.b:
            try:
                spec = dg.KernelSpec(order, b, gk, w)
            except ValueError:
                continue  # b outside the convergent range for this order
            row = " ".join(f"{dg.radial_profile(spec, float(x)) / x ** (2 * b):.6g}" for x in xs)
            print(f"order={order} b={b:g}: {row}", flush=True)


if __name__ == "__main__":
    main()
