"""Decay bisection plus an amplitude table at several cutoffs.

Prints, per run, whether A_phi stayed nonincreasing and the largest
relative increase of A_phi and of |grad f|_inf.
"""

import argparse
from dataclasses import replace

from muskatlab.verification import SuiteConfig, decay_bisection, decay_run, growth_probe


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--eps", type=float, nargs="*", default=[1e-3])
    p.add_argument("--amps", type=float, nargs="*", default=[3.0, 10.0, 30.0, 100.0, 300.0])
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--bisect", action="store_true")
    args = p.parse_args()
    for eps in args.eps:
        cfg = replace(SuiteConfig(), decay_epsilon=eps)
        for a in args.amps:
            o = decay_run(cfg, a, args.t_end)
            print(f"eps={eps:g} amp={a:g} nonincreasing={o.nonincreasing} max_dA/A={o.max_A_increase:.4g} "
                  f"lip {o.lip0:.4g} -> {o.lip_max:.4g}", flush=True)
        if args.bisect:
            bis = decay_bisection(cfg)
            big = growth_probe(cfg, bis.threshold)
            print(f"eps={eps:g} threshold={bis.threshold:.4g} bracket={bis.bracket} found={bis.found}; "
                  f"10x: lip {big.lip0:.4g} -> {big.lip_max:.4g}")


if __name__ == "__main__":
    main()
