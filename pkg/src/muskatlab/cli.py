"""Command-line entry point.

    muskatlab simulate <config> [--out DIR]
    muskatlab verify <suite> [--config FILE]
    muskatlab decompose <config>
    muskatlab weights build <spectrum-file>
    muskatlab kernels sweep <kernel-spec>
    muskatlab export <run-dir>

Exit codes: 0 success, 1 failed check or aborted run, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import config as cfgmod
from .diagnostics import CSV_COLUMNS, DiagnosticsRecord, KernelSpec, radial_profile
from .evolution import checkpoint_save, initial_state, run
from .quadrature import FINE, REFERENCE
from .weights import Weight, build_weight_from_spectrum, read_spectrum, weight_from_items

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

PLOT_QUANTITIES = ("A_phi", "B_phi", "lip_f", "sup_f", "dissipation")


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".w-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_plot_data(run_dir: str) -> list[str]:
    """Two-column ``t value`` files, one per monitored quantity."""
    path = os.path.join(run_dir, "diagnostics.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path}: no diagnostics to export")
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0] != DiagnosticsRecord.header():
        raise ValueError(f"{path}: missing or unexpected header")
    recs = [DiagnosticsRecord.from_row(ln) for ln in lines[1:]]
    if not recs:
        raise ValueError(f"{path}: empty history")
    out = []
    for q in PLOT_QUANTITIES:
        p = os.path.join(run_dir, f"{q}.dat")
        body = f"# t {q}\n" + "".join(f"{r.t!r} {getattr(r, q)!r}\n" for r in recs)
        atomic_write(p, body)
        out.append(p)
    return out


def _threads(args) -> None:
    if args.threads is not None:
        os.environ["MUSKATLAB_THREADS"] = str(args.threads)


def _with_resolution(rc: cfgmod.RunConfig, res: str | None) -> cfgmod.RunConfig:
    if res is None:
        return rc
    items = dict(rc.items)
    q = REFERENCE if res == "ref" else FINE
    items["quad.n_r"], items["quad.n_theta"] = str(q.n_r), str(q.n_theta)
    return cfgmod.build(items)


def cmd_simulate(args) -> int:
    rc = _with_resolution(cfgmod.load(args.config), args.resolution)
    out = args.out or rc.output_dir
    os.makedirs(out, exist_ok=True)
    atomic_write(os.path.join(out, "config.txt"), rc.to_text())
    res = run(rc.sim, checkpoint_dir=out, dissipation=rc.dissipation)
    atomic_write(os.path.join(out, "diagnostics.csv"), res.csv())
    checkpoint_save(res.state, os.path.join(out, "final.ck"), rc.sim.weight)
    export_plot_data(out)
    if res.aborted:
        print(f"run aborted: {res.aborted}", file=sys.stderr)
        return EXIT_FAIL
    print(f"completed {res.state.step} steps to t={res.state.t:.6g}; {len(res.records)} records in {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import SUITES, SuiteConfig, run_suite

    if args.suite not in SUITES:
        raise cfgmod.ConfigError("suite", f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    kw = {}
    if args.config:
        rc = cfgmod.load(args.config)
        kw["grid"] = rc.sim.grid
    if args.resolution:
        kw["resolution"] = args.resolution
    if args.seed is not None:
        kw["seed"] = int(args.seed)
    rep = run_suite(args.suite, SuiteConfig(**kw))
    out = args.out or "out"
    atomic_write(os.path.join(out, f"verify_{args.suite}.json"), rep.to_json() + "\n")
    atomic_write(os.path.join(out, f"verify_{args.suite}.txt"), rep.table() + "\n")
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_decompose(args) -> int:
    from .muskat_ops import decompose, tail_estimate

    rc = _with_resolution(cfgmod.load(args.config), args.resolution)
    st = initial_state(rc.sim)
    f = st.field()
    d = decompose(f, f, rc.sim.quad)
    out = args.out or rc.output_dir
    os.makedirs(out, exist_ok=True)
    np.savez(os.path.join(out, "decomposition.npz"), f=f.values, total=d.total.values, p_part=d.p_part.values,
             drift_x=d.drift[0].values, drift_y=d.drift[1].values, remainder=d.remainder.values)
    lines = [
        f"residual={float(d.residual)!r}",
        f"total_l2={d.total.l2()!r}",
        f"p_part_l2={d.p_part.l2()!r}",
        f"drift_term_l2={d.drift_term.l2()!r}",
        f"remainder_l2={d.remainder.l2()!r}",
        f"tail_estimate={float(tail_estimate(f, rc.sim.quad))!r}",
    ]
    atomic_write(os.path.join(out, "decomposition.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_weights(args) -> int:
    if args.action != "build":
        raise cfgmod.ConfigError("weights", f"unknown action {args.action!r}; expected 'build'")
    r, w = read_spectrum(args.path)
    bw = build_weight_from_spectrum(r, w, masses=args.masses)
    text = bw.weight.to_text()
    out = args.out or "out"
    atomic_write(os.path.join(out, "weight.txt"), text)
    print(text, end="")
    print(f"# thresholds: {' '.join(f'{t:.6g}' for t in bw.thresholds)}")
    print(f"# enhanced tail integral: {bw.enhanced_integral:.6g}")
    return EXIT_OK


def parse_kernel_spec(text: str) -> KernelSpec:
    """``order=1,b=0.5,gk=2,kind=log_pow,a=0.375`` (weight keys optional)."""
    items = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise cfgmod.ConfigError("kernel", f"expected key=value, got {part!r}")
        k, v = (p.strip() for p in part.split("=", 1))
        items[k] = v
    unknown = set(items) - {"order", "b", "gk", "kind", "a", "breakpoints", "levels"}
    if unknown:
        raise cfgmod.ConfigError(sorted(unknown)[0], "unknown kernel key")
    try:
        wi = {k: items[k] for k in ("kind", "a") if k in items}
        weight = weight_from_items(wi) if wi else Weight.unit()
        return KernelSpec(int(items.get("order", "1")), float(items.get("b", "0.5")), int(items.get("gk", "0")), weight)
    except ValueError as err:
        raise cfgmod.ConfigError("kernel", str(err)) from None


def cmd_kernels(args) -> int:
    if args.action != "sweep":
        raise cfgmod.ConfigError("kernels", f"unknown action {args.action!r}; expected 'sweep'")
    spec = parse_kernel_spec(args.spec)
    lams = np.geomspace(args.lo, args.hi, args.n)
    rows = ["# |xi| m(xi) m/|xi|^(2b)"]
    for x in map(float, lams):
        m = radial_profile(spec, x)
        rows.append(f"{x!r} {m!r} {m / x ** (2 * spec.b)!r}")
    out = args.out or "out"
    atomic_write(os.path.join(out, "kernel_sweep.dat"), "\n".join(rows) + "\n")
    print("\n".join(rows))
    return EXIT_OK


def cmd_export(args) -> int:
    files = export_plot_data(args.run_dir)
    print("\n".join(files))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--resolution", choices=("ref", "fine"), default=None)
    p = argparse.ArgumentParser(prog="muskatlab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("simulate", parents=[common])
    s.add_argument("config_pos", nargs="?")
    s = sub.add_parser("verify", parents=[common])
    s.add_argument("suite")
    s = sub.add_parser("decompose", parents=[common])
    s.add_argument("config_pos", nargs="?")
    s = sub.add_parser("weights", parents=[common])
    s.add_argument("action")
    s.add_argument("path")
    s.add_argument("--masses", action="store_true")
    s = sub.add_parser("kernels", parents=[common])
    s.add_argument("action")
    s.add_argument("spec")
    s.add_argument("--lo", type=float, default=0.1)
    s.add_argument("--hi", type=float, default=10.0)
    s.add_argument("-n", type=int, default=9)
    s = sub.add_parser("export", parents=[common])
    s.add_argument("run_dir")
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "decompose": cmd_decompose,
    "weights": cmd_weights,
    "kernels": cmd_kernels,
    "export": cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_CONFIG if err.code else EXIT_OK
    if getattr(args, "config_pos", None):
        args.config = args.config_pos
    if args.cmd in ("simulate", "decompose") and not args.config:
        print("error: a config file is required", file=sys.stderr)
        return EXIT_CONFIG
    _threads(args)
    try:
        return COMMANDS[args.cmd](args)
    except cfgmod.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
