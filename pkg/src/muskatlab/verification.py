"""Named check suites with pass/fail reports.

Every threshold lives in ``THRESHOLDS``; checks read it and never hard-code
a tolerance.  Random fields come from :func:`field_family` with fixed seeds:
family A calibrates bounded-ratio constants and the disjoint family B
validates them.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import diagnostics as dg
from . import muskat_ops as mo
from .evolution import InitialData, SimConfig, initial_state, run, step
from .quadrature import FINE, REFERENCE, QuadratureSpec
from .spectral_core import (
    Grid,
    RealField,
    SpectralField,
    gagliardo_seminorm,
    inverse,
    lipschitz_norm,
    power_symbol,
    rescale_critical,
    shift,
    sobolev_norm,
    transform,
)
from .weights import (
    Weight,
    build_weight_from_spectrum,
    equivalence_constants,
    phi_from_kappa,
    phi_table,
    radial_spectrum_of_lattice,
    standard_lambdas,
    validate_admissible,
    weight_growth_check,
)

THRESHOLDS_VERSION = 1
THRESHOLDS: dict[str, float] = {
    "identities.linear_rel": 1e-3,
    "identities.halving_ratio": 2.0,
    "identities.decomposition": 1e-3,
    "identities.bound_violations": 0.0,
    "identities.kernel_identity": 1e-3,
    "identities.divergence_constant": 1e-6,
    "identities.fd_dphi": 2e-2,
    "identities.leibniz": 1e-12,
    "kernels.constant_spread": 1e-3,
    "kernels.exponent_rel": 1e-2,
    "kernels.bracket_drift": 5e-2,
    "kernels.gagliardo_rel": 1e-2,
    "weights.ratio_drift": 5e-2,
    "symmetry.exact": 1e-10,
    "symmetry.scaling": 1e-6,
    "energy.pairing_ratio": 1e-2,
    "energy.self_adjoint": 1e-10,
    "energy.interp_unit": 1e-9,
    "energy.calibration_margin": 2.0,
    "decay.amplitude_lo": 1e-3,
    "decay.amplitude_hi": 30.0,
    "decay.bisection_steps": 5.0,
    "convergence.slope_lo": 0.8,
    "convergence.slope_hi": 1.2,
    "decay.t_end": 5.0,
}

FAMILY_A_SEED = 20240611
FAMILY_B_SEED = 77003


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    resolution: str = "ref"
    slope: float | None = None
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list = field(default_factory=list)
    thresholds_version: int = THRESHOLDS_VERSION

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, value: float, threshold: float, passed: bool, **kw) -> Check:
        c = Check(name, float(value), float(threshold), bool(passed), **kw)
        self.checks.append(c)
        return c

    def to_json(self) -> str:
        body = {
            "suite": self.suite,
            "passed": self.passed,
            "thresholds_version": self.thresholds_version,
            "checks": [asdict(c) for c in sorted(self.checks, key=lambda c: c.name)],
        }
        return json.dumps(body, indent=2, sort_keys=True, default=_json_default)

    def table(self) -> str:
        rows = [f"suite {self.suite}: {'PASS' if self.passed else 'FAIL'}"]
        w = max([len(c.name) for c in self.checks] + [5])
        for c in sorted(self.checks, key=lambda c: c.name):
            sl = "" if c.slope is None else f" slope={c.slope:.3g}"
            rows.append(
                f"  {'ok ' if c.passed else 'BAD'} {c.name:<{w}} value={c.value:.6g} threshold={c.threshold:.3g}"
                f" [{c.resolution}]{sl} {c.detail}".rstrip()
            )
        return "\n".join(rows)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


# -- field families --------------------------------------------------------------

def field_family(grid: Grid, seed: int, count: int = 10, lip: float = 0.3, kmax_frac: float = 1.0 / 3.0) -> list[RealField]:
    """``count`` random fields with Gaussian coefficients on ``|k| <= kmax_frac n``.

    Each field is mean-free and scaled so that ``||grad f||_inf = lip``.
    """
    rng = np.random.default_rng(seed)
    mask = (grid.kint <= kmax_frac * grid.n) & (grid.kint > 0)
    out = []
    for _ in range(count):
        c = (rng.standard_normal(mask.shape) + 1j * rng.standard_normal(mask.shape)) * mask
        v = np.fft.ifft2(c).real
        F = transform(RealField(grid, v))
        F = SpectralField(grid, np.where(grid.kmag == 0, 0.0, F.coeffs))
        F = F * (lip / lipschitz_norm(F))
        out.append(inverse(F))
    return out


def gaussian(grid: Grid, amp: float = 1.0, width: float = 2.0, center=None) -> RealField:
    return InitialData("gaussian", amplitude=amp, width=width, center=center).sample(grid)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    nb = float(np.linalg.norm(b))
    return float(np.linalg.norm(a - b)) / nb if nb > 0 else float(np.linalg.norm(a))


def _quad_for(resolution: str) -> QuadratureSpec:
    if resolution == "ref":
        return REFERENCE
    if resolution == "fine":
        return FINE
    raise ValueError(f"resolution must be 'ref' or 'fine', got {resolution!r}")


@dataclass(frozen=True)
class SuiteConfig:
    grid: Grid = Grid(128, 32.0)
    resolution: str = "ref"
    seed: int = FAMILY_A_SEED
    family_size: int = 10
    workers: int | None = None
    # decay runs use a smaller grid and rule so that the bisection fits a desk budget
    decay_grid: Grid = Grid(64, 32.0)
    decay_quad: QuadratureSpec = QuadratureSpec(32, 16)
    decay_epsilon: float = 1e-3

    @property
    def quad(self) -> QuadratureSpec:
        return _quad_for(self.resolution)

    def family(self, which: str = "A") -> list[RealField]:
        seed = self.seed if which == "A" else self.seed ^ FAMILY_B_SEED
        return field_family(self.grid, seed, self.family_size)


# -- identities ----------------------------------------------------------------

def check_linear_identity(cfg: SuiteConfig, rep: SuiteReport, amplitude: float = 1e-6) -> None:
    """``L(0) = <D>``: the quadrature nonlinearity at tiny amplitude against ``-<D> f``."""
    T = THRESHOLDS
    f = cfg.family("A")[0]
    F = transform(f)
    F = F * (amplitude / float(np.max(np.abs(f.values))))
    f = inverse(F)
    exact = -inverse(SpectralField(f.grid, power_symbol(f.grid, 1.0) * F.coeffs)).values
    got = mo.muskat_rhs(f, cfg.quad, cfg.workers).values
    e = _rel(got, exact)
    rep.add("linear_identity.rel_error", e, T["identities.linear_rel"], e < T["identities.linear_rel"], resolution=cfg.resolution)
    # convergence of the bare polar rule for <D> (closures on, exact linear part off)
    target = -exact
    e1 = _rel(mo.closed_linear_quadrature(f, REFERENCE).values, target)
    e2 = _rel(mo.closed_linear_quadrature(f, FINE).values, target)
    ratio = e1 / e2 if e2 > 0 else math.inf
    rep.add("linear_identity.halving_on_doubling", ratio, T["identities.halving_ratio"],
            ratio >= T["identities.halving_ratio"], resolution="ref->fine", slope=math.log2(ratio),
            detail=f"bare-rule errors {e1:.3g} -> {e2:.3g}")


def check_decomposition(cfg: SuiteConfig, rep: SuiteReport, count: int | None = None, audit_stride: int = 1) -> None:
    T = THRESHOLDS
    fa = cfg.family("A")
    fb = cfg.family("B")
    n = len(fa) if count is None else count
    worst = 0.0
    viol = 0
    samples = 0
    ratio = 0.0
    for f, g in list(zip(fa, fb))[:n]:
        d = mo.decompose(f, g, cfg.quad, cfg.workers)
        worst = max(worst, d.residual)
        a = mo.remainder_symbol_audit(f, cfg.quad, stride=audit_stride)
        viol += a.violations
        samples += a.samples
        ratio = max(ratio, a.max_ratio)
    rep.add("decomposition.max_residual", worst, T["identities.decomposition"], worst < T["identities.decomposition"],
            resolution=cfg.resolution, detail=f"{n} fields")
    rep.add("remainder_bound.violations", viol, T["identities.bound_violations"], viol <= T["identities.bound_violations"],
            resolution=cfg.resolution, detail=f"{samples} samples, max |M|/bound = {ratio:.3g}")


ZETAS = ((0.0, 0.0), (1.0, 0.0), (0.7, -0.7))


def check_kernel_identity(cfg: SuiteConfig, rep: SuiteReport) -> None:
    T = THRESHOLDS
    g = gaussian(cfg.grid)
    for z in ZETAS:
        r = mo.kernel_identity_check(z, g, cfg.quad)
        tag = f"({z[0]:g},{z[1]:g})"
        rep.add(f"kernel_identity.relerr{tag}", r.relerr, T["identities.kernel_identity"],
                r.relerr < T["identities.kernel_identity"], resolution=cfg.resolution,
                detail=f"closed-form gap {r.exact_rel:.3g}")
    worst = 0.0
    for z in ZETAS:
        for a in ((0.3, 0.8), (-1.2, 0.5), (2.0, -0.1)):
            d, c = mo.divergence_constant(z, a, 3.0)
            worst = max(worst, abs(d - c))
    rep.add("kernel_identity.cube_exponent", worst, T["identities.divergence_constant"],
            worst < T["identities.divergence_constant"])
    # the first power (not the cube) must fail the same test
    d, c = mo.divergence_constant((1.0, 0.0), (0.3, 0.8), 1.0)
    rep.add("kernel_identity.first_power_rejected", abs(d - c), T["identities.divergence_constant"],
            abs(d - c) > T["identities.divergence_constant"])


def check_fd_dphi(cfg: SuiteConfig, rep: SuiteReport) -> None:
    T = THRESHOLDS
    g = gaussian(cfg.grid)
    G = transform(g)
    for name, k in (("unit", Weight.unit()), ("log_pow_3/8", Weight.log_pow(0.375))):
        fd = mo.weighted_fd_laplacian(g, k, cfg.quad).values
        sp = inverse(mo.weighted_dhalf(G, k)).values
        e = _rel(fd, sp)
        ex = inverse(SpectralField(g.grid, mo.weighted_fd_exact_symbol(g.grid, k) * G.coeffs)).values
        rep.add(f"fd_dphi.{name}", e, T["identities.fd_dphi"], e < T["identities.fd_dphi"], resolution=cfg.resolution,
                detail=f"rule vs angle-averaged closed form {_rel(fd, ex):.3g}")


def check_leibniz(cfg: SuiteConfig, rep: SuiteReport) -> None:
    rng = np.random.default_rng(cfg.seed)
    fam = cfg.family("A")
    worst = 0.0
    for i in range(3):
        h = tuple(rng.uniform(-3, 3, 2))
        u, v = fam[i], fam[(i + 1) % len(fam)]
        scale = max(1.0, float(np.max(np.abs(u.values)) * np.max(np.abs(v.values))))
        worst = max(worst, mo.leibniz_defect(u, v, h) / scale)
    T = THRESHOLDS["identities.leibniz"]
    rep.add("leibniz.defect", worst, T, worst < T)


def suite_identities(cfg: SuiteConfig) -> SuiteReport:
    rep = SuiteReport("identities")
    check_linear_identity(cfg, rep)
    check_decomposition(cfg, rep)
    check_kernel_identity(cfg, rep)
    check_fd_dphi(cfg, rep)
    check_leibniz(cfg, rep)
    return rep


# -- kernels -----------------------------------------------------------------------

def _fit_exponent(spec: dg.KernelSpec, lams) -> float:
    m = np.array([dg.radial_profile(spec, float(x)) for x in lams])
    return float(np.polyfit(np.log(lams), np.log(m), 1)[0])


def _bracket(spec: dg.KernelSpec, order_s: float, lams, extra: Callable | None = None) -> tuple[float, float]:
    tab = phi_table(spec.weight)
    vals = []
    for x in lams:
        m = dg.radial_profile(spec, float(x))
        if extra is not None:
            m *= extra(float(x))
        vals.append(m / (x ** (2 * order_s) * float(tab(x)) ** 2))
    return float(min(vals)), float(max(vals))


def _bracket_drift(spec, order_s, lo, hi, n, extra=None) -> tuple[float, float, float]:
    c1, C1 = _bracket(spec, order_s, np.geomspace(lo, hi, n), extra)
    c2, C2 = _bracket(spec, order_s, np.geomspace(lo, hi, 2 * n - 1), extra)
    r1, r2 = C1 / c1, C2 / c2
    return r1, r2, abs(r2 - r1) / r1


def suite_kernels(cfg: SuiteConfig) -> SuiteReport:
    T = THRESHOLDS
    rep = SuiteReport("kernels")
    # constant of the first-order kernel, across directions and magnitudes
    spec = dg.KernelSpec(dg.ORDER_DELTA, 0.5)
    xs = np.array([(1.0, 0.0), (0.3, 0.4), (2.0, -3.0), (-7.0, 1.0), (0.05, 0.02)])
    m = dg.difference_kernel_multiplier(spec, xs)
    c = m / np.hypot(xs[:, 0], xs[:, 1])
    spread = float((c.max() - c.min()) / c.mean())
    rep.add("first_difference.constant_spread", spread, T["kernels.constant_spread"], spread < T["kernels.constant_spread"],
            detail=f"constant {c.mean():.8g} (4 pi = {4 * math.pi:.8g})")
    lams = np.geomspace(0.25, 16.0, 7)
    for order, label in ((dg.ORDER_TAYLOR, "taylor_removed"), (dg.ORDER_SECOND, "second_difference")):
        for b in (1.25, 1.5, 1.75):
            e = _fit_exponent(dg.KernelSpec(order, b), lams)
            rel = abs(e - 2 * b) / (2 * b)
            rep.add(f"{label}.exponent(b={b:g})", rel, T["kernels.exponent_rel"], rel < T["kernels.exponent_rel"],
                    detail=f"fitted {e:.6g} vs {2 * b:g}")
    w = Weight.log_pow(0.375)
    for s in (0.5, 1.0, 1.5):
        r1, r2, drift = _bracket_drift(dg.KernelSpec(dg.ORDER_SECOND, s, 2, w), s, 0.05, 50.0, 7)
        rep.add(f"weighted_second_difference.bracket_drift(s={s:g})", drift, T["kernels.bracket_drift"], drift < T["kernels.bracket_drift"],
                detail=f"C/c {r1:.4g} -> {r2:.4g}")
    for b in (0.25, 0.75):
        r1, r2, drift = _bracket_drift(dg.KernelSpec(dg.ORDER_DELTA, b, 2, w), b, 0.05, 50.0, 7)
        rep.add(f"weighted_first_difference.bracket_drift(b={b:g})", drift, T["kernels.bracket_drift"], drift < T["kernels.bracket_drift"],
                detail=f"C/c {r1:.4g} -> {r2:.4g}")
    # factorized kernel: weighted kernel in h times unweighted kernel in alpha
    cspec = dg.KernelSpec(dg.ORDER_DELTA, 0.5)
    r1, r2, drift = _bracket_drift(dg.KernelSpec(dg.ORDER_DELTA, 0.5, 2, w), 1.0, 0.05, 50.0, 7,
                                   extra=lambda x: dg.radial_profile(cspec, x))
    rep.add("factorized.bracket_drift", drift, T["kernels.bracket_drift"], drift < T["kernels.bracket_drift"],
            detail=f"C/c {r1:.4g} -> {r2:.4g}")
    # second difference twice over |h|^4 with kappa^2 against |xi|^2 phi^2
    r1, r2, drift = _bracket_drift(dg.KernelSpec(dg.ORDER_SECOND, 1.0, 2, w), 1.0, 0.05, 50.0, 7)
    rep.add("d1_equivalence.bracket_drift", drift, T["kernels.bracket_drift"], drift < T["kernels.bracket_drift"],
            detail=f"C/c {r1:.4g} -> {r2:.4g}")
    # Gagliardo seminorm against the spectral sum with the same kernel
    f = cfg.family("A")[0]
    for s in (0.25, 0.5, 0.75):
        gq = gagliardo_seminorm(f, s, cfg.quad).value ** 2
        sp = dg.spectral_gagliardo_square(f, dg.KernelSpec(dg.ORDER_DELTA, s))
        rel = abs(gq - sp) / sp
        rep.add(f"gagliardo_loop(s={s:g})", rel, T["kernels.gagliardo_rel"], rel < T["kernels.gagliardo_rel"],
                resolution=cfg.resolution)
    return rep


# -- weights -----------------------------------------------------------------------

def gaussian_tail_weight(grid: Grid) -> Weight:
    """Weight built from the lattice power spectrum of a unit Gaussian bump."""
    g = gaussian(grid, 1.0, 2.0)
    p = np.abs(transform(g).coeffs) ** 2 * grid.l**2
    r, m = radial_spectrum_of_lattice(grid, p / grid.dxi**2)
    return build_weight_from_spectrum(r, m, masses=True).weight


def suite_weights(cfg: SuiteConfig) -> SuiteReport:
    T = THRESHOLDS
    rep = SuiteReport("weights")
    built = gaussian_tail_weight(cfg.grid)
    for name, k in (("unit", Weight.unit()), ("log_pow_3/8", Weight.log_pow(0.375)), ("tail_built", built)):
        v = validate_admissible(k)
        rep.add(f"{name}.admissible", float(v.ok), 1.0, v.ok, detail=f"monotone={v.monotone} doubling={v.doubling} (c0={v.c0:.4g}) log_growth={v.log_growth}")
        for sigma in (0.1, 0.5, 1.0):
            gr = weight_growth_check(k, sigma)
            rep.add(f"{name}.growth(sigma={sigma:g})", gr.c_sigma_sq, math.inf, gr.bounded,
                    detail=f"C={gr.c_sigma:.4g}")
        p1 = phi_from_kappa(k, standard_lambdas(1e6, 12))
        p2 = phi_from_kappa(k, standard_lambdas(1e6, 24))
        c1, C1 = equivalence_constants(p1)
        c2, C2 = equivalence_constants(p2)
        drift = abs(C2 / c2 - C1 / c1) / (C1 / c1)
        rep.add(f"{name}.phi_kappa_ratio_drift", drift, T["weights.ratio_drift"], drift < T["weights.ratio_drift"],
                detail=f"(c, C) = ({c2:.5g}, {C2:.5g})")
    # the data-adapted construction makes the enhanced tail integral finite
    g = gaussian(cfg.grid, 1.0, 2.0)
    p = np.abs(transform(g).coeffs) ** 2 * cfg.grid.l**2
    r, m = radial_spectrum_of_lattice(cfg.grid, p / cfg.grid.dxi**2)
    bw = build_weight_from_spectrum(r, m, masses=True)
    ratio = bw.enhanced_integral / float(np.sum(m))
    rep.add("tail_built.enhanced_integral_ratio", ratio, math.inf, bool(np.isfinite(ratio)),
            detail=f"{len(bw.thresholds)} thresholds")
    return rep


# -- symmetry ----------------------------------------------------------------------

def suite_symmetry(cfg: SuiteConfig) -> SuiteReport:
    T = THRESHOLDS
    rep = SuiteReport("symmetry")
    f = cfg.family("A")[0]
    grid = f.grid
    h = grid.h
    # shifts by an even number of cells are lattice shifts of the padded grid too
    beta = (6 * h, -10 * h)
    F = transform(f)
    a = mo.muskat_rhs(inverse(shift(F, beta)), cfg.quad, cfg.workers).values
    b = inverse(shift(transform(mo.muskat_rhs(f, cfg.quad, cfg.workers)), beta)).values
    e = float(np.max(np.abs(a - b))) / float(np.max(np.abs(b)))
    rep.add("translation_equivariance", e, T["symmetry.exact"], e < T["symmetry.exact"], resolution=cfg.resolution)
    v1 = mo.drift(f, cfg.quad, cfg.workers)
    v2 = mo.drift(f * -1.0, cfg.quad, cfg.workers)
    e = max(float(np.max(np.abs(v1[i].values - v2[i].values))) for i in range(2))
    rep.add("drift_even_in_f", e, T["symmetry.exact"], e < T["symmetry.exact"], resolution=cfg.resolution)
    g = cfg.family("B")[0]
    p1 = mo.elliptic_part(f, g, cfg.quad, cfg.workers).values
    p2 = mo.elliptic_part(f * -1.0, g, cfg.quad, cfg.workers).values
    e = float(np.max(np.abs(p1 - p2)))
    rep.add("elliptic_part_even_in_f", e, T["symmetry.exact"], e < T["symmetry.exact"], resolution=cfg.resolution)
    worst = 0.0
    for lam in (0.5, 2.0, 4.0):
        fl = rescale_critical(f, lam)
        Fl = transform(fl)
        worst = max(worst, abs(sobolev_norm(Fl, 2.0) / sobolev_norm(F, 2.0) - 1.0))
        worst = max(worst, abs(lipschitz_norm(Fl) / lipschitz_norm(F) - 1.0))
    rep.add("critical_scaling_invariance", worst, T["symmetry.scaling"], worst < T["symmetry.scaling"])
    return rep


# -- energy ------------------------------------------------------------------------

def pairing_linear_limit(f: RealField, k: Weight, amps, q: QuadratureSpec, workers=None) -> list[tuple[float, float, float]]:
    """``(amplitude, pairing / B_phi, split defect)`` for ``f`` rescaled to each sup-amplitude."""
    F = transform(f)
    base = float(np.max(np.abs(f.values)))
    out = []
    for a in amps:
        Fa = F * (a / base)
        pr = dg.dissipation_pairing(Fa, k, q, workers)
        B = dg.weighted_energy(Fa, k, 2.5)
        out.append((a, pr.value / B, pr.defect))
    return out


def suite_energy(cfg: SuiteConfig) -> SuiteReport:
    T = THRESHOLDS
    rep = SuiteReport("energy")
    famA, famB = cfg.family("A"), cfg.family("B")
    k = Weight.log_pow(0.375)
    rows = pairing_linear_limit(famA[0], k, (1e-3, 1e-4, 1e-5), cfg.quad, cfg.workers)
    for a, ratio, defect in rows:
        rep.add(f"pairing_over_B(amp={a:g})", abs(ratio - 1.0), T["energy.pairing_ratio"],
                abs(ratio - 1.0) < T["energy.pairing_ratio"], resolution=cfg.resolution, detail=f"ratio {ratio:.10g}")
    worst = max(r[2] for r in rows)
    rep.add("pairing_split_agreement", worst, T["energy.self_adjoint"], worst < T["energy.self_adjoint"])
    # interpolation: exact bound for the unit weight
    unit = Weight.unit()
    worst = max(dg.interpolation_probe(f, unit, s) for f in famA + famB for s in (2.1, 2.25, 2.4))
    rep.add("interpolation.unit_max_ratio", worst, 1.0 + T["energy.interp_unit"], worst <= 1.0 + T["energy.interp_unit"])
    margin = T["energy.calibration_margin"]
    for name, w in (("log_pow_3/8", k), ("tail_built", gaussian_tail_weight(cfg.grid))):
        cal = max(dg.interpolation_probe(f, w, 2.25) for f in famA)
        val = max(dg.interpolation_probe(f, w, 2.25) for f in famB)
        rep.add(f"interpolation.{name}.validation", val, margin * cal, val <= margin * cal,
                detail=f"calibrated on A: {cal:.4g}")
    # Lipschitz probe across amplitudes
    g = gaussian(cfg.grid, 1.0, 2.0)
    amps = (1e-3, 1e-2, 1e-1, 1.0)
    cal = max(dg.lipschitz_probe(g * a, k).ratio for a in amps[:2])
    val = max(dg.lipschitz_probe(g * a, k).ratio for a in amps[2:])
    rep.add("lipschitz_probe.validation", val, margin * max(cal, 1e-300), val <= margin * cal,
            detail=f"calibrated on small amplitudes: {cal:.4g}")
    return rep


# -- decay --------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayOutcome:
    amplitude: float
    nonincreasing: bool
    lip_growth: bool
    max_A_increase: float
    lip0: float
    lip_max: float


def decay_run(cfg: SuiteConfig, amplitude: float, t_end: float | None = None) -> DecayOutcome:
    t_end = THRESHOLDS["decay.t_end"] if t_end is None else t_end
    sim = SimConfig(grid=cfg.decay_grid, epsilon=cfg.decay_epsilon, weight=Weight.log_pow(0.375), quad=cfg.decay_quad,
                    dt_initial=0.05, t_end=t_end, record_every=1,
                    initial=InitialData("gaussian", amplitude=amplitude, width=1.0), workers=cfg.workers)
    res = run(sim)
    A = np.array([r.A_phi for r in res.records])
    L = np.array([r.lip_f for r in res.records])
    inc = float(np.max(np.diff(A) / A[:-1])) if len(A) > 1 else 0.0
    return DecayOutcome(amplitude, bool(np.all(np.diff(A) <= 0.0)) and not res.aborted,
                        bool(L.max() > L[0]), inc, float(L[0]), float(L.max()))


@dataclass(frozen=True)
class DecayBisection:
    threshold: float
    bracket: tuple[float, float]
    runs: tuple
    found: bool


def decay_bisection(cfg: SuiteConfig, lo: float | None = None, hi: float | None = None, steps: int | None = None) -> DecayBisection:
    """Largest initial amplitude (log-bisection) for which ``A_phi`` never increases.

    ``found`` is false when even the top of the bracket decays monotonically;
    the threshold is then reported as the bracket top (a lower bound).
    """
    T = THRESHOLDS
    lo = T["decay.amplitude_lo"] if lo is None else lo
    hi = T["decay.amplitude_hi"] if hi is None else hi
    steps = int(T["decay.bisection_steps"]) if steps is None else steps
    bot = decay_run(cfg, lo)
    runs = [bot]
    if not bot.nonincreasing:
        return DecayBisection(0.0, (0.0, lo), tuple(runs), True)
    top = decay_run(cfg, hi)
    runs.append(top)
    if top.nonincreasing:
        return DecayBisection(hi, (hi, math.inf), tuple(runs), False)
    a, b = lo, hi
    for _ in range(steps):
        mid = math.sqrt(a * b)
        o = decay_run(cfg, mid)
        runs.append(o)
        if o.nonincreasing:
            a = mid
        else:
            b = mid
    return DecayBisection(a, (a, b), tuple(runs), True)


def growth_probe(cfg: SuiteConfig, threshold: float, factor: float = 10.0) -> DecayOutcome:
    """Run at ``factor`` times the decay threshold and watch ``|grad f|_inf``."""
    return decay_run(cfg, factor * threshold)


def suite_decay(cfg: SuiteConfig) -> SuiteReport:
    rep = SuiteReport("decay")
    bis = decay_bisection(cfg)
    small = min(bis.runs, key=lambda o: o.amplitude)
    rep.add("small_data.A_nonincreasing", small.max_A_increase, 0.0, small.nonincreasing,
            resolution="decay", detail=f"amplitude={small.amplitude:.3g} lip0={small.lip0:.3g}")
    rep.add("threshold", bis.threshold, THRESHOLDS["decay.amplitude_hi"], True, resolution="decay",
            detail=f"bracket={bis.bracket} found={bis.found} runs={len(bis.runs)}")
    big = growth_probe(cfg, bis.threshold)
    rep.add("above_threshold.lip_growth", big.lip_max / big.lip0 - 1.0, 0.0, big.lip_growth,
            resolution="decay", detail=f"amplitude={big.amplitude:.3g} lip0={big.lip0:.3g} lip_max={big.lip_max:.3g}")
    return rep


# -- determinism and convergence -------------------------------------------------------

def _short_config(cfg: SuiteConfig, workers: int | None, t_end: float) -> SimConfig:
    return SimConfig(grid=cfg.decay_grid, epsilon=0.1, weight=Weight.log_pow(0.375), quad=cfg.decay_quad,
                     dt_initial=0.05, t_end=t_end, initial=InitialData("gaussian", amplitude=1.0, width=1.5),
                     workers=workers)


def worker_determinism(cfg: SuiteConfig, counts=(1, 4), steps: int = 3) -> bool:
    """Byte equality of the right-hand side and of a few time steps across thread counts."""
    outs = []
    for w in counts:
        sc = _short_config(cfg, w, 1.0)
        st = initial_state(sc)
        rhs = mo.muskat_rhs_cutoff(st.field(), sc.epsilon, sc.quad, w).values.tobytes()
        for _ in range(steps):
            st = step(st, sc)
        outs.append((rhs, st.fhat.coeffs.tobytes()))
    return all(o == outs[0] for o in outs[1:])


def timestep_convergence(cfg: SuiteConfig, dt0: float = 0.05, t_end: float = 0.4, levels: int = 4) -> tuple[float, list[float]]:
    """Observed order from successive differences of runs at ``dt0 / 2**j``."""
    finals = []
    for j in range(levels):
        sc = _short_config(cfg, cfg.workers, t_end)
        dt = dt0 / 2 ** j
        st = initial_state(sc)
        for _ in range(round(t_end / dt)):
            st = step(st, sc, dt)
        finals.append(st.fhat.coeffs)
    diffs = [float(np.linalg.norm(finals[j + 1] - finals[j])) for j in range(levels - 1)]
    slopes = [math.log2(diffs[j] / diffs[j + 1]) for j in range(len(diffs) - 1)]
    return slopes[-1], diffs


def suite_convergence(cfg: SuiteConfig) -> SuiteReport:
    T = THRESHOLDS
    rep = SuiteReport("convergence")
    same = worker_determinism(cfg)
    rep.add("bit_identical_across_workers", 0.0 if same else 1.0, 0.0, same, resolution="decay")
    slope, diffs = timestep_convergence(cfg)
    ok = T["convergence.slope_lo"] <= slope <= T["convergence.slope_hi"]
    rep.add("timestep_order", slope, T["convergence.slope_lo"], ok, resolution="decay",
            detail="diffs " + " ".join(f"{d:.3e}" for d in diffs))
    return rep


SUITES: dict[str, Callable[[SuiteConfig], SuiteReport]] = {
    "identities": suite_identities,
    "kernels": suite_kernels,
    "weights": suite_weights,
    "symmetry": suite_symmetry,
    "energy": suite_energy,
    "decay": suite_decay,
    "convergence": suite_convergence,
}


def run_suite(name: str, cfg: SuiteConfig | None = None) -> SuiteReport:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](cfg or SuiteConfig())
