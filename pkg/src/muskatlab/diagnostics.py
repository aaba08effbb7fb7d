"""Scalar functionals of a height field: weighted energies, pairings and probes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .muskat_ops import _operator_coeffs, _spec
from .quadrature import REFERENCE, QuadratureSpec
from .reduce import total
from .spectral_core import (
    RealField,
    SpectralField,
    inner,
    lipschitz_norm,
    power_symbol,
    sobolev_norm,
    sup_norm,
)
from .weights import Weight, phi_on_grid, phi_table

HS_ORDERS = (0.75, 0.875, 2.0, 2.125, 2.25, 25.0 / 12.0, 2.5)


def _hs_key(s: float) -> str:
    return "hs_25/12" if abs(s - 25.0 / 12.0) < 1e-12 else f"hs_{s:g}"


CSV_COLUMNS = (
    ("t", "A_phi", "B_phi", "Z_phi", "mu_phi", "sup_f", "lip_f")
    + tuple(_hs_key(s) for s in HS_ORDERS)
    + ("dissipation", "coercive_bracket", "coercive_plus", "flags")
)


def weighted_energy(F: SpectralField, k: Weight, s: float) -> float:
    """``|| <D>^{s,phi} f ||_{L^2}^2``."""
    return sobolev_norm(F, s, phi_on_grid(k, F.grid)) ** 2


def mu_phi(k: Weight, A: float, B: float) -> float:
    """``1 / phi(B / A)``, with the value 1 when ``f = 0``."""
    if A <= 0.0 or B <= 0.0:
        return 1.0
    return float(1.0 / phi_table(k)(B / A))


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    A_phi: float
    B_phi: float
    Z_phi: float
    mu_phi: float
    sup_f: float
    lip_f: float
    hs_norms: dict = field(default_factory=dict)
    dissipation: float = float("nan")
    # B_phi divided by the two normalizations of the Lipschitz factor:
    # <lip>^3 = (1 + lip^2)^{3/2} and 1 + lip^3
    coercive_bracket: float = float("nan")
    coercive_plus: float = float("nan")
    flags: str = ""

    @staticmethod
    def header() -> str:
        return ",".join(CSV_COLUMNS)

    def values(self) -> list:
        hs = [self.hs_norms.get(s, float("nan")) for s in HS_ORDERS]
        return [self.t, self.A_phi, self.B_phi, self.Z_phi, self.mu_phi, self.sup_f, self.lip_f, *hs,
                self.dissipation, self.coercive_bracket, self.coercive_plus, self.flags]

    def row(self) -> str:
        out = []
        for v in self.values():
            out.append(v if isinstance(v, str) else repr(float(v)))
        return ",".join(out)

    @classmethod
    def from_row(cls, row: str) -> "DiagnosticsRecord":
        parts = row.rstrip("\n").split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError(f"expected {len(CSV_COLUMNS)} columns, got {len(parts)}")
        nums = [float(p) for p in parts[:-1]]
        hs = dict(zip(HS_ORDERS, nums[7 : 7 + len(HS_ORDERS)]))
        tail = nums[7 + len(HS_ORDERS) :]
        return cls(*nums[:7], hs, tail[0], tail[1], tail[2], parts[-1])


@dataclass(frozen=True)
class PairingResult:
    value: float
    split: float

    @property
    def defect(self) -> float:
        return abs(self.value - self.split) / max(abs(self.value), 1e-300)


def _pairing_from_L(Lc: np.ndarray, F: SpectralField, k: Weight) -> PairingResult:
    grid = F.grid
    phi = phi_on_grid(k, grid)
    L = SpectralField(grid, Lc)
    outer = inner(L, SpectralField(grid, power_symbol(grid, 4.0) * phi**2 * F.coeffs))
    left = SpectralField(grid, power_symbol(grid, 1.5) * phi * Lc)
    right = SpectralField(grid, power_symbol(grid, 2.5) * phi * F.coeffs)
    return PairingResult(outer, inner(left, right))


def dissipation_pairing(f, k: Weight, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> PairingResult:
    """``int L(f) f <D>^{4,phi^2} f dx``, computed two ways.

    ``value`` pairs ``L(f) f`` with ``<D>^{4,phi^2} f``; ``split`` pairs
    ``<D>^{3/2,phi} L(f) f`` with ``<D>^{5/2,phi} f``.
    """
    F = _spec(f)
    Lc = _operator_coeffs(F.coeffs, F.coeffs, F.grid, q, None, workers)
    return _pairing_from_L(Lc, F, k)


def record(f, k: Weight, q: QuadratureSpec = REFERENCE, t: float = 0.0, with_dissipation: bool = True,
           workers: int | None = None, flags: str = "", L_coeffs: np.ndarray | None = None) -> DiagnosticsRecord:
    """All monitored quantities of ``f``.

    ``L_coeffs`` may carry an already computed ``L(f) f`` so that the time
    stepper does not evaluate the nonlinearity twice.
    """
    F = _spec(f)
    A = weighted_energy(F, k, 2.0)
    B = weighted_energy(F, k, 2.5)
    Z = weighted_energy(F, k, 3.0)
    hs = {s: sobolev_norm(F, s) for s in HS_ORDERS}
    sup = sup_norm(F)
    lip = lipschitz_norm(F)
    diss = float("nan")
    if with_dissipation:
        if A == 0.0:
            diss = 0.0
        else:
            Lc = L_coeffs if L_coeffs is not None else _operator_coeffs(F.coeffs, F.coeffs, F.grid, q, None, workers)
            diss = _pairing_from_L(Lc, F, k).value
    return DiagnosticsRecord(
        t=float(t), A_phi=A, B_phi=B, Z_phi=Z, mu_phi=mu_phi(k, A, B), sup_f=sup, lip_f=lip, hs_norms=hs,
        dissipation=diss, coercive_bracket=B / (1.0 + lip * lip) ** 1.5, coercive_plus=B / (1.0 + lip**3),
        flags=flags,
    )


def pairing_lower_bound_defect(rec: DiagnosticsRecord) -> float:
    """``(B/(1+lip^3) - pairing) / (A^{1/2} (1 + A) B mu)``.

    The a priori lower bound on the pairing holds with constant ``C`` exactly
    when this quantity is at most ``C``.
    """
    den = math.sqrt(rec.A_phi) * (1.0 + rec.A_phi) * rec.B_phi * rec.mu_phi
    if den == 0.0:
        return 0.0
    return (rec.coercive_plus - rec.dissipation) / den


# -- difference kernels --------------------------------------------------------

ORDER_DELTA = 1
ORDER_SECOND = 2
ORDER_TAYLOR = 3


@dataclass(frozen=True)
class KernelSpec:
    """Kernel ``|symbol(alpha.xi)|^2 kappa^gk(1/|alpha|) / |alpha|^{2+2b}``.

    ``order`` selects the difference: 1 for ``delta_alpha``, 2 for the
    second difference ``s_alpha`` and 3 for the Taylor-removed
    ``delta_alpha - alpha.grad``.
    """

    order: int
    b: float
    gk: int = 0
    weight: Weight = Weight.unit()

    def __post_init__(self) -> None:
        lo, hi = {ORDER_DELTA: (0.0, 1.0), ORDER_SECOND: (0.0, 2.0), ORDER_TAYLOR: (1.0, 2.0)}.get(
            self.order, (None, None)
        )
        if lo is None:
            raise ValueError(f"kernel order must be 1, 2 or 3, got {self.order}")
        if not lo < self.b < hi:
            raise ValueError(f"b={self.b} outside ({lo}, {hi}) for order {self.order}; the integral diverges")
        if self.gk not in (0, 2, 4):
            raise ValueError(f"kappa power must be 0, 2 or 4, got {self.gk}")

    # kernel(v) = sum coef * v^p * trig(w v)
    def terms(self) -> tuple[tuple[float, int, str, float], ...]:
        if self.order == ORDER_DELTA:
            return ((2.0, 0, "one", 0.0), (-2.0, 0, "cos", 1.0))
        if self.order == ORDER_SECOND:
            return ((6.0, 0, "one", 0.0), (-8.0, 0, "cos", 1.0), (2.0, 0, "cos", 2.0))
        return ((2.0, 0, "one", 0.0), (-2.0, 0, "cos", 1.0), (-2.0, 1, "sin", 1.0), (1.0, 2, "one", 0.0))

    def kernel(self, v):
        v = np.asarray(v, dtype=float)
        if self.order == ORDER_DELTA:
            return 4.0 * np.sin(0.5 * v) ** 2
        if self.order == ORDER_SECOND:
            return (4.0 * np.sin(0.5 * v) ** 2) ** 2
        return 4.0 * np.sin(0.5 * v) ** 2 - 2.0 * v * np.sin(v) + v * v

    def small_v(self, v):
        """Leading Taylor term, used where the closed form cancels badly."""
        v = np.asarray(v, dtype=float)
        if self.order == ORDER_DELTA:
            return v * v
        if self.order == ORDER_SECOND:
            return v**4
        return 0.25 * v**4


def _k_delta(v):
    s = math.sin(0.5 * v)
    return 4.0 * s * s


def _k_second(v):
    s = math.sin(0.5 * v)
    return 16.0 * s**4


def _k_taylor(v):
    s = math.sin(0.5 * v)
    return 4.0 * s * s - 2.0 * v * math.sin(v) + v * v


# scalar (kernel, leading Taylor term) pairs matching KernelSpec.kernel / small_v
_SCALAR_KERNELS = {
    ORDER_DELTA: (_k_delta, lambda v: v * v),
    ORDER_SECOND: (_k_second, lambda v: v**4),
    ORDER_TAYLOR: (_k_taylor, lambda v: 0.25 * v**4),
}


def _radial_integral(spec: KernelSpec, a: float, split: float = 40.0) -> float:
    """``int_0^inf kernel(r a) kappa^gk(1/r) r^{-1-2b} dr`` for ``a > 0``."""
    if a == 0.0:
        return 0.0
    b = spec.b
    kap = spec.weight

    gk = spec.gk
    ex = -1.0 - 2.0 * b
    kern, small = _SCALAR_KERNELS[spec.order]

    def wgt(v):
        # r = v / a
        w = v**ex
        if gk:
            w *= kap.scalar(a / v) ** gk
        return w

    def body(v):
        return (small(v) if v < 1e-3 else kern(v)) * wgt(v)

    pts = [math.pi * j for j in range(1, int(split / math.pi) + 1)]
    with warnings.catch_warnings():
        # the Taylor switch at v = 1e-3 leaves a tiny kink that the
        # extrapolation table reports as roundoff
        warnings.simplefilter("ignore", IntegrationWarning)
        head, _ = quad(body, 0.0, split, points=[1e-3, *pts], limit=400, epsabs=0.0, epsrel=1e-11)
    tail = 0.0
    for coef, p, kind, w in spec.terms():
        g = lambda v, p=p: v**p * wgt(v)
        if kind == "one":
            val, _ = quad(g, split, np.inf, limit=400, epsabs=0.0, epsrel=1e-11)
        else:
            val, _ = quad(g, split, np.inf, weight=kind, wvar=w, limlst=200)
        tail += coef * val
    return a ** (2.0 * b) * (head + tail)


def difference_kernel_multiplier(spec: KernelSpec, xi_samples) -> np.ndarray:
    """``m(xi) = int kernel(alpha, xi) dalpha`` at each 2-vector in ``xi_samples``.

    The angular integral is adaptive on ``[0, 2 pi)`` with breakpoints where
    ``alpha.xi`` changes sign; the radial integral is adaptive in ``v = r |a.xi|``
    with the oscillatory tail done by a Fourier-weighted rule.
    """
    xs = np.atleast_2d(np.asarray(xi_samples, dtype=float))
    out = np.empty(len(xs))
    for i, (x1, x2) in enumerate(xs):
        mag = math.hypot(x1, x2)
        if mag == 0.0:
            out[i] = 0.0
            continue
        th0 = math.atan2(x2, x1)

        def ang(t):
            return _radial_integral(spec, abs(math.cos(t) * x1 + math.sin(t) * x2))

        kinks = sorted(((th0 + 0.5 * math.pi) % (2 * math.pi), (th0 + 1.5 * math.pi) % (2 * math.pi)))
        edges = [0.0, *kinks, 2 * math.pi]
        val = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a > 0:
                v, _ = quad(ang, a, b, limit=200, epsabs=0.0, epsrel=1e-9)
                val += v
        out[i] = val
    return out


@lru_cache(maxsize=64)
def radial_profile(spec: KernelSpec, lam: float) -> float:
    """``m`` at ``|xi| = lam``; direction-free because the kernel is rotation invariant."""
    return float(difference_kernel_multiplier(spec, [(lam, 0.0)])[0])


def kernel_multiplier_on_grid(spec: KernelSpec, grid, n_samples: int = 48) -> np.ndarray:
    """``m(|xi|)`` on the lattice, by monotone interpolation in ``log |xi|``."""
    from scipy.interpolate import PchipInterpolator

    kmag = grid.kmag
    lo, hi = grid.dxi, float(kmag.max())
    lam = np.geomspace(lo * 0.999, hi * 1.001, n_samples)
    m = np.array([radial_profile(spec, float(x)) for x in lam])
    ip = PchipInterpolator(np.log(lam), np.log(m))
    out = np.zeros_like(kmag)
    nz = kmag > 0
    out[nz] = np.exp(ip(np.log(kmag[nz])))
    return out


# -- probes -------------------------------------------------------------------

def interpolation_probe(f, k: Weight, s: float = 2.25) -> float:
    """``||f||_{H^s} / (mu A^{5/2-s} B^{s-2})``."""
    if not 2.0 < s < 2.5:
        raise ValueError(f"interpolation order must lie in (2, 5/2), got {s}")
    F = _spec(f)
    A = weighted_energy(F, k, 2.0)
    B = weighted_energy(F, k, 2.5)
    if A <= 0.0 or B <= 0.0:
        raise ValueError("interpolation probe needs a field with nonzero A_phi and B_phi")
    return sobolev_norm(F, s) / (mu_phi(k, A, B) * A ** (2.5 - s) * B ** (s - 2.0))


@dataclass(frozen=True)
class LipschitzReport:
    lip: float
    bound: float
    ratio: float
    a: float


def lipschitz_probe(f, k: Weight) -> LipschitzReport:
    """``||grad f||_inf`` against ``1 + ||f||_inf + A log(2 + B)^{(1-2a)/2}``.

    ``a`` is the log exponent of the weight (0 for the unit weight, the
    largest exponent with ``kappa(r) >= log(4+r)^a`` is used for built
    weights).
    """
    F = _spec(f)
    a = _log_exponent(k)
    lip = lipschitz_norm(F)
    if lip == 0.0:
        return LipschitzReport(0.0, 1.0, 0.0, a)
    A = weighted_energy(F, k, 2.0)
    B = weighted_energy(F, k, 2.5)
    bound = 1.0 + sup_norm(F) + A * math.log(2.0 + B) ** ((1.0 - 2.0 * a) / 2.0)
    return LipschitzReport(lip, bound, lip / bound, a)


def _log_exponent(k: Weight) -> float:
    if k.kind == "log_pow":
        return float(k.a)
    if k.is_unit:
        return 0.0
    r = np.geomspace(1.0, 1e6, 200)
    ratio = np.log(k(r)) / np.log(np.log(4.0 + r))
    return float(max(0.0, np.min(ratio)))


def sobolev_profile(f: RealField) -> dict:
    F = _spec(f)
    return {s: sobolev_norm(F, s) for s in HS_ORDERS}


def spectral_gagliardo_square(f, spec: KernelSpec) -> float:
    """``sum m(xi) |f_hat(xi)|^2`` with the Parseval normalization of the torus."""
    F = _spec(f)
    m = kernel_multiplier_on_grid(spec, F.grid)
    return float(total(m * np.abs(F.coeffs) ** 2) * F.grid.l**2)
