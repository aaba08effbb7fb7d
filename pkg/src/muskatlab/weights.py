"""Admissible weights kappa and the induced Fourier multipliers phi.

A weight is admissible when it maps ``[0, inf)`` into ``[1, inf)``, is
nondecreasing, doubling (``kappa(2r) <= c0 kappa(r)``) and grows at most
logarithmically (``kappa(r) / log(4 + r)`` nonincreasing).
From kappa we build

    phi(lam) = 4 pi int_0^inf (1 - cos r) r^{-3/2} kappa(lam / r) dr / r,

the symbol that makes ``|xi|^{3/2} phi(|xi|)`` a second-difference operator
with kernel ``|h|^{-3/2} kappa(1/|h|) / |h|^2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma

from .spectral_core import Grid

UNIT = "unit"
LOG_POW = "log_pow"
TAIL_BUILT = "tail_built"

# int_0^inf (1 - cos r) r^{-5/2} dr = -Gamma(-3/2) cos(3 pi / 4)
UNIT_INTEGRAL = float(-gamma(-1.5) * math.cos(0.75 * math.pi))
PHI_UNIT = 4.0 * math.pi * UNIT_INTEGRAL


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class Weight:
    """``kind`` is ``unit``, ``log_pow`` (uses ``a``) or ``tail_built``.

    A ``tail_built`` weight stores vertices ``(breakpoints[j], levels[j])`` of
    a function eta that is linear in ``t = log(4 + r)`` between vertices and
    constant outside them; ``kappa = max(1, sqrt(eta))``.
    """

    kind: str = UNIT
    a: float = 0.0
    breakpoints: tuple[float, ...] = field(default=())
    levels: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in (UNIT, LOG_POW, TAIL_BUILT):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "breakpoints", tuple(float(v) for v in self.breakpoints))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.kind == LOG_POW and not self.a >= 0:
            raise ValueError(f"log_pow exponent must be >= 0, got {self.a}")
        if self.kind == TAIL_BUILT:
            b, v = np.array(self.breakpoints), np.array(self.levels)
            if len(b) == 0 or len(b) != len(v):
                raise ValueError("tail_built weight needs aligned, non-empty breakpoints and levels")
            if np.any(np.diff(b) <= 0) or b[0] < 0:
                raise ValueError("tail_built breakpoints must be nonnegative and strictly increasing")
            if not np.all(np.isfinite(v)) or np.any(v <= 0):
                raise ValueError("tail_built levels must be positive and finite")

    @staticmethod
    def unit() -> "Weight":
        return Weight(UNIT)

    @staticmethod
    def log_pow(a: float) -> "Weight":
        return Weight(LOG_POW, a=a)

    @staticmethod
    def tail_built(breakpoints: Sequence[float], levels: Sequence[float]) -> "Weight":
        return Weight(TAIL_BUILT, breakpoints=tuple(breakpoints), levels=tuple(levels))

    @property
    def is_unit(self) -> bool:
        return self.kind == UNIT or (self.kind == LOG_POW and self.a == 0.0)

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == UNIT:
            return np.ones_like(r)
        if self.kind == LOG_POW:
            return np.log(4.0 + r) ** self.a
        t = np.log(4.0 + r)
        tb = np.log(4.0 + np.asarray(self.breakpoints))
        eta = np.interp(t, tb, np.asarray(self.levels))
        return np.maximum(1.0, np.sqrt(eta))

    def scalar(self, r: float) -> float:
        """``kappa(r)`` for one float, without array overhead (used inside quadratures)."""
        if self.kind == UNIT:
            return 1.0
        if self.kind == LOG_POW:
            return math.log(4.0 + r) ** self.a
        return float(self(r))

    # -- text form ---------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"kind={self.kind}"]
        if self.kind == LOG_POW:
            lines.append(f"a={self.a!r}")
        if self.kind == TAIL_BUILT:
            lines.append("breakpoints=" + ",".join(repr(v) for v in self.breakpoints))
            lines.append("levels=" + ",".join(repr(v) for v in self.levels))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "Weight":
        items: dict[str, str] = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed weight line {raw!r}")
            key, val = (p.strip() for p in line.split("=", 1))
            items[key] = val
        return weight_from_items(items)


def weight_from_items(items: dict[str, str]) -> Weight:
    allowed = {"kind", "a", "breakpoints", "levels"}
    for key in items:
        if key not in allowed:
            raise ValueError(f"unknown weight key {key!r}")
    kind = items.get("kind", UNIT)
    if kind == UNIT:
        return Weight.unit()
    if kind == LOG_POW:
        return Weight.log_pow(float(items.get("a", "0.375")))
    if kind == TAIL_BUILT:
        def arr(name: str) -> list[float]:
            if name not in items:
                raise ValueError(f"tail_built weight needs {name!r}")
            return [float(v) for v in items[name].split(",") if v.strip()]

        return Weight.tail_built(arr("breakpoints"), arr("levels"))
    raise ValueError(f"unknown weight kind {kind!r}")


# -- admissibility ----------------------------------------------------------

def default_radii(n: int = 400) -> np.ndarray:
    return np.logspace(-3, 6, n)


@dataclass(frozen=True)
class ValidationReport:
    monotone: bool
    doubling: bool
    log_growth: bool
    c0: float
    min_value: float
    hard_failure: bool

    @property
    def ok(self) -> bool:
        return self.monotone and self.doubling and self.log_growth and not self.hard_failure


def validate_admissible(k: Weight, radii: np.ndarray | None = None, rtol: float = 1e-12) -> ValidationReport:
    """Check monotonicity, doubling and log growth on a sample set of radii (sorted internally)."""
    r = np.sort(np.asarray(default_radii() if radii is None else radii, dtype=float))
    if len(r) < 200 or r[0] > 1e-3 or r[-1] < 1e6:
        raise ValueError("validation radii must cover [1e-3, 1e6] with at least 200 points")
    r = np.concatenate([[0.0], r])
    v = k(r)
    v2 = k(2.0 * r)
    minv = float(np.min(v))
    hard = bool(minv < 1.0 or not np.all(np.isfinite(v)))
    mono = bool(np.all(np.diff(v) >= -rtol * v[1:]))
    c0 = float(np.max(v2 / v))
    dbl = bool(np.isfinite(c0))
    q = v / np.log(4.0 + r)
    logg = bool(np.all(np.diff(q) <= rtol * q[1:]))
    return ValidationReport(mono, dbl, logg, c0, minv, hard)


@lru_cache(maxsize=128)
def is_admissible(k: Weight) -> bool:
    return validate_admissible(k).ok


def require_admissible(k: Weight) -> None:
    rep = validate_admissible(k)
    if not rep.ok:
        raise AdmissibilityError(f"weight {k.to_text().strip()!r} is not admissible: {rep}")


# -- phi = multiplier induced by kappa --------------------------------------

def phi_value(k: Weight, lam: float, epsrel: float = 1e-10) -> tuple[float, float]:
    """``phi(lam)`` and an absolute error estimate by adaptive quadrature.

    ``[0, 1]`` is handled with ``r = t^2`` (the integrand is ``~ r^{-1/2}/2``
    near 0); on ``[1, inf)`` the non-oscillatory part is integrated directly
    and the ``cos r`` part by a Fourier-weighted rule.
    """
    if k.is_unit:
        return PHI_UNIT, 1e-14 * PHI_UNIT
    lam = float(lam)

    def kap(r):
        return float(k(lam / r)) if r > 0 else float(k(np.inf if lam > 0 else 0.0))

    def near(t):
        if t == 0.0:
            return kap(0.0) if lam == 0 else 0.0
        s = math.sin(0.5 * t * t)
        return 4.0 * s * s / t**4 * kap(t * t)

    pts = _kinks(k, lam)
    # the returned error estimate carries the same information as the warning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return _phi_pieces(kap, near, pts, epsrel)


def _phi_pieces(kap, near, pts, epsrel) -> tuple[float, float]:
    i1, e1 = integrate.quad(near, 0.0, 1.0, epsabs=0, epsrel=epsrel, limit=400,
                            points=[math.sqrt(p) for p in pts if p < 1] or None)
    far_pts = [p for p in pts if 1 < p < 1e8]
    i2, e2 = 0.0, 0.0
    lo = 1.0
    for p in far_pts + [np.inf]:
        v, e = integrate.quad(lambda r: r**-2.5 * kap(r), lo, p, epsabs=0, epsrel=epsrel, limit=400)
        i2, e2 = i2 + v, e2 + e
        lo = p
    i3, e3 = _cos_tail(kap, far_pts, epsrel)
    val = 4.0 * math.pi * (i1 + i2 - i3)
    err = 4.0 * math.pi * (e1 + e2 + e3)
    return val, err


def _cos_tail(kap, far_pts, epsrel):
    lo = 1.0
    acc, err = 0.0, 0.0
    for p in far_pts:
        v, e = integrate.quad(lambda r: r**-2.5 * kap(r), lo, p, weight="cos", wvar=1.0, limit=400)
        acc, err = acc + v, err + e
        lo = p
    v, e = integrate.quad(lambda r: r**-2.5 * kap(r), lo, np.inf, weight="cos", wvar=1.0, limlst=200)
    return acc + v, err + e


def _kinks(k: Weight, lam: float) -> list[float]:
    """Values of ``r`` where ``kappa(lam / r)`` has a kink (tail-built vertices)."""
    if k.kind != TAIL_BUILT or lam <= 0:
        return []
    return sorted(lam / b for b in k.breakpoints if b > 0)


@dataclass(frozen=True)
class PhiTable:
    weight: Weight
    lambdas: np.ndarray
    phi: np.ndarray
    error: np.ndarray
    lam0: float = 1e-3

    def __post_init__(self) -> None:
        for name in ("lambdas", "phi", "error"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def _interp(self) -> PchipInterpolator:
        u = np.arcsinh(self.lambdas / self.lam0)
        return PchipInterpolator(u, self.phi, extrapolate=True)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        top = self.lambdas[-1]
        if np.any(lam > top * (1 + 1e-12)):
            raise ValueError(f"phi requested at {float(np.max(lam)):.3g} beyond table end {top:.3g}")
        if self.weight.is_unit:
            return np.full_like(lam, self.phi[0])
        return self._interp(np.arcsinh(np.maximum(lam, 0.0) / self.lam0))

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.error / self.phi))


def phi_from_kappa(k: Weight, lambdas: Sequence[float] | np.ndarray) -> PhiTable:
    """Tabulate phi at the given radii (sorted, with 0 prepended)."""
    require_admissible(k)
    lam = np.unique(np.concatenate([[0.0], np.asarray(lambdas, dtype=float)]))
    vals, errs = zip(*(phi_value(k, x) for x in lam))
    return PhiTable(k, lam, np.array(vals), np.array(errs))


def standard_lambdas(lam_max: float = 1e6, per_decade: int = 12) -> np.ndarray:
    top = max(math.log10(lam_max), 0.0)
    return np.logspace(-3, top, int(round((top + 3) * per_decade)) + 1)


@lru_cache(maxsize=32)
def phi_table(k: Weight, lam_max: float = 1e6) -> PhiTable:
    """Cached table on ``[0, lam_max]``; reused for every grid and run."""
    return phi_from_kappa(k, standard_lambdas(lam_max))


@lru_cache(maxsize=32)
def phi_on_grid(k: Weight, grid: Grid) -> np.ndarray:
    """``phi(|xi|)`` on the lattice of ``grid`` (read-only)."""
    top = float(np.max(grid.kmag)) * 4.0
    table = phi_table(k, max(1e6, top))
    out = np.asarray(table(grid.kmag), dtype=float)
    out.flags.writeable = False
    return out


def equivalence_constants(p: PhiTable) -> tuple[float, float]:
    """``(min, max)`` of ``phi / kappa`` over the table."""
    q = p.phi / p.weight(p.lambdas)
    return float(np.min(q)), float(np.max(q))


# -- growth bound -----------------------------------------------------------

@dataclass(frozen=True)
class GrowthReport:
    sigma: float
    c_sigma: float
    c_sigma_sq: float
    by_range: tuple[tuple[float, float, float], ...]
    bounded: bool


def _growth_const(g: np.ndarray) -> float:
    """``max_{i <= j} g_i / g_j`` for samples ordered by radius."""
    run = np.maximum.accumulate(g)
    return float(np.max(run / g))


def weight_growth_check(k: Weight, sigma: float, decades: Sequence[int] = (3, 4, 5, 6), per_decade: int = 40) -> GrowthReport:
    """Smallest ``C`` with ``r^s kappa(1/r) <= C mu^s kappa(1/mu)`` for sampled ``r <= mu``.

    The constant is measured on nested ranges ``[10^-d, 10^d]``; ``bounded``
    is false when it still grows by more than 1% between the two widest ranges.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rows = []
    for d in decades:
        r = np.logspace(-d, d, 2 * d * per_decade + 1)
        kv = k(1.0 / r)
        c1 = _growth_const(r**sigma * kv)
        c2 = _growth_const(r**sigma * kv**2)
        rows.append((float(d), c1, c2))
    c1, c2 = rows[-1][1], rows[-1][2]
    prev = rows[-2] if len(rows) > 1 else rows[-1]
    bounded = c1 <= prev[1] * 1.01 and c2 <= prev[2] * 1.01
    return GrowthReport(float(sigma), c1, c2, tuple(rows), bool(bounded))


# -- weights adapted to data ------------------------------------------------

@dataclass(frozen=True)
class BuiltWeight:
    weight: Weight
    thresholds: tuple[float, ...]
    enhanced_integral: float
    shell_sums: tuple[float, ...]


def _upper_concave_hull(t: np.ndarray, y: np.ndarray) -> list[int]:
    order = np.lexsort((-y, t))
    hull: list[int] = []
    for i in order:
        if hull and t[hull[-1]] == t[i]:
            continue
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (t[b] - t[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (t[i] - t[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(int(i))
    return hull


def build_weight_from_spectrum(radii: np.ndarray, omega: np.ndarray, masses: bool = False, max_levels: int = 60) -> BuiltWeight:
    """Admissible weight whose square makes the tail of ``omega`` integrable.

    ``omega`` is a radial density (``masses=False``; integrated against
    ``2 pi r dr`` by the trapezoid rule) or a list of point masses located at
    ``radii``.  Thresholds ``R_j`` are the smallest radii with tail mass
    ``T(R_j) <= T(0) 4^{-j}``; the target levels ``min(2^j, log(4 + R_j))``
    together with ``(0, 1)`` and the origin of the ``t = log(4 + r)`` axis are
    replaced by their least concave majorant in ``t``, which is nondecreasing,
    doubling and bounded by ``log(4 + r)``; ``kappa = sqrt(eta)``.
    """
    r = np.asarray(radii, dtype=float)
    w = np.asarray(omega, dtype=float)
    if r.ndim != 1 or r.shape != w.shape or len(r) < 2:
        raise ValueError("spectrum needs two aligned columns with at least two rows")
    if np.any(np.diff(r) < 0) or r[0] < 0:
        raise ValueError("spectrum radii must be nonnegative and sorted ascending")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("spectrum values must be finite and nonnegative")
    if masses:
        m = w.copy()
    else:
        dr = np.diff(r)
        cell = np.zeros_like(r)
        cell[:-1] += 0.5 * dr
        cell[1:] += 0.5 * dr
        m = 2.0 * np.pi * r * w * cell
    total_mass = float(np.sum(m))
    if not total_mass > 0:
        raise ValueError("spectrum has no mass: tail is empty")
    # tail[i] = mass strictly beyond radii[i]
    tail = total_mass - np.cumsum(m)
    tail = np.maximum(tail, 0.0)
    thresholds = []
    for j in range(max_levels):
        target = total_mass * 4.0**-j
        idx = np.nonzero(tail <= target)[0]
        if len(idx) == 0:
            break
        thresholds.append(float(r[idx[0]]))
        if tail[idx[0]] == 0.0:
            break
    if len(thresholds) < 2 or thresholds[1] >= r[-1]:
        raise ValueError("spectrum tail does not decay within the sampled radii")
    R = np.array(thresholds)
    lev = np.minimum(2.0 ** np.arange(len(R)), np.log(4.0 + R))
    t0 = math.log(4.0)
    t = np.concatenate([[0.0, t0], np.log(4.0 + R)])
    y = np.concatenate([[0.0, 1.0], lev])
    hull = _upper_concave_hull(t, y)
    th, yh = t[hull], y[hull]
    # keep only the nondecreasing part; eta is constant after its maximum
    top = int(np.argmax(yh))
    th, yh = th[: top + 1], yh[: top + 1]
    y0 = float(np.interp(t0, th, yh))
    keep = th > t0
    th = np.concatenate([[t0], th[keep]])
    yh = np.concatenate([[y0], yh[keep]])
    bp = np.exp(th) - 4.0
    bp[0] = 0.0
    wgt = Weight.tail_built(bp, yh)
    require_admissible(wgt)
    eta = np.maximum(1.0, wgt(r) ** 2)
    enhanced = float(np.sum(eta * m))
    edges = np.concatenate([[0.0], R, [np.inf]])
    shells = tuple(float(np.sum((eta * m)[(r > a) & (r <= b)])) for a, b in zip(edges[:-1], edges[1:]))
    return BuiltWeight(wgt, tuple(thresholds), enhanced, shells)


def radial_spectrum_of_lattice(grid: Grid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Point masses ``values * dxi^2`` sorted by ``|xi|`` (merging equal radii)."""
    kmag = grid.kmag.ravel()
    m = np.asarray(values, dtype=float).ravel() * grid.dxi**2
    order = np.argsort(kmag, kind="stable")
    kr, mm = kmag[order], m[order]
    uniq, start = np.unique(kr, return_index=True)
    sums = np.add.reduceat(mm, start)
    return uniq, sums


def read_spectrum(path: str) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (radius, omega)")
    return data[:, 0], data[:, 1]
