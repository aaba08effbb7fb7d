"""Finite differences, the Muskat nonlinearity and its quasilinearization.

All singular integrals over ``alpha`` use the polar nodes of
:mod:`muskatlab.quadrature`.  Directions come in antipodal pairs
``(theta, theta + pi)`` that are always evaluated together, which realizes
the principal-value cancellation of odd integrands.

Three devices keep the reference quadrature (64 x 32 nodes) accurate:

* Linear part.  The operators are written as ``<D> g`` plus an integral
  whose coefficient is ``K - 1`` (or ``c - 1``).  ``<D> g`` is applied
  exactly in frequency space; the remaining integrand decays like
  ``|alpha|^-2`` and no longer has an angular kink at ``alpha . xi = 0``.
* Near field ``r < r_min``.  Coefficients are frozen at their ``r -> 0``
  limit and the difference integrals are taken exactly (sine integrals).
* Far field ``r > r_max``.  Coefficients are frozen at their ``r -> inf``
  limit (``K -> 1``) and the difference integrals are taken exactly.

Nonlinear quotients are formed on a 3/2 zero-padded grid.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import j1, sici, fresnel

from .quadrature import REFERENCE, QuadratureSpec, polar_nodes
from .reduce import total, tree_sum
from .spectral_core import (
    Grid,
    RealField,
    SpectralField,
    fft2,
    gradient,
    ifft2,
    inverse,
    pad_spectrum,
    power_symbol,
    shift,
    transform,
    truncate_spectrum,
)
from .weights import PHI_UNIT, UNIT_INTEGRAL, Weight, phi_on_grid

INV2PI = 1.0 / (2.0 * math.pi)
RADIAL_CHUNK = 16


# -- plain finite differences -------------------------------------------------

def _spec(f) -> SpectralField:
    return f if isinstance(f, SpectralField) else transform(f)


def delta(f: RealField, alpha) -> RealField:
    """``delta_alpha f = f - f(. - alpha)``."""
    F = _spec(f)
    return inverse(F - shift(F, alpha))


def slope(f: RealField, alpha) -> RealField:
    """``Delta_alpha f = delta_alpha f / |alpha|``."""
    a = float(np.hypot(alpha[0], alpha[1]))
    if a == 0.0:
        raise ValueError("slope needs a nonzero translation")
    return delta(f, alpha) * (1.0 / a)


def second_diff(f: RealField, h) -> RealField:
    """``s_h f = 2 f - f(. - h) - f(. + h)``."""
    F = _spec(f)
    return inverse(2.0 * F - shift(F, h) - shift(F, (-h[0], -h[1])))


def leibniz_defect(u: RealField, v: RealField, h) -> float:
    """Max deviation from ``s_h(uv) - u s_h v - v s_h u = (d_h u)(d_h v) - (d_-h u)(d_-h v)``.

    Here ``d_h w = w(. - h) - w`` is evaluated by spectral shifts so the
    identity holds for arbitrary (off-lattice) ``h``.
    """
    g = u.grid
    U, Vv = transform(u), transform(v)
    mh = (-h[0], -h[1])
    uh, um = inverse(shift(U, h)).values, inverse(shift(U, mh)).values
    vh, vm = inverse(shift(Vv, h)).values, inverse(shift(Vv, mh)).values
    uu, vv = u.values, v.values
    # products must be sampled consistently: shift the product as a trig polynomial
    # of doubled degree by using the shifted samples directly
    s_uv = 2 * uu * vv - uh * vh - um * vm
    s_u = 2 * uu - uh - um
    s_v = 2 * vv - vh - vm
    lhs = s_uv - uu * s_v - vv * s_u
    rhs = -(uh - uu) * (vh - vv) - (um - uu) * (vm - vv)
    del g
    return float(np.max(np.abs(lhs - rhs)))


# -- cutoff and mollifier profile ----------------------------------------------

CHI_FLAT = 0.25
CHI_ZERO = 2.0


def chi(s) -> np.ndarray:
    """Radial bump: 1 on ``[0, 1/4]``, 0 on ``[2, inf)``, quintic smoothstep between."""
    s = np.abs(np.asarray(s, dtype=float))
    t = np.clip((s - CHI_FLAT) / (CHI_ZERO - CHI_FLAT), 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


@lru_cache(maxsize=1)
def _chi_gl(n: int = 96) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on ``[0, 1/4]`` and ``[1/4, 2]`` (chi is smooth on each)."""
    x, w = np.polynomial.legendre.leggauss(n)
    parts = []
    for a, b in ((0.0, CHI_FLAT), (CHI_FLAT, CHI_ZERO)):
        parts.append((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w))
    s = np.concatenate([p[0] for p in parts])
    ws = np.concatenate([p[1] for p in parts])
    return s, ws


def cutoff_defect_symbol(rho: np.ndarray) -> np.ndarray:
    """``psi(rho) = int_0^2 chi(s) rho J1(s rho) / s ds``.

    The linear part of the cutoff nonlinearity has symbol
    ``|xi| - psi(eps |xi|) / eps``.
    """
    rho = np.asarray(rho, dtype=float)
    flat = rho.ravel()
    top = float(np.max(np.abs(flat))) if flat.size else 0.0
    # J1(s rho) oscillates about rho / pi times on [0, 2]; keep ~16 nodes per period
    s, w = _chi_gl(96 + 16 * math.ceil(top / 8.0))
    out = np.empty_like(flat)
    cw = chi(s) * w / s
    for i0 in range(0, flat.size, 4096):
        blk = flat[i0 : i0 + 4096]
        out[i0 : i0 + 4096] = (j1(np.multiply.outer(blk, s)) * cw).sum(axis=1) * blk
    return out.reshape(rho.shape)


# -- engine -----------------------------------------------------------------------

def default_workers() -> int:
    env = os.environ.get("MUSKATLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class _Ctx:
    grid: Grid
    quad: QuadratureSpec
    m: int

    @property
    def nodes(self):
        return polar_nodes(self.grid, self.quad)

    def up(self, c: np.ndarray) -> np.ndarray:
        """Padded physical samples (complex if ``c`` packs two real spectra)."""
        return ifft2(pad_spectrum(c, self.m)) * (self.m * self.m)

    def up_real(self, c: np.ndarray) -> np.ndarray:
        return self.up(c).real

    def down(self, x: np.ndarray) -> np.ndarray:
        """Mean-normalized ``n x n`` coefficients of padded real samples."""
        return truncate_spectrum(fft2(x) / (self.m * self.m), self.grid.n)


def _ctx(grid: Grid, quad: QuadratureSpec) -> _Ctx:
    m = (3 * grid.n) // 2
    m += m % 2
    return _Ctx(grid, quad, m)


def _strip_nyquist(grid: Grid, c: np.ndarray) -> np.ndarray:
    """Drop the unpaired Nyquist line.

    Two real fields are packed into one complex transform, which needs
    Hermitian spectra after an arbitrary (off-lattice) shift.  The Nyquist
    line is not Hermitian after such a shift, so the engine works with
    spectra that vanish there.
    """
    nyq = np.abs(grid.k) == grid.n // 2
    out = np.array(c, dtype=complex, copy=True)
    out[nyq, :] = 0.0
    out[:, nyq] = 0.0
    return out


def _pair_map(fn, n_pairs: int, workers: int | None):
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        return [fn(j) for j in range(n_pairs)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n_pairs)))


def _sum_dicts(parts: list[dict]) -> dict:
    keys = parts[0].keys()
    return {k: tree_sum([p[k] for p in parts]) for k in keys}


def _si(x):
    return sici(x)[0]


def near_symbols(u: np.ndarray, rmin: float) -> tuple[np.ndarray, np.ndarray]:
    """Even parts of ``int_0^rmin`` of the derivative and difference kernels.

    ``ND`` is the symbol of ``int_0^rmin a.grad(delta g) dr / r`` and ``NS``
    that of ``int_0^rmin delta g dr / r^2`` (even in ``u = a . xi``).
    """
    su = u * _si(rmin * u)
    nd = -su
    ns = su - (1.0 - np.cos(rmin * u)) / rmin
    return nd, ns


def far_symbols(u: np.ndarray, rmax: float) -> tuple[np.ndarray, np.ndarray]:
    """Even parts of ``int_rmax^inf`` of the derivative and difference kernels."""
    au = np.abs(u)
    rest = 0.5 * math.pi * au - u * _si(rmax * u)
    fd = -rest
    fs = (1.0 - np.cos(rmax * u)) / rmax + rest
    return fd, fs


@dataclass(frozen=True)
class _Fields:
    """Per-direction data shared by all evaluators."""

    u: np.ndarray
    uo: np.ndarray


def _dir(grid: Grid, c: float, s: float) -> _Fields:
    x1, x2 = grid.xi
    o1, o2 = grid.xi_odd
    return _Fields(c * x1 + s * x2, c * o1 + s * o2)


def _chunks(n: int):
    for i0 in range(0, n, RADIAL_CHUNK):
        yield slice(i0, min(n, i0 + RADIAL_CHUNK))


# -- the nonlinearity L(f) g ----------------------------------------------------

def _cutoff_factor(r: np.ndarray, eps: float | None) -> np.ndarray:
    if eps is None:
        return np.ones_like(r)
    return 1.0 - chi(r / eps)


def _operator_coeffs(F: np.ndarray, G: np.ndarray, grid: Grid, quad: QuadratureSpec,
                     eps: float | None = None, workers: int | None = None) -> np.ndarray:
    """Coefficients of ``L(f) g`` (or of its cutoff version when ``eps`` is set)."""
    ctx = _ctx(grid, quad)
    nd = ctx.nodes
    same = G is F
    F = _strip_nyquist(grid, F)
    G = F if same else _strip_nyquist(grid, G)
    cut = _cutoff_factor(nd.r, eps)
    near_cut = float(_cutoff_factor(np.array([nd.r_min]), eps)[0])
    grad = gradient(SpectralField(grid, F))

    def pair(j: int) -> dict:
        out = None
        c0, s0 = float(np.cos(nd.theta[j])), float(np.sin(nd.theta[j]))
        for d in (1.0, -1.0):
            fl = _dir(grid, d * c0, d * s0)
            p = ctx.up_real(d * (c0 * grad[0].coeffs + s0 * grad[1].coeffs))
            cc = (1.0 + p * p) ** -1.5
            acc = []
            for sl in _chunks(len(nd.r)):
                r = nd.r[sl]
                one_m = 1.0 - np.exp(-1j * np.multiply.outer(r, fl.u))
                if same:
                    x = ctx.up(F * one_m * (1.0 + 1j * (1j * fl.uo)))
                    df, dg = x.real, x.imag
                else:
                    x = ctx.up(F * one_m + 1j * (1j * fl.uo) * G * one_m)
                    df, dg = x.real, x.imag
                rr = r[:, None, None]
                K = (1.0 + (df / rr) ** 2) ** -1.5
                w = (nd.wr[sl] * cut[sl] / r)[:, None, None]
                acc.append(np.sum(w * (K - 1.0) * dg, axis=0))
            nearD, _ = near_symbols(fl.u, nd.r_min)
            near = (cc - 1.0) * ctx.up_real(nearD * G) * near_cut
            term = tree_sum(acc) + near
            out = term if out is None else out + term
        return {"L": out}

    parts = _pair_map(pair, len(nd.theta) // 2, workers)
    acc = _sum_dicts(parts)["L"] * (-INV2PI * nd.wt)
    coeff = ctx.down(acc)
    lin = power_symbol(grid, 1.0)
    if eps is not None:
        lin = lin - cutoff_defect_symbol(eps * grid.kmag) / eps
    return coeff + lin * G


def _as_spec(f) -> np.ndarray:
    return _spec(f).coeffs


def muskat_operator(f, g, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> RealField:
    """``L(f) g`` as samples."""
    F = _spec(f)
    G = _spec(g)
    out = _operator_coeffs(F.coeffs, G.coeffs if g is not f else F.coeffs, F.grid, q, None, workers)
    return inverse(SpectralField(F.grid, out))


def muskat_rhs_spectral(F: SpectralField, q: QuadratureSpec = REFERENCE, eps: float | None = None,
                        workers: int | None = None) -> SpectralField:
    """Coefficients of ``-L(f) f`` (or ``N_eps(f)`` when ``eps`` is given)."""
    c = F.coeffs
    return SpectralField(F.grid, -_operator_coeffs(c, c, F.grid, q, eps, workers))


def muskat_rhs(f: RealField, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> RealField:
    """``-L(f) f``, the time derivative of the interface height."""
    return inverse(muskat_rhs_spectral(_spec(f), q, None, workers))


def muskat_rhs_cutoff(f: RealField, eps: float, q: QuadratureSpec = REFERENCE,
                      workers: int | None = None) -> RealField:
    """``N_eps(f)``: the nonlinearity with the factor ``1 - chi(|alpha| / eps)``.

    The part linear in ``f`` is applied exactly on the whole plane with
    symbol ``|xi| - psi(eps |xi|) / eps``.
    """
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    return inverse(muskat_rhs_spectral(_spec(f), q, float(eps), workers))


def raw_linear_quadrature(g, q: QuadratureSpec = REFERENCE) -> RealField:
    """``<D> g`` evaluated by the polar quadrature itself, without any closure.

    This is the finite-difference representation
    ``-(1/2pi) int alpha.grad Delta_alpha g dalpha / |alpha|^2`` truncated to
    ``[r_min, r_max]``, i.e. what ``L(0) g`` would be without the exact
    treatment of the linear part.  It exposes the bare discretization error
    of the node set.
    """
    G = _spec(g)
    grid = G.grid
    nd = polar_nodes(grid, q)
    sym = np.zeros(grid.kmag.shape)
    for t in nd.theta:
        fl = _dir(grid, float(np.cos(t)), float(np.sin(t)))
        ru = np.multiply.outer(nd.r, fl.u)
        # real (paired) part of -i u (1 - e^{-i r u}) / r
        val = fl.u * np.sin(ru) / nd.r[:, None, None]
        sym += np.tensordot(nd.wr, val, axes=1)
    sym *= INV2PI * nd.wt
    return inverse(SpectralField(grid, sym * G.coeffs))


def closed_linear_quadrature(g, q: QuadratureSpec = REFERENCE) -> RealField:
    """Polar quadrature of ``<D> g`` with the exact near and far closures.

    The only remaining error is the angular rule applied to the kink of
    ``|a . xi|``; refining ``n_theta`` reduces it quadratically.
    """
    G = _spec(g)
    grid = G.grid
    nd = polar_nodes(grid, q)
    sym = np.zeros(grid.kmag.shape)
    for t in nd.theta:
        fl = _dir(grid, float(np.cos(t)), float(np.sin(t)))
        ru = np.multiply.outer(nd.r, fl.u)
        val = fl.u * np.sin(ru) / nd.r[:, None, None]
        nD, _ = near_symbols(fl.u, nd.r_min)
        fD, _ = far_symbols(fl.u, nd.r_max)
        sym += np.tensordot(nd.wr, val, axes=1) - nD - fD
    sym *= INV2PI * nd.wt
    return inverse(SpectralField(grid, sym * G.coeffs))


# -- quasilinearization ---------------------------------------------------------

@dataclass(frozen=True)
class MuskatDecomposition:
    p_part: RealField
    drift: tuple[RealField, RealField]
    remainder: RealField
    total: RealField
    residual: float
    drift_term: RealField

    def reconstructed(self) -> RealField:
        return self.p_part + self.drift_term + self.remainder


def _decomp_coeffs(F: np.ndarray, G: np.ndarray, grid: Grid, quad: QuadratureSpec,
                   workers: int | None = None) -> dict:
    """Padded accumulators for ``L``, ``P``, ``V`` and ``R`` in one sweep."""
    ctx = _ctx(grid, quad)
    nd = ctx.nodes
    F = _strip_nyquist(grid, F)
    G = _strip_nyquist(grid, G)
    gradF = gradient(SpectralField(grid, F))
    x1, x2 = grid.xi_odd
    hess = (-(x1 * x1) * F, -(x1 * x2) * F, -(x2 * x2) * F)

    def pair(j: int) -> dict:
        c0, s0 = float(np.cos(nd.theta[j])), float(np.sin(nd.theta[j]))
        p0 = ctx.up_real(c0 * gradF[0].coeffs + s0 * gradF[1].coeffs)
        q0 = ctx.up_real(c0 * c0 * hess[0] + 2 * c0 * s0 * hess[1] + s0 * s0 * hess[2])
        cc = (1.0 + p0 * p0) ** -1.5
        res = {"L": 0.0, "P": 0.0, "R": 0.0, "V": 0.0}
        Ks = {}
        cache = {}
        for d in (1.0, -1.0):
            fl = _dir(grid, d * c0, d * s0)
            p = d * p0
            accL, accP, accR, Kd = [], [], [], []
            for sl in _chunks(len(nd.r)):
                r = nd.r[sl]
                one_m = 1.0 - np.exp(-1j * np.multiply.outer(r, fl.u))
                dd = 1j * fl.uo
                x = ctx.up(F * one_m + 1j * G * one_m)
                y = ctx.up(dd * F * one_m + 1j * dd * G * one_m)
                df, dg = x.real, x.imag
                adf, adg = y.real, y.imag
                rr = r[:, None, None]
                slope_ = df / rr
                base = 1.0 + slope_ * slope_
                K = base**-1.5
                J = slope_ * base**-2.5
                wr = nd.wr[sl][:, None, None]
                accL.append(np.sum(wr * (K - 1.0) * adg / rr, axis=0))
                accP.append(np.sum(wr * dg / rr**2, axis=0))
                Mr = (K - cc - 3.0 * J * (slope_ - p) - 3.0 * J * adf) / rr**2
                accR.append(np.sum(wr * Mr * dg, axis=0))
                Kd.append(K)
            Ks[d] = np.concatenate(Kd, axis=0)
            nearD, nearS = near_symbols(fl.u, nd.r_min)
            _, farS = far_symbols(fl.u, nd.r_max)
            Gn = ctx.up_real(nearD * G)
            Gs = ctx.up_real((nearS + farS) * G)
            Gf = ctx.up_real(farS * G)
            # boundary data at r = r_max
            eR = 1.0 - np.exp(-1j * nd.r_max * fl.u)
            xb = ctx.up(F * eR + 1j * G * eR)
            KR = (1.0 + (xb.real / nd.r_max) ** 2) ** -1.5
            res["L"] = res["L"] + tree_sum(accL) + (cc - 1.0) * Gn
            res["P"] = res["P"] + (cc - 1.0) * (tree_sum(accP) + Gs)
            res["R"] = res["R"] + tree_sum(accR) + (1.0 - cc) * Gf + (KR - 1.0) * xb.imag / nd.r_max
            cache[d] = (c0 * d, s0 * d)
        # drift: (K(-alpha) - K(alpha)) a / r, both members of the pair give the same term
        diff = Ks[-1.0] - Ks[1.0]
        vr = np.sum(nd.wr[:, None, None] * diff / nd.r[:, None, None], axis=0)
        k1 = 1.5 * p0 * q0 * (1.0 + p0 * p0) ** -2.5
        vr_near = -2.0 * nd.r_min * k1
        vscal = 2.0 * (vr + vr_near)
        res["V1"] = vscal * c0
        res["V2"] = vscal * s0
        del res["V"]
        return res

    parts = _pair_map(pair, len(nd.theta) // 2, workers)
    acc = _sum_dicts(parts)
    lin = power_symbol(grid, 1.0) * G
    out = {
        "L": ctx.down(acc["L"] * (-INV2PI * nd.wt)) + lin,
        "P": ctx.down(acc["P"] * (INV2PI * nd.wt)) + lin,
        "R": ctx.down(acc["R"] * (INV2PI * nd.wt)),
        "V1": acc["V1"] * (0.5 * INV2PI * nd.wt),
        "V2": acc["V2"] * (0.5 * INV2PI * nd.wt),
        "ctx": ctx,
    }
    return out


def _drift_dot_grad(v1: np.ndarray, v2: np.ndarray, G: np.ndarray, ctx: _Ctx) -> np.ndarray:
    grid = ctx.grid
    gx, gy = gradient(SpectralField(grid, G))
    return ctx.down(v1 * ctx.up_real(gx.coeffs) + v2 * ctx.up_real(gy.coeffs))


def decompose(f, g, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> MuskatDecomposition:
    """``L(f) g`` and its pieces ``P(f) g``, ``V(f)``, ``R(f, g)`` from one sweep."""
    F = _spec(f)
    G = _spec(g)
    grid = F.grid
    acc = _decomp_coeffs(F.coeffs, G.coeffs, grid, q, workers)
    ctx = acc["ctx"]
    vg = _drift_dot_grad(acc["V1"], acc["V2"], G.coeffs, ctx)
    L = SpectralField(grid, acc["L"])
    P = SpectralField(grid, acc["P"])
    R = SpectralField(grid, acc["R"])
    VG = SpectralField(grid, vg)
    diff = L - P - VG - R
    nrm = math.sqrt(total(np.abs(L.coeffs) ** 2))
    resid = math.sqrt(total(np.abs(diff.coeffs) ** 2)) / nrm if nrm > 0 else 0.0
    v1 = RealField(grid, _down_real(acc["V1"], ctx))
    v2 = RealField(grid, _down_real(acc["V2"], ctx))
    return MuskatDecomposition(inverse(P), (v1, v2), inverse(R), inverse(L), float(resid), inverse(VG))


def _down_real(x: np.ndarray, ctx: _Ctx) -> np.ndarray:
    return inverse(SpectralField(ctx.grid, ctx.down(x))).values


def elliptic_part(f, g, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> RealField:
    """``P(f) g = (1/2pi) int delta_alpha g / <a.grad f>^3 dalpha / |alpha|^3``."""
    F, G = _spec(f), _spec(g)
    grid = F.grid
    ctx = _ctx(grid, q)
    nd = ctx.nodes
    gradF = gradient(F)

    def pair(j: int) -> dict:
        c0, s0 = float(np.cos(nd.theta[j])), float(np.sin(nd.theta[j]))
        p0 = ctx.up_real(c0 * gradF[0].coeffs + s0 * gradF[1].coeffs)
        cm1 = (1.0 + p0 * p0) ** -1.5 - 1.0
        # the coefficient is even, so both members of the pair share it and the
        # radial integral reduces to the paired (even) symbol
        fl = _dir(grid, c0, s0)
        ru = np.multiply.outer(nd.r, fl.u)
        sym = np.tensordot(nd.wr, 2.0 * np.sin(0.5 * ru) ** 2 / nd.r[:, None, None] ** 2, axes=1)
        _, ns = near_symbols(fl.u, nd.r_min)
        _, fs = far_symbols(fl.u, nd.r_max)
        return {"P": 2.0 * cm1 * ctx.up_real((sym + ns + fs) * G.coeffs)}

    acc = _sum_dicts(_pair_map(pair, len(nd.theta) // 2, workers))["P"]
    out = ctx.down(acc * (INV2PI * nd.wt)) + power_symbol(grid, 1.0) * G.coeffs
    return inverse(SpectralField(grid, out))


def drift(f, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> tuple[RealField, RealField]:
    """``V(f) = (1/4pi) int (<Delta_-alpha f>^-3 - <Delta_alpha f>^-3) alpha dalpha / |alpha|^3``."""
    F = _spec(f)
    grid = F.grid
    F = SpectralField(grid, _strip_nyquist(grid, F.coeffs))
    ctx = _ctx(grid, q)
    nd = ctx.nodes
    gradF = gradient(F)
    x1, x2 = grid.xi_odd
    hess = (-(x1 * x1) * F.coeffs, -(x1 * x2) * F.coeffs, -(x2 * x2) * F.coeffs)

    def pair(j: int) -> dict:
        c0, s0 = float(np.cos(nd.theta[j])), float(np.sin(nd.theta[j]))
        Ks = {}
        for d in (1.0, -1.0):
            fl = _dir(grid, d * c0, d * s0)
            ks = []
            for sl in _chunks(len(nd.r)):
                r = nd.r[sl]
                one_m = 1.0 - np.exp(-1j * np.multiply.outer(r, fl.u))
                df = ctx.up_real(F.coeffs * one_m)
                ks.append((1.0 + (df / r[:, None, None]) ** 2) ** -1.5)
            Ks[d] = np.concatenate(ks, axis=0)
        vr = np.sum(nd.wr[:, None, None] * (Ks[-1.0] - Ks[1.0]) / nd.r[:, None, None], axis=0)
        p0 = ctx.up_real(c0 * gradF[0].coeffs + s0 * gradF[1].coeffs)
        q0 = ctx.up_real(c0 * c0 * hess[0] + 2 * c0 * s0 * hess[1] + s0 * s0 * hess[2])
        vr = vr - 2.0 * nd.r_min * 1.5 * p0 * q0 * (1.0 + p0 * p0) ** -2.5
        return {"V1": 2.0 * vr * c0, "V2": 2.0 * vr * s0}

    acc = _sum_dicts(_pair_map(pair, len(nd.theta) // 2, workers))
    sc = 0.5 * INV2PI * nd.wt
    return (RealField(grid, _down_real(acc["V1"] * sc, ctx)), RealField(grid, _down_real(acc["V2"] * sc, ctx)))


def remainder(f, g, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> RealField:
    """``R(f, g) = (1/2pi) int M_alpha delta_alpha g dalpha`` with the exact symbol

    ``M_alpha = |alpha|^-3 [K - c - 3 J (Delta_alpha f - a.grad f) - 3 J a.grad(delta_alpha f)]``
    where ``K = <Delta_alpha f>^-3``, ``c = <a.grad f>^-3`` and
    ``J = Delta_alpha f <Delta_alpha f>^-5``.
    """
    return decompose(f, g, q, workers).remainder


# -- pointwise bound on M_alpha ---------------------------------------------------

@dataclass(frozen=True)
class BoundAudit:
    samples: int
    violations: int
    max_ratio: float


def remainder_symbol_audit(f, q: QuadratureSpec = REFERENCE, stride: int = 1) -> BoundAudit:
    """Check ``|M_alpha| <= 6 |a|^-3 |Delta f - a.grad f| + 3 |a|^-3 |grad delta f|``.

    Evaluated at every grid point and every ``stride``-th quadrature node;
    no tolerance is applied.
    """
    F = _spec(f)
    grid = F.grid
    nd = polar_nodes(grid, q)
    x1, x2 = grid.xi_odd
    gx, gy = gradient(F)
    count = 0
    bad = 0
    worst = 0.0
    for t in nd.theta[::1]:
        c0, s0 = float(np.cos(t)), float(np.sin(t))
        u = c0 * grid.xi[0] + s0 * grid.xi[1]
        p = inverse(SpectralField(grid, c0 * gx.coeffs + s0 * gy.coeffs)).values
        cc = (1.0 + p * p) ** -1.5
        for r in nd.r[::stride]:
            e = 1.0 - np.exp(-1j * r * u)
            df = inverse(SpectralField(grid, F.coeffs * e)).values
            d1 = inverse(SpectralField(grid, 1j * x1 * F.coeffs * e)).values
            d2 = inverse(SpectralField(grid, 1j * x2 * F.coeffs * e)).values
            sl = df / r
            base = 1.0 + sl * sl
            K = base**-1.5
            J = sl * base**-2.5
            adf = c0 * d1 + s0 * d2
            M = (K - cc - 3.0 * J * (sl - p) - 3.0 * J * adf) / r**3
            bound = (6.0 * np.abs(sl - p) + 3.0 * np.hypot(d1, d2)) / r**3
            viol = np.abs(M) > bound
            bad += int(np.count_nonzero(viol))
            count += M.size
            nz = bound > 0
            if np.any(nz):
                worst = max(worst, float(np.max(np.abs(M[nz]) / bound[nz])))
    return BoundAudit(count, bad, worst)


# -- kernel identity ---------- -------------------------------------------------------

@dataclass(frozen=True)
class KernelIdentity:
    lhs: RealField
    rhs: RealField
    relerr: float
    exact_rel: float


def _zeta_coeff(theta: np.ndarray, zeta, power: float = 3.0) -> np.ndarray:
    a = np.cos(theta) * float(zeta[0]) + np.sin(theta) * float(zeta[1])
    return (1.0 + a * a) ** (-0.5 * power)


def kernel_identity_check(zeta, g, q: QuadratureSpec = REFERENCE, power: float = 3.0) -> KernelIdentity:
    """Both sides of the integration-by-parts identity for a frozen slope ``zeta``.

    lhs = ``-int <a.zeta>^-3 alpha.grad Delta_alpha g dalpha / |alpha|^2``
    rhs = ``int <a.zeta>^-3 delta_alpha g dalpha / |alpha|^3``

    The coefficient does not depend on ``x``, so each side is the polar
    quadrature of a Fourier symbol, evaluated node by node.  ``exact_rel``
    compares the rhs with the closed form ``(pi/2) int c(theta) |a.xi| dtheta``
    evaluated by a 4096-point angular rule.
    """
    G = _spec(g)
    grid = G.grid
    nd = polar_nodes(grid, q)
    cth = _zeta_coeff(nd.theta, zeta, power)
    sl = np.zeros(grid.kmag.shape)
    sr = np.zeros(grid.kmag.shape)
    for t, cw in zip(nd.theta, cth):
        fl = _dir(grid, float(np.cos(t)), float(np.sin(t)))
        ru = np.multiply.outer(nd.r, fl.u)
        r3 = nd.r[:, None, None]
        dsym = np.tensordot(nd.wr, fl.u * np.sin(ru) / r3, axes=1)
        ssym = np.tensordot(nd.wr, 2.0 * np.sin(0.5 * ru) ** 2 / r3**2, axes=1)
        nD, nS = near_symbols(fl.u, nd.r_min)
        fD, fS = far_symbols(fl.u, nd.r_max)
        sl += cw * (dsym - nD - fD)
        sr += cw * (ssym + nS + fS)
    sl *= nd.wt
    sr *= nd.wt
    lhs = inverse(SpectralField(grid, sl * G.coeffs))
    rhs = inverse(SpectralField(grid, sr * G.coeffs))
    den = math.sqrt(total(np.abs(sr * G.coeffs) ** 2))
    rel = math.sqrt(total(np.abs((sl - sr) * G.coeffs) ** 2)) / den if den > 0 else 0.0
    ex = exact_zeta_symbol(grid, zeta, power)
    exr = math.sqrt(total(np.abs((ex - sr) * G.coeffs) ** 2)) / den if den > 0 else 0.0
    return KernelIdentity(lhs, rhs, float(rel), float(exr))


def exact_zeta_symbol(grid: Grid, zeta, power: float = 3.0, n_fine: int = 4096) -> np.ndarray:
    """``(pi/2) int_0^{2pi} <a.zeta>^-power |a.xi| dtheta`` on the lattice."""
    th = (np.arange(n_fine) + 0.5) * (2.0 * math.pi / n_fine)
    cw = _zeta_coeff(th, zeta, power)
    x1, x2 = grid.xi
    out = np.zeros(grid.kmag.shape)
    for t, c in zip(th, cw):
        out += c * np.abs(np.cos(t) * x1 + np.sin(t) * x2)
    return out * (0.5 * math.pi * 2.0 * math.pi / n_fine)


def divergence_constant(zeta, alpha, power: float = 3.0, h: float = 1e-5) -> tuple[float, float]:
    """Central-difference divergence of ``-alpha / (|alpha|^2 + (alpha.zeta)^2)^{3/2}``.

    Returns ``(div * |alpha|^3, <a.zeta>^-power)`` so that the two numbers agree
    exactly when ``power`` is the correct exponent.
    """
    z = np.asarray(zeta, dtype=float)

    def field(a):
        a = np.asarray(a, dtype=float)
        return -a / (a @ a + (a @ z) ** 2) ** 1.5

    a = np.asarray(alpha, dtype=float)
    div = 0.0
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        div += (field(a + e)[i] - field(a - e)[i]) / (2 * h)
    na = float(np.hypot(*a))
    ah = a / na
    return float(div * na**3), float((1.0 + (ah @ z) ** 2) ** (-0.5 * power))


# -- weighted second-difference operator ------------------------------------------

def _cos_tail_52(z: np.ndarray) -> np.ndarray:
    """``int_z^inf cos(v) v^{-5/2} dv`` for ``z > 0``."""
    z = np.asarray(z, dtype=float)
    S, C = fresnel(np.sqrt(2.0 * z / math.pi))
    c_half = math.sqrt(math.pi / 2.0) - math.sqrt(2.0 * math.pi) * C  # int_z^inf cos v v^-1/2
    s_32 = 2.0 * np.sin(z) / np.sqrt(z) + 2.0 * c_half  # int_z^inf sin v v^-3/2
    return (2.0 / 3.0) * np.cos(z) * z**-1.5 - (2.0 / 3.0) * s_32


def fd_constant() -> float:
    """The constant making the second-difference form equal ``|xi|^{3/2} phi`` for kappa = 1."""
    # int_0^{2pi} |cos|^{3/2} = 4 sqrt(pi) Gamma(5/4) / (2 Gamma(7/4))
    ang = 4.0 * math.sqrt(math.pi) * math.gamma(1.25) / (2.0 * math.gamma(1.75))
    return PHI_UNIT / (2.0 * UNIT_INTEGRAL * ang)


def _weight_moments(k: Weight, rmin: float, rmax: float) -> tuple[float, float]:
    """``int_0^rmin r^-1/2 kappa(1/r) dr`` and ``int_rmax^inf r^-5/2 kappa(1/r) dr``."""
    from scipy.integrate import quad

    # r = t^2 removes the endpoint singularity of the first integral
    near, _ = quad(lambda t: 2.0 * float(k(1.0 / (t * t))), 0.0, math.sqrt(rmin), limit=200, epsabs=0.0, epsrel=1e-12)
    # r = rmax / t^2 maps the tail onto (0, 1]
    far, _ = quad(lambda t: 2.0 * t * t * float(k(t * t / rmax)) * rmax**-1.5, 0.0, 1.0, limit=200, epsabs=0.0, epsrel=1e-12)
    return near, far


def weighted_fd_symbol(grid: Grid, k: Weight, q: QuadratureSpec = REFERENCE) -> np.ndarray:
    """Symbol of ``c int s_h g |h|^{-3/2} kappa(1/|h|) dh / |h|^2`` under the polar rule.

    Closures: below ``r_min`` the second difference is replaced by its
    Taylor term ``(h.xi)^2``; above ``r_max`` the non-oscillating part
    ``2 kappa(1/r) r^{-5/2}`` is integrated exactly and the oscillating part
    ``-2 cos(r u) kappa(1/r) r^{-5/2}`` uses ``kappa(1/r_max)``.
    """
    nd = polar_nodes(grid, q)
    kr = k(1.0 / nd.r)
    k_far = float(k(1.0 / nd.r_max))
    m_near, m_far = _weight_moments(k, nd.r_min, nd.r_max)
    out = np.zeros(grid.kmag.shape)
    for t in nd.theta:
        fl = _dir(grid, float(np.cos(t)), float(np.sin(t)))
        au = np.abs(fl.u)
        ru = np.multiply.outer(nd.r, au)
        wv = (nd.wr * kr * nd.r**-2.5)[:, None, None]
        inner = np.sum(wv * 4.0 * np.sin(0.5 * ru) ** 2, axis=0)
        near = m_near * au**2
        safe = np.where(au > 0, au, 1.0)
        # int_R^inf cos(r u) r^{-5/2} dr = u^{3/2} int_{Ru}^inf cos v v^{-5/2} dv
        osc = safe**1.5 * _cos_tail_52(nd.r_max * safe)
        osc = np.where(au > 0, osc, (2.0 / 3.0) * nd.r_max**-1.5)
        out += inner + near + 2.0 * m_far - 2.0 * k_far * osc
    return fd_constant() * nd.wt * out


def weighted_fd_laplacian(g, k: Weight, q: QuadratureSpec = REFERENCE) -> RealField:
    """``<D>^{3/2, phi} g`` through its second-difference representation."""
    G = _spec(g)
    return inverse(SpectralField(G.grid, weighted_fd_symbol(G.grid, k, q) * G.coeffs))


def weighted_dhalf(G: SpectralField, k: Weight, s: float = 1.5) -> SpectralField:
    """Spectral ``<D>^{s, phi}``: symbol ``|xi|^s phi(|xi|)``."""
    return SpectralField(G.grid, power_symbol(G.grid, s) * phi_on_grid(k, G.grid) * G.coeffs)


# -- commutators ------------------------------------------------------------------

def commutator_riesz_drift(f, g, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> RealField:
    """``sum_j [R_j, V_j(f)] g = sum_j R_j(V_j g) - V_j R_j g`` with ``g`` mean-free."""
    from .spectral_core import riesz

    G = _spec(g)
    G = SpectralField(G.grid, np.where(G.grid.kmag == 0, 0.0, G.coeffs))
    v1, v2 = drift(f, q, workers)
    grid = G.grid
    ctx = _ctx(grid, q)
    gp = ctx.up_real(G.coeffs)
    V1, V2 = ctx.up_real(transform(v1).coeffs), ctx.up_real(transform(v2).coeffs)
    r1, r2 = riesz(SpectralField(grid, ctx.down(V1 * gp)))
    r1b, r2b = riesz(SpectralField(grid, ctx.down(V2 * gp)))
    rg1, rg2 = riesz(G)
    a = r1.coeffs + r2b.coeffs
    b = ctx.down(V1 * ctx.up_real(rg1.coeffs) + V2 * ctx.up_real(rg2.coeffs))
    del r2, r1b
    return inverse(SpectralField(grid, a - b))


def commutator_weighted(f, k: Weight, q: QuadratureSpec = REFERENCE, workers: int | None = None) -> RealField:
    """``<D>^{3/2,phi}(L(f) f) - L(f)(<D>^{3/2,phi} f)``."""
    F = _spec(f)
    grid = F.grid
    Lf = _operator_coeffs(F.coeffs, F.coeffs, grid, q, None, workers)
    DF = weighted_dhalf(F, k)
    LDF = _operator_coeffs(F.coeffs, DF.coeffs, grid, q, None, workers)
    a = weighted_dhalf(SpectralField(grid, Lf), k).coeffs
    return inverse(SpectralField(grid, a - LDF))


# -- tail report --------------------------------------------------------------------

def tail_estimate(g, q: QuadratureSpec = REFERENCE) -> float:
    """Bound on ``(1/2pi) int_{|alpha|>r_max} |delta_alpha g| dalpha / |alpha|^3``.

    Uses ``|delta_alpha g| <= 2 ||g||_inf``; reported for diagnostics.  The
    evaluators above add the far-field contribution exactly for the linear
    part, so this is an a priori size, not an error.
    """
    G = _spec(g)
    nd = polar_nodes(G.grid, q)
    sup = float(np.max(np.abs(inverse(G).values)))
    return 2.0 * sup / nd.r_max


def weighted_fd_exact_symbol(grid: Grid, k: Weight, n_fine: int = 2048) -> np.ndarray:
    """Closed form of the second-difference symbol for a general weight.

    Integrating the radial variable first gives
    ``(c / 2pi) int_0^{2pi} |a.xi|^{3/2} phi(|a.xi|) dtheta``.  For a constant
    weight this is exactly ``|xi|^{3/2} phi_0``; otherwise it is an angular
    average of ``phi`` at the reduced frequencies ``|a.xi| <= |xi|``.
    """
    from .weights import phi_table

    tab = phi_table(k)
    th = (np.arange(n_fine) + 0.5) * (math.pi / n_fine)  # half circle, symmetric integrand
    x1, x2 = grid.xi
    out = np.zeros(grid.kmag.shape)
    for t in th:
        au = np.abs(math.cos(t) * x1 + math.sin(t) * x2)
        out += au**1.5 * tab(au)
    return fd_constant() * out * (2.0 * math.pi / n_fine) / (2.0 * math.pi)
