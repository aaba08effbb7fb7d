"""Periodic grids, Fourier pairs, multipliers, translations and Sobolev norms.

Conventions
-----------
The torus is ``[0, l)^2`` sampled at ``x_j = j h`` with ``h = l / n``.  The
forward transform carries the factor ``1/n^2`` so that ``coeffs[k]`` is the
mean value of ``f(x) exp(-i xi_k . x)``; a constant field therefore has a
single coefficient equal to the constant.  Frequencies are
``xi = 2 pi k / l`` with ``k`` in the symmetric range returned by
``numpy.fft.fftfreq``.

Continuous norms are approximated by ``int |F(xi)|^2 dxi -> l^2 sum |c_k|^2``
so that ``||f||_{L^2}^2 = int_torus f^2 dx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np
import scipy.fft as sfft

from .reduce import total

if TYPE_CHECKING:  # pragma: no cover
    from .quadrature import QuadratureSpec


class GridMismatch(ValueError):
    """Two operands live on different grids."""


@dataclass(frozen=True)
class Grid:
    """Square periodic grid with ``n`` points per side and side length ``l``."""

    n: int
    l: float

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size n must be an even integer >= 8, got {self.n}")
        if not np.isfinite(self.l) or self.l <= 0:
            raise ValueError(f"grid length l must be positive, got {self.l}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "l", float(self.l))

    @property
    def h(self) -> float:
        return self.l / self.n

    @cached_property
    def x(self) -> np.ndarray:
        """Sample coordinates along one axis."""
        return np.arange(self.n) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavenumbers along one axis (``fftfreq`` order)."""
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def kmesh(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.k, self.k, indexing="ij"))

    @cached_property
    def xi(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular frequencies ``(xi_1, xi_2)`` on the lattice."""
        kx, ky = self.kmesh
        s = 2.0 * np.pi / self.l
        return kx * s, ky * s

    @cached_property
    def xi_odd(self) -> tuple[np.ndarray, np.ndarray]:
        """Frequencies with the unpaired Nyquist line zeroed.

        Odd symbols (derivatives, Riesz) must vanish on the Nyquist line to
        keep real fields real.
        """
        x1, x2 = self.xi
        nyq = self.n // 2
        kx, ky = self.kmesh
        return np.where(np.abs(kx) == nyq, 0.0, x1), np.where(np.abs(ky) == nyq, 0.0, x2)

    @cached_property
    def kmag(self) -> np.ndarray:
        """``|xi|`` on the lattice."""
        x1, x2 = self.xi
        return np.hypot(x1, x2)

    @cached_property
    def kint(self) -> np.ndarray:
        """``|k|`` in integer wavenumber units."""
        kx, ky = self.kmesh
        return np.hypot(kx, ky)

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.l

    def band_mask(self, kmax: float) -> np.ndarray:
        """Lattice points with integer wavenumber ``|k| <= kmax``."""
        return self.kint <= kmax

    def zeros(self) -> "RealField":
        return RealField(self, np.zeros((self.n, self.n)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RealField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"expected samples of shape {(self.grid.n,) * 2}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field samples must be finite")
        object.__setattr__(self, "values", _frozen(v))

    def __add__(self, other: "RealField") -> "RealField":
        _check_same(self.grid, other.grid)
        return RealField(self.grid, self.values + other.values)

    def __sub__(self, other: "RealField") -> "RealField":
        _check_same(self.grid, other.grid)
        return RealField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "RealField":
        return RealField(self.grid, self.values * float(a))

    __rmul__ = __mul__

    def __neg__(self) -> "RealField":
        return RealField(self.grid, -self.values)

    def l2(self) -> float:
        """``(int f^2 dx)^{1/2}`` by the rectangle rule (exact for trig polynomials)."""
        return float(np.sqrt(total(self.values**2) * self.grid.h**2))


@dataclass(frozen=True)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"expected coefficients of shape {(self.grid.n,) * 2}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(c))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self.grid, other.grid)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self.grid, other.grid)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, a: complex) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * a)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def hermitian_defect(self) -> float:
        """Max ``|c(xi) - conj(c(-xi))|``; zero for real fields."""
        c = self.coeffs
        flipped = np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1))
        return float(np.max(np.abs(c - np.conj(flipped))))

    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)


@dataclass(frozen=True)
class MultiplierTable:
    """A Fourier symbol sampled on the lattice of ``grid``."""

    grid: Grid
    m: np.ndarray
    odd: bool = field(default=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.m)
        if m.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"expected symbol of shape {(self.grid.n,) * 2}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("multiplier entries must be finite")
        object.__setattr__(self, "m", _frozen(m))


def _check_same(a: Grid, b: Grid) -> None:
    if a != b:
        raise GridMismatch(f"grid mismatch: {a} vs {b}")


def fft2(a: np.ndarray, workers: int = 1) -> np.ndarray:
    return sfft.fft2(a, workers=workers)


def ifft2(a: np.ndarray, workers: int = 1) -> np.ndarray:
    return sfft.ifft2(a, workers=workers)


def transform(f: RealField) -> SpectralField:
    """Mean-normalized discrete Fourier coefficients of ``f``."""
    n = f.grid.n
    return SpectralField(f.grid, fft2(f.values) / (n * n))


def inverse(F: SpectralField) -> RealField:
    """Samples of the trigonometric polynomial with coefficients ``F``."""
    n = F.grid.n
    return RealField(F.grid, ifft2(F.coeffs).real * (n * n))


def symbol(grid: Grid, fn) -> MultiplierTable:
    """Tabulate a radial symbol ``fn(|xi|)`` on the lattice."""
    return MultiplierTable(grid, np.asarray(fn(grid.kmag), dtype=float))


def power_symbol(grid: Grid, s: float) -> np.ndarray:
    """``|xi|^s`` with the zero mode set to 0 (for ``s > 0``) or 1 (``s == 0``)."""
    kmag = grid.kmag
    if s == 0:
        return np.ones_like(kmag)
    out = np.zeros_like(kmag)
    nz = kmag > 0
    out[nz] = kmag[nz] ** s
    return out


def apply_multiplier(F: SpectralField, m: MultiplierTable | np.ndarray) -> SpectralField:
    if isinstance(m, MultiplierTable):
        _check_same(F.grid, m.grid)
        m = m.m
    return SpectralField(F.grid, F.coeffs * m)


def dmult(F: SpectralField, s: float, w: np.ndarray | None = None) -> SpectralField:
    """``<D>^s`` (times the radial weight table ``w`` if given)."""
    m = power_symbol(F.grid, s)
    if w is not None:
        m = m * w
    return SpectralField(F.grid, F.coeffs * m)


def shift_phase(grid: Grid, alpha) -> np.ndarray:
    x1, x2 = grid.xi
    a1, a2 = float(alpha[0]), float(alpha[1])
    return np.exp(-1j * (a1 * x1 + a2 * x2))


def shift(F: SpectralField, alpha) -> SpectralField:
    """Coefficients of ``x -> f(x - alpha)``; exact for any real ``alpha``."""
    return SpectralField(F.grid, F.coeffs * shift_phase(F.grid, alpha))


def gradient(F: SpectralField) -> tuple[SpectralField, SpectralField]:
    x1, x2 = F.grid.xi_odd
    return SpectralField(F.grid, 1j * x1 * F.coeffs), SpectralField(F.grid, 1j * x2 * F.coeffs)


def riesz_symbols(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = grid.xi_odd
    kmag = grid.kmag
    inv = np.zeros_like(kmag)
    inv[kmag > 0] = 1.0 / kmag[kmag > 0]
    return 1j * x1 * inv, 1j * x2 * inv


def riesz(F: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Riesz transform with symbols ``i xi_j / |xi|`` (zero mode dropped)."""
    r1, r2 = riesz_symbols(F.grid)
    return SpectralField(F.grid, r1 * F.coeffs), SpectralField(F.grid, r2 * F.coeffs)


def sobolev_norm(F: SpectralField, s: float, w: np.ndarray | MultiplierTable | None = None) -> float:
    """``(int |xi|^{2s} w(xi)^2 |F|^2 dxi)^{1/2}``; the mean is dropped when ``s > 0``."""
    if not 0.0 <= s <= 4.0:
        raise ValueError(f"Sobolev order must lie in [0, 4], got {s}")
    m = power_symbol(F.grid, s)
    if w is not None:
        m = m * (w.m if isinstance(w, MultiplierTable) else w)
    q = np.abs(m * F.coeffs) ** 2
    return float(np.sqrt(total(q)) * F.grid.l)


def inner(F: SpectralField, G: SpectralField) -> float:
    """``int f g dx`` by Parseval."""
    _check_same(F.grid, G.grid)
    return float(total((F.coeffs * np.conj(G.coeffs)).real) * F.grid.l**2)


def oversampled(F: SpectralField, factor: int = 2) -> np.ndarray:
    """Real samples on a ``factor``-times finer grid (zero padding)."""
    return ifft2(pad_spectrum(F.coeffs, F.grid.n * factor)).real * (F.grid.n * factor) ** 2


def pad_spectrum(c: np.ndarray, m: int) -> np.ndarray:
    """Embed an ``n x n`` spectrum (last axes) into ``m x m`` with zeros.

    The unpaired Nyquist line is split evenly between ``+n/2`` and ``-n/2`` so
    that a real field stays real on the finer grid.
    """
    n = c.shape[-1]
    if m == n:
        return np.array(c, copy=True)
    if m < n:
        raise ValueError("padding target smaller than source")
    h = n // 2
    src = np.array(c, copy=True)
    out = np.zeros(src.shape[:-2] + (m, m), dtype=complex)
    # split Nyquist rows/columns
    src[..., h, :] *= 0.5
    src[..., :, h] *= 0.5
    # positive half gets +h, negative half keeps -h
    out_idx = np.r_[0 : h + 1, m - h : m]
    src_idx = np.r_[0 : h + 1, h:n]
    out[..., out_idx[:, None], out_idx[None, :]] = src[..., src_idx[:, None], src_idx[None, :]]
    return out


def truncate_spectrum(c: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pad_spectrum`: keep the central ``n x n`` block."""
    m = c.shape[-1]
    if m == n:
        return np.array(c, copy=True)
    h = n // 2
    idx = np.r_[0:h, m - h : m]
    out = c[..., idx[:, None], idx[None, :]].copy()
    # fold the Nyquist line back symmetrically
    out[..., h, :] = c[..., m - h, idx] + c[..., h, idx]
    out[..., :, h] = c[..., idx, m - h] + c[..., idx, h]
    out[..., h, h] = c[..., m - h, m - h] + c[..., h, h] + c[..., m - h, h] + c[..., h, m - h]
    return out


def sup_norm(F: SpectralField, factor: int = 2) -> float:
    return float(np.max(np.abs(oversampled(F, factor))))


def lipschitz_norm(F: SpectralField, factor: int = 2) -> float:
    """``|| |grad f| ||_inf`` on an oversampled grid."""
    g1, g2 = gradient(F)
    a = oversampled(g1, factor)
    b = oversampled(g2, factor)
    return float(np.max(np.hypot(a, b)))


def rescale_critical(f: RealField, lam: float) -> RealField:
    """``f_lam(x) = f(lam x) / lam`` sampled on the rescaled torus of side ``l / lam``.

    Sample ``j`` of the result sits at ``j h / lam`` where the original field
    is evaluated at ``j h``, so the map is exact on the lattice and commutes
    with every spectral norm.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"scaling factor must be positive, got {lam}")
    return RealField(Grid(f.grid.n, f.grid.l / lam), f.values / lam)


def rescale_critical_same_grid(f: RealField, lam: float, tol: float = 1e-10) -> RealField:
    """``f_lam`` about the torus centre, evaluated on the original grid.

    Uses exact trigonometric interpolation.  For ``lam < 1`` the profile
    spreads; the call is rejected when mass of ``f`` lying outside the
    central box of half width ``lam l / 2`` would be pushed off the torus.
    For ``lam > 1`` the spectrum is compressed towards high frequencies and
    the call is rejected when it would alias past Nyquist.
    """
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise ValueError(f"scaling factor must be positive, got {lam}")
    g = f.grid
    c0 = g.l / 2
    vmax = float(np.max(np.abs(f.values))) or 1.0
    F = transform(f)
    if lam < 1:
        off = np.abs(g.x - c0) > lam * g.l / 2
        mask = off[:, None] | off[None, :]
        if np.any(np.abs(f.values[mask]) > tol * vmax):
            raise ValueError("rescaling would push the support of f off the torus")
    else:
        live = np.abs(F.coeffs) > tol * np.max(np.abs(F.coeffs))
        if np.any(g.kint[live] * lam > g.n / 2 - 1):
            raise ValueError("rescaling would alias the spectrum past Nyquist")
    y = c0 + lam * (g.x - c0)
    xi = g.k * 2 * np.pi / g.l
    nyq = np.abs(g.k) == g.n // 2
    E = np.exp(1j * np.outer(y, xi))
    E[:, nyq] = np.cos(np.outer(y, xi[nyq]))
    vals = (E @ F.coeffs @ E.T).real / lam
    return RealField(g, vals)


def gagliardo_seminorm(f: RealField, s: float, quad: "QuadratureSpec") -> "GagliardoResult":
    """``(int int |f(x)-f(y)|^2 / |x-y|^{2+2s} dx dy)^{1/2}`` by polar quadrature.

    For each node ``alpha`` the inner integral ``||delta_alpha f||^2`` is
    evaluated exactly in frequency space.  The range ``r < r_min`` is closed
    by the Taylor term and ``r > r_max`` by the mean value ``2 ||f - mean||^2``
    of ``||delta_alpha f||^2``; the oscillatory remainder of that tail is
    reported as ``tail_error``.
    """
    from .quadrature import polar_nodes

    if not 0.0 < s < 1.0:
        raise ValueError(f"Gagliardo order must lie in (0, 1), got {s}")
    F = transform(f)
    g = f.grid
    nodes = polar_nodes(g, quad)
    x1, x2 = g.xi
    p = np.abs(F.coeffs) ** 2 * g.l**2
    acc = []
    for t, (c, sn) in enumerate(zip(nodes.cos, nodes.sin)):
        u = c * x1 + sn * x2
        ru = np.multiply.outer(nodes.r, u)
        d2 = np.sum((4.0 * np.sin(ru / 2) ** 2 * p).reshape(len(nodes.r), -1), axis=1)
        acc.append(np.sum(nodes.wr * d2 / nodes.r ** (1 + 2 * s)) * nodes.wt)
    inner_part = float(np.sum(acc))
    grad2 = float(total((x1**2 + x2**2) * p))
    near = np.pi * quad_rmin(g, quad) ** (2 - 2 * s) / (2 - 2 * s) * grad2
    var = float(total(p) - p[0, 0])
    rmax = quad_rmax(g, quad)
    tail = 2 * np.pi * 2 * var * rmax ** (-2 * s) / (2 * s)
    # |int_R^inf cos(r u) r^{-1-2s} dr| <= 2 R^{-1-2s} / |u| for the smallest lattice |u|
    tail_err = 2 * np.pi * 2 * var * 2 * rmax ** (-1 - 2 * s) / g.dxi
    value = np.sqrt(inner_part + near + tail)
    low = quad.n_r < 16 or quad.n_theta < 8
    return GagliardoResult(float(value), float(tail), float(tail_err), bool(low))


def quad_rmin(grid: Grid, quad: "QuadratureSpec") -> float:
    return quad.r_min(grid)


def quad_rmax(grid: Grid, quad: "QuadratureSpec") -> float:
    return quad.r_max(grid)


@dataclass(frozen=True)
class GagliardoResult:
    value: float
    tail: float
    tail_error: float
    low_confidence: bool

    def __float__(self) -> float:
        return self.value
