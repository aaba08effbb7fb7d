"""Polar quadrature for integrals over the translation vector ``alpha``.

Radial nodes are Gauss-Legendre points in the variable ``s`` defined by
``r = c log(1 + e^s)`` (a softplus map).  For ``r << c`` this is the usual
logarithmic substitution, which resolves the ``1/r`` singular weights near
the origin; for ``r >> c`` the spacing becomes uniform, which resolves the
oscillation of ``f(x - alpha)`` at large ``|alpha|``.  The knee ``c`` is a
small multiple of the grid spacing.

Angular nodes are equispaced, ``theta_j = 2 pi j / n_theta`` with
``n_theta`` even, so node ``j + n_theta/2`` is the antipode of node ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral_core import Grid


@dataclass(frozen=True)
class QuadratureSpec:
    n_r: int = 64
    n_theta: int = 32
    r_min_cells: float = 0.01
    r_max_frac: float = 0.5
    knee_cells: float = 2.0

    def __post_init__(self) -> None:
        if int(self.n_r) != self.n_r or self.n_r < 2:
            raise ValueError(f"quad.n_r must be an integer >= 2, got {self.n_r}")
        if int(self.n_theta) != self.n_theta or self.n_theta < 2 or self.n_theta % 2:
            raise ValueError(f"quad.n_theta must be an even integer >= 2, got {self.n_theta}")
        if not self.r_min_cells > 0:
            raise ValueError(f"quad.r_min_cells must be positive, got {self.r_min_cells}")
        if not 0 < self.r_max_frac <= 0.5:
            raise ValueError(f"quad.r_max_frac must lie in (0, 0.5], got {self.r_max_frac}")
        if not self.knee_cells > 0:
            raise ValueError(f"quad.knee_cells must be positive, got {self.knee_cells}")
        object.__setattr__(self, "n_r", int(self.n_r))
        object.__setattr__(self, "n_theta", int(self.n_theta))

    def r_min(self, grid: Grid) -> float:
        return self.r_min_cells * grid.h

    def r_max(self, grid: Grid) -> float:
        return self.r_max_frac * grid.l

    def refined(self, factor: int = 2) -> "QuadratureSpec":
        return QuadratureSpec(
            self.n_r * factor, self.n_theta * factor, self.r_min_cells, self.r_max_frac, self.knee_cells
        )


REFERENCE = QuadratureSpec()
FINE = REFERENCE.refined(2)


@dataclass(frozen=True)
class PolarNodes:
    r: np.ndarray
    wr: np.ndarray
    theta: np.ndarray
    wt: float
    r_min: float
    r_max: float

    @property
    def cos(self) -> np.ndarray:
        return np.cos(self.theta)

    @property
    def sin(self) -> np.ndarray:
        return np.sin(self.theta)

    @property
    def n_pairs(self) -> int:
        return len(self.theta) // 2


def radial_rule(n: int, r_min: float, r_max: float, knee: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and ``dr`` weights on ``[r_min, r_max]`` (see module docstring)."""
    s0 = np.log(np.expm1(r_min / knee))
    s1 = np.log(np.expm1(r_max / knee))
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * x
    ws = 0.5 * (s1 - s0) * w
    r = knee * np.logaddexp(0.0, s)
    drds = knee * 0.5 * (1.0 + np.tanh(0.5 * s))
    return r, ws * drds


@lru_cache(maxsize=64)
def _nodes(n: int, l: float, spec: QuadratureSpec) -> PolarNodes:
    grid = Grid(n, l)
    rmin, rmax = spec.r_min(grid), spec.r_max(grid)
    r, wr = radial_rule(spec.n_r, rmin, rmax, spec.knee_cells * grid.h)
    theta = np.arange(spec.n_theta) * (2.0 * np.pi / spec.n_theta)
    for a in (r, wr, theta):
        a.flags.writeable = False
    return PolarNodes(r, wr, theta, 2.0 * np.pi / spec.n_theta, rmin, rmax)


def polar_nodes(grid: Grid, spec: QuadratureSpec) -> PolarNodes:
    return _nodes(grid.n, grid.l, spec)
