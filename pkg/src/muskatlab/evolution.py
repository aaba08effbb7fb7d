"""Time integration of the regularized problem

    d_t f - |log eps|^-1 Lap f = N_eps(f),    f(0) = f0 * chi_eps.

The scheme is exponential Euler.  The diagonal symbol
``Lambda = |log eps|^-1 |xi|^2 + |xi|`` is integrated exactly and the
residual ``N_eps(f) + <D> f`` is frozen over the step.  The linear part of
the residual has symbol ``psi(eps |xi|) / eps``, which overshoots ``|xi|`` by
at most ``0.112 / eps`` near ``eps |xi| = 3.8``.  The heat term absorbs that
overshoot whenever ``eps < 1``; at ``eps = 1`` the heat term vanishes and the
cutoff problem is itself mildly unstable at those frequencies.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .diagnostics import DiagnosticsRecord, record
from .muskat_ops import _chi_gl, _operator_coeffs, chi, cutoff_defect_symbol
from .quadrature import REFERENCE, QuadratureSpec
from .spectral_core import Grid, RealField, SpectralField, inverse, lipschitz_norm, power_symbol, sup_norm, transform
from .weights import Weight
from scipy.special import j0

MAGIC = b"MUSKATCK1"
BLOWUP = 1e12


class CheckpointError(ValueError):
    pass


class RunAborted(RuntimeError):
    def __init__(self, reason: str, state: "SimState"):
        super().__init__(reason)
        self.reason = reason
        self.state = state


# -- initial data -----------------------------------------------------------------

@dataclass(frozen=True)
class InitialData:
    """``kind`` is one of ``zero``, ``gaussian``, ``multi_bump``, ``mode_sum``, ``from_file``.

    gaussian: ``amplitude * exp(-|x - center|^2 / width^2)``; ``center`` defaults
    to the middle of the box.  multi_bump: ``bumps`` is a tuple of
    ``(amplitude, width, cx, cy)``.  mode_sum: ``modes`` is a tuple of
    ``(k1, k2, amplitude, phase)`` with integer wavenumbers, giving
    ``amplitude * cos(2 pi (k1 x + k2 y) / l + phase)``.  from_file: a ``.npy``
    array of samples or a checkpoint.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    width: float = 2.0
    center: tuple[float, float] | None = None
    bumps: tuple = ()
    modes: tuple = ()
    path: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "gaussian", "multi_bump", "mode_sum", "from_file"):
            raise ValueError(f"unknown initial data kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian width must be positive")
        if self.kind == "from_file" and not self.path:
            raise ValueError("from_file needs a path")

    def sample(self, grid: Grid) -> RealField:
        X, Y = grid.mesh
        mid = 0.5 * grid.l
        if self.kind == "zero":
            return grid.zeros()
        if self.kind == "gaussian":
            cx, cy = self.center if self.center is not None else (mid, mid)
            return RealField(grid, _bump(X, Y, grid.l, self.amplitude, self.width, cx, cy))
        if self.kind == "multi_bump":
            v = np.zeros_like(X)
            for a, w, cx, cy in self.bumps:
                v = v + _bump(X, Y, grid.l, a, w, cx, cy)
            return RealField(grid, v)
        if self.kind == "mode_sum":
            v = np.zeros_like(X)
            for k1, k2, a, ph in self.modes:
                v = v + a * np.cos(2 * math.pi * (k1 * X + k2 * Y) / grid.l + ph)
            return RealField(grid, v)
        if self.path.endswith(".npy"):
            v = np.load(self.path)
            if v.shape != (grid.n, grid.n):
                raise ValueError(f"{self.path}: samples of shape {v.shape}, grid needs {(grid.n, grid.n)}")
            return RealField(grid, v)
        st = checkpoint_load(self.path)
        if st.fhat.grid != grid:
            raise ValueError(f"{self.path}: checkpoint grid {st.fhat.grid} differs from {grid}")
        return inverse(st.fhat)


def _bump(X, Y, l, a, w, cx, cy):
    # nearest periodic image, so the bump is continuous across the boundary
    dx = (X - cx + 0.5 * l) % l - 0.5 * l
    dy = (Y - cy + 0.5 * l) % l - 0.5 * l
    return a * np.exp(-(dx * dx + dy * dy) / (w * w))


def mollifier_symbol(grid: Grid, eps: float) -> np.ndarray:
    """Transform of ``eps^-2 chi(|x| / eps) / m`` with ``m = int chi(|x|) dx``."""
    s, w = _chi_gl()
    cw = chi(s) * s * w
    mass = float(np.sum(cw))
    rho = eps * grid.kmag
    flat = rho.ravel()
    out = np.empty_like(flat)
    for i0 in range(0, flat.size, 4096):
        blk = flat[i0 : i0 + 4096]
        out[i0 : i0 + 4096] = j0(np.multiply.outer(blk, s)) @ cw
    return (out / mass).reshape(rho.shape)


def mollify_initial(f0: RealField, eps: float) -> RealField:
    """``f0 * chi_eps`` with the unit-mass bump ``chi_eps``."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    F = transform(f0)
    return inverse(SpectralField(F.grid, F.coeffs * mollifier_symbol(F.grid, eps)))


# -- configuration and state -----------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    grid: Grid = Grid(128, 32.0)
    epsilon: float = 0.1
    weight: Weight = Weight.unit()
    quad: QuadratureSpec = REFERENCE
    dt_initial: float = 0.05
    cfl: float = 0.4
    t_end: float = 1.0
    record_every: int = 1
    checkpoint_every: int = 0
    initial: InitialData = InitialData()
    beta0: float = 1e-2
    linear_only: bool = False
    small_data_A: float = 1e-2
    max_halvings: int = 8
    workers: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"sim.epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.dt_initial > 0:
            raise ValueError(f"sim.dt_initial must be positive, got {self.dt_initial}")
        if not self.t_end > 0:
            raise ValueError(f"sim.t_end must be positive, got {self.t_end}")
        if not self.cfl > 0:
            raise ValueError(f"sim.cfl must be positive, got {self.cfl}")
        if self.record_every < 1:
            raise ValueError("sim.record_every must be at least 1")
        if self.checkpoint_every < 0:
            raise ValueError("sim.checkpoint_every must be nonnegative")
        if not self.beta0 > 0:
            raise ValueError("sim.beta0 must be positive")

    @property
    def viscosity(self) -> float:
        # |log 1| = 0: the heat term is absent at eps = 1
        lg = abs(math.log(self.epsilon))
        return 0.0 if lg == 0.0 else 1.0 / lg


@dataclass
class SimState:
    t: float
    fhat: SpectralField
    step: int = 0
    history: list = field(default_factory=list)
    epsilon: float = 0.1

    def field(self) -> RealField:
        return inverse(self.fhat)


def initial_state(cfg: SimConfig) -> SimState:
    f0 = cfg.initial.sample(cfg.grid)
    f = mollify_initial(f0, cfg.epsilon)
    return SimState(0.0, transform(f), 0, [], cfg.epsilon)


# -- stepping --------------------------------------------------------------------

def linear_symbol(cfg: SimConfig) -> np.ndarray:
    g = cfg.grid
    return cfg.viscosity * g.kmag**2 + g.kmag


def residual_coeffs(F: SpectralField, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray | None]:
    """``N_eps(f) + <D> f`` and, for diagnostics, ``L(f) f``.

    The nonlinearity has zero mean for every ``f``; the tiny mean the
    quadrature produces is removed so that the mean of ``f`` is conserved
    exactly.
    """
    grid = F.grid
    if cfg.linear_only:
        return np.zeros_like(F.coeffs), None
    Neps = -_operator_coeffs(F.coeffs, F.coeffs, grid, cfg.quad, cfg.epsilon, cfg.workers)
    res = Neps + grid.kmag * F.coeffs
    res[grid.kmag == 0] = 0.0
    return res, None


def stable_dt(F: SpectralField, cfg: SimConfig) -> float:
    """``min(dt_initial, cfl / rate)`` with a nonlinear rate proxy.

    Beyond its linear part the residual is ``(<D> - L(f)) f`` up to the
    cutoff.  Its symbol is at most ``3 lip^2 |xi|`` for small slopes and at
    most ``|xi|`` for any slope, since ``L(f)`` has a coefficient in (0, 1].
    """
    lip = lipschitz_norm(F)
    rate = min(1.0, 3.0 * lip * lip) * float(F.grid.kmag.max())
    if rate == 0.0:
        return cfg.dt_initial
    return min(cfg.dt_initial, cfg.cfl / rate)


def _advance(F: SpectralField, res: np.ndarray, lam: np.ndarray, dt: float) -> SpectralField:
    z = lam * dt
    e = np.exp(-z)
    # (1 - e^{-z}) / lam, with the limit dt at lam = 0
    safe = np.where(lam > 0, lam, 1.0)
    phi1 = np.where(lam > 0, -np.expm1(-z) / safe, dt)
    out = e * F.coeffs + phi1 * res
    # re-impose the symmetry of a real field
    return transform(inverse(SpectralField(F.grid, out)))


def _weighted_A(F: SpectralField, cfg: SimConfig) -> float:
    from .diagnostics import weighted_energy

    return weighted_energy(F, cfg.weight, 2.0)


def step(state: SimState, cfg: SimConfig, dt: float | None = None) -> SimState:
    """One exponential-Euler step; halves ``dt`` when a small-data step inflates ``A_phi``."""
    F = state.fhat
    lam = linear_symbol(cfg)
    dt = stable_dt(F, cfg) if dt is None else float(dt)
    dt = min(dt, cfg.t_end - state.t) if cfg.t_end > state.t else dt
    res, _ = residual_coeffs(F, cfg)
    A0 = _weighted_A(F, cfg)
    new = _advance(F, res, lam, dt)
    halvings = 0
    while A0 < cfg.small_data_A and A0 > 0 and _weighted_A(new, cfg) > 1.1 * A0 and halvings < cfg.max_halvings:
        dt *= 0.5
        halvings += 1
        new = _advance(F, res, lam, dt)
    st = SimState(state.t + dt, new, state.step + 1, state.history, state.epsilon)
    _check_finite(st)
    return st


def _check_finite(st: SimState) -> None:
    c = st.fhat.coeffs
    if not np.all(np.isfinite(c)):
        raise RunAborted(f"non-finite coefficients at step {st.step}", st)
    big = float(np.max(np.abs(c))) * st.fhat.grid.n**2
    if big > BLOWUP:
        raise RunAborted(f"coefficient size {big:.3g} exceeds {BLOWUP:.0e} at step {st.step}", st)


def heat_energy_drop(F: SpectralField, cfg: SimConfig, dt: float) -> tuple[float, float]:
    """``(predicted, actual)`` change of ``A_phi`` from the heat factor alone.

    The prediction is ``-2 dt |log eps|^-1 Z_phi``.
    """
    from .diagnostics import weighted_energy

    g = F.grid
    heated = SpectralField(g, F.coeffs * np.exp(-cfg.viscosity * g.kmag**2 * dt))
    actual = weighted_energy(heated, cfg.weight, 2.0) - weighted_energy(F, cfg.weight, 2.0)
    pred = -2.0 * dt * cfg.viscosity * weighted_energy(F, cfg.weight, 3.0)
    return pred, actual


# -- monitors --------------------------------------------------------------------

def _flags(prev: DiagnosticsRecord | None, rec: DiagnosticsRecord, cfg: SimConfig, t: float) -> str:
    out = []
    if t > abs(math.log(cfg.epsilon)) and cfg.epsilon < 1.0:
        out.append("beyond_log_window")
    if prev is not None:
        slack = cfg.epsilon**cfg.beta0 * (prev.lip_f + prev.hs_norms.get(2.0, 0.0))
        if rec.sup_f > prev.sup_f + slack:
            out.append("sup_growth")
        if rec.lip_f > prev.lip_f * (1.0 + 1e-9):
            out.append("lip_growth")
        if rec.A_phi > prev.A_phi * (1.0 + 1e-12):
            out.append("A_growth")
    return ";".join(out)


@dataclass(frozen=True)
class RunResult:
    state: SimState
    records: list
    aborted: str = ""

    def csv(self) -> str:
        lines = [DiagnosticsRecord.header()]
        lines += [r.row() for r in self.records]
        if self.aborted:
            lines.append(f"# abort: {self.aborted}")
        return "\n".join(lines) + "\n"


def _record(F: SpectralField, cfg: SimConfig, t: float, prev: DiagnosticsRecord | None,
            dissipation: bool) -> DiagnosticsRecord:
    rec = record(F, cfg.weight, cfg.quad, t=t, with_dissipation=dissipation and not cfg.linear_only,
                 workers=cfg.workers)
    return replace(rec, flags=_flags(prev, rec, cfg, t))


def run(cfg: SimConfig, state: SimState | None = None, checkpoint_dir: str | None = None,
        dissipation: bool = False, on_record: Callable | None = None) -> RunResult:
    """Integrate to ``t_end``; record every ``record_every`` steps.

    The run never raises on blow-up: the abort reason is returned and the
    last state is dumped to ``checkpoint_dir`` when one is given.
    """
    st = initial_state(cfg) if state is None else state
    recs = list(st.history)
    prev = recs[-1] if recs else None
    if not recs:
        prev = _record(st.fhat, cfg, st.t, None, dissipation)
        recs.append(prev)
        if on_record:
            on_record(prev)
    reason = ""
    tol = 1e-12 * max(1.0, cfg.t_end)
    while st.t < cfg.t_end - tol:
        try:
            st = step(st, cfg)
        except RunAborted as err:
            reason = err.reason
            st = err.state
            if checkpoint_dir:
                checkpoint_save(st, os.path.join(checkpoint_dir, "abort.ck"), cfg.weight)
            break
        if st.step % cfg.record_every == 0 or st.t >= cfg.t_end - tol:
            prev = _record(st.fhat, cfg, st.t, prev, dissipation)
            recs.append(prev)
            if on_record:
                on_record(prev)
        if checkpoint_dir and cfg.checkpoint_every and st.step % cfg.checkpoint_every == 0:
            checkpoint_save(st, os.path.join(checkpoint_dir, f"step{st.step:06d}.ck"), cfg.weight)
    st.history = recs
    return RunResult(st, recs, reason)


# -- checkpoints -----------------------------------------------------------------

_HEAD = struct.Struct("<IdQdd")  # n, l, step, t, epsilon


def checkpoint_bytes(state: SimState, weight: Weight) -> bytes:
    g = state.fhat.grid
    wtext = weight.to_text().encode("utf-8")
    head = _HEAD.pack(g.n, g.l, state.step, state.t, state.epsilon)
    body = np.ascontiguousarray(state.fhat.coeffs, dtype="<c16").tobytes()
    return MAGIC + head + struct.pack("<I", len(wtext)) + wtext + body


def checkpoint_save(state: SimState, path: str, weight: Weight = Weight.unit()) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    data = checkpoint_bytes(state, weight)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ck-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class Checkpoint:
    state: SimState
    weight: Weight


def checkpoint_read(path: str, grid: Grid | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    off = len(MAGIC)
    try:
        n, l, stp, t, eps = _HEAD.unpack_from(data, off)
        off += _HEAD.size
        (wl,) = struct.unpack_from("<I", data, off)
        off += 4
        wtext = data[off : off + wl].decode("utf-8")
        off += wl
    except (struct.error, UnicodeDecodeError) as err:
        raise CheckpointError(f"{path}: truncated or corrupt header") from err
    if len(data) - off != 16 * n * n:
        raise CheckpointError(f"{path}: expected {16 * n * n} coefficient bytes, found {len(data) - off}")
    g = Grid(n, l)
    if grid is not None and grid != g:
        raise CheckpointError(f"{path}: grid (n={n}, l={l}) does not match (n={grid.n}, l={grid.l})")
    coeffs = np.frombuffer(data, dtype="<c16", offset=off).reshape(n, n).astype(complex)
    return Checkpoint(SimState(t, SpectralField(g, coeffs), stp, [], eps), Weight.from_text(wtext))


def checkpoint_load(path: str, grid: Grid | None = None) -> SimState:
    return checkpoint_read(path, grid).state
