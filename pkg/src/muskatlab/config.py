"""Flat ``key=value`` run configuration.

Every key has a default (see ``DEFAULTS``); unknown keys are errors.  Lists
use commas inside one value and semicolons between records, e.g.
``initial.modes=1,0,0.01,0;0,2,0.005,1.5``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .evolution import InitialData, SimConfig
from .quadrature import QuadratureSpec
from .spectral_core import Grid
from .weights import Weight, weight_from_items


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


DEFAULTS: dict[str, str] = {
    "grid.n": "128",
    "grid.l": "32.0",
    "quad.n_r": "64",
    "quad.n_theta": "32",
    "quad.r_min_cells": "0.01",
    "quad.r_max_frac": "0.5",
    "quad.knee_cells": "2.0",
    "weight.kind": "unit",
    "weight.a": "0.375",
    "weight.breakpoints": "",
    "weight.levels": "",
    "sim.epsilon": "0.1",
    "sim.dt_initial": "0.05",
    "sim.cfl": "0.4",
    "sim.t_end": "1.0",
    "sim.record_every": "1",
    "sim.checkpoint_every": "0",
    "sim.beta0": "0.01",
    "sim.linear_only": "false",
    "sim.small_data_A": "0.01",
    "sim.max_halvings": "8",
    "sim.dissipation": "false",
    "initial.kind": "zero",
    "initial.amplitude": "0.0",
    "initial.width": "2.0",
    "initial.center": "",
    "initial.bumps": "",
    "initial.modes": "",
    "initial.path": "",
    "output.dir": "out",
}


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    items: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected key=value, got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown key")
        if key in items:
            raise ConfigError(key, "given twice")
        items[key] = val
    return items


def _num(items: dict, key: str, kind=float):
    raw = items[key]
    try:
        if kind is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}") from None


def _bool(items: dict, key: str) -> bool:
    raw = items[key].lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {items[key]!r}")


def _records(items: dict, key: str, width: int) -> tuple:
    raw = items[key].strip()
    if not raw:
        return ()
    out = []
    for rec in raw.split(";"):
        parts = [p.strip() for p in rec.split(",")]
        if len(parts) != width:
            raise ConfigError(key, f"each record needs {width} comma-separated numbers, got {rec!r}")
        try:
            out.append(tuple(float(p) for p in parts))
        except ValueError:
            raise ConfigError(key, f"non-numeric entry in {rec!r}") from None
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    output_dir: str
    dissipation: bool
    items: dict = field(default_factory=dict, compare=False)

    def to_text(self) -> str:
        return "".join(f"{k}={self.items[k]}\n" for k in DEFAULTS)


def build(items: dict[str, str]) -> RunConfig:
    """Validate and freeze; raises :class:`ConfigError` naming the bad key."""
    full = dict(DEFAULTS)
    for k, v in items.items():
        if k not in DEFAULTS:
            raise ConfigError(k, "unknown key")
        full[k] = v
    try:
        grid = Grid(_num(full, "grid.n", int), _num(full, "grid.l"))
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError("grid.n", str(err)) from None
    try:
        quad = QuadratureSpec(
            _num(full, "quad.n_r", int), _num(full, "quad.n_theta", int), _num(full, "quad.r_min_cells"),
            _num(full, "quad.r_max_frac"), _num(full, "quad.knee_cells"),
        )
    except ConfigError:
        raise
    except ValueError as err:
        key = str(err).split(" ", 1)[0]
        raise ConfigError(key if key in DEFAULTS else "quad", str(err)) from None
    wi = {"kind": full["weight.kind"]}
    if wi["kind"] == "log_pow":
        wi["a"] = full["weight.a"]
    if wi["kind"] == "tail_built":
        wi["breakpoints"] = full["weight.breakpoints"]
        wi["levels"] = full["weight.levels"]
    try:
        weight = weight_from_items(wi)
    except ValueError as err:
        raise ConfigError("weight.kind", str(err)) from None
    center = None
    if full["initial.center"].strip():
        c = _records(full, "initial.center", 2)
        if len(c) != 1:
            raise ConfigError("initial.center", "expected one pair cx,cy")
        center = c[0]
    try:
        init = InitialData(
            kind=full["initial.kind"], amplitude=_num(full, "initial.amplitude"), width=_num(full, "initial.width"),
            center=center, bumps=_records(full, "initial.bumps", 4), modes=_records(full, "initial.modes", 4),
            path=full["initial.path"],
        )
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError("initial.kind", str(err)) from None
    try:
        sim = SimConfig(
            grid=grid, epsilon=_num(full, "sim.epsilon"), weight=weight, quad=quad,
            dt_initial=_num(full, "sim.dt_initial"), cfl=_num(full, "sim.cfl"), t_end=_num(full, "sim.t_end"),
            record_every=_num(full, "sim.record_every", int), checkpoint_every=_num(full, "sim.checkpoint_every", int),
            initial=init, beta0=_num(full, "sim.beta0"), linear_only=_bool(full, "sim.linear_only"),
            small_data_A=_num(full, "sim.small_data_A"), max_halvings=_num(full, "sim.max_halvings", int),
        )
    except ConfigError:
        raise
    except ValueError as err:
        msg = str(err)
        key = msg.split(" ", 1)[0]
        raise ConfigError(key if key in DEFAULTS else "sim", msg) from None
    if not full["output.dir"].strip():
        raise ConfigError("output.dir", "must not be empty")
    return RunConfig(sim, full["output.dir"], _bool(full, "sim.dissipation"), full)


def load(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return build(parse_text(fh.read(), path))


def loads(text: str) -> RunConfig:
    return build(parse_text(text))
