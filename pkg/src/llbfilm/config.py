"""Flat key=value run configuration: parsing, validation, serialization.

The format is one ``section.key = value`` assignment per line, ``#`` starts
a comment, blank lines are ignored.  Flat assignments diff cleanly in sweep
manifests, which is why there is no nesting.  Parsing is total: every error
in the file is collected with its line number before anything is rejected.

Exactly one of the two coefficient routes may appear:

* ``params.*`` — explicit dynamical coefficients ``gamma``, ``L``, ``A``
  plus the material constants ``chi11``, ``T``, ``Tc``;
* ``law.*`` — a thickness scaling law (``a``, ``eps``, ``gyro_scale``,
  amplitude ``rule``) with the same material constants, applied at the
  grid's h (or each h of ``grid.hs`` in a sweep).

The longitudinal stiffness weight is always derived from T and Tc — it is
deliberately not a key, so a file can never pin it inconsistently.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

from .grid import FilmGrid, make_grid
from .model import ModelParams
from .stepping import SimConfig
from .limitlab import ScalingLaw

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config"]


class ConfigError(ValueError):
    """All problems found in a config text, each tagged with a line number."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg
                                   for ln, msg in self.errors))


@dataclass
class RunConfig:
    """One run (or sweep) fully described; mirrors the file keys 1:1."""

    # grid block
    nx: int = 8
    ny: int = 8
    nz: int = 4
    Lx: float = 1.0
    Ly: float = 1.0
    h: float = 0.1
    hs: tuple = ()          # non-empty selects sweep mode

    # coefficient route: "explicit" (params.*) or "law" (law.*)
    mode: str = "explicit"
    gamma: float = 1.0
    L: float = 1.0
    A: float = 0.01
    chi11: float = 2.0
    T: float = 600.0
    Tc: float = 500.0
    law_a: float = 1.0
    law_eps: float = 1.0
    law_gyro_scale: float = 1.0
    rule: str = "paper"

    # sim block
    dt: float = 1e-3
    t_end: float = 0.5
    scheme: str = "semi-implicit"
    galerkin_n: int = 0     # 0 = no spectral projection
    cadence: int = 1
    padding: int = 4

    # initial data
    init_kind: str = "random"   # or "uniform"
    init_amplitude: float = 0.1
    init_kmax: int = 2
    init_mmax: int = 1
    init_ux: float = 0.1
    init_uy: float = 0.0
    init_uz: float = 0.0

    # io block + seed
    out: str = "out"
    formats: tuple = ("csv", "snapshots")
    seed: int = 0

    def make_grid(self, h: float | None = None) -> FilmGrid:
        return make_grid(self.nx, self.ny, self.nz, self.Lx, self.Ly,
                         self.h if h is None else h)

    def model_params(self, h: float | None = None) -> ModelParams:
        if self.mode == "law":
            law = self.scaling_law()
            hh = self.h if h is None else h
            return ModelParams(exchange=law.exchange(hh), gyro=law.gyro(hh),
                               relax=law.relax(hh), chi=self.chi11,
                               temperature=self.T, curie=self.Tc)
        return ModelParams(exchange=self.A, gyro=self.gamma, relax=self.L,
                           chi=self.chi11, temperature=self.T, curie=self.Tc)

    def scaling_law(self) -> ScalingLaw:
        return ScalingLaw(a=self.law_a, eps=self.law_eps,
                          gyro_scale=self.law_gyro_scale)

    def sim_config(self) -> SimConfig:
        return SimConfig(dt=self.dt, t_end=self.t_end, scheme=self.scheme,
                         record_every=self.cadence,
                         galerkin_n=self.galerkin_n or None)


def _to_int(s): return int(s, 0)


def _to_float(s): return float(s)


def _to_str(s): return s


def _to_floats(s):
    return tuple(float(p) for p in s.replace(",", " ").split())


def _to_strs(s):
    return tuple(p for p in s.replace(",", " ").split() if p)


# key -> (attribute, converter, constraint, description)
_POSITIVE_INT = ("a positive integer", lambda v: v >= 1)
_COUNT = ("an integer >= 2", lambda v: v >= 2)
_POSITIVE = ("positive", lambda v: v > 0)
_NONNEG = ("nonnegative", lambda v: v >= 0)
_ANY = ("", lambda v: True)

_KEYS = {
    "grid.nx": ("nx", _to_int, _COUNT),
    "grid.ny": ("ny", _to_int, _COUNT),
    "grid.nz": ("nz", _to_int, _COUNT),
    "grid.Lx": ("Lx", _to_float, _POSITIVE),
    "grid.Ly": ("Ly", _to_float, _POSITIVE),
    "grid.h": ("h", _to_float, _POSITIVE),
    "grid.hs": ("hs", _to_floats,
                ("strictly decreasing positive values",
                 lambda v: len(v) > 0 and all(x > 0 for x in v)
                 and all(b < a for a, b in zip(v, v[1:])))),
    "params.gamma": ("gamma", _to_float, _ANY),
    "params.L": ("L", _to_float, _NONNEG),
    "params.A": ("A", _to_float, _NONNEG),
    "params.chi11": ("chi11", _to_float, _POSITIVE),
    "params.T": ("T", _to_float, _POSITIVE),
    "params.Tc": ("Tc", _to_float, _POSITIVE),
    "law.a": ("law_a", _to_float, _POSITIVE),
    "law.eps": ("law_eps", _to_float, _POSITIVE),
    "law.gyro_scale": ("law_gyro_scale", _to_float, _POSITIVE),
    "law.rule": ("rule", _to_str,
                 ("'paper' or 'unit'", lambda v: v in ("paper", "unit"))),
    "law.chi11": ("chi11", _to_float, _POSITIVE),
    "law.T": ("T", _to_float, _POSITIVE),
    "law.Tc": ("Tc", _to_float, _POSITIVE),
    "sim.dt": ("dt", _to_float, _POSITIVE),
    "sim.t_end": ("t_end", _to_float, _NONNEG),
    "sim.scheme": ("scheme", _to_str,
                   ("'semi-implicit' or 'rk4'",
                    lambda v: v in ("semi-implicit", "rk4"))),
    "sim.galerkin_n": ("galerkin_n", _to_int, _NONNEG),
    "sim.cadence": ("cadence", _to_int, _POSITIVE_INT),
    "sim.padding": ("padding", _to_int, _POSITIVE_INT),
    "init.kind": ("init_kind", _to_str,
                  ("'random' or 'uniform'",
                   lambda v: v in ("random", "uniform"))),
    "init.amplitude": ("init_amplitude", _to_float, _POSITIVE),
    "init.kmax": ("init_kmax", _to_int, _POSITIVE_INT),
    "init.mmax": ("init_mmax", _to_int, _NONNEG),
    "init.ux": ("init_ux", _to_float, _ANY),
    "init.uy": ("init_uy", _to_float, _ANY),
    "init.uz": ("init_uz", _to_float, _ANY),
    "io.out": ("out", _to_str, _ANY),
    "io.formats": ("formats", _to_strs,
                   ("a subset of {csv, snapshots, plot}",
                    lambda v: len(v) > 0
                    and all(f in ("csv", "snapshots", "plot") for f in v))),
    "seed": ("seed", _to_int, _ANY),
}

_PARAM_ONLY = {"params.gamma", "params.L", "params.A"}
_LAW_ONLY = {"law.a", "law.eps", "law.gyro_scale", "law.rule"}


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError carrying every problem found."""
    errors = []
    seen = {}           # key -> line number
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((lineno, f"expected key = value, got {line!r}"))
            continue
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _KEYS:
            errors.append((lineno, f"unknown key {key!r}"))
            continue
        if key in seen:
            errors.append((lineno, f"duplicate key {key!r} "
                                   f"(first set on line {seen[key]})"))
            continue
        seen[key] = lineno
        attr, conv, (what, ok) = _KEYS[key]
        try:
            value = conv(val)
        except ValueError:
            errors.append((lineno, f"{key}: cannot read {val!r}"))
            continue
        if not ok(value):
            errors.append((lineno, f"{key}: must be {what}, got {val!r}"))
            continue
        setattr(cfg, attr, value)

    used_params = sorted(k for k in seen if k in _PARAM_ONLY)
    used_law = sorted(k for k in seen if k in _LAW_ONLY)
    if used_params and used_law:
        errors.append((seen[used_law[0]],
                       "explicit coefficients and a scaling law are mutually"
                       f" exclusive (also set: {', '.join(used_params)})"))
    cfg.mode = "law" if used_law else "explicit"
    if cfg.T <= cfg.Tc:
        key = "params.T" if "params.T" in seen else \
            "law.T" if "law.T" in seen else None
        errors.append((seen.get(key, 0),
                       f"temperature must exceed the transition value "
                       f"(T={cfg.T:g}, Tc={cfg.Tc:g})"))
    if errors:
        raise ConfigError(sorted(errors))
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text for a config; parse(serialize(c)) == c."""
    defaults = RunConfig()
    attr_to_key = {}
    for key, (attr, _, _) in _KEYS.items():
        # explicit route serializes via params.*, law route via law.*
        if cfg.mode == "explicit" and key.startswith("law."):
            continue
        if cfg.mode == "law" and key.startswith("params."):
            continue
        attr_to_key[attr] = key
    lines = []
    for f in dc_fields(RunConfig):
        if f.name == "mode" or f.name not in attr_to_key:
            continue
        val = getattr(cfg, f.name)
        if f.name == "hs":
            if not val:
                continue
            txt = ", ".join(repr(x) for x in val)
        elif f.name == "formats":
            txt = ", ".join(val)
        elif isinstance(val, float):
            txt = repr(val)
        else:
            txt = str(val)
        # law mode must keep its marker keys even at default values,
        # or the round-trip would fall back to the explicit route
        keep = (cfg.mode == "law"
                and attr_to_key[f.name] in ("law.a", "law.eps"))
        if val != getattr(defaults, f.name) or keep:
            lines.append(f"{attr_to_key[f.name]} = {txt}")
    return "\n".join(lines) + "\n"
