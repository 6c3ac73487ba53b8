"""Flat key = value experiment configs with dotted sections.

Example:

    # nonlinear rate experiment
    domain.geometry   = interval
    domain.nodes      = 257
    exponents.p       = 2.0
    exponents.c       = 1.0
    flow.dt           = 1e-3
    flow.horizon      = 10.0
    initial.kind      = mode_perturbed
    initial.modes     = 2:1:0.1
    sampler.cadence   = 0.02
    output.dir        = out
    seed              = 0

Values are parsed as int, float, bool (true/false), mode triples k:j:amp, or
bare strings; lists are whitespace- or comma-separated.  Sweep axes use
sweep.p / sweep.nodes / sweep.amplitude with list values.  Every key not in
the schema is an error, reported with its line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

_BOOL = {"true": True, "false": False}


class ConfigError(ValueError):
    """Schema or syntax error; message carries file/line/field context."""


def _parse_token(tok: str):
    if tok.lower() in _BOOL:
        return _BOOL[tok.lower()]
    if ":" in tok:
        parts = tok.split(":")
        if len(parts) == 3:
            try:
                return (int(parts[0]), int(parts[1]), float(parts[2]))
            except ValueError:
                pass
        return tok
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """-> {dotted key: (value, line_number)}; lists collapse to single values
    when a key has exactly one token."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, rhs = line.partition("=")
        key = key.strip()
        if not key or any(not part.isidentifier() for part in key.split(".")):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} "
                              f"(first set on line {out[key][1]})")
        tokens = rhs.replace(",", " ").split()
        if not tokens:
            raise ConfigError(f"{source}:{lineno}: key {key!r} has no value")
        values = [_parse_token(t) for t in tokens]
        out[key] = (values[0] if len(values) == 1 else values, lineno)
    return out


_DEFAULTS = {
    "domain.geometry": "interval",
    "domain.length": 1.0,
    "domain.radius": 1.0,
    "domain.dimension": 3,
    "spectrum.modes": 8,
    "spectrum.gap_tol": 1e-3,
    "flow.dt": 1e-3,
    "flow.dt_min": 1e-8,
    "flow.dt_max": 1e-2,
    "flow.horizon": 10.0,
    "initial.kind": "stationary",
    "initial.factor": 1.0,
    "initial.modes": [],
    "initial.path": "",
    "initial.match_clock": True,
    "sampler.cadence": 0.05,
    "rates.band_lo": 1e-10,
    "rates.band_hi": 1e-4,
    "rates.tol": 0.05,
    "output.dir": "out",
    "seed": 0,
}

_REQUIRED = ("domain.nodes",)
_SWEEP_KEYS = ("sweep.p", "sweep.nodes", "sweep.amplitude")
_KNOWN = (set(_DEFAULTS) | set(_REQUIRED) | set(_SWEEP_KEYS)
          | {"exponents.p", "exponents.m", "exponents.c", "exponents.T"})

_INITIAL_KINDS = ("stationary", "scaled_stationary", "mode_perturbed", "from_file")


@dataclass
class ExperimentConfig:
    """Fully resolved configuration; `resolved` maps every key (defaults
    included) to its value, which is what the manifest echoes."""

    source: str
    resolved: dict = field(default_factory=dict)
    sweep_axes: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.resolved[key]

    def domain_spec(self):
        from .grid import DomainSpec
        geom = self.resolved["domain.geometry"]
        return DomainSpec(geometry=geom, nodes=self.resolved["domain.nodes"],
                          length=float(self.resolved["domain.length"]),
                          dimension=int(self.resolved["domain.dimension"]),
                          radius=float(self.resolved["domain.radius"]))

    def exponents(self):
        from .stationary import Exponents
        return Exponents.make(p=self.resolved["exponents.p"],
                              c=self.resolved["exponents.c"])



def _fail(source, line, msg):
    where = f"{source}:{line}: " if line else f"{source}: "
    raise ConfigError(where + msg)


def resolve_config(raw: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate the raw key map and fill in every default explicitly."""
    lines = {k: ln for k, (_, ln) in raw.items()}
    values = {k: v for k, (v, _) in raw.items()}

    for key in values:
        if key not in _KNOWN:
            _fail(source, lines[key], f"unknown key {key!r}")
    for key in _REQUIRED:
        if key not in values:
            _fail(source, None, f"missing required key {key!r}")

    has_p, has_m = "exponents.p" in values, "exponents.m" in values
    if has_p == has_m:
        _fail(source, None, "give exactly one of exponents.p, exponents.m")
    has_c, has_T = "exponents.c" in values, "exponents.T" in values
    if has_c == has_T:
        _fail(source, None, "give exactly one of exponents.c, exponents.T")

    resolved = dict(_DEFAULTS)
    resolved.update(values)
    for key in ("exponents.p", "exponents.m", "exponents.c", "exponents.T"):
        resolved.setdefault(key, None)

    def check_type(key, types, desc):
        v = resolved.get(key)
        if v is not None and not isinstance(v, types):
            _fail(source, lines.get(key), f"{key} must be {desc}, got {v!r}")

    check_type("domain.nodes", int, "an integer")
    check_type("spectrum.modes", int, "an integer")
    check_type("seed", int, "an integer")
    for key in ("domain.length", "domain.radius", "spectrum.gap_tol", "flow.dt",
                "flow.dt_min", "flow.dt_max", "flow.horizon", "initial.factor",
                "sampler.cadence", "rates.band_lo", "rates.band_hi", "rates.tol",
                "exponents.p", "exponents.m", "exponents.c", "exponents.T"):
        v = resolved.get(key)
        if v is not None:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                _fail(source, lines.get(key), f"{key} must be a number, got {v!r}")
            resolved[key] = float(v)
    check_type("initial.match_clock", bool, "true or false")

    if resolved["domain.geometry"] not in ("interval", "ball"):
        _fail(source, lines.get("domain.geometry"),
              f"domain.geometry must be interval or ball, "
              f"got {resolved['domain.geometry']!r}")
    if resolved["initial.kind"] not in _INITIAL_KINDS:
        _fail(source, lines.get("initial.kind"),
              f"initial.kind must be one of {_INITIAL_KINDS}, "
              f"got {resolved['initial.kind']!r}")

    modes = resolved["initial.modes"]
    if modes and not isinstance(modes, list):
        modes = [modes]
    for m in modes:
        if not (isinstance(m, tuple) and len(m) == 3):
            _fail(source, lines.get("initial.modes"),
                  f"initial.modes entries must be k:j:amplitude, got {m!r}")
    resolved["initial.modes"] = list(modes)
    if resolved["initial.kind"] == "mode_perturbed" and not modes:
        _fail(source, lines.get("initial.kind"),
              "initial.kind = mode_perturbed requires initial.modes")
    if resolved["initial.kind"] == "from_file" and not resolved["initial.path"]:
        _fail(source, lines.get("initial.kind"),
              "initial.kind = from_file requires initial.path")

    # derive the full exponent bundle so the manifest shows every value
    from .stationary import Exponents
    try:
        exps = Exponents.make(p=resolved["exponents.p"], m=resolved["exponents.m"],
                              c=resolved["exponents.c"], T=resolved["exponents.T"])
    except ValueError as exc:
        _fail(source, None, str(exc))
    resolved["exponents.p"] = exps.p
    resolved["exponents.m"] = exps.m
    resolved["exponents.c"] = exps.c
    resolved["exponents.T"] = exps.T
    if resolved["domain.geometry"] == "ball":
        try:
            exps.check_subcritical(int(resolved["domain.dimension"]))
        except ValueError as exc:
            _fail(source, None, str(exc))

    sweep = {}
    for key in _SWEEP_KEYS:
        if key in resolved:
            v = resolved.pop(key)
            sweep[key.split(".", 1)[1]] = v if isinstance(v, list) else [v]
    return ExperimentConfig(source=source, resolved=resolved, sweep_axes=sweep)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return resolve_config(parse_config_text(text, str(path)), str(path))
