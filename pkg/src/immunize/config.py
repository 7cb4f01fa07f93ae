"""Run configuration from INI files and command-line overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace

from .basis import DEFAULT_I, FAMILIES
from .curves import LIABILITY_KINDS
from .errors import ConfigurationError

COMMANDS = ("solve", "static", "dynamic", "fit", "simulate-yields")


def parse_floats(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def parse_ints(text):
    """``"1-100"``, ``"1,5,30"`` or a mix such as ``"1-5,30"``."""
    out = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def parse_names(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    output: str = "out"
    # data
    yields: str | None = None
    percent: bool = False
    skip_bad_rows: bool = False
    date: str | None = None
    flat_rate: float | None = None
    cashflows: str | None = None
    params: str | None = None
    # portfolio
    liability: str = "fullHorizon"
    bonds: tuple = (1.0, 2.0, 5.0, 10.0, 30.0)
    methods: tuple = ("ri2",)
    norm: str = "l2"
    nonneg: bool = False
    # basis
    family: str = "chebyshev"
    I: int = DEFAULT_I
    T: float = 50.0
    # experiments
    horizons: tuple = tuple(range(1, 101))
    paths: int = 500
    seed: int = 0
    horizon_years: float = 10.0
    rolling: bool = True
    # fit
    fit_d: tuple = (1,)
    shapley_I: int = 6
    I_max: int = 12
    N: int = 360
    fit_T: float | None = None
    # output
    svg: bool = True

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.liability not in LIABILITY_KINDS and self.cashflows is None:
            raise ConfigurationError(f"unknown liability kind {self.liability!r}; expected one of {LIABILITY_KINDS}")
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown basis family {self.family!r}")
        if self.norm not in ("l2", "linf"):
            raise ConfigurationError(f"unknown norm {self.norm!r}")
        if self.I < 1 or self.T <= 0:
            raise ConfigurationError("I must be positive and T > 0")
        if len(self.bonds) < 1 or any(b <= 0 for b in self.bonds) or list(self.bonds) != sorted(set(self.bonds)):
            raise ConfigurationError("bond maturities must be positive and strictly increasing")
        if not self.methods:
            raise ConfigurationError("no methods selected")
        if self.paths < 1:
            raise ConfigurationError("paths must be at least one")
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigurationError("horizons must be positive")
        if self.command in ("static", "fit") and not self.yields:
            raise ConfigurationError(f"command {self.command!r} needs a yield history (yields)")
        if self.command == "solve" and not (self.yields or self.flat_rate is not None):
            raise ConfigurationError("solve needs a yield history or a flat rate")
        return self


# section -> key -> (field name, parser)
_SCHEMA = {
    "run": {"command": ("command", str), "output": ("output", str), "seed": ("seed", int), "svg": ("svg", parse_bool)},
    "data": {
        "yields": ("yields", str), "percent": ("percent", parse_bool), "skip_bad_rows": ("skip_bad_rows", parse_bool),
        "date": ("date", str), "flat_rate": ("flat_rate", float), "cashflows": ("cashflows", str),
        "params": ("params", str),
    },
    "portfolio": {
        "liability": ("liability", str), "bonds": ("bonds", parse_floats), "methods": ("methods", parse_names),
        "norm": ("norm", str), "nonneg": ("nonneg", parse_bool),
    },
    "basis": {"family": ("family", str), "i": ("I", int), "t": ("T", float)},
    "static": {"horizons": ("horizons", parse_ints)},
    "dynamic": {
        "paths": ("paths", int), "horizon": ("horizon_years", float), "rolling": ("rolling", parse_bool),
    },
    "fit": {
        "d": ("fit_d", parse_ints), "shapley_i": ("shapley_I", int), "i_max": ("I_max", int),
        "n": ("N", int), "t": ("fit_T", float),
    },
}


def load_config(path, base=None):
    """Read an INI file into a :class:`RunConfig`; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"unknown config key {key!r} in [{section}]")
            name, parser = _SCHEMA[section][key]
            try:
                values[name] = parser(raw)
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {section}.{key}: {exc}") from None
    return replace(base or RunConfig(), **values)


def field_names():
    return {f.name for f in fields(RunConfig)}
