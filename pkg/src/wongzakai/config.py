"""Run configuration: a flat TOML file plus ``--key=value`` overrides.

Every key is listed in :data:`KEYS` with its type, default and a short help
string.  Validation errors are :class:`ConfigError` and always name the
offending key.
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .drift import DriftSpec, drift_from_config
from .harness import DEFAULT_CHUNK, StudyConfig
from .solver import DEFAULT_MONITORS
from .spectral import SpectralField

COMMANDS = ("ou-error", "converge-time", "converge-space", "solve", "moments", "verify-drift")

U0_PRESETS = {
    "half-e1": [0.5],
    "e1": [1.0],
    "zero": [0.0],
}

# Largest finest level for which Monte Carlo increments are materialised.
MC_MAX_L = 20


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# name -> (kind, default, help).  A default of None means "derived", see help.
KEYS = {
    "command": ("str", None, "experiment to run: " + ", ".join(COMMANDS)),
    "seed": ("int", None, "master seed, required, 0 <= seed < 2**64"),
    "T": ("float", 1.0, "time horizon"),
    "L": ("int", 12, "finest dyadic level, the noise lives on 2**L intervals"),
    "n_max": ("int", 4096, "largest admissible mode count"),
    "m_list": ("int_list", None, "WZ interval counts (per-command default)"),
    "n_list": ("int_list", None, "Galerkin mode counts (per-command default)"),
    "m_ref": ("int", None, "reference time resolution, default min(1024, 2**L)"),
    "n_ref": ("int", None, "reference mode count, default min(n_max, 4*max(n_list)) (max(n_list) for converge-time)"),
    "K": ("int", None, "substeps per WZ interval, default max(1, ceil(lambda_n T/(4m))) aligned to monitors"),
    "K_ref": ("int", None, "substeps per reference interval, default as for K"),
    "G": ("int", None, "grid size for error norms, default smallest 2**k - 1 with G+1 >= 4 n_ref"),
    "N": ("int", None, "Monte Carlo samples, default 200 (1 for solve)"),
    "p": ("float", 2.0, "error moment, 1 <= p <= 6"),
    "p_list": ("float_list", [2.0, 4.0], "moment orders for the moments command"),
    "drift": ("str", "allen-cahn", "drift: allen-cahn or odd-poly (f = lambda x - a x^(q-1))"),
    "drift_lambda": ("float", 1.0, "odd-poly linear coefficient"),
    "drift_a": ("float", 1.0, "odd-poly leading coefficient, >= 0"),
    "drift_q": ("int", 4, "odd-poly growth order, even, >= 2"),
    "u0": ("u0", "half-e1", "initial sine coefficients or a preset: " + ", ".join(U0_PRESETS)),
    "t": ("float", None, "evaluation time for ou-error, default T"),
    "j_tail_cutoff": ("int", 10**6, "last mode summed in the analytic OU tail"),
    "n_monitor": ("int", DEFAULT_MONITORS, "number of equispaced monitor times including 0 and T"),
    "n_pairs": ("int", 100000, "random pairs for verify-drift"),
    "box_radius": ("float", 10.0, "half-width of the verify-drift sampling box"),
    "workers": ("int", 1, "worker processes for Monte Carlo"),
    "chunk_size": ("int", DEFAULT_CHUNK, "samples per work unit (results do not depend on it)"),
    "allow_failures": ("bool", False, "record and exclude blown-up samples instead of failing"),
    "reference": ("bool", False, "solve: also write the reference trajectory"),
    "dump_noise": ("bool", False, "solve: write the binary noise path dump per sample"),
    "output_dir": ("str", "out", "directory for CSV and manifest output"),
}

COMMAND_DEFAULTS = {
    "ou-error": {"m_list": [4, 8, 16, 32, 64, 128, 256, 512, 1024], "n_list": [32]},
    "converge-time": {"m_list": [4, 8, 16, 32, 64], "n_list": [128]},
    "converge-space": {"m_list": None, "n_list": [2, 4, 8, 16, 32]},
    "solve": {"m_list": [64], "n_list": [64], "N": 1},
    "moments": {"m_list": [64, 128], "n_list": [64, 128]},
    "verify-drift": {"m_list": [], "n_list": []},
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    T: float
    L: int
    n_max: int
    m_list: list
    n_list: list
    m_ref: int
    n_ref: int
    K: int | None
    K_ref: int | None
    G: int | None
    N: int
    p: float
    p_list: list
    drift: str
    drift_lambda: float
    drift_a: float
    drift_q: int
    u0: list
    t: float
    j_tail_cutoff: int
    n_monitor: int
    n_pairs: int
    box_radius: float
    workers: int
    chunk_size: int
    allow_failures: bool
    reference: bool
    dump_noise: bool
    output_dir: str
    u0_name: str = field(default="", compare=False)

    def to_dict(self) -> dict:
        return asdict(self)

    def drift_spec(self) -> DriftSpec:
        return drift_from_config(self.drift, self.drift_lambda, self.drift_a, self.drift_q)

    def u0_field(self) -> SpectralField:
        return SpectralField(self.u0)

    def study(self) -> StudyConfig:
        return StudyConfig(T=self.T, L=self.L, m_ref=self.m_ref, n_ref=self.n_ref, K_ref=self.K_ref, K=self.K,
                           drift=self.drift_spec(), u0=self.u0_field(), p=self.p, n_monitor=self.n_monitor, G=self.G)


def _coerce(key: str, kind: str, value):
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true or false, got {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind in ("int_list", "float_list"):
        if not isinstance(value, list):
            raise ConfigError(key, f"expected a list, got {value!r}")
        sub = "int" if kind == "int_list" else "float"
        return [_coerce(key, sub, v) for v in value]
    if kind == "u0":
        if isinstance(value, str):
            if value not in U0_PRESETS:
                raise ConfigError(key, f"unknown preset {value!r}; expected one of {sorted(U0_PRESETS)}")
            return value
        return _coerce(key, "float_list", value)
    raise AssertionError(kind)


def parse_value(text: str):
    """Read one override value as TOML; bare words fall back to strings."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"malformed TOML in {path}: {exc}") from exc
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(key, "tables are not supported, the config is a flat key-value file")
    return data


def parse_config(path=None, overrides: dict | None = None, command: str | None = None) -> RunConfig:
    """Merge file values, then overrides (strings are read as TOML values), then validate."""
    raw = load_file(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        raw[key] = parse_value(value) if isinstance(value, str) else value
    if command is not None:
        if raw.get("command", command) != command:
            raise ConfigError("command", f"file says {raw['command']!r} but {command!r} was requested")
        raw["command"] = command
    for key in raw:
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
    vals = {k: _coerce(k, KEYS[k][0], v) for k, v in raw.items()}
    return _validate(vals)


def _validate(vals: dict) -> RunConfig:
    cmd = vals.get("command")
    if cmd is None:
        raise ConfigError("command", "missing; set it in the file or pick a subcommand")
    if cmd not in COMMANDS:
        raise ConfigError("command", f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    if "seed" not in vals:
        raise ConfigError("seed", "missing; every run needs an explicit seed")
    out = {k: spec[1] for k, spec in KEYS.items()}
    out.update({k: v for k, v in COMMAND_DEFAULTS[cmd].items()})
    out.update(vals)

    seed = out["seed"]
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", f"must satisfy 0 <= seed < 2**64, got {seed}")
    if not out["T"] > 0:
        raise ConfigError("T", f"must be positive, got {out['T']}")
    if out["L"] < 0:
        raise ConfigError("L", f"must be >= 0, got {out['L']}")
    M = 2 ** out["L"]
    if out["n_max"] < 1:
        raise ConfigError("n_max", "must be >= 1")
    if out["m_ref"] is None:
        out["m_ref"] = min(1024, M)
    if out["m_list"] is None:
        out["m_list"] = [out["m_ref"]]
    for key in ("m_list", "n_list"):
        if any(v < 1 for v in out[key]):
            raise ConfigError(key, "entries must be >= 1")
        if cmd != "verify-drift" and not out[key]:
            raise ConfigError(key, "must not be empty")
    for m in out["m_list"]:
        if M % m:
            raise ConfigError("m_list", f"{m} does not divide 2**L = {M}")
    if M % out["m_ref"]:
        raise ConfigError("m_ref", f"{out['m_ref']} does not divide 2**L = {M}")
    if out["n_ref"] is None:
        # a temporal study keeps n = n_ref so only the time discretisation differs
        factor = 1 if cmd == "converge-time" else 4
        out["n_ref"] = min(out["n_max"], factor * max(out["n_list"])) if out["n_list"] else 1
    for n in out["n_list"]:
        if n > out["n_ref"]:
            raise ConfigError("n_list", f"{n} exceeds n_ref = {out['n_ref']}")
    if not 1 <= out["n_ref"] <= out["n_max"]:
        raise ConfigError("n_ref", f"{out['n_ref']} must lie in [1, n_max = {out['n_max']}]")
    for key in ("K", "K_ref"):
        if out[key] is not None and out[key] < 1:
            raise ConfigError(key, f"must be >= 1, got {out[key]}")
    if out["G"] is not None and out["G"] + 1 < 4 * out["n_ref"]:
        raise ConfigError("G", f"{out['G']} too small: need G + 1 >= 4 n_ref = {4 * out['n_ref']}")
    if out["N"] is None:
        out["N"] = 200
    if out["N"] < 0 or (out["N"] == 0 and cmd not in ("ou-error", "verify-drift")):
        raise ConfigError("N", f"must be positive, got {out['N']}")
    if out["N"] > 0 and cmd not in ("verify-drift",) and out["L"] > MC_MAX_L:
        raise ConfigError("L", f"Monte Carlo runs need L <= {MC_MAX_L}; use N = 0 for analytic-only OU studies")
    if cmd == "moments" and len(out["m_list"]) != len(out["n_list"]):
        raise ConfigError("n_list", "moments pairs m_list and n_list entrywise; lengths differ")
    if not 1 <= out["p"] <= 6:
        raise ConfigError("p", f"must lie in [1, 6], got {out['p']}")
    if any(not 1 <= p <= 6 for p in out["p_list"]) or not out["p_list"]:
        raise ConfigError("p_list", "entries must lie in [1, 6]")
    try:
        drift_from_config(out["drift"], out["drift_lambda"], out["drift_a"], out["drift_q"])
    except ValueError as exc:
        raise ConfigError("drift", str(exc)) from exc
    u0 = out["u0"]
    out["u0_name"] = u0 if isinstance(u0, str) else ""
    out["u0"] = list(U0_PRESETS[u0]) if isinstance(u0, str) else list(u0)
    if not out["u0"] or len(out["u0"]) > out["n_max"]:
        raise ConfigError("u0", f"needs between 1 and n_max = {out['n_max']} coefficients")
    if out["t"] is None:
        out["t"] = out["T"]
    if not 0 < out["t"] <= out["T"]:
        raise ConfigError("t", f"must lie in (0, T], got {out['t']}")
    if out["j_tail_cutoff"] < max(out["n_list"] or [1]):
        raise ConfigError("j_tail_cutoff", "must be at least max(n_list)")
    if out["n_monitor"] < 2:
        raise ConfigError("n_monitor", "must be >= 2")
    for key in ("n_pairs", "workers", "chunk_size"):
        if out[key] < 1:
            raise ConfigError(key, f"must be >= 1, got {out[key]}")
    if not out["box_radius"] > 0:
        raise ConfigError("box_radius", "must be positive")
    return RunConfig(**out)
