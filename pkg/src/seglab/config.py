"""Run configuration: parsing, validation, and the defaults snapshot.

Config files are plain text, one ``key = value`` assignment per line,
with ``#`` comments and blank lines ignored.  Keys are flat dotted names
one level deep (``geometry.R``, ``estimate.alpha``).  Unknown keys and
duplicate keys are rejected with the offending line number; range
violations are collected and reported together so a bad file surfaces
every problem in one pass.
"""

import dataclasses
import os
from dataclasses import dataclass

from .errors import ConfigError

ENV_OUTPUT_DIR = "SEGLAB_OUT"


def _default_output_dir():
    return os.environ.get(ENV_OUTPUT_DIR, "out")


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one run; every field has a default, so a
    minimal config file is valid and the emitted snapshot echoes the full
    effective state."""

    geometry_R: float = 4.0
    geometry_r0: float = 2.0
    geometry_dim: int = 1
    nonlinearity_coefficients: tuple = (60.0, -1.0)
    profiles_L: float = 12.0
    profiles_n: int = 2400
    profiles_tol: float = 1e-10
    layer_eps_list: tuple = (0.1, 0.05, 0.025)
    layer_d_frac: float = 0.25
    layer_b_tilde: float = 0.0
    layer_zeta: object = "matched"
    estimate_alpha: float = 0.25
    estimate_ensemble: int = 32
    estimate_seed: int = 0
    estimate_m_max: int = 0
    estimate_n: int = 4001
    continuation_schedule: tuple = (1e4, 1e5, 1e6, 1e7, 1e8)
    continuation_tol: float = 1e-9
    continuation_n: int = 2000
    output_dir: str = dataclasses.field(default_factory=_default_output_dir)

    def as_dict(self):
        """Effective state as a flat dotted-key mapping (JSON-safe)."""
        out = {}
        for field in dataclasses.fields(self):
            key = field.name.replace("_", ".", 1)
            value = getattr(self, field.name)
            if isinstance(value, tuple):
                value = list(value)
            out[key] = value
        return out


def _parse_float(text):
    return float(text)


def _parse_int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _parse_float_list(text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(s) for s in items)


def _parse_zeta(text):
    if text.strip() == "matched":
        return "matched"
    return float(text)


def _parse_str(text):
    return text.strip()


_PARSERS = {
    "geometry.R": _parse_float,
    "geometry.r0": _parse_float,
    "geometry.dim": _parse_int,
    "nonlinearity.coefficients": _parse_float_list,
    "profiles.L": _parse_float,
    "profiles.n": _parse_int,
    "profiles.tol": _parse_float,
    "layer.eps_list": _parse_float_list,
    "layer.d_frac": _parse_float,
    "layer.b_tilde": _parse_float,
    "layer.zeta": _parse_zeta,
    "estimate.alpha": _parse_float,
    "estimate.ensemble": _parse_int,
    "estimate.seed": _parse_int,
    "estimate.m_max": _parse_int,
    "estimate.n": _parse_int,
    "continuation.schedule": _parse_float_list,
    "continuation.tol": _parse_float,
    "continuation.n": _parse_int,
    "output.dir": _parse_str,
}


def parse_config(text):
    """Parse config text into a RunConfig.

    Raises ConfigError with the line number for syntax problems,
    duplicate keys, and unknown keys, and with the full list of violated
    constraints for out-of-range values.
    """
    assignments = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"line {lineno}: expected 'key = value', got {raw.strip()!r}",
                line=lineno,
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in assignments:
            raise ConfigError(
                f"line {lineno}: duplicate key {key!r} "
                f"(first set on line {lines[key]})",
                line=lineno,
            )
        if key not in _PARSERS:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r}", line=lineno
            )
        try:
            assignments[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(
                f"line {lineno}: bad value for {key!r}: {exc}", line=lineno
            ) from exc
        lines[key] = lineno
    fields = {
        key.replace(".", "_", 1): value
        for key, value in assignments.items()
    }
    cfg = RunConfig(**fields)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    """Check every range constraint; raise one ConfigError naming all
    violations."""
    problems = []

    def require(ok, message):
        if not ok:
            problems.append(message)

    require(cfg.geometry_R > 0.0, f"geometry.R = {cfg.geometry_R} must be > 0")
    require(
        0.0 < cfg.geometry_r0 < cfg.geometry_R,
        f"geometry.r0 = {cfg.geometry_r0} must lie in (0, geometry.R)",
    )
    require(
        cfg.geometry_dim in (1, 2, 3),
        f"geometry.dim = {cfg.geometry_dim} must be 1, 2, or 3",
    )
    require(
        len(cfg.nonlinearity_coefficients) >= 1,
        "nonlinearity.coefficients needs at least one entry",
    )
    require(
        cfg.profiles_L >= 8.0,
        f"profiles.L = {cfg.profiles_L} must be >= 8",
    )
    require(
        cfg.profiles_n >= 400,
        f"profiles.n = {cfg.profiles_n} must be >= 400",
    )
    require(
        cfg.profiles_tol > 0.0,
        f"profiles.tol = {cfg.profiles_tol} must be > 0",
    )
    require(
        len(cfg.layer_eps_list) >= 1,
        "layer.eps_list needs at least one entry",
    )
    for eps in cfg.layer_eps_list:
        require(
            0.0 < eps <= 0.2,
            f"layer.eps_list entry {eps} must lie in (0, 0.2]",
        )
    require(
        0.0 < cfg.layer_d_frac <= 0.5,
        f"layer.d_frac = {cfg.layer_d_frac} must lie in (0, 0.5]",
    )
    if cfg.layer_zeta != "matched":
        require(
            isinstance(cfg.layer_zeta, float),
            f"layer.zeta = {cfg.layer_zeta!r} must be 'matched' or a number",
        )
    require(
        0.0 < cfg.estimate_alpha < 1.0,
        f"estimate.alpha = {cfg.estimate_alpha} must lie in (0, 1)",
    )
    require(
        cfg.estimate_ensemble >= 1,
        f"estimate.ensemble = {cfg.estimate_ensemble} must be >= 1",
    )
    require(
        cfg.estimate_m_max >= 0,
        f"estimate.m_max = {cfg.estimate_m_max} must be >= 0",
    )
    require(
        cfg.estimate_n >= 101,
        f"estimate.n = {cfg.estimate_n} must be >= 101",
    )
    sched = cfg.continuation_schedule
    require(len(sched) >= 1, "continuation.schedule needs at least one entry")
    require(
        all(b >= 0.0 for b in sched),
        "continuation.schedule entries must be nonnegative",
    )
    require(
        all(a < b for a, b in zip(sched, sched[1:])),
        "continuation.schedule must be strictly increasing",
    )
    require(
        cfg.continuation_tol > 0.0,
        f"continuation.tol = {cfg.continuation_tol} must be > 0",
    )
    require(
        cfg.continuation_n >= 101,
        f"continuation.n = {cfg.continuation_n} must be >= 101",
    )
    require(bool(cfg.output_dir), "output.dir must be nonempty")
    if problems:
        raise ConfigError(
            "invalid configuration:\n"
            + "\n".join(f"  - {p}" for p in problems)
        )
    return cfg


def load_config(path):
    """Read and parse a config file; a missing file is a ConfigError."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
