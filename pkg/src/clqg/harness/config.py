"""Flat ``key = value`` experiment configuration with a typed schema.

Blank lines and lines starting with ``#`` are ignored.  Every file must carry
``version = 1`` and an ``experiment`` key; everything else has a default.
Lists are comma separated.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

from clqg.errors import ConfigError

CONFIG_VERSION = 1

EXPERIMENTS = (
    "green-check", "field-stats", "max-tail", "near-extremal", "ball-decay", "spine",
    "motoo", "bridge-limit", "dichotomy", "hausdorff-fixture", "conditioned-ballot",
)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return v


_PARSERS = {int: lambda s: int(s, 0), float: float, str: str, bool: _bool, "floats": _floats,
            "ints": _ints, "seed": _seed}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    version: int = CONFIG_VERSION
    N: int = 256
    domain: str = "square"
    root: str = "center"
    sampler: str = "spectral"
    replicas: int = 1
    seed: int = 1
    output_dir: str = "out"
    save_field: bool = False
    # spine / control variable
    delta: float = 0.4
    eta: float = 0.2
    ell: int = 8
    spine_mode: str = "full"
    # extremes
    u: float = 1.0
    a: float = 0.9394
    u_grid: tuple = (0.5, 1.0, 1.5, 2.0, 2.5)
    t_grid: tuple = (0.0, 0.25, 0.5)
    N_list: tuple = (128, 256, 512)
    spread_tol: float = 4.0
    # ball decay and dichotomy
    k_min: int = 3
    thetas: tuple = (0.5, 2.0)
    gauge_c: float = 1.0
    ratio_threshold: float = 1.0
    # Bessel side
    horizons: tuple = (1000.0, 100000.0)
    t_start: float = 10.0
    n_paths: int = 1000
    v: float = 1.0
    b: float = 1.0
    T_list: tuple = (10.0, 100.0)
    max_rejects: int = 20_000_000
    dom_v: float = 2.0
    dom_horizon: float = 10.0
    dom_step: float = 0.01
    dom_paths: int = 1000
    # Green checks
    walks: int = 100_000
    green_entries: int = 20
    green_box: int = 16
    green_N_list: tuple = (64, 128, 256)
    field_box: int = 64
    ks_sites: int = 10
    # Hausdorff fixtures
    cantor_depth: int = 8

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.N < 3:
            raise ConfigError("N must be >= 3")
        if not 0 < self.eta < 0.25:
            raise ConfigError("eta must lie in (0, 1/4)")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.sampler not in ("spectral", "exact"):
            raise ConfigError("sampler must be 'spectral' or 'exact'")
        if self.spine_mode not in ("full", "walk"):
            raise ConfigError("spine_mode must be 'full' or 'walk'")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if any(n < 3 for n in self.N_list) or any(n < 3 for n in self.green_N_list):
            raise ConfigError("every lattice size must be >= 3")
        if any(not math.isfinite(x) for x in self.thetas) or any(x <= 0 for x in self.thetas):
            raise ConfigError("thetas must be positive")

    # -- identity ---------------------------------------------------------------

    def canonical(self) -> str:
        """Sorted key=value text of everything that can influence results."""
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            if f.name == "output_dir":
                continue
            lines.append(f"{f.name}={_render(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)


def _render(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_render(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _schema() -> dict:
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "seed":
            out[f.name] = "seed"
        elif f.type in ("tuple",):
            default = f.default
            out[f.name] = "ints" if default and isinstance(default[0], int) else "floats"
        else:
            out[f.name] = {"int": int, "float": float, "str": str, "bool": bool}[f.type]
    return out


SCHEMA = _schema()


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[SCHEMA[key]](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    if "version" not in values:
        raise ConfigError("missing 'version'")
    if "experiment" not in values:
        raise ConfigError("missing 'experiment'")
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    return f"version={cfg.version}\nexperiment={cfg.experiment}\n" + "".join(
        f"{line}\n" for line in cfg.canonical().splitlines()
        if not line.startswith(("version=", "experiment="))) + f"output_dir={cfg.output_dir}\n"
