"""Flat key/value experiment configuration (TOML on disk)."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from ..errors import ConfigError
from ..field.catalog import DATUM_CATALOG, FIELD_CATALOG, make_datum, make_field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("persistence", "noise-demo", "uniqueness", "ic-stability", "drift-stability", "weak-residual",
               "flow-stats")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "persistence"
    # drift and datum
    field: str = "shear-holder"
    theta: float = 0.3
    scale: float = 1.0
    datum: str = "gaussian"
    datum_width: float = 0.5
    p: float = 2.0
    # time grid
    horizon: float = 1.0
    steps: int = 1024
    # spatial quadrature; box_half_width = 0 selects the default box
    box_half_width: float = 0.0
    box_nodes: int = 64
    box_rule: str = "midpoint"
    # Monte Carlo
    samples: int = 256
    gradient_samples: int = 64
    flow_samples: int = 256
    seed: int = 0
    workers: int = 1
    zero_noise: bool = False
    # ladders
    mollifiers: tuple = (0.4, 0.2, 0.1, 0.05)
    cutoffs: tuple = (1.0, 2.0, 4.0)
    datum_mollifiers: tuple = (0.2, 0.1, 0.05)
    time_points: int = 8
    # regularisation demo: boxes [-L, L] x [-h0 2^-l, h0 2^-l]
    demo_levels: int = 4
    demo_half_length: float = 1.0
    demo_height: float = 0.25
    demo_nodes: int = 16
    # drift stability compact set [-a, a]^d
    compact_half_width: float = 2.0
    # weak formulation
    weak_base_steps: int = 16
    weak_levels: int = 3
    weak_samples: int = 32
    test_radii: tuple = (1.0, 2.0)
    test_nodes: int = 48
    qv_samples: int = 256
    qv_steps: int = 64
    out: str = "out"

    def __post_init__(self):
        validate(self)

    def echo(self):
        """Canonical (sorted-key) dictionary of every setting."""
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(d.items())}

    def echo_text(self):
        return json.dumps(self.echo(), sort_keys=True, indent=1)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **_coerce(kw))

    def build_field(self):
        params = {}
        if self.field == "shear-holder":
            params = {"theta": self.theta, "scale": self.scale}
        elif self.field in ("rotation", "strain", "cellular"):
            params = {"scale": self.scale}
        return make_field(self.field, **params)

    def build_datum(self):
        if self.datum == "gaussian":
            return make_datum("gaussian", sigma=self.datum_width)
        if self.datum in ("bump", "cone"):
            return make_datum(self.datum, radius=self.datum_width)
        return make_datum(self.datum)


_LISTS = {"mollifiers", "cutoffs", "datum_mollifiers", "test_radii"}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(raw):
    out = {}
    for k, v in raw.items():
        if k not in _TYPES:
            raise ConfigError(f"unknown configuration key {k!r}")
        t = _TYPES[k]
        try:
            if k in _LISTS:
                if not isinstance(v, (list, tuple)):
                    raise TypeError
                out[k] = tuple(float(x) for x in v)
            elif t == "bool":
                if not isinstance(v, bool):
                    raise TypeError
                out[k] = v
            elif t == "int":
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise TypeError
                out[k] = int(v)
            elif t == "float":
                if isinstance(v, bool):
                    raise TypeError
                out[k] = float(v)
            else:
                if not isinstance(v, str):
                    raise TypeError
                out[k] = v
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {k!r}: {v!r} (expected {t})") from None
    return out


def _strictly(seq, decreasing):
    pairs = zip(seq, seq[1:])
    return all((a > b) if decreasing else (a < b) for a, b in pairs)


def validate(cfg: ExperimentConfig):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}; known: {list(EXPERIMENTS)}")
    if cfg.field not in FIELD_CATALOG:
        raise ConfigError(f"unknown field label {cfg.field!r}")
    if cfg.datum not in DATUM_CATALOG:
        raise ConfigError(f"unknown datum label {cfg.datum!r}")
    if not 0.0 < cfg.theta <= 1.0:
        raise ConfigError("theta must lie in (0, 1]")
    if not 1.0 < cfg.p < math.inf:
        raise ConfigError("p must lie in (1, inf)")
    if cfg.horizon <= 0 or cfg.steps < 2 or cfg.steps & (cfg.steps - 1):
        raise ConfigError("need horizon > 0 and a power-of-two number of steps")
    if cfg.weak_base_steps < 2 or cfg.weak_base_steps & (cfg.weak_base_steps - 1):
        raise ConfigError("weak_base_steps must be a power of two")
    if cfg.qv_steps < 2 or cfg.qv_steps & (cfg.qv_steps - 1):
        raise ConfigError("qv_steps must be a power of two")
    for name in ("mollifiers", "datum_mollifiers"):
        seq = getattr(cfg, name)
        if not seq or any(v <= 0 for v in seq) or not _strictly(seq, True):
            raise ConfigError(f"{name} must be a non-empty, positive, strictly decreasing ladder")
    if cfg.cutoffs and (any(v < 1 for v in cfg.cutoffs) or not _strictly(cfg.cutoffs, False)):
        raise ConfigError("cutoffs must be >= 1 and strictly increasing")
    for name in ("samples", "gradient_samples", "flow_samples", "weak_samples", "qv_samples", "workers",
                 "box_nodes", "demo_nodes", "demo_levels", "weak_levels", "test_nodes", "time_points"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be positive")
    if cfg.box_half_width < 0:
        raise ConfigError("box_half_width must be >= 0")
    if cfg.box_rule not in ("midpoint", "gauss"):
        raise ConfigError("box_rule must be 'midpoint' or 'gauss'")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")


def load_config(path=None, experiment=None, **overrides) -> ExperimentConfig:
    """Read a TOML file (flat keys only), then apply non-None overrides."""
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config must be flat; found tables {nested}")
    if experiment is not None:
        if "experiment" in raw and raw["experiment"] != experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
        raw["experiment"] = experiment
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**_coerce(raw))
