"""Flat ``key = value`` experiment configs with a typed schema.

Lines starting with ``#`` are comments. Lists are comma-separated. Unknown
keys and malformed values raise ``ConfigError`` naming the offending field.
"""

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .problems import FAMILIES, parse_q
from .solvers import ALGORITHMS

OUTPUT_ENV = "DIROPT_OUTPUT_DIR"

DEFAULT_ALGORITHMS = {
    "geometric_median": ("p_extrapush", "subgradient_push"),
    "l1_ls": ("pg_extrapush", "subgradient_push"),
    "qp": ("pg_extrapush",),
    "lq_ls": ("pg_extrapush",),
}


@dataclass
class ExperimentConfig:
    experiment: str
    alphas: tuple
    n: int = 10
    p: int = 256
    m_i: int = 150
    lam: float = 0.5
    q: tuple = (0.0, 0.5, 2.0 / 3.0)
    data_scale: float = 1.0
    algorithms: tuple = ()
    seed: int = 0
    graph_prob: float = 0.5
    graph_file: str = ""
    max_iter: int = 1000
    record_every: int = 1
    reference: str = "auto"
    reference_horizon: int = 0
    reference_alpha: float = 0.0
    tolerance: float = 1e-6
    sp_schedule: str = "constant"
    sp_alpha: float = 0.0
    sp_sweep_iters: int = 40
    qp_scale: float = 0.0
    qp_rank: int = 0
    output_dir: str = "diropt_out"
    workers: int = 1
    source_text: str = ""

    def __post_init__(self):
        _validate(self)

    @property
    def digest(self):
        """SHA-256 of the canonical key/value rendering (source text excluded)."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def canonical(self):
        out = []
        for f in fields(self):
            if f.name == "source_text":
                continue
            out.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(out)

    def resolved_output_dir(self):
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)


def _as_int(key, v):
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"expected an integer, got {v!r}", key) from None


def _as_float(key, v):
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"expected a number, got {v!r}", key) from None


def _as_list(key, v, conv):
    items = [s.strip() for s in v.split(",") if s.strip()]
    if not items:
        raise ConfigError("expected a nonempty comma-separated list", key)
    return tuple(conv(key, s) for s in items)


def _q_item(key, s):
    try:
        return parse_q(s)
    except ValueError as exc:
        raise ConfigError(str(exc), key) from None


def _str_item(key, s):
    return s


# config key -> (dataclass field, converter)
SCHEMA = {
    "experiment": ("experiment", lambda k, v: v),
    "n": ("n", _as_int),
    "p": ("p", _as_int),
    "m_i": ("m_i", _as_int),
    "lambda": ("lam", _as_float),
    "q": ("q", lambda k, v: _as_list(k, v, _q_item)),
    "data_scale": ("data_scale", _as_float),
    "alphas": ("alphas", lambda k, v: _as_list(k, v, _as_float)),
    "algorithms": ("algorithms", lambda k, v: _as_list(k, v, _str_item)),
    "seed": ("seed", _as_int),
    "graph_prob": ("graph_prob", _as_float),
    "graph_file": ("graph_file", lambda k, v: v),
    "max_iter": ("max_iter", _as_int),
    "record_every": ("record_every", _as_int),
    "reference": ("reference", lambda k, v: v),
    "reference_horizon": ("reference_horizon", _as_int),
    "reference_alpha": ("reference_alpha", _as_float),
    "tolerance": ("tolerance", _as_float),
    "sp_schedule": ("sp_schedule", lambda k, v: v),
    "sp_alpha": ("sp_alpha", _as_float),
    "sp_sweep_iters": ("sp_sweep_iters", _as_int),
    "qp_scale": ("qp_scale", _as_float),
    "qp_rank": ("qp_rank", _as_int),
    "output_dir": ("output_dir", lambda k, v: v),
    "workers": ("workers", _as_int),
}
_FIELD_TO_KEY = {f: k for k, (f, _) in SCHEMA.items()}


def _validate(cfg):
    def bad(field, msg):
        raise ConfigError(msg, _FIELD_TO_KEY.get(field, field))

    if cfg.experiment not in FAMILIES:
        bad("experiment", f"must be one of {', '.join(FAMILIES)}")
    for name in ("n", "p", "m_i", "max_iter", "record_every", "workers", "sp_sweep_iters"):
        if getattr(cfg, name) < 1:
            bad(name, "must be >= 1")
    if not cfg.alphas or any(a <= 0 for a in cfg.alphas):
        bad("alphas", "step sizes must be positive")
    if cfg.lam < 0:
        bad("lam", "must be nonnegative")
    if cfg.experiment == "lq_ls" and cfg.lam <= 0:
        bad("lam", "must be positive for the lq family")
    if not 0 < cfg.graph_prob <= 1:
        bad("graph_prob", "must lie in (0, 1]")
    if cfg.data_scale <= 0:
        bad("data_scale", "must be positive")
    if not cfg.algorithms:
        cfg.algorithms = DEFAULT_ALGORITHMS[cfg.experiment]
    for a in cfg.algorithms:
        if a not in ALGORITHMS:
            bad("algorithms", f"unknown algorithm {a!r}")
    if cfg.reference not in ("auto", "oracle", "horizon"):
        bad("reference", "must be auto, oracle or horizon")
    if cfg.reference == "oracle" and cfg.experiment == "lq_ls":
        bad("reference", "the lq family has no certified oracle; use horizon")
    if cfg.reference_horizon < 0 or cfg.reference_alpha < 0 or cfg.sp_alpha < 0:
        bad("reference_horizon", "must be nonnegative")
    if cfg.reference_horizon == 0:
        cfg.reference_horizon = 1000 if cfg.experiment == "geometric_median" else 10000
    if cfg.reference_alpha == 0:
        cfg.reference_alpha = min(cfg.alphas)
    if not 0 < cfg.tolerance < 1:
        bad("tolerance", "must lie in (0, 1)")
    if cfg.sp_schedule not in ("constant", "sqrt"):
        bad("sp_schedule", "must be constant or sqrt")
    if cfg.qp_scale < 0 or cfg.qp_rank < 0:
        bad("qp_scale", "must be nonnegative")


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", "<file>")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key)
        if key in values:
            raise ConfigError("duplicate key", key)
        values[key] = val
    for key in ("experiment", "alphas"):
        if key not in values:
            raise ConfigError("required key missing", key)
    kwargs = {}
    for key, val in values.items():
        name, conv = SCHEMA[key]
        kwargs[name] = conv(key, val)
    return ExperimentConfig(source_text=text, **kwargs)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(exc), "<file>") from None
    return parse_config(text)
