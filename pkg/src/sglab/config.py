"""Run configuration: one JSON document, flags override keys, defaults resolved here."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .grid import ModelParams
from .noise import fresh_master_seed, min_resolvable_eps
from .grid import GridSpec

SUBCOMMANDS = ("trees", "model-check", "resonant", "objects", "simulate", "gwp", "eps-study")


class ConfigError(ValueError):
    """Invalid configuration (exit status 2)."""


@dataclass
class RunConfig:
    subcommand: str
    beta2_pi: float = 5.0
    m2: float = 1.0
    eta: Optional[float] = None
    eps: float = 2.0 ** -4
    n: Optional[int] = None
    dt: Optional[float] = None
    T: float = 0.25
    replicas: int = 100
    seed: Optional[int] = None
    p: int = 1
    tree: Optional[str] = None
    theta: str = "zero"
    lambdas: list = field(default_factory=lambda: [0.125, 0.25, 0.5, 1.0])
    u0: str = "smooth"
    amplitude: float = 1.0
    tol: float = 1e-8
    times: list = field(default_factory=list)
    eps_list: list = field(default_factory=list)
    output: Optional[str] = None
    threads: int = 1

    @property
    def params(self) -> ModelParams:
        return ModelParams.from_beta2_pi(self.beta2_pi, m2=self.m2, eps=self.eps, eta=self.eta)

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        d = self.to_dict()
        d.pop("output", None)
        d.pop("threads", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_KEYS = {f.name for f in fields(RunConfig)}


def _coerce(key: str, v):
    if v is None:
        return None
    if key in ("n", "replicas", "seed", "p", "threads"):
        if isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{key} must be an integer, got {v}")
        return int(v)
    if key in ("beta2_pi", "m2", "eta", "eps", "dt", "T", "amplitude", "tol"):
        return float(v)
    if key in ("lambdas", "times", "eps_list"):
        if isinstance(v, str):
            v = [x for x in v.replace(",", " ").split() if x]
        return [float(x) for x in v]
    return v


def load_and_validate(text_or_dict, overrides: Optional[dict] = None, resolve_seed: bool = True) -> RunConfig:
    """
    Parse a JSON document (or a dict), apply ``overrides`` (flags; None values are
    ignored), fill defaults and check admissibility.  Raises ConfigError.
    """
    if isinstance(text_or_dict, (str, bytes)):
        try:
            raw = json.loads(text_or_dict) if str(text_or_dict).strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    else:
        raw = dict(text_or_dict or {})
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    unknown = set(raw) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if raw.get("subcommand") not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {raw.get('subcommand')!r}; expected one of {', '.join(SUBCOMMANDS)}")
    try:
        cfg = RunConfig(**{k: _coerce(k, v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    if cfg.seed is None and resolve_seed:
        cfg.seed = fresh_master_seed()
    return cfg


def validate(cfg: RunConfig) -> None:
    if not 0 < cfg.beta2_pi:
        raise ConfigError(f"beta^2/pi must be positive, got {cfg.beta2_pi}")
    if cfg.beta2_pi >= 6:
        raise ConfigError("unsupported regime: scope is beta^2 < 6 pi")
    try:
        cfg.params  # checks m^2 > 0, eps in (0, 1] and the eta interval
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.n is not None:
        try:
            GridSpec(cfg.n, cfg.dt or 1.0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if cfg.dt is not None and not cfg.dt > 0:
        raise ConfigError(f"dt must be positive, got {cfg.dt}")
    if not cfg.T > 0:
        raise ConfigError(f"T must be positive, got {cfg.T}")
    if cfg.replicas < 1 or cfg.p < 1 or cfg.threads < 1:
        raise ConfigError("replicas, p and threads must be at least 1")
    if any(not l > 0 for l in cfg.lambdas):
        raise ConfigError("lambdas must be positive")
    if any(not e > 0 for e in cfg.eps_list):
        raise ConfigError("eps_list entries must be positive")


def resolved_grid(cfg: RunConfig, eps: Optional[float] = None) -> tuple[int, float]:
    """Default grid for eps: n = 2/eps rounded up to a power of two, dt = the power of two <= eps^2/4."""
    e = cfg.eps if eps is None else eps
    n = cfg.n or max(8, int(2 ** math.ceil(math.log2(2.0 / e))))
    dt = cfg.dt or 2.0 ** math.floor(math.log2(e ** 2 / 4))
    return n, dt


def eps_resolvable(cfg: RunConfig, eps: Optional[float] = None) -> tuple[bool, float]:
    n, dt = resolved_grid(cfg, eps)
    lo = min_resolvable_eps(GridSpec(n, dt))
    e = cfg.eps if eps is None else eps
    return e >= lo - 1e-15, lo


def serialize(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2)


def normalize(text_or_dict) -> str:
    """Canonical text of a config document (defaults filled, seed left as given)."""
    return serialize(load_and_validate(text_or_dict, resolve_seed=False))
