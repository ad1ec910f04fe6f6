"""Scenario configuration: a strict reader for a small TOML-style format.

The format supports ``[section]`` headers, ``key = value`` lines with
strings, booleans, integers, floats and flat arrays, and ``#`` comments.
Unknown sections or keys are rejected before anything is allocated.
(The stdlib TOML reader arrived in Python 3.11 and the package mirror
carries no backport, hence the self-contained subset.)
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .errors import ConfigError


def _parse_scalar(tok: str, where: str):
    tok = tok.strip()
    if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
        return tok[1:-1]
    if tok == "true":
        return True
    if tok == "false":
        return False
    try:
        if any(c in tok for c in ".eE") and not tok.lstrip("+-").isdigit():
            return float(tok)
        return int(tok)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse value {tok!r}") from exc


def _split_array(body: str, where: str):
    items, depth, cur = [], 0, ""
    in_str = False
    for ch in body:
        if ch == '"':
            in_str = not in_str
        if ch == "," and depth == 0 and not in_str:
            items.append(cur)
            cur = ""
            continue
        if ch in "[" and not in_str:
            depth += 1
        if ch in "]" and not in_str:
            depth -= 1
        cur += ch
    if cur.strip():
        items.append(cur)
    return [_parse_scalar(item, where) for item in items]


def parse_config_text(text: str) -> dict:
    """Parse the key/value tree; returns nested dicts."""
    root: dict = {}
    section = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = ""
        in_str = False
        for ch in raw:
            if ch == '"':
                in_str = not in_str
            if ch == "#" and not in_str:
                break
            line += ch
        line = line.strip()
        if not line:
            continue
        where = f"line {lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {raw!r}")
            path = line[1:-1].strip()
            if not path:
                raise ConfigError(f"{where}: empty section name")
            section = root
            for part in path.split("."):
                section = section.setdefault(part.strip(), {})
                if not isinstance(section, dict):
                    raise ConfigError(f"{where}: {path!r} collides with a value")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key or not val:
            raise ConfigError(f"{where}: malformed assignment {raw!r}")
        if val.startswith("["):
            if not val.endswith("]"):
                raise ConfigError(f"{where}: unterminated array")
            section[key] = _split_array(val[1:-1], where)
        else:
            section[key] = _parse_scalar(val, where)
    return root


# -- schema -------------------------------------------------------------------


@dataclass
class GridConfig:
    n: int = 32
    length: float = 16 * 3.141592653589793
    dimension: int = 3


@dataclass
class PhysicsConfig:
    mu: float = 1.0
    mu_prime: float = 0.0
    kappa: float = 1.0
    alpha_tilde: float = 1.0
    c_v: float = 1.5
    rho_bar: float = 1.0
    theta_bar: float = 1.0


@dataclass
class EosConfig:
    kind: str = "ideal-gas"
    R: float = 1.0
    B: float = 0.2
    gamma: float = 3.0
    rho_ref: float = 1.0


@dataclass
class ForcingConfig:
    amplitude: float = 1e-3
    decay: float = 4.0
    width_frac: float = 0.1
    kmin: int = 1
    kmax: int = 2
    active: list = field(default_factory=lambda: ["G", "F", "H"])


@dataclass
class StationaryConfig:
    tol: float = 1e-10
    max_outer: int = 100
    budget_threshold: float = 1e-2
    inner_tol: float = 1e-12


@dataclass
class EvolutionConfig:
    dt: float = 0.02
    t_end: float = 5.0
    snapshot_every: int = 0
    record_every: int = 1
    init_amplitude: float = 1e-3
    init_kmin: int = 6
    init_kmax: int = 10
    disable_exchange: bool = False
    scheme: str = "euler"


@dataclass
class VerificationConfig:
    ensemble: int = 64
    ensemble_small: int = 16


@dataclass
class MmsConfig:
    amplitude: float = 1e-3
    kmax: int = 2
    tol: float = 1e-6


@dataclass
class OutputConfig:
    directory: str = ""


@dataclass
class ScenarioConfig:
    seed: int = 0
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    eos: EosConfig = field(default_factory=EosConfig)
    forcing: ForcingConfig = field(default_factory=ForcingConfig)
    stationary: StationaryConfig = field(default_factory=StationaryConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    verification: VerificationConfig = field(default_factory=VerificationConfig)
    mms: MmsConfig = field(default_factory=MmsConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_SECTIONS = {
    "grid": GridConfig, "physics": PhysicsConfig, "eos": EosConfig,
    "forcing": ForcingConfig, "stationary": StationaryConfig,
    "evolution": EvolutionConfig, "verification": VerificationConfig,
    "mms": MmsConfig, "output": OutputConfig,
}


def _fill(cls, data: dict, where: str):
    allowed = {f.name: f.type for f in dc_fields(cls)}
    obj = cls()
    for key, val in data.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {where}.{key}")
        cur = getattr(obj, key)
        if isinstance(cur, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"{where}.{key}: expected a boolean")
        elif isinstance(cur, int) and not isinstance(val, int):
            raise ConfigError(f"{where}.{key}: expected an integer")
        elif isinstance(cur, float) and not isinstance(val, (int, float)):
            raise ConfigError(f"{where}.{key}: expected a number")
        elif isinstance(cur, str) and not isinstance(val, str):
            raise ConfigError(f"{where}.{key}: expected a string")
        elif isinstance(cur, list) and not isinstance(val, list):
            raise ConfigError(f"{where}.{key}: expected an array")
        setattr(obj, key, float(val) if isinstance(cur, float) else val)
    return obj


def validate_config(tree: dict) -> ScenarioConfig:
    cfg = ScenarioConfig()
    for key, val in tree.items():
        if key == "seed":
            if not isinstance(val, int) or val < 0 or val > 2**64 - 1:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.seed = val
        elif key in _SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"[{key}] must be a section")
            setattr(cfg, key, _fill(_SECTIONS[key], val, key))
        else:
            raise ConfigError(f"unknown section or key {key!r}")

    g = cfg.grid
    if g.n < 8 or (g.n & (g.n - 1)) != 0:
        raise ConfigError(f"grid.n must be a power of two >= 8, got {g.n}")
    if g.dimension not in (1, 2, 3):
        raise ConfigError("grid.dimension must be 1, 2 or 3")
    if g.length <= 0:
        raise ConfigError("grid.length must be positive")
    p = cfg.physics
    for name in ("mu", "kappa", "alpha_tilde", "c_v", "rho_bar", "theta_bar"):
        if getattr(p, name) <= 0:
            raise ConfigError(f"physics.{name} must be positive")
    if 2.0 / 3.0 * p.mu + p.mu_prime < 0:
        raise ConfigError("physics: need (2/3) mu + mu_prime >= 0")
    if cfg.eos.kind not in ("ideal-gas", "stiffened-gas"):
        raise ConfigError(f"eos.kind {cfg.eos.kind!r} not recognized")
    if cfg.forcing.amplitude < 0:
        raise ConfigError("forcing.amplitude must be nonnegative")
    for name in ("tol", "budget_threshold", "inner_tol"):
        if getattr(cfg.stationary, name) <= 0:
            raise ConfigError(f"stationary.{name} must be positive")
    e = cfg.evolution
    if e.dt <= 0 or e.t_end < 0:
        raise ConfigError("evolution.dt must be positive and t_end nonnegative")
    if e.snapshot_every < 0 or e.record_every < 1:
        raise ConfigError("evolution cadence fields must be nonnegative")
    if cfg.evolution.scheme not in ("euler", "midpoint"):
        raise ConfigError("evolution.scheme must be 'euler' or 'midpoint'")
    if cfg.verification.ensemble < 1 or cfg.verification.ensemble_small < 1:
        raise ConfigError("verification ensembles must be positive")
    bad = set(cfg.forcing.active) - {"G", "F", "H"}
    if bad:
        raise ConfigError(f"forcing.active entries must be G/F/H, got {sorted(bad)}")
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(parse_config_text(text))
