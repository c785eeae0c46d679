"""Environment configuration: defaults, a TOML-style file format, hashing.

The on-disk format is sectioned ``key = value`` text ([env], [solver],
[material], [sensor] sections).  Values are ints, floats, booleans, quoted
strings, or flat lists.  The full merged configuration is embedded in every
episode log header together with its hash, so replays never depend on
defaults compiled into a different build.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .fem.elasticity import MaterialParams
from .fem.solver import SolverConfig
from .sensor import NoiseConfig

CONFIG_ENV_VAR = "VITAC_CONFIG"


@dataclass
class EnvConfig:
    """Everything an environment needs to be rebuilt bit-for-bit."""

    task: str = "peg"
    shape_id: int = 0
    max_steps: int = None  # task default: 100 for lock, else 50

    # randomization ranges for the initial ground-truth offset
    rand_xy_mm: float = 3.0
    rand_theta_deg: float = 5.0
    rand_z_mm: float = 3.0

    # action interface
    max_action: tuple = None  # per-component caps, mm / deg
    x_max_mm: float = 12.0
    y_max_mm: float = 12.0
    theta_max_deg: float = 15.0
    z_max_mm: float = 20.0
    v_max: float = 2e-3
    omega_max: float = 0.2

    # task geometry and thresholds
    z_step_mm: float = 0.5
    success_depth_mm: float = 10.0
    clearance_mm: float = 0.3
    tau_xy_mm: float = 6.0
    tau_theta_deg: float = 10.0
    tau_xyz_mm: float = 1.0
    tau_z_fusion_mm: float = 20.0
    surface_diff_thresh_mm: float = 1.5
    step_penalty: float = 0.05
    surface_diff_clip_mm: float = 5.0

    # grip
    indentation_mm: float = 0.5
    grip_gap_mm: float = 0.2
    start_gap_mm: float = 2.0
    tether_stiffness: float = 500.0

    # fusion specifics
    fusion_start_height_mm: float = 6.0
    fusion_insert_depth_mm: float = 5.0
    fusion_success_depth_mm: float = 3.0
    vision: bool = True
    include_gels_in_vision: bool = False
    vision_width: int = 320
    vision_height: int = 240

    # gel + markers
    gel_subdivisions: tuple = (6, 4, 2)
    gel_mesh_path: str = ""
    marker_rows: int = 7
    marker_cols: int = 9
    marker_spacing_mm: float = 2.5
    flow_size: int = 128

    solver: SolverConfig = field(default_factory=SolverConfig)
    material: MaterialParams = field(default_factory=MaterialParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.task not in ("peg", "lock", "fusion"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.max_steps is None:
            self.max_steps = 100 if self.task == "lock" else 50
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.max_action is None:
            self.max_action = {
                "peg": (1.0, 1.0, 1.0),
                "lock": (1.0, 1.0, 1.0),
                "fusion": (1.0, 1.0, 1.0, 1.0),
            }[self.task]
        self.max_action = tuple(float(v) for v in self.max_action)
        self.gel_subdivisions = tuple(int(v) for v in self.gel_subdivisions)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_action"] = list(self.max_action)
        d["gel_subdivisions"] = list(self.gel_subdivisions)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EnvConfig":
        data = dict(data)
        for section, sub in (("solver", SolverConfig), ("material", MaterialParams), ("noise", NoiseConfig)):
            if section in data and isinstance(data[section], dict):
                try:
                    data[section] = sub(**data[section])
                except TypeError as exc:
                    raise ConfigError(f"[{section}]: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def merged(self, overrides: dict) -> "EnvConfig":
        """New config with (possibly sectioned) overrides applied."""
        base = self.to_dict()
        for key, value in (overrides or {}).items():
            if key in ("solver", "material", "noise") and isinstance(value, dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        return EnvConfig.from_dict(base)


def config_hash(config: EnvConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def default_task_config(task: str, **overrides) -> EnvConfig:
    return EnvConfig.from_dict({"task": task, **overrides})


# -- the key=value file format ----------------------------------------------


def _parse_scalar(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(p) for p in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {text!r}") from exc


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_scalar(v) for v in value) + "]"
    if isinstance(value, float):
        if math.isfinite(value):
            return repr(value)
        raise ConfigError("non-finite float in config")
    return str(value)


def parse_config_text(text: str) -> dict:
    """Sectioned key=value text into a nested dict ([env] keys at top level)."""
    data: dict = {}
    section = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("env", "solver", "material", "noise"):
                raise ConfigError(f"line {ln}: unknown section [{section}]")
            if section != "env":
                data.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        target = data if section in (None, "env") else data[section]
        target[key] = _parse_scalar(value)
    return data


def load_config_file(path) -> EnvConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return EnvConfig.from_dict({**EnvConfig().to_dict(), **parse_config_text(text)})


def dump_config_text(config: EnvConfig) -> str:
    d = config.to_dict()
    lines = ["[env]"]
    for key in sorted(d):
        if key in ("solver", "material", "noise"):
            continue
        lines.append(f"{key} = {_format_scalar(d[key])}")
    for section in ("solver", "material", "noise"):
        lines.append("")
        lines.append(f"[{section}]")
        for key in sorted(d[section]):
            lines.append(f"{key} = {_format_scalar(d[section][key])}")
    return "\n".join(lines) + "\n"


def resolve_config(path=None, overrides=None) -> EnvConfig:
    """Config from an explicit path, else $VITAC_CONFIG, else defaults."""
    path = path or os.environ.get(CONFIG_ENV_VAR)
    cfg = load_config_file(path) if path else EnvConfig()
    if overrides:
        cfg = cfg.merged(overrides)
    return cfg
