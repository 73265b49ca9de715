"""Configuration management for mctk."""

import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    try:
        import tomli as tomllib
    except ImportError:
        raise ImportError(
            "tomli is required for Python < 3.11. "
            "Install with: pip install tomli"
        )

from mctk.domain.exceptions import ConfigurationError

THREADS_ENV = "MCTK_THREADS"
CONFIG_ENV = "MCTK_CONFIG"


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Pipeline defaults; every CLI flag default comes from here."""

    seed: int = 0
    channels: int = 8
    patch_size: int = 8
    image_size: int = 512
    audio_half_width: int = 2
    mask_logit: float = -1e9
    keypoint_sigma: float = 2.0
    mouth_pad: float = 0.1
    supervision_frames: int = 2
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    embed_dim: int = 32
    hidden_layers: int = 2
    hidden_factor: int = 4
    lip_size: int = 224
    threads: int = 1

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.type in (int, "int"):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigurationError(
                        f"'{f.name}' must be an integer, got {value!r}"
                    )
            elif isinstance(value, bool) or not isinstance(
                value, (int, float)
            ):
                raise ConfigurationError(
                    f"'{f.name}' must be a number, got {value!r}"
                )
            elif not math.isfinite(value):
                raise ConfigurationError(f"'{f.name}' must be finite")

        def check(ok: bool, name: str, rule: str) -> None:
            if not ok:
                raise ConfigurationError(
                    f"'{name}' {rule}, got {getattr(self, name)!r}"
                )

        check(0 <= self.seed < 2**64, "seed", "must fit in 64 unsigned bits")
        for name in ("channels", "patch_size", "image_size", "timesteps"):
            check(getattr(self, name) >= 1, name, "must be at least 1")
        check(
            self.image_size % self.patch_size == 0,
            "image_size",
            f"must be divisible by patch_size {self.patch_size}",
        )
        check(self.audio_half_width >= 0, "audio_half_width", "must be >= 0")
        check(self.mask_logit <= -1e4, "mask_logit", "must be <= -1e4")
        check(self.keypoint_sigma > 0, "keypoint_sigma", "must be positive")
        check(self.mouth_pad >= 0, "mouth_pad", "must be >= 0")
        check(
            self.supervision_frames >= 1,
            "supervision_frames",
            "must be at least 1",
        )
        check(0 < self.beta_start < 1, "beta_start", "must lie in (0, 1)")
        check(
            self.beta_start <= self.beta_end < 1,
            "beta_end",
            "must lie in [beta_start, 1)",
        )
        check(
            self.embed_dim >= 2 and self.embed_dim % 2 == 0,
            "embed_dim",
            "must be even and at least 2",
        )
        check(self.hidden_layers >= 0, "hidden_layers", "must be >= 0")
        check(self.hidden_factor >= 1, "hidden_factor", "must be at least 1")
        check(
            self.lip_size >= 14 and self.lip_size % 14 == 0,
            "lip_size",
            "must be a positive multiple of 14",
        )
        check(self.threads >= 1, "threads", "must be at least 1")

    @property
    def latent_grid(self) -> tuple[int, int]:
        side = self.image_size // self.patch_size
        return side, side

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown pipeline settings: {unknown}")
        values = dict(data)
        for f in fields(cls):
            # TOML and JSON both allow 1 where 1.0 is meant
            if f.type in (float, "float") and f.name in values:
                value = values[f.name]
                if isinstance(value, int) and not isinstance(value, bool):
                    values[f.name] = float(value)
        return cls(**values)

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid configuration JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError("Configuration JSON must be an object")
        return cls.from_dict(data)


def get_config_path() -> Path:
    """Get the path to the configuration file.

    Searches in order:
    1. MCTK_CONFIG environment variable
    2. ~/.config/mctk/config.toml
    3. ~/.mctk.toml
    """
    if env_path := os.getenv(CONFIG_ENV):
        return Path(env_path)

    xdg_config = Path.home() / ".config" / "mctk" / "config.toml"
    if xdg_config.exists():
        return xdg_config

    home_config = Path.home() / ".mctk.toml"
    if home_config.exists():
        return home_config

    return xdg_config


def _threads_override(config: PipelineConfig) -> PipelineConfig:
    raw = os.getenv(THREADS_ENV)
    if raw is None or not raw.strip():
        return config
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigurationError(
            f"{THREADS_ENV} must be an integer, got {raw!r}"
        )
    if threads < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be at least 1")
    return replace(config, threads=threads)


def load_config(path: Optional[Path] = None) -> PipelineConfig:
    """Load configuration from TOML, then apply MCTK_THREADS.

    An explicit ``path`` (or MCTK_CONFIG) must exist; otherwise a missing
    file means defaults.

    Raises:
        ConfigurationError: If the file is unreadable or a value is invalid
    """
    explicit = path is not None or bool(os.getenv(CONFIG_ENV))
    config_path = path if path is not None else get_config_path()

    if not config_path.exists():
        if explicit:
            raise ConfigurationError(
                f"Configuration file not found: {config_path}"
            )
        return _threads_override(PipelineConfig())

    try:
        with open(config_path, "rb") as f:
            data = tomllib.load(f)
    except Exception as e:
        raise ConfigurationError(
            f"Failed to parse config file {config_path}: {e}"
        )

    section = data.get("pipeline", {})
    if not isinstance(section, dict):
        raise ConfigurationError("[pipeline] must be a table")
    return _threads_override(PipelineConfig.from_dict(section))
