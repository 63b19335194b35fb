"""Pipeline configuration and its TOML file form.

Top-level keys mirror :class:`PipelineConfig` one to one. Endpoint settings
live in an ``[endpoints]`` table; keys placed directly in it are defaults
for every stage, and ``[endpoints.<stage>]`` sub-tables override them::

    output_root = "out"
    annotations = "instances_val2017.json"
    conditioning_mode = "both"
    num_frames = 16
    fps = 8
    seed = 7
    audio_enabled = false
    max_workers = 4

    [endpoints]
    base_url = "http://models.internal:8000"
    max_retries = 3

    [endpoints.video]
    timeout = 900
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backends.gateway import BackendEndpoint
from .backends.types import DEFAULT_FPS, DEFAULT_FRAME_SIZE, DEFAULT_NUM_FRAMES, ConditioningMode, StageKind
from .errors import ConfigInvalid

OUTPUT_ROOT_ENV = "MMFORGE_OUTPUT_ROOT"
ENDPOINT_KEYS = {"base_url", "timeout", "max_retries", "backoff_base"}


@dataclass
class PipelineConfig:
    output_root: Path = Path("mmforge-out")
    annotations: Path | None = None
    image_root: str = ""
    endpoints: dict[StageKind, BackendEndpoint] = field(default_factory=dict)
    conditioning_mode: ConditioningMode = ConditioningMode.BOTH
    num_frames: int = DEFAULT_NUM_FRAMES
    fps: int = DEFAULT_FPS
    frame_width: int = DEFAULT_FRAME_SIZE[0]
    frame_height: int = DEFAULT_FRAME_SIZE[1]
    seed: int = 0
    audio_enabled: bool = False
    max_workers: int = 4
    # videos per caption; only 1 is supported for now
    num_variants: int = 1
    mock: bool = False
    token: str | None = None

    def __post_init__(self):
        self.output_root = Path(self.output_root)
        if self.annotations is not None:
            self.annotations = Path(self.annotations)
        try:
            self.conditioning_mode = ConditioningMode(self.conditioning_mode)
        except ValueError as exc:
            raise ConfigInvalid(f"unknown conditioning_mode {self.conditioning_mode!r}") from exc

    def validate(self) -> None:
        if self.max_workers < 1:
            raise ConfigInvalid("max_workers must be >= 1")
        if self.num_frames < 1:
            raise ConfigInvalid("num_frames must be >= 1")
        if self.num_variants != 1:
            raise ConfigInvalid("num_variants must be 1 (one video per caption)")
        if self.fps <= 0:
            raise ConfigInvalid("fps must be positive")
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise ConfigInvalid("frame size must be positive")
        if not self.mock:
            missing = [k.value for k in self.required_stages() if k not in self.endpoints]
            if missing:
                raise ConfigInvalid(f"no endpoint configured for: {', '.join(missing)} (use --mock for mocks)")

    def required_stages(self) -> list[StageKind]:
        stages = [StageKind.CAPTION, StageKind.VQA, StageKind.VIDEO, StageKind.SEGMENT, StageKind.PROPAGATE]
        if self.audio_enabled:
            stages.append(StageKind.AUDIO)
        return stages

    def with_overrides(self, **changes) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _parse_endpoints(table: Mapping) -> dict[StageKind, BackendEndpoint]:
    defaults = {k: v for k, v in table.items() if k in ENDPOINT_KEYS}
    unknown = [k for k, v in table.items() if k not in ENDPOINT_KEYS and not isinstance(v, Mapping)]
    if unknown:
        raise ConfigInvalid(f"unknown endpoint keys: {', '.join(unknown)}")
    out = {}
    stage_tables = {k: v for k, v in table.items() if isinstance(v, Mapping)}
    kinds = list(StageKind) if "base_url" in defaults else []
    for name in stage_tables:
        try:
            kinds.append(StageKind(name))
        except ValueError as exc:
            raise ConfigInvalid(f"unknown stage {name!r} in [endpoints]") from exc
    for kind in dict.fromkeys(kinds):
        settings = {**defaults, **stage_tables.get(kind.value, {})}
        bad = set(settings) - ENDPOINT_KEYS
        if bad:
            raise ConfigInvalid(f"unknown keys in [endpoints.{kind.value}]: {', '.join(sorted(bad))}")
        if "base_url" not in settings:
            raise ConfigInvalid(f"[endpoints.{kind.value}] has no base_url")
        try:
            out[kind] = BackendEndpoint(kind, **settings)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"[endpoints.{kind.value}]: {exc}") from exc
    return out


def config_from_mapping(doc: Mapping, base_dir: Path | None = None) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
    values = dict(doc)
    if "endpoints" in values:
        values["endpoints"] = _parse_endpoints(values["endpoints"])
    for key in ("output_root", "annotations"):
        if key in values and base_dir is not None and not Path(values[key]).is_absolute():
            values[key] = base_dir / values[key]
    try:
        return PipelineConfig(**values)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from exc


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> PipelineConfig:
    """Read a TOML config; relative paths resolve against the file's directory."""
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    config = config_from_mapping(doc, path.parent)
    return apply_env(config, os.environ if env is None else env)


def apply_env(config: PipelineConfig, env: Mapping[str, str]) -> PipelineConfig:
    if env.get(OUTPUT_ROOT_ENV):
        config.output_root = Path(env[OUTPUT_ROOT_ENV])
    return config
