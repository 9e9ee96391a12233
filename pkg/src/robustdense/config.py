"""Model and training configuration."""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

CONFIG_SCHEMA_VERSION = 1

DEFAULT_CHANNELS = (64, 128, 256, 512, 1024, 1024)
NUM_STAGES = 6
SPECTRAL_CHANNELS = 4  # NIR, R, G, B
DSM_CHANNELS = 1


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 6
    channel_schedule: tuple = DEFAULT_CHANNELS
    depth_scale: float = 1
    se_reduction: int = 16
    growth_rate: int | None = None  # None: derived per stage as out_channels // 4
    layers_per_dense_block: int = 4
    norm_groups: int = 8
    upscale_factor: int = 2
    use_semix: bool = True
    plain_pixelshuffle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "channel_schedule", tuple(self.channel_schedule))
        self.validate()

    def validate(self):
        sched = self.channel_schedule
        if len(sched) != NUM_STAGES:
            raise ConfigError(f"channel_schedule needs {NUM_STAGES} entries, got {len(sched)}")
        for i in range(NUM_STAGES - 1):
            if sched[i + 1] not in (sched[i], 2 * sched[i]):
                raise ConfigError(
                    f"channel_schedule[{i + 1}]={sched[i + 1]} must equal or double "
                    f"channel_schedule[{i}]={sched[i]}"
                )
        if self.depth_scale <= 0:
            raise ConfigError(f"depth_scale must be positive, got {self.depth_scale}")
        r2 = self.upscale_factor ** 2
        for i, c in enumerate(sched):
            s = c / self.depth_scale
            if abs(s - round(s)) > 1e-9 or round(s) < 1:
                raise ConfigError(
                    f"channel_schedule[{i}]={c} / depth_scale={self.depth_scale} "
                    "is not a positive integer"
                )
            s = round(s)
            if s % self.norm_groups != 0:
                raise ConfigError(
                    f"scaled channels {s} (stage {i + 1}) not divisible by norm_groups={self.norm_groups}"
                )
            if s % r2 != 0:
                raise ConfigError(
                    f"scaled channels {s} (stage {i + 1}) not divisible by upscale_factor^2={r2}"
                )
        if self.se_reduction < 1:
            raise ConfigError(f"se_reduction must be >= 1, got {self.se_reduction}")
        smallest = min(self.scaled_channels)
        if self.se_reduction > smallest:
            raise ConfigError(
                f"se_reduction={self.se_reduction} exceeds smallest scaled channel count {smallest}"
            )
        if self.layers_per_dense_block < 1:
            raise ConfigError("layers_per_dense_block must be >= 1")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        for g in (self.growth_for_stage(i) for i in range(1, NUM_STAGES + 1)):
            if g < 1:
                raise ConfigError(f"derived growth rate {g} < 1; widen the schedule")

    @property
    def scaled_channels(self) -> tuple:
        """Channel schedule after dividing by depth_scale."""
        return tuple(round(c / self.depth_scale) for c in self.channel_schedule)

    def growth_for_stage(self, stage_index: int) -> int:
        if self.growth_rate is not None:
            return self.growth_rate
        return self.scaled_channels[stage_index - 1] // 4

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channel_schedule"] = list(self.channel_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model config keys: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "sgd"
    learning_rate: float = 0.01
    weight_decay: float = 1e-4
    momentum: float = 0.9


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 1  # group norm keeps single-sample training well-defined
    max_steps: int = 200
    patch_size: int = 64
    patch_stride: int | None = None  # None: non-overlapping (= patch_size)
    augment: bool = True
    corruption: dict | None = None  # CorruptionSpec fields; None disables corruption augmentation
    seed: int = 0
    val_every: int = 50
    dtype: str = "float32"  # "float64" for bit-exact reproducibility tests

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.patch_size % 32 != 0:
            raise ConfigError(f"patch_size must be divisible by 32, got {self.patch_size}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        version = d.pop("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        if "model" in d:
            d["model"] = ModelConfig.from_dict(d["model"])
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown train config keys: {sorted(extra)}")
        return cls(**d)


def load_train_config(path) -> TrainConfig:
    """Load a TrainConfig from a .toml or .json file."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text.decode("utf-8"))
    elif path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    return TrainConfig.from_dict(data)
