"""Run configuration: one JSON document drives every pipeline stage.

The schema is strict (unknown keys are rejected) and versioned. Command
line flags override file values; every run directory receives a resolved
copy of the configuration it actually used.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import MODEL_KINDS, TrainConfig
from .phantom import PhantomSpec
from .radiomics import RadiomicsConfig

SCHEMA_VERSION = 1


@dataclass
class PhantomRunConfig:
    n_patients_per_class: int = 6
    rois_per_patient: int = 1
    spec: PhantomSpec = field(default_factory=PhantomSpec)


@dataclass
class FeatureConfig:
    n_per_class: int = 2000
    patch_size: int = 100
    n_bins: int = 32
    gldm_alpha: int = 0
    pixel_area: float = 1.0

    def radiomics(self) -> RadiomicsConfig:
        return RadiomicsConfig(
            n_bins=self.n_bins, gldm_alpha=self.gldm_alpha, pixel_area=self.pixel_area
        )


@dataclass
class CvRunConfig:
    kinds: list[str] = field(
        default_factory=lambda: list(MODEL_KINDS)
    )


@dataclass
class SweepRunConfig:
    windows: list[int] = field(default_factory=lambda: [1, 3, 5, 9, 15, 25])
    kinds: list[str] = field(
        default_factory=lambda: ["polar_only", "radiomics_only", "prffn"]
    )
    patients: list[str] | None = None  # optional explicit patient subset


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 7
    jobs: int = 1
    phantom: PhantomRunConfig = field(default_factory=PhantomRunConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    cv: CvRunConfig = field(default_factory=CvRunConfig)
    sweep: SweepRunConfig = field(default_factory=SweepRunConfig)

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version}, "
                f"expected {SCHEMA_VERSION}"
            )
        if self.train.learning_rate <= 0:
            raise ConfigError(
                f"learning rate must be positive, got {self.train.learning_rate}"
            )
        if self.train.epochs < 1 or self.train.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.features.n_per_class < 1 or self.features.patch_size < 1:
            raise ConfigError("n_per_class and patch_size must be >= 1")
        if self.features.n_bins < 2:
            raise ConfigError("n_bins must be >= 2")
        for kind in self.cv.kinds + self.sweep.kinds:
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {kind!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        )


def _build_dataclass(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path or 'config'}")
    kwargs = {}
    nested = {
        "spec": PhantomSpec,
        "phantom": PhantomRunConfig,
        "features": FeatureConfig,
        "train": TrainConfig,
        "cv": CvRunConfig,
        "sweep": SweepRunConfig,
    }
    for name, value in data.items():
        sub = nested.get(name)
        if sub is not None and isinstance(value, dict):
            kwargs[name] = _build_dataclass(sub, value, f"{path}.{name}" if path else name)
        elif name == "hidden_sizes" and isinstance(value, list):
            kwargs[name] = tuple(value)
        elif name == "affine_offset" and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid {path or 'config'}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    cfg = _build_dataclass(RunConfig, data, "")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    """Load and validate a config file; None yields the defaults."""
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def standard_phantom_config() -> RunConfig:
    """The desk-scale reference configuration: 6 patients per class, 2000
    pixels per class, compact towers sized for minutes-long CV runs. The
    full-scale tower (512, 256, 128) stays the TrainConfig default for
    direct API use."""
    cfg = RunConfig()
    cfg.train = TrainConfig(
        learning_rate=0.01,
        momentum=0.9,
        batch_size=512,
        epochs=40,
        patience=8,
        val_fraction=0.1,
        aux_weight=0.3,
        hidden_sizes=(64, 32, 16),
    )
    cfg.validate()
    return cfg
