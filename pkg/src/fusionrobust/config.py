"""Experiment configuration: JSON-file schema with exact round-tripping.

One structured file drives a run: the synthetic task, the architecture
descriptor, the training procedure, and the evaluation protocol.  CLI
flags override individual keys after parsing.  Validation errors always
name the offending field.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .corruption import CORRUPTION_KINDS, SyntheticTask
from .errors import ConfigurationError
from .models import FUSION_KINDS
from .training import ALGORITHMS


@dataclass(frozen=True)
class ModelConfig:
    """Architecture descriptor: per-source feature depths, fusion, head."""

    depths: tuple = (4, 4)
    fusion: str = "mean"
    hidden: int = 32
    lel_l1_coeff: float = 0.01

    def __post_init__(self):
        if self.fusion not in FUSION_KINDS:
            raise ConfigurationError(f"model.fusion: unknown kind {self.fusion!r}")
        if self.fusion == "mean" and len(set(self.depths)) != 1:
            raise ConfigurationError(
                "model.depths: mean fusion requires equal per-source depths"
            )
        if self.hidden < 1:
            raise ConfigurationError("model.hidden: must be >= 1")


@dataclass(frozen=True)
class CorruptionConfig:
    """Corruption family applied per source; tau is derived from data."""

    kind: str = "gaussian"
    factor: float = 0.75
    keep_ratio: float = 0.25
    axis: int = 1

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ConfigurationError(f"corruption.kind: unknown kind {self.kind!r}")
        if self.factor < 0:
            raise ConfigurationError("corruption.factor: must be >= 0")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ConfigurationError("corruption.keep_ratio: must be in (0, 1]")


@dataclass(frozen=True)
class TrainSpec:
    algorithm: str = "clean"
    iterations: int = 4000
    batch_size: int = 64
    lr: float = 1e-4
    mode: str = "from_scratch"
    n_clean: int = 0
    n_tune: int = 0
    noise_per_sample: bool = True
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"train.algorithm: unknown algorithm {self.algorithm!r}"
            )
        if self.iterations < 1:
            raise ConfigurationError("train.iterations: must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("train.batch_size: must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("train.lr: must be positive")
        if self.mode not in ("from_scratch", "fine_tune"):
            raise ConfigurationError(f"train.mode: unknown mode {self.mode!r}")
        if self.mode == "fine_tune" and self.n_clean + self.n_tune != self.iterations:
            raise ConfigurationError(
                "train.n_clean/n_tune: fine_tune requires n_clean + n_tune = iterations"
            )


@dataclass(frozen=True)
class EvalConfig:
    trials: int = 5
    confidence: float = 0.95
    corruption: CorruptionConfig = field(default_factory=CorruptionConfig)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("eval.trials: must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigurationError("eval.confidence: must be in (0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    task: SyntheticTask = field(default_factory=SyntheticTask)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSpec = field(default_factory=TrainSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: str = "runs"
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seeds: must be non-empty")
        if self.task.kind == "conv_classification":
            shapes = [tuple(s) for s in self.task.source_shapes]
            if len(shapes) != len(self.model.depths):
                raise ConfigurationError(
                    "model.depths: one depth per task source is required"
                )


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigurationError(f"{path}.{sorted(unknown)[0]}: unknown field")
    kwargs = {}
    for name, value in data.items():
        key = f"{path}.{name}" if path else name
        if name == "task":
            kwargs[name] = _build(SyntheticTask, value, key)
        elif name == "model":
            kwargs[name] = _build(ModelConfig, value, key)
        elif name == "train":
            kwargs[name] = _build(TrainSpec, value, key)
        elif name == "eval":
            kwargs[name] = _build(EvalConfig, value, key)
        elif name == "corruption":
            kwargs[name] = _build(CorruptionConfig, value, key)
        else:
            kwargs[name] = _tupled(value)
    try:
        return cls(**kwargs)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path or cls.__name__}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def config_to_dict(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config: invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path):
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)


def apply_overrides(config: ExperimentConfig, seeds=None, out=None, trials=None):
    """CLI flag overrides, applied after file parsing."""
    if seeds:
        config = dataclasses.replace(config, seeds=tuple(seeds))
    if out is not None:
        config = dataclasses.replace(config, output=str(out))
    if trials is not None:
        config = dataclasses.replace(
            config, eval=dataclasses.replace(config.eval, trials=trials)
        )
    return config
