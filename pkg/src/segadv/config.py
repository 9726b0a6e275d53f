"""Run configuration: YAML file with one section per subsystem.

Every key has a default, unknown keys are rejected with their dotted path,
and :func:`dump_config` writes a canonical form that loads back to an equal
:class:`RunConfig`.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, get_args, get_origin, get_type_hints

import yaml

from .bias_lab import BiasGrid, SignPattern
from .core import ValidationError
from .env import JunctionEnv
from .estimators import EstimatorKind, EstimatorSpec
from .segmentation import SegmentationConfig, SegMethod
from .trainer import PPOConfig


class ConfigError(ValidationError):
    """Malformed or unknown configuration entry."""


@dataclass
class EnvSection:
    junctions: int = 6
    corridor_len: int = 20
    choices: int = 4
    correct_seed: int = 0

    def build(self) -> JunctionEnv:
        return JunctionEnv.from_seed(self.junctions, self.corridor_len, self.choices,
                                     self.correct_seed)


@dataclass
class PPOSection:
    clip_epsilon: float = 0.2
    actor_lr: float = 30.0
    critic_lr: float = 0.5
    rollouts_per_update: int = 64
    group_size: int = 8
    epochs_per_batch: int = 1
    value_warmup_updates: int = 10
    max_updates: int = 300
    value_features: str = "linear"
    value_bucket: int = 1
    value_use_flag: bool = True
    value_degree: int = 1
    target_success: float = 0.9
    stop_at_target: bool = False


@dataclass
class EstimatorSection:
    kind: str = "sae"
    lam: float = 0.95
    adaptive_coeff: float = 0.2
    grpo_epsilon: float = 1e-8


@dataclass
class SegmentationSection:
    method: str = "probability"
    p: float = 0.2
    M: int = 1
    delimiters: list[int] = field(default_factory=list)

    def build(self) -> SegmentationConfig:
        return SegmentationConfig(SegMethod(self.method), self.p, self.M, frozenset(self.delimiters))


@dataclass
class BiasLabSection:
    T: list[int] = field(default_factory=lambda: [24])
    M: list[int] | None = None
    lam: list[float] = field(default_factory=lambda: [0.5, 0.9, 0.99])
    alpha: list[float] = field(default_factory=lambda: [1.0])
    beta: list[float] = field(default_factory=lambda: [4.0, 8.0, 16.0])
    patterns: list[str] = field(default_factory=lambda: [p.value for p in SignPattern])
    n_seeds: int = 200

    def build(self, seed: int) -> BiasGrid:
        return BiasGrid(
            T=tuple(self.T),
            M=None if self.M is None else tuple(self.M),
            lam=tuple(self.lam),
            alpha=tuple(self.alpha),
            beta=tuple(self.beta),
            patterns=tuple(SignPattern(p) for p in self.patterns),
            n_seeds=self.n_seeds,
            seed=seed,
        )


@dataclass
class ValueHeadSection:
    features: str = "linear"
    degree: int = 1
    bucket: int = 1
    use_flag: bool = True
    fit_updates: int = 200
    fit_rollouts: int = 64
    lr: float = 0.5


@dataclass
class AnalysisSection:
    oracle: str = "dp"
    mc_rollouts: int = 32
    n_seeds: int = 20
    n_traj: int = 64
    group_size: int = 8
    segments_per_traj: int = 1
    overlap: bool = False
    correct_prob: float = 0.6
    lambda_sweep: list[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])
    p_sweep: list[float] = field(default_factory=lambda: [0.5])
    sae_lambda: float = 0.95
    value_head: ValueHeadSection = field(default_factory=ValueHeadSection)


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "."
    env: EnvSection = field(default_factory=EnvSection)
    ppo: PPOSection = field(default_factory=PPOSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    segmentation: SegmentationSection = field(default_factory=SegmentationSection)
    bias_lab: BiasLabSection = field(default_factory=BiasLabSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    def estimator_spec(self) -> EstimatorSpec:
        kind = EstimatorKind(self.estimator.kind)
        return EstimatorSpec(
            kind,
            self.estimator.lam,
            self.segmentation.build() if kind is EstimatorKind.SAE else None,
            self.estimator.adaptive_coeff,
            self.estimator.grpo_epsilon,
        )

    def ppo_config(self) -> PPOConfig:
        fields = dataclasses.asdict(self.ppo)
        return PPOConfig(estimator=self.estimator_spec(), seed=self.seed, **fields)


# YAML spelling of field names that are Python keywords
_ALIASES = {"lam": "lambda"}
_REVERSE = {v: k for k, v in _ALIASES.items()}


def _coerce(value: Any, hint: Any, path: str) -> Any:
    if dataclasses.is_dataclass(hint):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
        return _build(hint, value, path)
    args = get_args(hint)
    if type(None) in args:
        if value is None:
            return None
        hint = next(a for a in args if a is not type(None))
    elif value is None:
        raise ConfigError(f"{path}: value may not be null")
    if get_origin(hint) is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        (inner,) = get_args(hint)
        return [_scalar(v, inner, f"{path}[{i}]") for i, v in enumerate(value)]
    return _scalar(value, hint, path)


def _scalar(value: Any, kind: type, path: str) -> Any:
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported type {kind}")


def _build(cls: type, data: Mapping[str, Any], prefix: str = "") -> Any:
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        name = _REVERSE.get(key, key)
        path = f"{prefix}.{key}" if prefix else str(key)
        if name not in names:
            raise ConfigError(f"unknown config key '{path}'")
        kwargs[name] = _coerce(value, hints[name], path)
    return cls(**kwargs)


def _to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {_ALIASES.get(f.name, f.name): _to_plain(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, list):
        return [_to_plain(v) for v in obj]
    return obj


def config_from_dict(data: Mapping[str, Any] | None) -> RunConfig:
    return _build(RunConfig, data or {})


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(_to_plain(config), sort_keys=False, default_flow_style=None)


def set_value(config: RunConfig, dotted: str, raw: str) -> None:
    """Apply a ``section.key=value`` override; ``raw`` is parsed as YAML."""
    parts = dotted.split(".")
    target: Any = config
    for part in parts[:-1]:
        name = _REVERSE.get(part, part)
        if not dataclasses.is_dataclass(target) or not hasattr(target, name):
            raise ConfigError(f"unknown config key '{dotted}'")
        target = getattr(target, name)
    leaf = _REVERSE.get(parts[-1], parts[-1])
    if not dataclasses.is_dataclass(target) or leaf not in {f.name for f in dataclasses.fields(target)}:
        raise ConfigError(f"unknown config key '{dotted}'")
    hint = get_type_hints(type(target))[leaf]
    setattr(target, leaf, _coerce(yaml.safe_load(raw), hint, dotted))


def resolve_out_dir(config: RunConfig, override: str | None = None) -> Path:
    """Flag, then config (if not the default), then ``SEGADV_OUT_DIR``, then cwd."""
    if override:
        return Path(override)
    if config.out_dir != ".":
        return Path(config.out_dir)
    return Path(os.environ.get("SEGADV_OUT_DIR", "."))
