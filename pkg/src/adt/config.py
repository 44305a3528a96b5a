"""Experiment configuration: one JSON document, strictly validated.

Unknown keys are rejected with their full dotted path, every documented
default is overridable, and ``--override section.key=value`` style overrides
are applied to the raw document before validation so they obey the same
rules as the file itself.
"""

import json
import os
from dataclasses import dataclass, field

from .synth import ANOMALY_KINDS, SynthConfig


class ConfigError(ValueError):
    pass


def _check_keys(data, allowed, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown config key {path + '.' if path else ''}{key}")


def _get(data, key, default, coerce, path):
    if key not in data or data[key] is None:
        if default is _REQUIRED:
            raise ConfigError(f"missing required config key {path + '.' if path else ''}{key}")
        return default
    return coerce(data[key], f"{path + '.' if path else ''}{key}")


_REQUIRED = object()


def _as_int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path} must be an integer, got {v!r}")
    return v


def _as_float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path} must be a number, got {v!r}")
    return float(v)


def _as_str(v, path):
    if not isinstance(v, str):
        raise ConfigError(f"{path} must be a string, got {v!r}")
    return v


def _as_bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(f"{path} must be true or false, got {v!r}")
    return v


def _as_str_tuple(v, path):
    if not isinstance(v, (list, tuple)) or not all(isinstance(x, str) for x in v):
        raise ConfigError(f"{path} must be a list of strings, got {v!r}")
    return tuple(v)


def _as_int_tuple(v, path):
    if not isinstance(v, (list, tuple)) or not v or not all(
        isinstance(x, int) and not isinstance(x, bool) for x in v
    ):
        raise ConfigError(f"{path} must be a non-empty list of integers, got {v!r}")
    return tuple(v)


@dataclass(frozen=True)
class SynthSettings:
    n: int
    channels: int = 1
    base: str = "mixture"
    noise_std: float = 0.05
    anomaly_rate: float = 0.05
    kinds: tuple = ANOMALY_KINDS
    min_segment: int = 20
    max_segment: int = 80
    clean_fraction: float = 0.3
    seed: int | None = None  # None: derived from the experiment seed

    def build(self, fallback_seed):
        """Materialize the generator config, deriving the seed if unset."""
        seed = self.seed if self.seed is not None else fallback_seed
        return SynthConfig(
            n=self.n, channels=self.channels, base=self.base,
            noise_std=self.noise_std, anomaly_rate=self.anomaly_rate,
            kinds=self.kinds, min_segment=self.min_segment,
            max_segment=self.max_segment, clean_fraction=self.clean_fraction,
            seed=seed,
        )


def _synth_from_dict(data, path):
    allowed = {"n", "channels", "base", "noise_std", "anomaly_rate", "kinds",
               "min_segment", "max_segment", "clean_fraction", "seed"}
    _check_keys(data, allowed, path)
    return SynthSettings(
        n=_get(data, "n", _REQUIRED, _as_int, path),
        channels=_get(data, "channels", 1, _as_int, path),
        base=_get(data, "base", "mixture", _as_str, path),
        noise_std=_get(data, "noise_std", 0.05, _as_float, path),
        anomaly_rate=_get(data, "anomaly_rate", 0.05, _as_float, path),
        kinds=_get(data, "kinds", ANOMALY_KINDS, _as_str_tuple, path),
        min_segment=_get(data, "min_segment", 20, _as_int, path),
        max_segment=_get(data, "max_segment", 80, _as_int, path),
        clean_fraction=_get(data, "clean_fraction", 0.3, _as_float, path),
        seed=_get(data, "seed", None, _as_int, path),
    )


@dataclass(frozen=True)
class DatasetSettings:
    kind: str = "synth"
    synth: SynthSettings | None = None
    path: str | None = None
    label_column: str = "label"
    feature_columns: tuple | None = None
    label_map: dict | None = None

    def __post_init__(self):
        if self.kind not in ("synth", "csv"):
            raise ConfigError(f"dataset.kind must be 'synth' or 'csv', got {self.kind!r}")
        if self.kind == "synth" and self.synth is None:
            raise ConfigError("dataset.kind is 'synth' but no dataset.synth block is given")
        if self.kind == "csv" and not self.path:
            raise ConfigError("dataset.kind is 'csv' but no dataset.path is given")

    @property
    def name(self):
        if self.kind == "synth":
            return "synth"
        return os.path.splitext(os.path.basename(self.path))[0]


def _label_map_from_dict(v, path):
    if not isinstance(v, dict) or not all(
        isinstance(k, str) and x in (0, 1) for k, x in v.items()
    ):
        raise ConfigError(f"{path} must map label strings to 0/1, got {v!r}")
    return dict(v)


def _dataset_from_dict(data, path):
    allowed = {"kind", "synth", "path", "label_column", "feature_columns", "label_map"}
    _check_keys(data, allowed, path)
    synth = None
    if "synth" in data and data["synth"] is not None:
        synth = _synth_from_dict(data["synth"], f"{path}.synth")
    return DatasetSettings(
        kind=_get(data, "kind", "synth", _as_str, path),
        synth=synth,
        path=_get(data, "path", None, _as_str, path),
        label_column=_get(data, "label_column", "label", _as_str, path),
        feature_columns=_get(data, "feature_columns", None, _as_str_tuple, path),
        label_map=_get(data, "label_map", None, _label_map_from_dict, path),
    )


@dataclass(frozen=True)
class SplitSettings:
    ae_train: float = 0.3
    adt_train: float = 0.1
    test: float = 0.6

    def __post_init__(self):
        for name in ("ae_train", "adt_train", "test"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"splits.{name} must be positive")
        if self.ae_train + self.adt_train + self.test > 1.0 + 1e-9:
            raise ConfigError("split fractions must sum to at most 1")


def _splits_from_dict(data, path):
    _check_keys(data, {"ae_train", "adt_train", "test"}, path)
    return SplitSettings(
        ae_train=_get(data, "ae_train", 0.3, _as_float, path),
        adt_train=_get(data, "adt_train", 0.1, _as_float, path),
        test=_get(data, "test", 0.6, _as_float, path),
    )


@dataclass(frozen=True)
class AeSettings:
    hidden: int = 64
    latent: int = 16
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"


def _ae_from_dict(data, path):
    allowed = {"hidden", "latent", "epochs", "batch_size", "lr", "optimizer"}
    _check_keys(data, allowed, path)
    return AeSettings(
        hidden=_get(data, "hidden", 64, _as_int, path),
        latent=_get(data, "latent", 16, _as_int, path),
        epochs=_get(data, "epochs", 200, _as_int, path),
        batch_size=_get(data, "batch_size", 64, _as_int, path),
        lr=_get(data, "lr", 1e-3, _as_float, path),
        optimizer=_get(data, "optimizer", "adam", _as_str, path),
    )


@dataclass(frozen=True)
class AgentSettings:
    episodes: int = 2000
    gamma: float = 0.99
    epsilon: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.999
    target_copy_every: int = 10
    minibatch: int = 32
    replay_capacity: int = 10000
    lr: float = 1e-3
    hidden: tuple = (64, 64)
    optimizer: str = "adam"
    updates_per_episode: int = 1


def _agent_from_dict(data, path):
    allowed = {"episodes", "gamma", "epsilon", "epsilon_min", "epsilon_decay",
               "target_copy_every", "minibatch", "replay_capacity", "lr",
               "hidden", "optimizer", "updates_per_episode"}
    _check_keys(data, allowed, path)
    return AgentSettings(
        episodes=_get(data, "episodes", 2000, _as_int, path),
        gamma=_get(data, "gamma", 0.99, _as_float, path),
        epsilon=_get(data, "epsilon", 1.0, _as_float, path),
        epsilon_min=_get(data, "epsilon_min", 0.01, _as_float, path),
        epsilon_decay=_get(data, "epsilon_decay", 0.999, _as_float, path),
        target_copy_every=_get(data, "target_copy_every", 10, _as_int, path),
        minibatch=_get(data, "minibatch", 32, _as_int, path),
        replay_capacity=_get(data, "replay_capacity", 10000, _as_int, path),
        lr=_get(data, "lr", 1e-3, _as_float, path),
        hidden=_get(data, "hidden", (64, 64), _as_int_tuple, path),
        optimizer=_get(data, "optimizer", "adam", _as_str, path),
        updates_per_episode=_get(data, "updates_per_episode", 1, _as_int, path),
    )


@dataclass(frozen=True)
class DspotSettings:
    enabled: bool = True
    q: float = 1e-3
    depth: int = 10


@dataclass(frozen=True)
class BaselineSettings:
    static: bool = True
    dspot: DspotSettings = field(default_factory=DspotSettings)


def _baselines_from_dict(data, path):
    _check_keys(data, {"static", "dspot"}, path)
    dspot = DspotSettings()
    if "dspot" in data and data["dspot"] is not None:
        dpath = f"{path}.dspot"
        _check_keys(data["dspot"], {"enabled", "q", "depth"}, dpath)
        dspot = DspotSettings(
            enabled=_get(data["dspot"], "enabled", True, _as_bool, dpath),
            q=_get(data["dspot"], "q", 1e-3, _as_float, dpath),
            depth=_get(data["dspot"], "depth", 10, _as_int, dpath),
        )
    return BaselineSettings(
        static=_get(data, "static", True, _as_bool, path),
        dspot=dspot,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSettings
    window_size: int = 10
    lookback: int = 2
    action_hold: int = 1
    alpha: float = 0.9
    beta: float = 0.1
    normalization: str = "train"
    splits: SplitSettings = field(default_factory=SplitSettings)
    ae: AeSettings = field(default_factory=AeSettings)
    agent: AgentSettings = field(default_factory=AgentSettings)
    baselines: BaselineSettings = field(default_factory=BaselineSettings)
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.window_size < 1:
            raise ConfigError("window_size must be >= 1")
        if self.lookback < 1:
            raise ConfigError("lookback must be >= 1")
        if self.action_hold < 1:
            raise ConfigError("action_hold must be >= 1")
        if self.normalization not in ("train", "full"):
            raise ConfigError(
                f"normalization must be 'train' or 'full', got {self.normalization!r}"
            )

    @classmethod
    def from_dict(cls, data):
        allowed = {"dataset", "window_size", "lookback", "action_hold", "alpha",
                   "beta", "normalization", "splits", "ae", "agent", "baselines",
                   "seed", "out_dir"}
        _check_keys(data, allowed, "")
        if "dataset" not in data:
            raise ConfigError("missing required config key dataset")
        return cls(
            dataset=_dataset_from_dict(data["dataset"], "dataset"),
            window_size=_get(data, "window_size", 10, _as_int, ""),
            lookback=_get(data, "lookback", 2, _as_int, ""),
            action_hold=_get(data, "action_hold", 1, _as_int, ""),
            alpha=_get(data, "alpha", 0.9, _as_float, ""),
            beta=_get(data, "beta", 0.1, _as_float, ""),
            normalization=_get(data, "normalization", "train", _as_str, ""),
            splits=_splits_from_dict(data.get("splits", {}), "splits"),
            ae=_ae_from_dict(data.get("ae", {}), "ae"),
            agent=_agent_from_dict(data.get("agent", {}), "agent"),
            baselines=_baselines_from_dict(data.get("baselines", {}), "baselines"),
            seed=_get(data, "seed", 0, _as_int, ""),
            out_dir=_get(data, "out_dir", "out", _as_str, ""),
        )

    @classmethod
    def from_json(cls, path, overrides=()):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        data = apply_overrides(data, overrides)
        return cls.from_dict(data)

    def to_dict(self):
        def plain(value):
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            if hasattr(value, "__dataclass_fields__"):
                return {
                    name: plain(getattr(value, name))
                    for name in value.__dataclass_fields__
                }
            return value

        return plain(self)


def parse_override(text):
    """Split 'dotted.path=value'; the value parses as JSON, else raw string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def apply_overrides(data, overrides):
    """Apply dotted-path overrides onto the raw config document."""
    result = json.loads(json.dumps(data))  # deep copy, JSON types only
    for text in overrides:
        key, value = parse_override(text)
        parts = key.split(".")
        node = result
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return result
