"""Experiment configuration: nested dataclasses loaded from JSON or TOML.

Every section rejects unknown keys so a typo fails loudly before any work
starts. The fully resolved config is snapshotted into each run record.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..bench import TimingProtocol
from ..data import default_data_dir, mnist_paths
from ..errors import ConfigError, DomainError, IdxFormatError
from ..model.train import TrainConfig
from ..quant import ALLOWED_BITS
from ..search import GaParams

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

DEFAULT_BITS = (32, 16, 8, 4, 2)
DEFAULT_SEEDS = (0, 42, 123)


def _build(cls, data, section):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table/object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, DomainError) as exc:
        raise ConfigError(f"invalid [{section}]: {exc}") from exc


@dataclass
class DatasetSpec:
    name: str = "mnist"
    data_dir: str | None = None
    num_classes: int = 10
    train_limit: int | None = None  # first n training images (desk-scale subsets)
    eval_limit: int | None = None  # first n test images

    def resolved_dir(self) -> Path:
        return Path(self.data_dir) if self.data_dir else default_data_dir()


@dataclass
class ModelSpec:
    architecture: str = "simple_cnn"
    weights: str = "data/weights/simple_cnn_mnist.qsw"


@dataclass
class ThresholdConfig:
    delta: float = 0.19


@dataclass
class TimingConfig:
    warmup_iters: int = 100
    timed_iters: int = 1000
    batch_size: int = 64

    def protocol(self) -> TimingProtocol:
        return TimingProtocol(self.warmup_iters, self.timed_iters, self.batch_size)


@dataclass
class GaConfig:
    population_n: int = 20
    generations_g: int = 30
    mutation_mu: float = 0.15
    elite_k: int = 5
    seed: int = 0

    def params(self) -> GaParams:
        return GaParams(self.population_n, self.generations_g, self.mutation_mu, self.elite_k, self.seed)


@dataclass
class SearchConfig:
    eval_limit: int | None = 1000  # fitness-evaluation subset of the test set
    latency: str = "measured"  # or "fixed"
    fixed_latency_ms: float = 1.0


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    bits: tuple = DEFAULT_BITS
    seeds: tuple = DEFAULT_SEEDS
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    calibration_size: int = 512
    out_dir: str = "runs"

    SECTIONS = {
        "dataset": DatasetSpec,
        "model": ModelSpec,
        "threshold": ThresholdConfig,
        "timing": TimingConfig,
        "ga": GaConfig,
        "search": SearchConfig,
        "train": TrainConfig,
    }
    SCALARS = ("bits", "seeds", "calibration_size", "out_dir")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a table/object")
        unknown = sorted(set(data) - set(cls.SECTIONS) - set(cls.SCALARS))
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
        kwargs = {name: _build(kind, data.get(name), name) for name, kind in cls.SECTIONS.items()}
        for name in cls.SCALARS:
            if name in data:
                kwargs[name] = data[name]
        cfg = cls(**kwargs)
        cfg.bits = tuple(cfg.bits)
        cfg.seeds = tuple(cfg.seeds)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bits"] = list(self.bits)
        d["seeds"] = list(self.seeds)
        return d

    def validate(self, need_data: bool = True, need_weights: bool = False) -> "ExperimentConfig":
        """Check the config; raises :class:`ConfigError` before any work starts."""
        if not self.bits or any(b not in ALLOWED_BITS for b in self.bits):
            raise ConfigError(f"bit-widths must be drawn from {ALLOWED_BITS}, got {list(self.bits)}")
        if len(set(self.bits)) != len(self.bits):
            raise ConfigError("duplicate bit-widths")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds must be nonnegative integers, got {list(self.seeds)}")
        if not 0.0 <= self.threshold.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.threshold.delta}")
        if self.calibration_size <= 0:
            raise ConfigError("calibration_size must be positive")
        if self.dataset.name != "mnist":
            raise ConfigError(f"unsupported dataset {self.dataset.name!r}")
        if self.model.architecture != "simple_cnn":
            raise ConfigError(f"unsupported architecture {self.model.architecture!r}")
        if self.search.latency not in ("measured", "fixed"):
            raise ConfigError("search.latency must be 'measured' or 'fixed'")
        for limit in (self.dataset.train_limit, self.dataset.eval_limit, self.search.eval_limit):
            if limit is not None and limit <= 0:
                raise ConfigError("subset limits must be positive")
        try:
            self.timing.protocol()
            self.ga.params()
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if need_data:
            data_dir = self.dataset.resolved_dir()
            if not data_dir.is_dir():
                raise ConfigError(f"dataset directory {data_dir} does not exist")
            try:
                for split in ("train", "test"):
                    mnist_paths(data_dir, split)
            except IdxFormatError as exc:
                raise ConfigError(f"dataset directory {data_dir} is incomplete: {exc}") from exc
        if need_weights and not Path(self.model.weights).is_file():
            raise ConfigError(f"weights file {self.model.weights} not found")
        return self


def load_config(path=None) -> ExperimentConfig:
    """Read a JSON (``.json``) or TOML (anything else) config; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def _int_list(text: str, what: str) -> tuple:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"--{what} expects a comma-separated list of integers, got {text!r}") from exc


def apply_overrides(cfg: ExperimentConfig, *, seeds=None, bits=None, delta=None, out_dir=None) -> ExperimentConfig:
    if seeds is not None:
        cfg.seeds = _int_list(seeds, "seeds")
    if bits is not None:
        cfg.bits = _int_list(bits, "bits")
    if delta is not None:
        cfg.threshold.delta = float(delta)
    if out_dir is not None:
        cfg.out_dir = str(out_dir)
    return cfg
